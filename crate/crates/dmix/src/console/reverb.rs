//! Freeverb-style reverb: eight parallel feedback combs with damping in the
//! loop, followed by four series allpasses, mono in, mono out.
//!
//! Comb feedback is 0.28 * room_size + 0.7. Delay line lengths use the
//! classic tunings scaled by sample_rate / 44100.

const COMB_TUNINGS: [usize; 8] = [1116, 1188, 1277, 1356, 1422, 1491, 1557, 1617];
const ALLPASS_TUNINGS: [usize; 4] = [556, 441, 341, 225];
const ALLPASS_FEEDBACK: f64 = 0.5;
const DAMPING_SCALE: f64 = 0.4;
const INPUT_GAIN: f64 = 0.015;
const ROOM_SCALE: f64 = 0.28;
const ROOM_OFFSET: f64 = 0.7;

#[derive(Debug, Clone)]
struct Comb {
    buffer: Vec<f64>,
    index: usize,
    filter_store: f64,
}

impl Comb {
    fn new(len: usize) -> Self {
        Self {
            buffer: vec![0.0; len.max(1)],
            index: 0,
            filter_store: 0.0,
        }
    }

    #[inline]
    fn process(&mut self, input: f64, feedback: f64, damp: f64) -> f64 {
        let output = self.buffer[self.index];
        self.filter_store = output * (1.0 - damp) + self.filter_store * damp;
        self.buffer[self.index] = input + self.filter_store * feedback;
        self.index += 1;
        if self.index == self.buffer.len() {
            self.index = 0;
        }
        output
    }

    fn reset(&mut self) {
        self.buffer.fill(0.0);
        self.index = 0;
        self.filter_store = 0.0;
    }
}

#[derive(Debug, Clone)]
struct AllPass {
    buffer: Vec<f64>,
    index: usize,
}

impl AllPass {
    fn new(len: usize) -> Self {
        Self {
            buffer: vec![0.0; len.max(1)],
            index: 0,
        }
    }

    #[inline]
    fn process(&mut self, input: f64) -> f64 {
        let bufout = self.buffer[self.index];
        let output = bufout - input;
        self.buffer[self.index] = input + bufout * ALLPASS_FEEDBACK;
        self.index += 1;
        if self.index == self.buffer.len() {
            self.index = 0;
        }
        output
    }

    fn reset(&mut self) {
        self.buffer.fill(0.0);
        self.index = 0;
    }
}

/// Comb and allpass delay lines, sized for a sample rate.
#[derive(Debug, Clone)]
pub struct ReverbState {
    combs: Vec<Comb>,
    allpasses: Vec<AllPass>,
}

impl ReverbState {
    pub fn new(sample_rate: u32) -> Self {
        let scale = sample_rate as f64 / 44_100.0;
        let combs = COMB_TUNINGS
            .iter()
            .map(|&n| Comb::new(((n as f64 * scale).round() as usize).max(1)))
            .collect();
        let allpasses = ALLPASS_TUNINGS
            .iter()
            .map(|&n| AllPass::new(((n as f64 * scale).round() as usize).max(1)))
            .collect();
        Self { combs, allpasses }
    }

    pub fn reset(&mut self) {
        for c in &mut self.combs {
            c.reset();
        }
        for a in &mut self.allpasses {
            a.reset();
        }
    }

    /// Shortest comb delay in samples; the first nonzero tail sample of an
    /// impulse appears here.
    pub fn shortest_comb_delay(&self) -> usize {
        self.combs.iter().map(|c| c.buffer.len()).min().unwrap_or(1)
    }
}

/// Process a mono block in place: y = dry * x + wet * tail(x).
///
/// All comb feedbacks stay below 0.98, so the impulse response has finite
/// energy for every room size in [0, 1].
pub fn reverb_process(
    x: &mut [f64],
    room_size: f64,
    damping: f64,
    wet: f64,
    dry: f64,
    state: &mut ReverbState,
) {
    let feedback = ROOM_SCALE * room_size + ROOM_OFFSET;
    let damp = damping * DAMPING_SCALE;
    for v in x.iter_mut() {
        let input = *v * INPUT_GAIN;
        let mut tail = 0.0;
        for comb in &mut state.combs {
            tail += comb.process(input, feedback, damp);
        }
        for ap in &mut state.allpasses {
            tail = ap.process(tail);
        }
        *v = dry * *v + wet * tail;
    }
}
