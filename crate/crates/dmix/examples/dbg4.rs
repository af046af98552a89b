use dmix::audio::AudioBuffer;
use dmix::autodiff::*;
use dmix::controller::*;
use dmix::diffloss::stereo_loss_node;
use dmix::loss::MultiResConfig;
use dmix::tcn::MixTask;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng { ChaCha8Rng::seed_from_u64(seed) }
fn noise_track(n: usize, seed: u64, rate: u32) -> AudioBuffer {
    let mut r = rng(seed);
    AudioBuffer::mono((0..n).map(|_| r.random_range(-0.5..0.5)).collect(), rate)
}

fn main() {
    let mut store = ParamStore::new();
    let model = ControllerModel::register(&mut store, "ctrl", EncoderConfig::miniature(), MixTask::Basic, &mut rng(16));
    let tracks: Vec<AudioBuffer> = (0..2).map(|i| noise_track(4096, 60 + i, 8000)).collect();
    let mut r = rng(61);
    let target = AudioBuffer::stereo(
        (0..4096).map(|_| r.random_range(-0.5..0.5)).collect(),
        (0..4096).map(|_| r.random_range(-0.5..0.5)).collect(),
        8000,
    );
    let session = MixSession::new(tracks, None);
    let cfg = MultiResConfig::standard();
    for h in [3e-5, 1e-5, 3e-6] {
        let reports = grad_check_params(
            &store,
            |tape, bound, s| {
                let fwd = session_forward(tape, &model, None, bound, s, &session, false, None).unwrap();
                let l2 = tape.power(fwd.left, 2.0);
                let r2 = tape.power(fwd.right, 2.0);
                let sl = tape.sum(l2);
                let sr = tape.sum(r2);
                let tot = tape.add(sl, sr).unwrap();
                let _ = &target; let _ = &cfg;
                tape.scale(tot, 1e-3)
            },
            h,
        );
        let worst = reports.iter().max_by(|a, b| a.1.max_rel_err.partial_cmp(&b.1.max_rel_err).unwrap()).unwrap();
        let nex: usize = reports.iter().map(|r| r.1.excluded.len()).sum();
        println!("h={h:e}: worst {} rel {:.3e}, excluded total {}", worst.0, worst.1.max_rel_err, nex);
    }
}
