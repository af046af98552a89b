use super::*;
use crate::audio::AudioBuffer;
use proptest::prelude::*;
use rand::Rng;

fn noise(n: usize, seed: u64, rate: u32) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioBuffer::mono((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), rate)
}

#[test]
fn gain_identity_boost_and_polarity() {
    let x = AudioBuffer::mono(vec![1.0, -0.5], 44_100);
    let id = apply_gain(&x, 0.0, 1.0);
    assert_eq!(id.channel(0), &[1.0, -0.5]);

    let boosted = apply_gain(&x, 6.0, 1.0);
    assert!((boosted.channel(0)[0] - 1.9952623149688795).abs() < 1e-10);
    assert!((boosted.channel(0)[1] + 0.9976311574844398).abs() < 1e-10);

    let flipped = apply_gain(&x, 0.0, -1.0);
    assert_eq!(flipped.channel(0), &[-1.0, 0.5]);
}

#[test]
fn eq_zero_gain_is_identity_section() {
    for kind in [EqKind::LowShelf, EqKind::Peak, EqKind::HighShelf] {
        let b = eq_coefficients(kind, 0.0, 1000.0, 0.7, 44_100).unwrap();
        assert_eq!(b, Biquad::IDENTITY);
    }
}

#[test]
fn eq_peak_hits_center_gain() {
    // Oracle: evaluate |H(e^{jw})| from the transfer function directly.
    for (gain, freq, q) in [(12.0, 1000.0, 0.7), (12.0, 350.0, 2.0), (-9.0, 5000.0, 4.0)] {
        let b = eq_coefficients(EqKind::Peak, gain, freq, q, 44_100).unwrap();
        let w0 = 2.0 * std::f64::consts::PI * freq / 44_100.0;
        let mag_db = 20.0 * b.magnitude_at(w0).log10();
        assert!(
            (mag_db - gain).abs() < 0.01,
            "peak center gain {mag_db} dB, wanted {gain} dB"
        );
    }
}

#[test]
fn eq_low_shelf_dc_and_nyquist() {
    let b = eq_coefficients(EqKind::LowShelf, -6.0, 100.0, 0.0, 44_100).unwrap();
    let dc_db = 20.0 * b.magnitude_at(0.0).log10();
    let ny_db = 20.0 * b.magnitude_at(std::f64::consts::PI).log10();
    assert!((dc_db + 6.0).abs() < 0.01, "DC gain {dc_db} dB");
    assert!(ny_db.abs() < 0.01, "Nyquist gain {ny_db} dB");
}

#[test]
fn eq_high_shelf_dc_and_nyquist() {
    let b = eq_coefficients(EqKind::HighShelf, 9.0, 4000.0, 0.0, 44_100).unwrap();
    let dc_db = 20.0 * b.magnitude_at(0.0).log10();
    let ny_db = 20.0 * b.magnitude_at(std::f64::consts::PI).log10();
    assert!(dc_db.abs() < 0.01, "DC gain {dc_db} dB");
    assert!((ny_db - 9.0).abs() < 0.01, "Nyquist gain {ny_db} dB");
}

#[test]
fn eq_rejects_nyquist_frequency() {
    assert!(matches!(
        eq_coefficients(EqKind::Peak, 3.0, 22_050.0, 1.0, 44_100),
        Err(ConsoleError::FrequencyAboveNyquist { .. })
    ));
}

#[test]
fn eq_sections_stable_across_full_parameter_range() {
    for seed in 0..50 {
        let p = random_params(seed, ParamMode::Full);
        for b in eq_sections(&p, 44_100).unwrap() {
            assert!(b.is_stable(), "unstable section for seed {seed}: {b:?}");
        }
    }
}

#[test]
fn compressor_steady_state_matches_static_curve() {
    // 441 Hz sine at -8 dB peak; period 100 samples so peaks land exactly
    // on sample 25 + 100k. Fast attack keeps the envelope at the peak level.
    let fs = 44_100;
    let amp = crate::audio::db_to_linear(-8.0);
    let release_ms = 50.0;
    let n = (10.0 * release_ms * 1e-3 * fs as f64) as usize + 4410;
    let x: Vec<f64> = (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * 441.0 * i as f64 / fs as f64).sin())
        .collect();
    let mut y = x.clone();
    let mut state = CompressorState::default();
    compressor_process(&mut y, fs, -20.0, 4.0, 0.1, release_ms, 0.0, &mut state);

    // Last exact peak sample.
    let peak = (n - 1 - 25) / 100 * 100 + 25;
    let gain_db = 20.0 * (y[peak] / x[peak]).abs().log10();
    // Static curve: (T - L) * (1 - 1/R) = (-20 + 8) * 0.75 = -9 dB.
    assert!(
        (gain_db + 9.0).abs() < 0.5,
        "steady-state gain {gain_db} dB, wanted -9 dB"
    );
}

#[test]
fn compressor_unity_ratio_is_pure_makeup() {
    let x = noise(2048, 1, 44_100);
    let mut y = x.channel(0).to_vec();
    let mut state = CompressorState::default();
    compressor_process(&mut y, 44_100, -20.0, 1.0, 5.0, 50.0, 6.0, &mut state);
    let makeup = crate::audio::db_to_linear(6.0);
    for (a, b) in x.channel(0).iter().zip(&y) {
        assert_eq!(a * makeup, *b);
    }
}

#[test]
fn compressor_below_threshold_is_makeup_only() {
    let fs = 44_100;
    let x: Vec<f64> = (0..8192)
        .map(|i| 0.05 * (2.0 * std::f64::consts::PI * 441.0 * i as f64 / fs as f64).sin())
        .collect();
    let mut y = x.clone();
    let mut state = CompressorState::default();
    compressor_process(&mut y, fs, -20.0, 4.0, 1.0, 50.0, 6.0, &mut state);
    let makeup = crate::audio::db_to_linear(6.0);
    for (a, b) in x.iter().zip(&y) {
        assert!((a * makeup - b).abs() < 1e-9);
    }
}

#[test]
fn reverb_dry_path_is_identity() {
    let x = noise(4096, 2, 44_100);
    let mut y = x.channel(0).to_vec();
    let mut state = ReverbState::new(44_100);
    reverb_process(&mut y, 0.7, 0.3, 0.0, 1.0, &mut state);
    for (a, b) in x.channel(0).iter().zip(&y) {
        assert_eq!(*a, *b);
    }
}

#[test]
fn reverb_impulse_tail_starts_at_shortest_comb_delay() {
    let state = ReverbState::new(44_100);
    let first = state.shortest_comb_delay();
    assert_eq!(first, 1116);

    let mut h = vec![0.0; 4096];
    h[0] = 1.0;
    let mut state = ReverbState::new(44_100);
    reverb_process(&mut h, 0.5, 0.5, 1.0, 0.0, &mut state);
    let nonzero = h.iter().position(|&v| v != 0.0).unwrap();
    assert_eq!(nonzero, first);
}

/// Schroeder backward-integrated -60 dB decay point, in samples.
fn rt60_samples(h: &[f64]) -> usize {
    let total: f64 = h.iter().map(|v| v * v).sum();
    let mut tail = total;
    for (n, v) in h.iter().enumerate() {
        if tail / total < 1e-6 {
            return n;
        }
        tail -= v * v;
    }
    h.len()
}

#[test]
fn reverb_room_size_lengthens_decay() {
    // 12 s impulse responses at 8 kHz keep this cheap; decay per second is
    // rate independent because the delay tunings scale with the rate.
    let fs = 8000;
    let n = 12 * fs as usize;
    let mut small = vec![0.0; n];
    small[0] = 1.0;
    let mut big = small.clone();
    let mut state = ReverbState::new(fs);
    reverb_process(&mut small, 0.0, 0.5, 1.0, 0.0, &mut state);
    let mut state = ReverbState::new(fs);
    reverb_process(&mut big, 1.0, 0.5, 1.0, 0.0, &mut state);

    let rt_small = rt60_samples(&small);
    let rt_big = rt60_samples(&big);
    assert!(
        rt_small < rt_big,
        "rt60 room=0 ({rt_small}) should be shorter than room=1 ({rt_big})"
    );
    assert!(rt_big < n, "room=1 response must decay inside the window");
}

#[test]
fn pan_hard_left_center_and_errors() {
    let x = AudioBuffer::mono(vec![1.0, -0.25], 44_100);
    let left = pan_stereo(&x, 0.0).unwrap();
    assert_eq!(left.channel(0), &[1.0, -0.25]);
    assert_eq!(left.channel(1), &[0.0, 0.0]);

    let center = pan_stereo(&x, 0.5).unwrap();
    let c = std::f64::consts::FRAC_1_SQRT_2;
    assert!((center.channel(0)[0] - c).abs() < 1e-15);
    assert!((center.channel(1)[0] - c).abs() < 1e-15);

    assert!(matches!(
        pan_stereo(&x, 1.5),
        Err(ConsoleError::PanOutOfRange(_))
    ));
    let stereo = AudioBuffer::zeros(2, 4, 44_100);
    assert!(matches!(
        pan_stereo(&stereo, 0.5),
        Err(ConsoleError::NotMono(2))
    ));
}

#[test]
fn channel_neutral_is_center_pan_only() {
    let x = noise(4096, 3, 44_100);
    let y = channel_process(&x, &ChannelParams::neutral()).unwrap();
    let c = std::f64::consts::FRAC_1_SQRT_2;
    for (i, &v) in x.channel(0).iter().enumerate() {
        assert!((y.channel(0)[i] - c * v).abs() < 1e-12);
        assert!((y.channel(1)[i] - c * v).abs() < 1e-12);
    }
}

#[test]
fn channel_fader_floor_bounds_output() {
    let mut p = ChannelParams::neutral();
    p.fader_db = -80.0;
    let x = AudioBuffer::mono(vec![1.0, -1.0, 0.5, 0.99], 44_100);
    let y = channel_process(&x, &p).unwrap();
    for c in 0..2 {
        for &v in y.channel(c) {
            assert!(v.abs() <= 1e-4);
        }
    }
}

#[test]
fn channel_polarity_negates_neutral_chain() {
    let x = noise(1024, 4, 44_100);
    let mut p = ChannelParams::neutral();
    p.polarity = -1.0;
    let pos = channel_process(&x, &ChannelParams::neutral()).unwrap();
    let neg = channel_process(&x, &p).unwrap();
    for c in 0..2 {
        for (a, b) in pos.channel(c).iter().zip(neg.channel(c)) {
            assert!((a + b).abs() < 1e-15);
        }
    }
}

#[test]
fn channel_output_independent_of_block_size() {
    let p = random_params(11, ParamMode::Full);
    let x = noise(8192, 5, 44_100);

    let mut whole = ChannelProcessor::new(p, 44_100).unwrap();
    let (wl, wr) = whole.process_block(x.channel(0));

    let mut blocked = ChannelProcessor::new(p, 44_100).unwrap();
    let mut bl = Vec::new();
    let mut br = Vec::new();
    for chunk in x.channel(0).chunks(64) {
        let (l, r) = blocked.process_block(chunk);
        bl.extend(l);
        br.extend(r);
    }
    for (a, b) in wl.iter().zip(&bl) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in wr.iter().zip(&br) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn console_single_track_equals_channel() {
    let x = noise(2048, 6, 44_100);
    let p = ChannelParams::neutral();
    let mix = console_mix(std::slice::from_ref(&x), &[p]).unwrap();
    let single = channel_process(&x, &p).unwrap();
    assert_eq!(mix, single);
}

#[test]
fn console_duplicate_track_doubles_neutral_mix() {
    let x = noise(2048, 7, 44_100);
    let p = ChannelParams::neutral();
    let one = console_mix(std::slice::from_ref(&x), &[p]).unwrap();
    let two = console_mix(&[x.clone(), x], &[p, p]).unwrap();
    for c in 0..2 {
        for (a, b) in one.channel(c).iter().zip(two.channel(c)) {
            assert_eq!(2.0 * a, *b);
        }
    }
}

#[test]
fn console_mix_is_bitwise_permutation_invariant() {
    let tracks: Vec<AudioBuffer> = (0..4).map(|i| noise(1024, 20 + i, 44_100)).collect();
    let params: Vec<ChannelParams> = (0..4)
        .map(|i| random_params(30 + i, ParamMode::Full))
        .collect();
    let mix = console_mix(&tracks, &params).unwrap();

    let order = [2usize, 0, 3, 1];
    let pt: Vec<AudioBuffer> = order.iter().map(|&i| tracks[i].clone()).collect();
    let pp: Vec<ChannelParams> = order.iter().map(|&i| params[i]).collect();
    let permuted = console_mix(&pt, &pp).unwrap();
    assert_eq!(mix, permuted);
}

#[test]
fn console_rejects_mismatches() {
    let a = noise(128, 8, 44_100);
    let b = noise(64, 9, 44_100);
    let p = ChannelParams::neutral();
    assert!(matches!(
        console_mix(&[a.clone(), b], &[p, p]),
        Err(ConsoleError::LengthMismatch { .. })
    ));
    let c = noise(128, 9, 48_000);
    assert!(matches!(
        console_mix(&[a.clone(), c], &[p, p]),
        Err(ConsoleError::RateMismatch { .. })
    ));
    assert!(matches!(
        console_mix(&[a], &[p, p]),
        Err(ConsoleError::CountMismatch { .. })
    ));
    assert!(matches!(console_mix(&[], &[]), Err(ConsoleError::NoTracks)));
}

#[test]
fn random_basic_params_touch_only_gain_and_pan() {
    for seed in 0..20 {
        let p = random_params(seed, ParamMode::Basic);
        assert!((-12.0..=12.0).contains(&p.gain_db));
        assert!((0.0..=1.0).contains(&p.pan));
        assert_eq!(p.eq_ls_gain_db, 0.0);
        assert_eq!(p.eq_b1_gain_db, 0.0);
        assert_eq!(p.eq_b2_gain_db, 0.0);
        assert_eq!(p.eq_b3_gain_db, 0.0);
        assert_eq!(p.eq_hs_gain_db, 0.0);
        assert_eq!(p.comp_ratio, 1.0);
        assert_eq!(p.rev_wet, 0.0);
        assert_eq!(p.rev_dry, 1.0);
        assert_eq!(p.fader_db, 0.0);
        assert_eq!(p.polarity, 1.0);
    }
}

#[test]
fn random_full_params_stay_in_range_and_repeat() {
    for seed in 0..50 {
        let p = random_params(seed, ParamMode::Full);
        p.validate().unwrap();
        assert_eq!(p, random_params(seed, ParamMode::Full));
    }
}

#[test]
fn params_validate_rejects_out_of_range() {
    let mut p = ChannelParams::neutral();
    p.comp_ratio = 25.0;
    assert!(matches!(
        p.validate(),
        Err(ConsoleError::ParamOutOfRange { name: "comp_ratio", .. })
    ));
    let mut p = ChannelParams::neutral();
    p.polarity = 0.3;
    assert!(matches!(p.validate(), Err(ConsoleError::BadPolarity(_))));
}

#[test]
fn params_file_round_trip_and_schema_check() {
    let file = ParamsFile::new(vec![
        TrackParams {
            name: "kick".into(),
            params: random_params(1, ParamMode::Full),
        },
        TrackParams {
            name: "bass".into(),
            params: ChannelParams::neutral(),
        },
    ]);
    let json = file.to_json();
    let back = ParamsFile::from_json(&json).unwrap();
    assert_eq!(back.tracks.len(), 2);
    assert_eq!(back.tracks[0].name, "kick");
    assert_eq!(back.tracks[0].params, file.tracks[0].params);

    let bad = json.replace("\"schema_version\": 1", "\"schema_version\": 9");
    assert!(matches!(
        ParamsFile::from_json(&bad),
        Err(ConsoleError::SchemaVersion { expected: 1, got: 9 })
    ));
}

proptest! {
    #[test]
    fn pan_preserves_power(pan in 0.0f64..=1.0, v in -1.0f64..1.0) {
        let x = AudioBuffer::mono(vec![v], 44_100);
        let y = pan_stereo(&x, pan).unwrap();
        let (l, r) = (y.channel(0)[0], y.channel(1)[0]);
        prop_assert!((l * l + r * r - v * v).abs() <= 1e-12_f64.max(1e-12 * v * v));
    }

    #[test]
    fn normalize_denormalize_round_trip(seed in 0u64..500) {
        let p = random_params(seed, ParamMode::Full);
        let n = p.normalize();
        for v in n {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let q = ChannelParams::denormalize(&n);
        let (pv, qv) = (p.to_vec(), q.to_vec());
        for (i, spec) in PARAM_SPECS.iter().enumerate() {
            let tol = 1e-12 * spec.hi.abs().max(spec.lo.abs()).max(1.0);
            prop_assert!((pv[i] - qv[i]).abs() <= tol, "{}: {} vs {}", spec.name, pv[i], qv[i]);
        }
    }

    #[test]
    fn neutral_chain_determinism(seed in 0u64..50) {
        let x = noise(512, seed, 44_100);
        let p = random_params(seed, ParamMode::Full);
        let a = channel_process(&x, &p).unwrap();
        let b = channel_process(&x, &p).unwrap();
        prop_assert_eq!(a, b);
    }
}
