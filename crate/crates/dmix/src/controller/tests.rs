use super::*;
use crate::autodiff::grad_check_params;
use crate::diffloss::stereo_loss_node;
use crate::loss::MultiResConfig;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn noise_track(n: usize, seed: u64, rate: u32) -> AudioBuffer {
    let mut r = rng(seed);
    AudioBuffer::mono((0..n).map(|_| r.random_range(-0.5..0.5)).collect(), rate)
}

fn desk_encoder() -> EncoderConfig {
    EncoderConfig {
        frame_size: 256,
        hop_size: 64,
        n_bands: 12,
        n_layers: 4,
        embedding_dim: 8,
    }
}

fn build(task: MixTask, seed: u64) -> (ParamStore, ControllerModel) {
    let mut store = ParamStore::new();
    let model = ControllerModel::register(&mut store, "ctrl", desk_encoder(), task, &mut rng(seed));
    (store, model)
}

#[test]
fn min_samples_matches_conv_arithmetic() {
    let cfg = desk_encoder();
    // 4 stride-2 kernel-3 layers need 31 spectrogram frames.
    assert_eq!(cfg.min_frames(), 31);
    assert_eq!(cfg.min_samples(), 256 + 30 * 64);
    assert_eq!(EncoderConfig::default().min_frames(), 31);
}

#[test]
fn identical_tracks_identical_embeddings() {
    let (store, model) = build(MixTask::Basic, 1);
    let t = noise_track(3000, 2, 8000);
    let mut tape = Tape::new();
    let bound = store.bind_all(&mut tape, false);
    let a = model.encode(&mut tape, &bound, t.channel(0)).unwrap();
    let b = model.encode(&mut tape, &bound, t.channel(0)).unwrap();
    assert_eq!(tape.value(a).data, tape.value(b).data);
    assert_eq!(tape.value(a).numel(), 8);
}

#[test]
fn silent_tracks_share_one_embedding() {
    let (store, model) = build(MixTask::Basic, 3);
    let mut tape = Tape::new();
    let bound = store.bind_all(&mut tape, false);
    let s1 = vec![0.0; 2500];
    let s2 = vec![0.0; 2500];
    let a = model.encode(&mut tape, &bound, &s1).unwrap();
    let b = model.encode(&mut tape, &bound, &s2).unwrap();
    assert_eq!(tape.value(a).data, tape.value(b).data);
}

#[test]
fn embedding_length_independent_of_duration() {
    let (store, model) = build(MixTask::Basic, 4);
    let mut tape = Tape::new();
    let bound = store.bind_all(&mut tape, false);
    let short = noise_track(2500, 5, 8000);
    let long = noise_track(10_000, 6, 8000);
    let a = model.encode(&mut tape, &bound, short.channel(0)).unwrap();
    let b = model.encode(&mut tape, &bound, long.channel(0)).unwrap();
    assert_eq!(tape.value(a).numel(), tape.value(b).numel());
}

#[test]
fn too_short_track_is_error() {
    let (store, model) = build(MixTask::Basic, 7);
    let mut tape = Tape::new();
    let bound = store.bind_all(&mut tape, false);
    let t = vec![0.0; 100];
    assert!(matches!(
        model.encode(&mut tape, &bound, &t),
        Err(ControllerError::TrackTooShort { .. })
    ));
}

#[test]
fn context_embedding_is_symmetric_mean() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.constant(Tensor::vector(vec![3.0, 6.0]));
    let m = context_embedding(&mut tape, &[a, b]).unwrap();
    assert_eq!(tape.value(m).data, vec![2.0, 4.0]);
    let m2 = context_embedding(&mut tape, &[b, a]).unwrap();
    assert_eq!(tape.value(m2).data, vec![2.0, 4.0]);

    let single = context_embedding(&mut tape, &[a]).unwrap();
    assert_eq!(tape.value(single).data, vec![1.0, 2.0]);

    assert!(matches!(
        context_embedding(&mut tape, &[]),
        Err(ControllerError::EmptyEmbeddingList)
    ));
}

#[test]
fn post_process_output_dims_and_range() {
    for (task, dim) in [(MixTask::Basic, 2), (MixTask::Full, 26)] {
        let (store, model) = build(task, 8);
        let mut tape = Tape::new();
        let bound = store.bind_all(&mut tape, false);
        let e1 = tape.constant(Tensor::vector(vec![0.3; 8]));
        let e2 = tape.constant(Tensor::vector(vec![-0.2; 8]));
        let out = model
            .post_process(&mut tape, &bound, e1, e2, false, None)
            .unwrap();
        let v = tape.value(out);
        assert_eq!(v.numel(), dim);
        assert!(v.data.iter().all(|&x| x > 0.0 && x < 1.0));
    }
}

#[test]
fn inference_deterministic_dropout_only_in_training() {
    let (store, model) = build(MixTask::Basic, 9);
    let mut tape = Tape::new();
    let bound = store.bind_all(&mut tape, false);
    let e1 = tape.constant(Tensor::vector(vec![0.5; 8]));
    let e2 = tape.constant(Tensor::vector(vec![0.1; 8]));
    let a = model
        .post_process(&mut tape, &bound, e1, e2, false, None)
        .unwrap();
    let b = model
        .post_process(&mut tape, &bound, e1, e2, false, None)
        .unwrap();
    assert_eq!(tape.value(a).data, tape.value(b).data);

    // Two different dropout streams give different training outputs.
    let c = model
        .post_process(&mut tape, &bound, e1, e2, true, Some(&mut rng(100)))
        .unwrap();
    let d = model
        .post_process(&mut tape, &bound, e1, e2, true, Some(&mut rng(101)))
        .unwrap();
    assert_ne!(tape.value(c).data, tape.value(d).data);
}

fn run_session(
    store: &ParamStore,
    model: &ControllerModel,
    session: &MixSession,
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let bound = store.bind_all(&mut tape, false);
    let mut scratch = store.clone();
    let fwd = session_forward(
        &mut tape,
        model,
        None,
        &bound,
        &mut scratch,
        session,
        false,
        None,
    )
    .unwrap();
    (
        tape.value(fwd.left).data.clone(),
        tape.value(fwd.right).data.clone(),
        fwd.params_norm
            .iter()
            .map(|&v| tape.value(v).data.clone())
            .collect(),
    )
}

#[test]
fn permutation_equivariant_params_invariant_mix() {
    let (store, model) = build(MixTask::Basic, 10);
    for n_tracks in [2usize, 4, 6] {
        let tracks: Vec<AudioBuffer> = (0..n_tracks)
            .map(|i| noise_track(2600, 20 + i as u64, 8000))
            .collect();
        let session = MixSession::new(tracks.clone(), None);
        let (l, r, params) = run_session(&store, &model, &session);

        // Rotate the track order.
        let mut rotated = tracks.clone();
        rotated.rotate_left(1);
        let session2 = MixSession::new(rotated, None);
        let (l2, r2, params2) = run_session(&store, &model, &session2);

        for i in 0..n_tracks {
            assert_eq!(
                params[(i + 1) % n_tracks],
                params2[i],
                "params must permute with tracks"
            );
        }
        for (a, b) in l.iter().zip(&l2) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in r.iter().zip(&r2) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn duplicate_tracks_get_identical_params() {
    let (store, model) = build(MixTask::Basic, 11);
    let t = noise_track(2600, 30, 8000);
    let session = MixSession::new(vec![t.clone(), t], None);
    let (_, _, params) = run_session(&store, &model, &session);
    assert_eq!(params[0], params[1]);
}

#[test]
fn silent_session_mixes_to_silence() {
    let (store, model) = build(MixTask::Basic, 12);
    let t = AudioBuffer::mono(vec![0.0; 2600], 8000);
    let session = MixSession::new(vec![t], None);
    let out = predict_mix(&model, None, &store, &session).unwrap();
    assert!(out.mix.channel(0).iter().all(|&v| v == 0.0));
    assert!(out.mix.channel(1).iter().all(|&v| v == 0.0));
    assert_eq!(out.params.len(), 1);
    out.params[0].validate().unwrap();
}

#[test]
fn same_weights_scale_to_more_tracks() {
    let (store, model) = build(MixTask::Basic, 13);
    for n in [2usize, 12] {
        let tracks: Vec<AudioBuffer> = (0..n)
            .map(|i| noise_track(2600, 40 + i as u64, 8000))
            .collect();
        let session = MixSession::new(tracks, None);
        let out = predict_mix(&model, None, &store, &session).unwrap();
        assert_eq!(out.params.len(), n);
    }
}

#[test]
fn session_validation_errors() {
    let (store, model) = build(MixTask::Basic, 14);
    let a = noise_track(2600, 50, 8000);
    let b = noise_track(2000, 51, 8000);
    let session = MixSession::new(vec![a.clone(), b], None);
    assert!(matches!(
        predict_mix(&model, None, &store, &session),
        Err(ControllerError::TrackLengthMismatch { .. })
    ));

    let c = noise_track(2600, 52, 4000);
    let session = MixSession::new(vec![a.clone(), c], None);
    assert!(matches!(
        predict_mix(&model, None, &store, &session),
        Err(ControllerError::TrackRateMismatch { .. })
    ));

    let session = MixSession::new(vec![], None);
    assert!(matches!(
        predict_mix(&model, None, &store, &session),
        Err(ControllerError::EmptySession)
    ));

    let full = MixSession::new(vec![a], None);
    let (store_f, model_f) = build(MixTask::Full, 15);
    assert!(matches!(
        predict_mix(&model_f, None, &store_f, &full),
        Err(ControllerError::MissingTcn)
    ));
}

#[test]
fn params_from_normalized_denormalizes() {
    let p = params_from_normalized(&[0.75, 0.1], MixTask::Basic);
    assert_eq!(p.gain_db, 12.0); // -24 + 0.75 * 48
    assert_eq!(p.pan, 0.1);
    assert_eq!(p.comp_ratio, 1.0); // rest neutral

    let norm = [0.5; 26];
    let p = params_from_normalized(&norm, MixTask::Full);
    assert_eq!(p.polarity, 1.0); // forced positive
    p.validate().unwrap();
}

#[test]
fn end_to_end_weight_gradients_pass_gradcheck() {
    // Miniature config: embedding 8, 2 tracks, 4096 samples, basic task.
    let mut store = ParamStore::new();
    let model = ControllerModel::register(
        &mut store,
        "ctrl",
        EncoderConfig::miniature(),
        MixTask::Basic,
        &mut rng(16),
    );
    let tracks: Vec<AudioBuffer> = (0..2).map(|i| noise_track(4096, 60 + i, 8000)).collect();
    let mut r = rng(61);
    let target = AudioBuffer::stereo(
        (0..4096).map(|_| r.random_range(-0.5..0.5)).collect(),
        (0..4096).map(|_| r.random_range(-0.5..0.5)).collect(),
        8000,
    );
    let session = MixSession::new(tracks, None);
    let cfg = MultiResConfig::standard();

    let reports = grad_check_params(
        &store,
        |tape, bound, s| {
            let fwd = session_forward(tape, &model, None, bound, s, &session, false, None)
                .unwrap();
            stereo_loss_node(tape, fwd.left, fwd.right, &target, &cfg).unwrap()
        },
        1e-5,
    );
    for (name, report) in reports {
        assert!(
            report.max_rel_err < 1e-4,
            "{name}: rel err {} (excluded {:?})",
            report.max_rel_err,
            report.excluded
        );
    }
}
