//! Central finite-difference gradient verification.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max over non-excluded coordinates of
    /// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    pub max_rel_err: f64,
    /// Coordinates sitting on a detected nondifferentiable point (forward
    /// and backward one-sided differences disagree strongly). Reported,
    /// not failed.
    pub excluded: Vec<usize>,
    pub coords: usize,
}

/// Verify the tape gradient of `f` at `x` against central finite
/// differences with step `h`.
///
/// `f` builds a scalar loss from a leaf; it must be evaluable repeatedly
/// (each probe runs on a fresh tape).
pub fn grad_check(
    f: impl Fn(&mut Tape, Var) -> Var,
    x: &Tensor,
    h: f64,
) -> GradCheckReport {
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone(), true);
    let loss = f(&mut tape, leaf);
    assert!(
        tape.value(loss).is_scalar(),
        "grad_check requires a scalar-valued function"
    );
    tape.backward(loss).expect("backward");
    let analytic: Vec<f64> = tape
        .grad(leaf)
        .map(|g| g.to_vec())
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |probe: &Tensor| -> f64 {
        let mut t = Tape::new();
        let leaf = t.leaf(probe.clone(), false);
        let loss = f(&mut t, leaf);
        t.value(loss).item()
    };

    let mut max_rel_err: f64 = 0.0;
    let mut excluded = Vec::new();
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data[i] += h;
        let mut minus = x.clone();
        minus.data[i] -= h;
        let f0 = eval(x);
        let fp = eval(&plus);
        let fm = eval(&minus);

        let central = (fp - fm) / (2.0 * h);
        let fwd = (fp - f0) / h;
        let bwd = (f0 - fm) / h;

        // A kink between x-h and x+h makes the one-sided differences
        // disagree strongly at a non-vanishing scale.
        let side_gap = (fwd - bwd).abs();
        let side_mag = fwd.abs().max(bwd.abs());
        if side_gap > 0.5 * side_mag && side_mag > 100.0 * h {
            excluded.push(i);
            continue;
        }

        let a = analytic[i];
        let rel = (a - central).abs() / a.abs().max(central.abs()).max(1e-8);
        max_rel_err = max_rel_err.max(rel);
    }

    GradCheckReport {
        max_rel_err,
        excluded,
        coords: x.numel(),
    }
}

/// Verify tape gradients of a model's trainable parameters against central
/// finite differences.
///
/// `f` builds a scalar loss from a bound parameter store; it must be
/// deterministic. Every evaluation runs on a cloned store and a fresh
/// tape, so stateful entries (batchnorm running statistics) cannot drift
/// between probes. Returns one report per trainable parameter.
pub fn grad_check_params(
    store: &super::ParamStore,
    f: impl Fn(&mut Tape, &super::Bound, &mut super::ParamStore) -> Var,
    h: f64,
) -> Vec<(String, GradCheckReport)> {
    let mut s0 = store.clone();
    let mut tape = Tape::new();
    let bound = s0.bind_all(&mut tape, true);
    let loss = f(&mut tape, &bound, &mut s0);
    assert!(
        tape.value(loss).is_scalar(),
        "grad_check_params requires a scalar-valued function"
    );
    tape.backward(loss).expect("backward");

    let eval = |probe: &super::ParamStore| -> f64 {
        let mut s = probe.clone();
        let mut t = Tape::new();
        let b = s.bind_all(&mut t, false);
        let l = f(&mut t, &b, &mut s);
        t.value(l).item()
    };
    let f0 = eval(store);

    let mut out = Vec::new();
    for id in store.iter_ids() {
        let entry = store.entry(id);
        if !entry.trainable {
            continue;
        }
        let analytic: Vec<f64> = tape
            .grad(bound.var(id))
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; entry.tensor.numel()]);

        let mut max_rel_err: f64 = 0.0;
        let mut excluded = Vec::new();
        for i in 0..entry.tensor.numel() {
            let mut plus = store.clone();
            plus.get_mut(id).data[i] += h;
            let mut minus = store.clone();
            minus.get_mut(id).data[i] -= h;
            let fp = eval(&plus);
            let fm = eval(&minus);
            let central = (fp - fm) / (2.0 * h);
            let fwd = (fp - f0) / h;
            let bwd = (f0 - fm) / h;
            let side_gap = (fwd - bwd).abs();
            let side_mag = fwd.abs().max(bwd.abs());
            if side_gap > 0.5 * side_mag && side_mag > 100.0 * h {
                excluded.push(i);
                continue;
            }
            let a = analytic[i];
            let rel = (a - central).abs() / a.abs().max(central.abs()).max(1e-8);
            max_rel_err = max_rel_err.max(rel);
        }
        out.push((
            entry.name.clone(),
            GradCheckReport {
                max_rel_err,
                excluded,
                coords: entry.tensor.numel(),
            },
        ));
    }
    out
}

/// One row of the per-operator verification suite.
#[derive(Debug, Clone)]
pub struct OpCheck {
    pub name: &'static str,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.report.max_rel_err < self.tolerance
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor {
        shape: shape.to_vec(),
        data: (0..shape.iter().product())
            .map(|_| rng.random_range(lo..hi))
            .collect(),
    }
}

/// Random values bounded away from zero, for kinked ops.
fn rand_tensor_nonzero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor {
        shape: shape.to_vec(),
        data: (0..shape.iter().product())
            .map(|_| {
                let v: f64 = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect(),
    }
}

/// Gradient-check every engine operator at one seed. Elementwise ops are
/// held to 1e-6; compositions through batchnorm and rfft_mag to 1e-4.
pub fn op_gradcheck_suite(seed: u64) -> Vec<OpCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut out = Vec::new();
    let mut push = |name: &'static str, tolerance: f64, report: GradCheckReport| {
        out.push(OpCheck {
            name,
            tolerance,
            report,
        });
    };

    // Weighted sums make the loss a generic linear functional of the op
    // output, so the check exercises every output element.
    let weights = |tape: &mut Tape, n: usize, seed: u64| -> Var {
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let t = Tensor::vector((0..n).map(|_| r.random_range(-1.0..1.0)).collect());
        tape.constant(t)
    };

    // add / mul with both operands from the leaf (via crop), plus the
    // channel and scalar broadcast forms.
    let x = rand_tensor(&mut rng, &[12], -1.0, 1.0);
    push(
        "add",
        1e-6,
        grad_check(
            |t, v| {
                let a = t.crop(v, 0, 6).unwrap();
                let b = t.crop(v, 6, 6).unwrap();
                let s = t.add(a, b).unwrap();
                let w = weights(t, 6, seed);
                let sw = t.mul(s, w).unwrap();
                t.sum(sw)
            },
            &x,
            h,
        ),
    );
    push(
        "mul",
        1e-6,
        grad_check(
            |t, v| {
                let a = t.crop(v, 0, 6).unwrap();
                let b = t.crop(v, 6, 6).unwrap();
                let s = t.mul(a, b).unwrap();
                let w = weights(t, 6, seed + 1);
                let sw = t.mul(s, w).unwrap();
                t.sum(sw)
            },
            &x,
            h,
        ),
    );
    let x = rand_tensor(&mut rng, &[15], -1.0, 1.0);
    push(
        "add_channel_broadcast",
        1e-6,
        grad_check(
            |t, v| {
                let a = t.crop(v, 0, 12).unwrap();
                let a = t.reshape(a, &[3, 4]).unwrap();
                let b = t.crop(v, 12, 3).unwrap();
                let s = t.add(a, b).unwrap();
                t.sum(s)
            },
            &x,
            h,
        ),
    );
    push(
        "mul_channel_broadcast",
        1e-6,
        grad_check(
            |t, v| {
                let a = t.crop(v, 0, 12).unwrap();
                let a = t.reshape(a, &[3, 4]).unwrap();
                let b = t.crop(v, 12, 3).unwrap();
                let s = t.mul(a, b).unwrap();
                t.sum(s)
            },
            &x,
            h,
        ),
    );

    let x = rand_tensor(&mut rng, &[12], -1.0, 1.0);
    push(
        "matmul",
        1e-6,
        grad_check(
            |t, v| {
                let a = t.crop(v, 0, 6).unwrap();
                let a = t.reshape(a, &[2, 3]).unwrap();
                let b = t.crop(v, 6, 6).unwrap();
                let b = t.reshape(b, &[3, 2]).unwrap();
                let m = t.matmul(a, b).unwrap();
                let m = t.reshape(m, &[4]).unwrap();
                let w = weights(t, 4, seed + 2);
                let mw = t.mul(m, w).unwrap();
                t.sum(mw)
            },
            &x,
            h,
        ),
    );

    // conv1d: input, weights, and bias all from the leaf.
    let x = rand_tensor(&mut rng, &[2 * 10 + 2 * 2 * 3 + 2], -1.0, 1.0);
    for (name, dilation, stride) in [
        ("conv1d_dilated", 2usize, 1usize),
        ("conv1d_strided", 1, 2),
    ] {
        push(
            name,
            1e-6,
            grad_check(
                |t, v| {
                    let xin = t.crop(v, 0, 20).unwrap();
                    let xin = t.reshape(xin, &[2, 10]).unwrap();
                    let w = t.crop(v, 20, 12).unwrap();
                    let w = t.reshape(w, &[2, 2, 3]).unwrap();
                    let b = t.crop(v, 32, 2).unwrap();
                    let y = t.conv1d(xin, w, Some(b), dilation, stride).unwrap();
                    let n = t.value(y).numel();
                    let y = t.reshape(y, &[n]).unwrap();
                    let wt = weights(t, n, seed + 3);
                    let yw = t.mul(y, wt).unwrap();
                    t.sum(yw)
                },
                &x,
                h,
            ),
        );
    }

    let x = rand_tensor(&mut rng, &[21], -2.0, 2.0);
    push(
        "mean",
        1e-6,
        grad_check(
            |t, v| {
                let sq = t.power(v, 2.0);
                t.mean(sq)
            },
            &x,
            h,
        ),
    );
    push(
        "sum",
        1e-6,
        grad_check(
            |t, v| {
                let sq = t.power(v, 2.0);
                t.sum(sq)
            },
            &x,
            h,
        ),
    );
    push(
        "mean_time",
        1e-6,
        grad_check(
            |t, v| {
                let m = t.reshape(v, &[3, 7]).unwrap();
                let mt = t.mean_time(m).unwrap();
                let w = weights(t, 3, seed + 4);
                let mw = t.mul(mt, w).unwrap();
                t.sum(mw)
            },
            &x,
            h,
        ),
    );

    let x = rand_tensor_nonzero(&mut rng, &[16]);
    push(
        "abs",
        1e-6,
        grad_check(
            |t, v| {
                let a = t.abs(v);
                let w = weights(t, 16, seed + 5);
                let aw = t.mul(a, w).unwrap();
                t.sum(aw)
            },
            &x,
            h,
        ),
    );

    let x = rand_tensor(&mut rng, &[16], 0.5, 2.0);
    push(
        "log",
        1e-6,
        grad_check(
            |t, v| {
                let l = t.log(v).unwrap();
                let w = weights(t, 16, seed + 6);
                let lw = t.mul(l, w).unwrap();
                t.sum(lw)
            },
            &x,
            h,
        ),
    );
    let x = rand_tensor(&mut rng, &[16], 0.25, 4.0);
    push(
        "sqrt",
        1e-6,
        grad_check(
            |t, v| {
                let s = t.sqrt(v);
                let w = weights(t, 16, seed + 7);
                let sw = t.mul(s, w).unwrap();
                t.sum(sw)
            },
            &x,
            h,
        ),
    );
    let x = rand_tensor(&mut rng, &[16], -2.0, 2.0);
    for (name, f) in [
        ("exp", 0usize),
        ("sin", 1),
        ("cos", 2),
        ("sigmoid", 3),
        ("tanh", 4),
    ] {
        push(
            name,
            1e-6,
            grad_check(
                |t, v| {
                    let y = match f {
                        0 => t.exp(v),
                        1 => t.sin(v),
                        2 => t.cos(v),
                        3 => t.sigmoid(v),
                        _ => t.tanh(v),
                    };
                    let w = weights(t, 16, seed + 8 + f as u64);
                    let yw = t.mul(y, w).unwrap();
                    t.sum(yw)
                },
                &x,
                h,
            ),
        );
    }

    let x = rand_tensor(&mut rng, &[16], 0.3, 2.0);
    push(
        "power",
        1e-6,
        grad_check(
            |t, v| {
                let y = t.power(v, 2.5);
                let w = weights(t, 16, seed + 13);
                let yw = t.mul(y, w).unwrap();
                t.sum(yw)
            },
            &x,
            h,
        ),
    );

    let x = rand_tensor(&mut rng, &[14], -1.0, 1.0);
    push(
        "concat",
        1e-6,
        grad_check(
            |t, v| {
                let a = t.crop(v, 0, 5).unwrap();
                let b = t.crop(v, 5, 9).unwrap();
                let c = t.concat(&[a, b]).unwrap();
                let w = weights(t, 14, seed + 14);
                let cw = t.mul(c, w).unwrap();
                t.sum(cw)
            },
            &x,
            h,
        ),
    );
    push(
        "crop",
        1e-6,
        grad_check(
            |t, v| {
                let c = t.crop(v, 3, 7).unwrap();
                let w = weights(t, 7, seed + 15);
                let cw = t.mul(c, w).unwrap();
                t.sum(cw)
            },
            &x,
            h,
        ),
    );

    // prelu with per-channel alpha taken from the leaf.
    let mut x = rand_tensor_nonzero(&mut rng, &[3 * 5 + 3]);
    for a in &mut x.data[15..] {
        *a = a.abs() * 0.5;
    }
    push(
        "prelu",
        1e-6,
        grad_check(
            |t, v| {
                let xin = t.crop(v, 0, 15).unwrap();
                let xin = t.reshape(xin, &[3, 5]).unwrap();
                let alpha = t.crop(v, 15, 3).unwrap();
                let y = t.prelu(xin, alpha).unwrap();
                let y = t.reshape(y, &[15]).unwrap();
                let w = weights(t, 15, seed + 16);
                let yw = t.mul(y, w).unwrap();
                t.sum(yw)
            },
            &x,
            h,
        ),
    );

    let x = rand_tensor(&mut rng, &[3 * 8], -1.5, 1.5);
    push(
        "batchnorm_train",
        1e-4,
        grad_check(
            |t, v| {
                let m = t.reshape(v, &[3, 8]).unwrap();
                let (y, _, _) = t.batchnorm_train(m, 1e-5).unwrap();
                let y = t.reshape(y, &[24]).unwrap();
                let w = weights(t, 24, seed + 17);
                let yw = t.mul(y, w).unwrap();
                t.sum(yw)
            },
            &x,
            h,
        ),
    );
    push(
        "batchnorm_infer",
        1e-6,
        grad_check(
            |t, v| {
                let m = t.reshape(v, &[3, 8]).unwrap();
                let y = t
                    .batchnorm_infer(m, &[0.1, -0.2, 0.05], &[1.1, 0.9, 1.4], 1e-5)
                    .unwrap();
                let y = t.reshape(y, &[24]).unwrap();
                let w = weights(t, 24, seed + 18);
                let yw = t.mul(y, w).unwrap();
                t.sum(yw)
            },
            &x,
            h,
        ),
    );

    let x = rand_tensor(&mut rng, &[16], -1.0, 1.0);
    push(
        "rfft_mag",
        1e-4,
        grad_check(
            |t, v| {
                let m = t.rfft_mag(v).unwrap();
                let w = weights(t, 9, seed + 19);
                let mw = t.mul(m, w).unwrap();
                t.sum(mw)
            },
            &x,
            h,
        ),
    );

    out
}
