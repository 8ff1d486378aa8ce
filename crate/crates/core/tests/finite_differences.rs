//! Backprop against central differences for the composite operations, over
//! 200 randomly sized configurations each.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salcap::attention::{attend, AttentionVars, PathVars, SaliencyGrid, Variant};
use salcap::decoder::{lstm_step, output_distribution, project_features, GateVars, LstmState, LstmVars};
use salcap::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use salcap::optim::check_gradients;

const CASES: u64 = 200;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, dims: &[usize], scale: f64) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// `sum(out * weights)` with fixed random weights, so every output element
/// gets a distinct sensitivity.
fn weighted(tape: &mut Tape, out: Var, weights: &Tensor) -> Var {
    let w = tape.constant(weights.clone());
    let prod = tape.hadamard(out, w).unwrap();
    tape.sum(prod).unwrap()
}

fn add(store: &mut ParamStore, name: &str, t: Tensor) -> ParamId {
    store.insert(name, t).unwrap()
}

#[test]
fn lstm_step_gradients() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, d, e) = (rng.random_range(1..6), rng.random_range(1..5), rng.random_range(1..4));
        let mut store = ParamStore::new();
        let mut gates = vec![];
        for g in ["i", "f", "o", "g"] {
            gates.push([
                add(&mut store, &format!("W_v.{g}"), random(&mut rng, &[h, d], 1.0)),
                add(&mut store, &format!("W_w.{g}"), random(&mut rng, &[h, e], 1.0)),
                add(&mut store, &format!("W_h.{g}"), random(&mut rng, &[h, h], 1.0)),
                add(&mut store, &format!("b.{g}"), random(&mut rng, &[h], 1.0)),
            ]);
        }
        let v_hat = add(&mut store, "v_hat", random(&mut rng, &[d], 1.0));
        let w = add(&mut store, "w", random(&mut rng, &[e], 1.0));
        let h0 = add(&mut store, "h0", random(&mut rng, &[h], 1.0));
        let c0 = add(&mut store, "c0", random(&mut rng, &[h], 1.0));
        let wh = random(&mut rng, &[h], 1.0);
        let wc = random(&mut rng, &[h], 1.0);
        let report = check_gradients(&mut store, TOL, |s, tape| {
            let gv = |tape: &mut Tape, k: usize| GateVars {
                w_v: tape.param(s, gates[k][0]),
                w_w: tape.param(s, gates[k][1]),
                w_h: tape.param(s, gates[k][2]),
                b: tape.param(s, gates[k][3]),
            };
            let vars = LstmVars {
                input: gv(tape, 0),
                forget: gv(tape, 1),
                output: gv(tape, 2),
                cell: gv(tape, 3),
            };
            let state = LstmState {
                h: tape.param(s, h0),
                c: tape.param(s, c0),
            };
            let (vh, ww) = (tape.param(s, v_hat), tape.param(s, w));
            let step = lstm_step(tape, vh, ww, state, &vars)?;
            let a = weighted(tape, step.state.h, &wh);
            let b = weighted(tape, step.state.c, &wc);
            tape.add(a, b)
        })
        .unwrap();
        assert!(report.passed, "seed {seed}: {report:?}");
    }
}

#[test]
fn attention_gradients_every_variant() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let variant = Variant::ALL[seed as usize % Variant::ALL.len()];
        let (l, d, h, k) = (
            rng.random_range(1..7),
            rng.random_range(1..5),
            rng.random_range(1..5),
            rng.random_range(1..5),
        );
        let mut store = ParamStore::new();
        let grid = add(&mut store, "grid", random(&mut rng, &[l, d], 1.0));
        let h_prev = add(&mut store, "h", random(&mut rng, &[h], 1.0));
        let path = |store: &mut ParamStore, p: &str, rng: &mut ChaCha8Rng| {
            [
                add(store, &format!("{p}W_ae"), random(rng, &[k, d], 1.0)),
                add(store, &format!("{p}W_he"), random(rng, &[k, h], 1.0)),
                add(store, &format!("{p}v_e"), random(rng, &[k], 1.0)),
            ]
        };
        let sal = path(&mut store, "sal.", &mut rng);
        let ctx = path(&mut store, "ctx.", &mut rng);
        let s = SaliencyGrid::new((0..l).map(|_| rng.random_range(0.0..=1.0)).collect()).unwrap();
        let wv = random(&mut rng, &[d], 1.0);
        let wa = random(&mut rng, &[l], 1.0);
        let report = check_gradients(&mut store, TOL, |st, tape| {
            let pv = |tape: &mut Tape, ids: &[ParamId; 3], shared: Option<&[ParamId; 3]>| {
                let src = shared.unwrap_or(ids);
                PathVars {
                    w_ae: tape.param(st, src[0]),
                    w_he: tape.param(st, src[1]),
                    v_e: tape.param(st, ids[2]),
                }
            };
            let vars = match variant {
                Variant::SaliencyPooling => AttentionVars::Pooling,
                Variant::Soft | Variant::AttentionOnSaliency => AttentionVars::Single(pv(tape, &sal, None)),
                Variant::SharedWeights => AttentionVars::TwoPath {
                    sal: pv(tape, &sal, None),
                    ctx: pv(tape, &ctx, Some(&sal)),
                },
                Variant::SaliencyContext => AttentionVars::TwoPath {
                    sal: pv(tape, &sal, None),
                    ctx: pv(tape, &ctx, None),
                },
            };
            let (g, hp) = (tape.param(st, grid), tape.param(st, h_prev));
            let out = attend(tape, &vars, variant, g, &s, hp)?;
            let mut loss = weighted(tape, out.v_hat, &wv);
            if let Some(alpha) = out.alpha {
                let a = weighted(tape, alpha, &wa);
                loss = tape.add(loss, a)?;
            }
            Ok(loss)
        })
        .unwrap();
        assert!(report.passed, "seed {seed} {variant}: {report:?}");
    }
}

#[test]
fn projection_gradients() {
    let mut checked = 0;
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let (l, d_raw, d) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6));
        let raw = random(&mut rng, &[l, d_raw], 1.0);
        let w0 = random(&mut rng, &[d, d_raw], 1.0);
        let b0 = random(&mut rng, &[d], 1.0);
        // Skip draws with a pre-activation close to the relu kink.
        let pre = salcap::numerics::matmul(&raw, &w0.transpose().unwrap()).unwrap();
        let near_kink = (0..l).any(|i| pre.row(i).iter().zip(b0.data()).any(|(x, b)| (x + b).abs() < 1e-2));
        if near_kink {
            continue;
        }
        checked += 1;
        let mut store = ParamStore::new();
        let w = add(&mut store, "W", w0);
        let b = add(&mut store, "b", b0);
        let r = add(&mut store, "raw", raw);
        let weights = random(&mut rng, &[l, d], 1.0);
        let report = check_gradients(&mut store, TOL, |s, tape| {
            let (rv, wv, bv) = (tape.param(s, r), tape.param(s, w), tape.param(s, b));
            let a = project_features(tape, rv, wv, bv)?;
            Ok(weighted(tape, a, &weights))
        })
        .unwrap();
        assert!(report.passed, "seed {seed}: {report:?}");
    }
    assert!(checked > CASES as usize / 2);
}

#[test]
fn output_layer_gradients() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let (v, h) = (rng.random_range(2..9), rng.random_range(1..6));
        let target = rng.random_range(0..v);
        let mut store = ParamStore::new();
        let w_p = add(&mut store, "W_p", random(&mut rng, &[v, h], 2.0));
        let hid = add(&mut store, "h", random(&mut rng, &[h], 1.0));
        let weights = random(&mut rng, &[v], 1.0);
        let report = check_gradients(&mut store, TOL, |s, tape| {
            let (wv, hv) = (tape.param(s, w_p), tape.param(s, hid));
            let p = output_distribution(tape, hv, wv)?;
            let a = weighted(tape, p, &weights);
            let logits = tape.matmul(wv, hv)?;
            let ce = tape.cross_entropy(logits, target)?;
            tape.add(a, ce)
        })
        .unwrap();
        assert!(report.passed, "seed {seed}: {report:?}");
    }
}

#[test]
fn full_model_gradients_every_variant() {
    for variant in Variant::ALL {
        let report = salcap::optim::grad_check(&salcap::optim::tiny_config(variant), TOL, 7).unwrap();
        assert!(report.passed, "{variant}: {:.3e}", report.max_rel_err);
    }
}
