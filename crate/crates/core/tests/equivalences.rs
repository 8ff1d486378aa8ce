//! Degenerate saliency grids and tied parameters reduce the two-path
//! attention to plain soft attention.

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salcap::attention::Variant;
use salcap::decoder::{ImageInput, Model};
use salcap::inference::greedy_decode;
use salcap::numerics::Tape;

const TOL: f64 = 1e-12;
const IDS: [usize; 6] = [1, 4, 7, 3, 8, 2];

/// Per-step attention scores, weights and context vectors plus the summed
/// teacher-forced loss.
struct Run {
    e: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    v_hat: Vec<Vec<f64>>,
    loss: f64,
}

fn run(model: &Model, image: &ImageInput) -> Run {
    let mut tape = Tape::new();
    let mut session = model.session(&mut tape, image).unwrap();
    let mut out = Run {
        e: vec![],
        alpha: vec![],
        v_hat: vec![],
        loss: 0.0,
    };
    for t in 0..IDS.len() - 1 {
        let step = session.step(&mut tape, IDS[t]).unwrap();
        let val = |v| tape.value(v).data().to_vec();
        out.e.push(val(step.attention.e.unwrap()));
        out.alpha.push(val(step.attention.alpha.unwrap()));
        out.v_hat.push(val(step.attention.v_hat));
        let ce = tape.cross_entropy(step.logits, IDS[t + 1]).unwrap();
        out.loss += tape.value(ce).item().unwrap();
    }
    let mut t2 = Tape::new();
    let (nll, _) = model.sequence_nll(&mut t2, image, &IDS).unwrap();
    assert!((t2.value(nll).item().unwrap() - out.loss).abs() < TOL);
    out
}

fn assert_same(a: &Run, b: &Run, what: &str) {
    for t in 0..a.e.len() {
        assert!(max_diff(&a.e[t], &b.e[t]) <= TOL, "{what}: e at step {t}");
        assert!(max_diff(&a.alpha[t], &b.alpha[t]) <= TOL, "{what}: alpha at step {t}");
        assert!(max_diff(&a.v_hat[t], &b.v_hat[t]) <= TOL, "{what}: v_hat at step {t}");
    }
    assert!((a.loss - b.loss).abs() <= TOL, "{what}: loss {} vs {}", a.loss, b.loss);
}

/// Soft attention model using one path of a two-path model.
fn soft_from_path(model: &Model, path: &str) -> Model {
    let prefix = format!("att.{path}.");
    remap(model.params(), Variant::Soft, |n| {
        if let Some(rest) = n.strip_prefix(&prefix) {
            Some(format!("att.{rest}"))
        } else if n.starts_with("att.") {
            None
        } else {
            Some(n.to_string())
        }
    })
}

#[test]
fn all_salient_grid_is_the_salient_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..10 {
        let sc = random_model(Variant::SaliencyContext, seed);
        let image = with_saliency(&random_image(6, 5, &mut rng), vec![1.0; 6]);
        assert_same(&run(&sc, &image), &run(&soft_from_path(&sc, "sal"), &image), "s = 1");
    }
}

#[test]
fn all_context_grid_is_the_context_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..10 {
        let sc = random_model(Variant::SaliencyContext, seed);
        let image = with_saliency(&random_image(6, 5, &mut rng), vec![0.0; 6]);
        assert_same(&run(&sc, &image), &run(&soft_from_path(&sc, "ctx"), &image), "s = 0");
    }
}

#[test]
fn tied_paths_are_soft_attention_for_any_grid() {
    let sc = random_model(Variant::SaliencyContext, 5);
    // Overwrite the context path with a copy of the salient one.
    let mut store = sc.params().clone();
    for k in ["W_ae", "W_he", "v_e"] {
        let v = store.by_name(&format!("att.sal.{k}")).unwrap().value.clone();
        let id = store.id(&format!("att.ctx.{k}")).unwrap();
        store.get_mut(id).value = v;
    }
    let tied = Model::from_store(config(Variant::SaliencyContext), store).unwrap();
    let soft = soft_from_path(&tied, "sal");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = random_image(6, 5, &mut rng);
    for _ in 0..100 {
        let s: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..=1.0)).collect();
        let image = with_saliency(&base, s);
        assert_same(&run(&tied, &image), &run(&soft, &image), "tied paths");
    }
}

#[test]
fn shared_weights_with_equal_vectors_is_soft_attention() {
    let sw = random_model(Variant::SharedWeights, 8);
    let mut store = sw.params().clone();
    let v = store.by_name("att.sal.v_e").unwrap().value.clone();
    let id = store.id("att.ctx.v_e").unwrap();
    store.get_mut(id).value = v;
    let sw = Model::from_store(config(Variant::SharedWeights), store).unwrap();
    let soft = remap(sw.params(), Variant::Soft, |n| match n {
        "att.sal.v_e" => Some("att.v_e".into()),
        "att.ctx.v_e" => None,
        other => Some(other.to_string()),
    });
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let image = random_image(6, 5, &mut rng);
        assert_same(&run(&sw, &image), &run(&soft, &image), "shared weights");
    }
}

#[test]
fn uniform_saliency_on_saliency_is_scaled_soft() {
    // attention_on_saliency with s = 1 everywhere scores exactly like soft.
    let on = random_model(Variant::AttentionOnSaliency, 9);
    let soft = remap(on.params(), Variant::Soft, |n| Some(n.to_string()));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let image = with_saliency(&random_image(6, 5, &mut rng), vec![1.0; 6]);
    assert_same(&run(&on, &image), &run(&soft, &image), "s = 1 on saliency");
}

#[test]
fn saliency_pooling_context_is_time_invariant() {
    let model = random_model(Variant::SaliencyPooling, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let image = random_image(6, 5, &mut rng);
    let mut tape = Tape::new();
    let mut session = model.session(&mut tape, &image).unwrap();
    let mut word = salcap::vocab::BOS;
    let mut first: Option<Vec<u64>> = None;
    for _ in 0..20 {
        let out = session.step(&mut tape, word).unwrap();
        let bits: Vec<u64> = tape
            .value(out.attention.v_hat)
            .data()
            .iter()
            .map(|x| x.to_bits())
            .collect();
        match &first {
            None => first = Some(bits),
            Some(f) => assert_eq!(f, &bits),
        }
        let logits = tape.value(out.logits).data();
        word = (3..logits.len())
            .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
            .unwrap();
    }
    // v_hat is the saliency-weighted feature sum, with no normalisation.
    let grid = tape.value(session.grid());
    let expect: Vec<f64> = (0..grid.cols())
        .map(|j| {
            (0..grid.rows())
                .map(|i| image.saliency.salient()[i] * grid.row(i)[j])
                .sum()
        })
        .collect();
    let got: Vec<f64> = first.unwrap().iter().map(|b| f64::from_bits(*b)).collect();
    assert!(max_diff(&got, &expect) < 1e-12);
    assert!(greedy_decode(&model, &image, 20).is_ok());
}
