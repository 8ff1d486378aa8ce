mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use salcap::attention::Variant;
use salcap::decoder::Model;
use salcap::inference::{greedy_decode, trace_attention};
use salcap::numerics::Tensor;
use salcap::vocab::{BOS, EOS, PAD};
use salcap::Error;

/// All weights zero except large gate biases, so `h > 0` everywhere, and an
/// output matrix whose only non-zero row is `favoured`.
fn crafted(variant: Variant, favoured: usize) -> Model {
    let mut store = Model::init(config(variant), 0).unwrap().into_params();
    for slot in store.slots_mut() {
        let name = slot.name().to_string();
        let v = &mut slot.value;
        v.data_mut().iter_mut().for_each(|x| *x = 0.0);
        if name.starts_with("lstm.b.") {
            v.data_mut().iter_mut().for_each(|x| *x = 5.0);
        }
        if name == "out.W_p" {
            let h = v.cols();
            v.data_mut()[favoured * h..(favoured + 1) * h]
                .iter_mut()
                .for_each(|x| *x = 1.0);
        }
    }
    Model::from_store(config(variant), store).unwrap()
}

#[test]
fn dominant_eos_gives_empty_caption() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let image = random_image(4, 5, &mut rng);
    let d = greedy_decode(&crafted(Variant::Soft, EOS), &image, 10).unwrap();
    assert!(d.ids.is_empty());
    assert!(!d.truncated);
}

#[test]
fn cap_without_eos_is_flagged() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let image = random_image(4, 5, &mut rng);
    let d = greedy_decode(&crafted(Variant::SaliencyContext, 6), &image, 3).unwrap();
    assert_eq!(d.ids, vec![6, 6, 6]);
    assert!(d.truncated);
}

#[test]
fn special_ids_never_emitted() {
    // PAD and BOS favoured by the output layer are still skipped.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let image = random_image(4, 5, &mut rng);
    for favoured in [PAD, BOS] {
        let d = greedy_decode(&crafted(Variant::Soft, favoured), &image, 5).unwrap();
        assert!(d.ids.is_empty(), "ties fall to EOS, the lowest allowed id");
    }
    for seed in 0..20 {
        let model = random_model(Variant::ALL[seed as usize % 5], seed);
        let d = greedy_decode(&model, &random_image(4, 5, &mut rng), 15).unwrap();
        assert!(d.ids.iter().all(|&t| t > EOS));
    }
}

#[test]
fn zero_max_len_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let image = random_image(4, 5, &mut rng);
    assert!(greedy_decode(&random_model(Variant::Soft, 1), &image, 0).is_err());
}

#[test]
fn decoding_is_deterministic_and_trace_is_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for variant in [Variant::SharedWeights, Variant::SaliencyContext] {
        for seed in 0..10 {
            let model = random_model(variant, seed);
            let image = random_image(4, 5, &mut rng);
            let a = greedy_decode(&model, &image, 12).unwrap();
            let b = greedy_decode(&model, &image, 12).unwrap();
            let (c, trace) = trace_attention(&model, &image, 12).unwrap();
            assert_eq!(a, b);
            assert_eq!(a, c);
            let expected = a.ids.len() + usize::from(!a.truncated);
            assert_eq!(trace.records.len(), expected);
            for (k, r) in trace.records.iter().enumerate() {
                assert_eq!(r.t, k + 1);
                assert!((r.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                if k < a.ids.len() {
                    assert_eq!(r.token, a.ids[k]);
                } else {
                    assert_eq!(r.token, EOS);
                }
            }
        }
    }
}

#[test]
fn single_path_variants_cannot_be_traced() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let image = random_image(4, 5, &mut rng);
    for variant in [Variant::Soft, Variant::SaliencyPooling, Variant::AttentionOnSaliency] {
        let err = trace_attention(&random_model(variant, 1), &image, 5).unwrap_err();
        assert!(matches!(err, Error::UnsupportedVariant(_)));
    }
}

#[test]
fn half_saliency_averages_the_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = random_model(Variant::SaliencyContext, 2);
    let image = with_saliency(&random_image(4, 5, &mut rng), vec![0.5; 4]);
    let mut tape = salcap::numerics::Tape::new();
    let mut session = model.session(&mut tape, &image).unwrap();
    let out = session.step(&mut tape, BOS).unwrap();
    let att = out.attention;
    let (e, es, ec) = (
        tape.value(att.e.unwrap()),
        tape.value(att.e_sal.unwrap()),
        tape.value(att.e_ctx.unwrap()),
    );
    let mean = es.zip_map(ec, "mean", |a, b| 0.5 * (a + b)).unwrap();
    assert!(e.max_abs_diff(&mean).unwrap() < 1e-15);
    assert!(es.max_abs_diff(ec).unwrap() > 1e-6, "paths stay distinct");

    let (_, trace) = trace_attention(&model, &image, 1).unwrap();
    let r = &trace.records[0];
    assert_eq!(r.mean_e_sal, es.mean());
    assert_eq!(r.mean_e_ctx, ec.mean());
}

#[test]
fn trace_csv_and_alpha_export() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = random_model(Variant::SaliencyContext, 3);
    let image = random_image(4, 5, &mut rng);
    let (d, trace) = trace_attention(&model, &image, 4).unwrap();
    let caps = vec![vec!["a", "b", "c", "d", "e"]];
    let vocab = salcap::vocab::Vocabulary::build(&caps, 1).unwrap();
    let csv = trace.to_csv(&vocab).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,word,mean_e_sal,mean_e_ctx");
    assert_eq!(lines.len(), trace.records.len() + 1);
    assert!(lines[1].starts_with("1,"));
    let alpha: Tensor = trace.alpha_tensor().unwrap();
    assert_eq!(alpha.dims(), &[trace.records.len(), 4]);
    assert!(d.ids.len() <= 4);
}
