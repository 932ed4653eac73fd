use proptest::prelude::*;
use tcn_nids::nn::{
    build_cnn_baseline, build_tcn, read_model, receptive_field, write_model, ArchConfig, Mode, Model,
};
use tcn_nids::numerics::{Rng, Tensor};
use tcn_nids::Error;

fn small(num_classes: usize) -> ArchConfig {
    ArchConfig {
        input_length: 12,
        channels: 6,
        head_units: 8,
        num_classes,
        ..Default::default()
    }
}

fn batch(rng: &mut Rng, b: usize, t: usize) -> Tensor {
    Tensor::new(vec![b, t, 1], (0..b * t).map(|_| rng.normal()).collect()).unwrap()
}

#[test]
fn model_file_round_trip_preserves_predictions() {
    let model = Model::new(build_tcn(&small(4)).unwrap(), 9).unwrap();
    let bytes = write_model(&model).unwrap();
    let back = read_model(&bytes).unwrap();
    assert_eq!(back, model);
    let x = batch(&mut Rng::new(1), 5, 12);
    assert_eq!(back.predict_proba(&x).unwrap(), model.predict_proba(&x).unwrap());
    assert_eq!(write_model(&back).unwrap(), bytes);
}

#[test]
fn model_file_rejects_damage() {
    let model = Model::new(build_cnn_baseline(&small(3)).unwrap(), 2).unwrap();
    let bytes = write_model(&model).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();

    let newer = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
    assert!(matches!(read_model(newer.as_bytes()), Err(Error::Version { found: 2, expected: 1 })));

    let truncated = &bytes[..bytes.len() - 20];
    assert!(read_model(truncated).is_err());
    assert!(read_model(b"not a model").is_err());
}

#[test]
fn default_tcn_has_a_29_step_receptive_field() {
    assert_eq!(receptive_field(&build_tcn(&ArchConfig::default()).unwrap()), 29);
}

#[test]
fn inference_is_deterministic_and_training_mode_is_not() {
    let model = Model::new(build_tcn(&small(5)).unwrap(), 4).unwrap();
    let x = batch(&mut Rng::new(3), 4, 12);
    let a = model.forward(&x, Mode::Inference, &mut Rng::new(1)).unwrap();
    let b = model.forward(&x, Mode::Inference, &mut Rng::new(2)).unwrap();
    assert_eq!(a.logits, b.logits);
    let c = model.forward(&x, Mode::Train, &mut Rng::new(1)).unwrap();
    let d = model.forward(&x, Mode::Train, &mut Rng::new(2)).unwrap();
    assert_ne!(c.logits, d.logits);
}

#[test]
fn wrong_input_shape_is_a_dimension_error() {
    let model = Model::new(build_tcn(&small(3)).unwrap(), 1).unwrap();
    let x = batch(&mut Rng::new(1), 2, 11);
    assert!(matches!(model.predict(&x), Err(Error::Dimension(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn receptive_field_formula(k in 1usize..5, dilations in prop::collection::vec(1usize..9, 1..4)) {
        let cfg = ArchConfig { kernel_size: k, dilations: dilations.clone(), ..Default::default() };
        let want = 1 + 2 * (k - 1) * dilations.iter().sum::<usize>();
        prop_assert_eq!(receptive_field(&build_tcn(&cfg).unwrap()), want);
    }

    #[test]
    fn probabilities_are_distributions(seed in any::<u64>(), b in 1usize..6) {
        let model = Model::new(build_tcn(&small(7)).unwrap(), seed).unwrap();
        let probs = model.predict_proba(&batch(&mut Rng::new(seed), b, 12)).unwrap();
        prop_assert_eq!(probs.shape(), &[b, 7][..]);
        for row in probs.data().chunks(7) {
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
