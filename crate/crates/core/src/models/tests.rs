use super::*;
use crate::data::{average_sequence, LabSequence};
use crate::metrics::f1_scores;
use crate::numcore::{grad_check, GradCheckConfig};
use crate::problayer::kl_diag;
use crate::problayer::DiagGaussian;
use crate::rng::stream;
use alloc::{format, vec};
use rand::Rng as _;

const M: usize = 5;
const C: usize = 3;

fn mini_config(arch: Architecture) -> ModelConfig {
    ModelConfig {
        hidden_dim: 4,
        latent_dim: 3,
        ..ModelConfig::new(arch, M, C)
    }
}

/// Random values with roughly a third of the cells masked; masked cells
/// hold `fill`.
fn random_seq(seed: u64, days: usize, fill: f64) -> LabSequence {
    let mut rng = stream(&[seed, 99]);
    let mut seq =
        LabSequence::empty(format!("e{seed}"), (seed % C as u64) as usize, days, M).unwrap();
    for t in 0..days {
        for m in 0..M {
            let v: f64 = rng.random_range(-2.0..2.0);
            let observed = rng.random_bool(0.65) || (t == 0 && m == 0);
            seq.set(t, m, if observed { v } else { fill }, observed);
        }
    }
    seq
}

fn batch(fill: f64) -> Vec<LabSequence> {
    (0..4).map(|i| random_seq(i, 3, fill)).collect()
}

fn sampling_for(i: usize) -> Sampling {
    Sampling::Seeded(1000 + i as u64)
}

fn batch_loss(model: &Model, data: &[LabSequence]) -> f64 {
    data.iter()
        .enumerate()
        .map(|(i, s)| model.loss(s, sampling_for(i)).unwrap().total)
        .sum::<f64>()
        / data.len() as f64
}

fn batch_grad(model: &Model, data: &[LabSequence]) -> (f64, Gradients) {
    let mut grads = model.zero_grads();
    let scale = 1.0 / data.len() as f64;
    let mut total = 0.0;
    for (i, s) in data.iter().enumerate() {
        total += model
            .loss_and_grad(s, sampling_for(i), &mut grads, scale)
            .unwrap()
            .total
            * scale;
    }
    (total, grads)
}

fn check_gradients(arch: Architecture, eta: f64, disc_weight: f64) {
    let cfg = ModelConfig {
        eta,
        disc_weight,
        ..mini_config(arch)
    };
    let model = Model::new(cfg, 5).unwrap();
    let data = batch(0.0);
    let (total, grads) = batch_grad(&model, &data);
    assert!((total - batch_loss(&model, &data)).abs() < 1e-12);
    let tol = if arch.is_stochastic() { 1e-3 } else { 1e-4 };
    let mut probe = model.clone();
    let report = grad_check(
        |theta| {
            probe.params_mut().load_flat(theta).unwrap();
            batch_loss(&probe, &data)
        },
        &model.params().flatten(),
        &grads.flatten(),
        &GradCheckConfig::with_tolerance(tol),
    )
    .unwrap();
    assert!(
        report.passed,
        "{arch} eta={eta} dw={disc_weight}: {report:?}"
    );
    let coords = model.params().num_scalars().min(1000);
    assert!(10 * report.checked >= 9 * coords, "{arch}: {report:?}");
}

#[test]
fn gradients_match_finite_differences() {
    for arch in Architecture::ALL {
        check_gradients(arch, 0.5, 1.0);
    }
}

#[test]
fn gradients_match_for_degenerate_weights() {
    for arch in [
        Architecture::AeNn,
        Architecture::VaeNn,
        Architecture::VrnnNn,
    ] {
        check_gradients(arch, 0.0, 1.0);
        check_gradients(arch, 0.7, 0.0);
    }
}

#[test]
fn masked_cells_never_matter() {
    for arch in Architecture::ALL {
        let model = Model::new(mini_config(arch), 3).unwrap();
        let clean = batch(0.0);
        let dirty = batch(1234.5);
        assert_ne!(clean[0].values(), dirty[0].values());
        let (a, ga) = batch_grad(&model, &clean);
        let (b, gb) = batch_grad(&model, &dirty);
        assert_eq!(a.to_bits(), b.to_bits(), "{arch}");
        assert_eq!(ga.flatten(), gb.flatten(), "{arch}");
        for (c, d) in clean.iter().zip(&dirty) {
            assert_eq!(
                model.predict_proba(c).unwrap(),
                model.predict_proba(d).unwrap()
            );
            assert_eq!(model.features(c).unwrap(), model.features(d).unwrap());
            if arch == Architecture::VrnnNn {
                assert_eq!(model.reconstruct(c).unwrap(), model.reconstruct(d).unwrap());
            }
        }
    }
}

#[test]
fn eta_zero_leaves_cross_entropy() {
    for arch in Architecture::ALL {
        let cfg = ModelConfig {
            eta: 0.0,
            ..mini_config(arch)
        };
        let model = Model::new(cfg, 8).unwrap();
        for (i, s) in batch(0.0).iter().enumerate() {
            let parts = model.loss(s, sampling_for(i)).unwrap();
            assert_eq!(parts.total, parts.discriminative, "{arch}");
        }
    }
}

#[test]
fn vae_with_eta_zero_and_means_matches_mean_probs() {
    // with sampling disabled the VAE objective is the classifier's CE on μ_z
    let cfg = ModelConfig {
        eta: 0.0,
        ..mini_config(Architecture::VaeNn)
    };
    let model = Model::new(cfg, 2).unwrap();
    let s = random_seq(4, 3, 0.0);
    let a = model.loss(&s, Sampling::Mean).unwrap();
    let b = model.loss(&s, Sampling::Seeded(9)).unwrap();
    assert_eq!(a.total, b.total);
    let probs = model.predict_proba(&s).unwrap();
    assert_eq!(a.total, -libm::log(probs[s.label]));
}

#[test]
fn probabilities_sum_to_one() {
    for arch in Architecture::ALL {
        let model = Model::new(mini_config(arch), 1).unwrap();
        for s in batch(0.0) {
            let p = model.predict_proba(&s).unwrap();
            assert_eq!(p.len(), C);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_weights_give_uniform_probabilities() {
    let mut model = Model::new(mini_config(Architecture::Nn), 1).unwrap();
    model
        .params_mut()
        .tensors_mut()
        .iter_mut()
        .for_each(|t| t.fill(0.0));
    let p = model.predict_proba(&random_seq(1, 3, 0.0)).unwrap();
    assert_eq!(p, vec![1.0 / 3.0; 3]);
}

#[test]
fn vae_classifier_reads_the_posterior_mean() {
    let model = Model::new(mini_config(Architecture::VaeNn), 4).unwrap();
    let v = average_sequence(&random_seq(2, 3, 0.0));
    let sampled = vae_forward(&model, &v, Sampling::Seeded(1)).unwrap();
    let mean = vae_forward(&model, &v, Sampling::Mean).unwrap();
    assert_ne!(sampled.sample.z, sampled.q.mu);
    assert_eq!(sampled.probs, mean.probs);
    assert_eq!(model.features(&random_seq(2, 3, 0.0)).unwrap(), mean.q.mu);
    assert!(sampled
        .decoder_dist
        .sigma
        .iter()
        .all(|&s| s >= libm::exp(-7.0)));
    assert_eq!(
        sampled,
        vae_forward(&model, &v, Sampling::Seeded(1)).unwrap()
    );
}

#[test]
fn all_masked_vae_input_costs_only_kl() {
    let model = Model::new(mini_config(Architecture::VaeNn), 4).unwrap();
    let v = MaskedVector {
        values: vec![3.0; M],
        mask: vec![false; M],
    };
    let trace = vae_forward(&model, &v, Sampling::Seeded(3)).unwrap();
    let parts = vae_loss(&trace, &v, 1, model.config()).unwrap();
    let kl = kl_diag(&trace.q, &DiagGaussian::standard(3)).unwrap();
    assert_eq!(parts.generative, kl);
}

#[test]
fn ae_perfect_reconstruction_has_no_generative_loss() {
    let model = Model::new(mini_config(Architecture::AeNn), 4).unwrap();
    let v = average_sequence(&random_seq(6, 3, 0.0));
    let trace = ae_forward(&model, &v).unwrap();
    let mut v2 = v.clone();
    for m in 0..M {
        if v2.mask[m] {
            v2.values[m] = trace.reconstruction[m];
        }
    }
    let trace2 = ae_forward(&model, &v2).unwrap();
    let mut fake = trace2.clone();
    fake.reconstruction = v2.values.clone();
    assert_eq!(
        ae_loss(&fake, &v2, 0, model.config()).unwrap().generative,
        0.0
    );
}

#[test]
fn rnn_pooling_and_order() {
    let model = Model::new(mini_config(Architecture::RnnNn), 4).unwrap();
    let one = random_seq(3, 1, 0.0);
    let trace = rnn_forward(&model, &one).unwrap();
    assert_eq!(trace.pooled, trace.steps[0].h);

    let seq = random_seq(3, 3, 0.0);
    let mut reversed = LabSequence::empty("r", seq.label, 3, M).unwrap();
    for t in 0..3 {
        for m in 0..M {
            reversed.set(2 - t, m, seq.value(t, m), seq.observed(t, m));
        }
    }
    assert_ne!(
        model.predict_proba(&seq).unwrap(),
        model.predict_proba(&reversed).unwrap()
    );
}

#[test]
fn vrnn_first_prior_is_shared_and_traces_repeat() {
    let model = Model::new(mini_config(Architecture::VrnnNn), 4).unwrap();
    let a = vrnn_forward(&model, &random_seq(1, 3, 0.0), Sampling::Seeded(5)).unwrap();
    let b = vrnn_forward(&model, &random_seq(2, 3, 0.0), Sampling::Seeded(6)).unwrap();
    assert_eq!(a.steps[0].prior, b.steps[0].prior);
    assert_ne!(a.steps[1].prior, b.steps[1].prior);
    let again = vrnn_forward(&model, &random_seq(1, 3, 0.0), Sampling::Seeded(5)).unwrap();
    assert_eq!(a, again);
    assert_eq!(a.steps.len(), 3);
}

#[test]
fn vrnn_step_zero_fills_masked_inputs() {
    let model = Model::new(mini_config(Architecture::VrnnNn), 4).unwrap();
    let h = vec![0.1; 4];
    let c = vec![-0.2; 4];
    let mask = [true, false, true, false, true];
    let a = vrnn_step(&model, &[1.0, 9.0, 2.0, 9.0, 3.0], &mask, &h, &c, None).unwrap();
    let b = vrnn_step(&model, &[1.0, 0.0, 2.0, 0.0, 3.0], &mask, &h, &c, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pinned_prior_matches_standard_normal_kl() {
    let mut model = Model::new(mini_config(Architecture::VrnnNn), 4).unwrap();
    for name in ["prior.out.weight", "prior.out.bias"] {
        let id = model.params().id_of(name).unwrap();
        model.params_mut().get_mut(id).fill(0.0);
    }
    let seq = random_seq(3, 3, 0.0);
    let trace = vrnn_forward(&model, &seq, Sampling::Seeded(2)).unwrap();
    let mut total = 0.0;
    for step in &trace.steps {
        assert_eq!(step.prior, DiagGaussian::standard(3));
        let vs_prior = kl_diag(&step.posterior, &step.prior).unwrap();
        let vs_standard = kl_diag(&step.posterior, &DiagGaussian::standard(3)).unwrap();
        assert!((vs_prior - vs_standard).abs() < 1e-15);
        total += vs_standard;
    }
    assert!(total > 0.0);
}

#[test]
fn vrnn_unobserved_day_adds_only_kl() {
    let model = Model::new(mini_config(Architecture::VrnnNn), 4).unwrap();
    let mut seq = random_seq(3, 3, 0.0);
    for m in 0..M {
        seq.hide(1, m);
    }
    let trace = vrnn_forward(&model, &seq, Sampling::Seeded(1)).unwrap();
    let parts = vrnn_loss(&trace, &seq, model.config()).unwrap();
    let mut expected = 0.0;
    for (t, s) in trace.steps.iter().enumerate() {
        expected += kl_diag(&s.posterior, &s.prior).unwrap();
        if t != 1 {
            expected -=
                crate::problayer::masked_gaussian_loglik(seq.row(t), seq.mask_row(t), &s.decoder);
        }
    }
    assert!((parts.generative - expected).abs() < 1e-12);
}

#[test]
fn feature_dimensions() {
    let s = random_seq(1, 3, 0.0);
    for arch in Architecture::ALL {
        let model = Model::new(mini_config(arch), 1).unwrap();
        let f = extract_features(&model, &s).unwrap();
        assert_eq!(f.len(), model.config().feature_dim(), "{arch}");
        assert_eq!(f, extract_features(&model, &s).unwrap());
    }
    assert_eq!(mini_config(Architecture::VaeNn).feature_dim(), 3);
    assert_eq!(mini_config(Architecture::VrnnNn).feature_dim(), 4);
}

#[test]
fn wrong_architecture_is_rejected() {
    let model = Model::new(mini_config(Architecture::RnnNn), 1).unwrap();
    assert!(matches!(
        model.reconstruct(&random_seq(1, 2, 0.0)),
        Err(Error::ArchitectureMismatch { .. })
    ));
    let v = average_sequence(&random_seq(1, 2, 0.0));
    assert!(vae_forward(&model, &v, Sampling::Mean).is_err());
    let other = Model::new(mini_config(Architecture::VaeNn), 1).unwrap();
    assert!(Model::from_params(mini_config(Architecture::RnnNn), other.params().clone()).is_err());
    assert!(Model::from_params(mini_config(Architecture::VaeNn), other.params().clone()).is_ok());
}

#[test]
fn architecture_names_round_trip() {
    for arch in Architecture::ALL {
        assert_eq!(arch.name().parse::<Architecture>().unwrap(), arch);
    }
    assert!("gru".parse::<Architecture>().is_err());
}

#[test]
fn config_validation() {
    let mut cfg = mini_config(Architecture::Nn);
    cfg.eta = -1.0;
    assert!(Model::new(cfg.clone(), 0).is_err());
    cfg.eta = 0.5;
    cfg.disc_weight = 0.0;
    assert!(Model::new(cfg, 0).is_err());
    let mut cfg = mini_config(Architecture::VrnnNn);
    cfg.disc_weight = 0.0;
    assert!(Model::new(cfg, 0).is_ok());
}

/// Three classes whose averaged vectors are linearly separable.
fn separable(n: usize, seed: u64) -> Vec<LabSequence> {
    let mut rng = stream(&[seed, 3]);
    (0..n)
        .map(|i| {
            let label = i % 3;
            let mut s = LabSequence::empty(format!("s{i}"), label, 2, M).unwrap();
            for t in 0..2 {
                for m in 0..M {
                    let centre = if m == label { 2.0 } else { -0.5 };
                    s.set(t, m, centre + rng.random_range(-0.5..0.5), true);
                }
            }
            s
        })
        .collect()
}

fn small_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        adam: AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        },
        batch_size: 16,
        max_epochs: 30,
        patience: 30,
        seed,
        ..TrainConfig::default()
    }
}

use crate::numcore::AdamConfig;

#[test]
fn nn_learns_separable_classes() {
    let data = separable(90, 1);
    let model = Model::new(ModelConfig::new(Architecture::Nn, M, 3), 1).unwrap();
    let out = Trainer::new(model, small_train_config(1))
        .unwrap()
        .run(&data, &data[..30])
        .unwrap();
    let preds = evaluate_predictions(&out.model, &data).unwrap();
    assert!(f1_scores(&preds).micro > 0.95);
}

#[test]
fn training_loss_falls_and_runs_repeat() {
    let data: Vec<LabSequence> = (0..40).map(|i| random_seq(i, 4, 0.0)).collect();
    let cfg = TrainConfig {
        max_epochs: 5,
        patience: 100,
        ..small_train_config(3)
    };
    let run = || {
        let model = Model::new(mini_config(Architecture::VrnnNn), 2).unwrap();
        Trainer::new(model, cfg.clone())
            .unwrap()
            .run(&data, &data[..10])
            .unwrap()
    };
    let a = run();
    let b = run();
    let losses: Vec<f64> = a.state.history.iter().map(|e| e.train_loss).collect();
    assert!(losses[4] < losses[0], "{losses:?}");
    assert_eq!(a.state, b.state);
    assert_eq!(a.model.params().flatten(), b.model.params().flatten());
}

#[test]
fn resumed_training_follows_the_same_path() {
    let data: Vec<LabSequence> = (0..30).map(|i| random_seq(i, 3, 0.0)).collect();
    let cfg = TrainConfig {
        max_epochs: 6,
        patience: 100,
        ..small_train_config(4)
    };
    let model = Model::new(mini_config(Architecture::VaeNn), 2).unwrap();
    let full = Trainer::new(model.clone(), cfg.clone())
        .unwrap()
        .run(&data, &data[..8])
        .unwrap();

    let mut first = Trainer::new(model, cfg.clone()).unwrap();
    for _ in 0..3 {
        first.run_epoch(&data, &data[..8]).unwrap();
    }
    let saved_params = first.model().params().clone();
    let saved_state = first.state().clone();
    let restored = Model::from_params(mini_config(Architecture::VaeNn), saved_params).unwrap();
    let resumed = Trainer::resume(restored, cfg, saved_state)
        .unwrap()
        .run(&data, &data[..8])
        .unwrap();
    assert_eq!(full.state, resumed.state);
    assert_eq!(
        full.model.params().flatten(),
        resumed.model.params().flatten()
    );
}

#[test]
fn early_stopping_restores_the_best_epoch() {
    let data = separable(30, 2);
    let cfg = TrainConfig {
        patience: 2,
        max_epochs: 50,
        ..small_train_config(5)
    };
    let model = Model::new(ModelConfig::new(Architecture::Nn, M, 3), 1).unwrap();
    let out = Trainer::new(model, cfg).unwrap().run(&data, &data).unwrap();
    let best = out.state.best_epoch.unwrap();
    assert!(out.state.history.len() < 50);
    assert_eq!(out.state.history.len(), best + 3);
    let preds = evaluate_predictions(&out.model, &data).unwrap();
    assert_eq!(Some(f1_scores(&preds).macro_), out.state.best_score);
}

#[test]
fn non_finite_loss_names_the_batch() {
    let data = separable(20, 2);
    let mut model = Model::new(ModelConfig::new(Architecture::Nn, M, 3), 1).unwrap();
    let id = model.params().id_of("classifier.out.bias").unwrap();
    model.params_mut().get_mut(id).fill(f64::NAN);
    let err = Trainer::new(model, small_train_config(1))
        .unwrap()
        .run(&data, &data)
        .err()
        .unwrap();
    assert_eq!(err, Error::NanLoss { epoch: 0, batch: 0 });
}
