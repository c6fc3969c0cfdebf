use amci::models::{Model, TailModel};
use amci::nn::Activation;
use amci::prob::{Distribution, RngStream};
use amci::proposals::{ConditionalProposal, ConditionerSpec, Family};
use amci::training::{batch_loss, Example, Objective, RefreshRegime, TrainConfig, TrainingRun, Truncation};
use std::sync::Arc;

fn proposal(family: Family, cond_dim: usize, hidden: Vec<usize>, seed: u64) -> ConditionalProposal {
    let spec = ConditionerSpec { hidden, activation: Activation::Tanh };
    let reference = family.default_reference();
    ConditionalProposal::new(family, cond_dim, &spec, &reference, &mut RngStream::new(seed, 0)).unwrap()
}

#[test]
fn tail_q2_recovers_most_of_the_information_in_y() {
    let model = TailModel::one_dim();
    let q = proposal(Family::DiagonalGaussian { dim: 1 }, 1, vec![64, 64, 64], 1);
    let cfg = TrainConfig { max_steps: 5_000, ..TrainConfig::default() };
    let (q, _) = TrainingRun::new(&model, Objective::q2(), q, cfg).unwrap().run().unwrap();

    let mut rng = RngStream::new(99, 0);
    let n = 20_000;
    let (mut learned, mut exact) = (0.0, 0.0);
    for _ in 0..n {
        let s = model.sample_joint(&[0.0], &mut rng).unwrap();
        let prior = model.log_prior(&s.x);
        learned += q.log_density(&s.x, &s.y).unwrap() - prior;
        exact += model.posterior(&s.y).unwrap().log_density(&s.x).unwrap() - prior;
    }
    let (learned, exact) = (learned / n as f64, exact / n as f64);
    // the exact posterior gains I(x; y) = ln(2)/2 nats over the prior
    assert!((exact - 0.5 * 2f64.ln()).abs() < 0.02, "{exact}");
    assert!(learned >= 0.9 * exact, "learned gain {learned}, exact {exact}");
}

fn held_out_loss(q: &ConditionalProposal, set: &[Example], log_scale: f64) -> f64 {
    let refs: Vec<&Example> = set.iter().collect();
    batch_loss(q, &refs, log_scale, false).unwrap().value
}

#[test]
fn q1_training_lowers_held_out_loss_across_seeds() {
    let model = TailModel::one_dim();
    let objective = || {
        let m = model.clone();
        Objective::q1_importance_sampled(Arc::new(model.half_normal_data_proposal()), Truncation::None)
            .with_lambda(Arc::new(move |_y: &[f64], theta: &[f64]| m.prior_tail_mass(theta)))
    };
    let held_out = objective().generate_set(&model, 4_000, &mut RngStream::new(77, 0)).unwrap();
    let mut improved = 0;
    for seed in 0..10 {
        let q0 = proposal(Family::DiagonalGaussian { dim: 1 }, 2, vec![16, 16], 100 + seed);
        let cfg = TrainConfig {
            regime: RefreshRegime { train_size: 2_000, validation_size: 500, batch_size: 64, ..RefreshRegime::default() },
            max_steps: 400,
            seed,
            ..TrainConfig::default()
        };
        let mut before = q0.clone();
        let (q, report) = TrainingRun::new(&model, objective(), q0, cfg).unwrap().run().unwrap();
        // the untrained conditioner takes the same input normalization
        before.set_normalizer(q.normalizer().clone()).unwrap();
        let (b, a) = (held_out_loss(&before, &held_out, report.log_scale), held_out_loss(&q, &held_out, report.log_scale));
        if a < b {
            improved += 1;
        }
    }
    assert!(improved >= 10, "improved in {improved} of 10 runs");
}

#[test]
fn trained_tail_q1_puts_its_mass_beyond_theta() {
    let model = TailModel::one_dim();
    let m = model.clone();
    let objective = Objective::q1_importance_sampled(Arc::new(model.half_normal_data_proposal()), Truncation::None)
        .with_lambda(Arc::new(move |_y: &[f64], theta: &[f64]| m.prior_tail_mass(theta)));
    let q = proposal(Family::DiagonalGaussian { dim: 1 }, 2, vec![32, 32], 3);
    let cfg = TrainConfig { max_steps: 1_500, final_learning_rate: Some(1e-4), ..TrainConfig::default() };
    let (q, _) = TrainingRun::new(&model, objective, q, cfg).unwrap().run().unwrap();
    let mut rng = RngStream::new(5, 0);
    for (y, theta) in [(0.0, 1.0), (1.0, 3.0), (-1.0, 2.0)] {
        let c = q.condition(&[y, theta]).unwrap();
        let above = (0..2_000).filter(|_| Distribution::sample(&c, &mut rng).0[0] > theta).count();
        assert!(above > 1_000, "(y, theta) = ({y}, {theta}): {above} of 2000 above theta");
    }
}
