use super::*;
use crate::models::{Model, TailModel};
use crate::prob::{normal_cdf, normal_log_pdf, normal_sf, Density, DensityError, RngStream};
use crate::quadrature::integrate;
use proptest::prelude::*;
use std::f64::consts::PI;

fn batch(lw: Vec<f64>, f: Vec<f64>) -> WeightedBatch {
    WeightedBatch::new(lw, Some(f)).unwrap()
}

fn tail_batch(model: &TailModel, q: &dyn Distribution, n: usize, y: &[f64], theta: &[f64], rng: &mut RngStream) -> WeightedBatch {
    WeightedBatch::draw(q, n, rng, |x| -> Result<_, EstimatorError> { Ok(model.evaluate(x, y, theta)?) }).unwrap()
}

/// Density proportional to `|x| N(x; m, s²)` on one half-line: the optimal
/// proposal for a first moment split at zero.
struct HalfMoment {
    m: f64,
    s: f64,
    /// Positive half-line when true.
    upper: bool,
}

impl HalfMoment {
    /// `∫_0^∞ x N(x; m, s²) dx` with `m` mirrored for the negative half.
    fn mass(&self) -> f64 {
        let m = if self.upper { self.m } else { -self.m };
        m * normal_cdf(m / self.s) + self.s * normal_log_pdf(m / self.s, 0.0, 1.0).exp()
    }

    fn cdf_positive(&self, t: f64) -> f64 {
        let (m, s) = (if self.upper { self.m } else { -self.m }, self.s);
        let phi = |z: f64| normal_log_pdf(z, 0.0, 1.0).exp();
        let part = m * (normal_cdf((t - m) / s) - normal_cdf(-m / s)) + s * (phi(-m / s) - phi((t - m) / s));
        part / self.mass()
    }
}

impl Distribution for HalfMoment {
    fn dim(&self) -> usize {
        1
    }

    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) -> f64 {
        let u = rng.uniform_open();
        let (mut lo, mut hi) = (0.0, self.m.abs() + 40.0 * self.s);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_positive(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out[0] = if self.upper { 0.5 * (lo + hi) } else { -0.5 * (lo + hi) };
        self.log_density(out).unwrap()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64, DensityError> {
        let x = x[0];
        if (self.upper && x <= 0.0) || (!self.upper && x >= 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(x.abs().ln() + normal_log_pdf(x, self.m, self.s) - self.mass().ln())
    }
}

#[test]
fn is_with_target_as_proposal_returns_the_constant() {
    for n in [1, 7, 100] {
        let b = batch(vec![0.0; n], vec![2.5; n]);
        assert_eq!(is_estimate(&b).unwrap(), 2.5);
    }
}

#[test]
fn is_with_optimal_proposal_is_exact_for_one_sample() {
    let q = Density::truncated_normal(0.0, 1.0, 1.0, f64::INFINITY).unwrap();
    let mut rng = RngStream::new(1, 0);
    let mu = normal_sf(1.0);
    for _ in 0..20 {
        let (x, lq) = Distribution::sample(&q, &mut rng);
        let lw = normal_log_pdf(x[0], 0.0, 1.0) - lq;
        let est = is_estimate(&batch(vec![lw], vec![1.0])).unwrap();
        assert!((est / mu - 1.0).abs() < 1e-12, "{est} vs {mu}");
    }
}

#[test]
fn is_second_moment_within_three_standard_errors() {
    let q = Density::normal(0.0, 2f64.sqrt()).unwrap();
    let mut rng = RngStream::new(2, 0);
    let n = 1_000_000;
    let (mut lw, mut f) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let (x, lq) = Distribution::sample(&q, &mut rng);
        lw.push(normal_log_pdf(x[0], 0.0, 1.0) - lq);
        f.push(x[0] * x[0]);
    }
    let b = batch(lw, f);
    let est = is_estimate(&b).unwrap();
    let se = (b.variance(Some(&identity)) / n as f64).sqrt();
    assert!((est - 1.0).abs() < 3.0 * se, "{est} ± {se}");
}

#[test]
fn snis_reference_cases() {
    let b = batch(vec![-3.0, 10.0, 0.5], vec![1.0; 3]);
    assert_eq!(snis_estimate(&b).unwrap(), 1.0);
    let b = batch(vec![-700.0], vec![0.37]);
    assert_eq!(snis_estimate(&b).unwrap(), 0.37);
    let b = batch(vec![f64::NEG_INFINITY, -1.0], vec![5.0, 2.0]);
    assert_eq!(snis_estimate(&b).unwrap(), 2.0);
}

#[test]
fn snis_on_symmetric_tail_posterior() {
    let model = TailModel::one_dim();
    let (y, theta) = ([0.0], [0.0]);
    let q = model.posterior(&y).unwrap();
    let b = tail_batch(&model, &q, 100_000, &y, &theta, &mut RngStream::new(3, 0));
    let est = snis_estimate(&b).unwrap();
    assert!((est - 0.5).abs() < 3.0 * (0.25f64 / 1e5).sqrt(), "{est}");
}

#[test]
fn degenerate_and_malformed_batches_are_rejected() {
    let b = batch(vec![f64::NEG_INFINITY; 3], vec![1.0; 3]);
    assert!(matches!(snis_estimate(&b), Err(EstimatorError::DegenerateWeights)));
    let empty = batch(vec![], vec![]);
    assert!(matches!(snis_estimate(&empty), Err(EstimatorError::EmptyBatch)));
    assert!(matches!(is_estimate(&empty), Err(EstimatorError::EmptyBatch)));
    assert!(matches!(
        WeightedBatch::new(vec![0.0, f64::INFINITY], None),
        Err(EstimatorError::InvalidWeight { index: 1, .. })
    ));
    assert!(matches!(WeightedBatch::new(vec![f64::NAN], None), Err(EstimatorError::InvalidWeight { index: 0, .. })));
    assert!(matches!(
        WeightedBatch::new(vec![0.0], Some(vec![1.0, 2.0])),
        Err(EstimatorError::LengthMismatch { weights: 1, values: 2 })
    ));
    let bare = WeightedBatch::new(vec![0.0], None).unwrap();
    assert!(matches!(snis_estimate(&bare), Err(EstimatorError::MissingValues)));
    let den = batch(vec![f64::NEG_INFINITY], vec![0.0]);
    assert!(matches!(amci_two_term(&bare_with(1.0), &den), Err(EstimatorError::DegenerateDenominator)));
    assert!(matches!(
        amci_two_term(&batch(vec![0.0, 0.0], vec![1.0, -0.5]), &bare_with(1.0)),
        Err(EstimatorError::NegativeTarget { index: 1, .. })
    ));
}

fn bare_with(f: f64) -> WeightedBatch {
    batch(vec![0.0], vec![f])
}

#[test]
fn oracle_amci_is_exact_at_reference_points() {
    let model = TailModel::one_dim();
    let mut rng = RngStream::new(4, 0);
    // (y, θ), frozen truth
    for (y, theta, truth) in [(0.0, 0.0, 0.5), (1.0, 3.0, 2.034760087e-4)] {
        let oracle = model.oracle_proposals(&[y], &[theta]).unwrap();
        for _ in 0..10 {
            let b1 = tail_batch(&model, &oracle.q1_plus, 1, &[y], &[theta], &mut rng);
            let b2 = tail_batch(&model, &oracle.q2, 1, &[y], &[theta], &mut rng);
            let est = amci_two_term(&b1, &b2).unwrap();
            let tol = if truth == 0.5 { 1e-10 } else { 1e-8 };
            assert!((est.value / truth - 1.0).abs() < tol, "({y},{theta}): {} vs {truth}", est.value);
        }
    }
}

#[test]
fn oracle_amci_has_vanishing_kappa() {
    let model = TailModel::one_dim();
    let (y, theta) = ([0.7], [1.2]);
    let oracle = model.oracle_proposals(&y, &theta).unwrap();
    let mut rng = RngStream::new(5, 0);
    let b1 = tail_batch(&model, &oracle.q1_plus, 100, &y, &theta, &mut rng);
    let b2 = tail_batch(&model, &Density::normal(0.0, 1.0).unwrap(), 100, &y, &theta, &mut rng);
    let est = amci_two_term(&b1, &b2).unwrap();
    let d = est.diagnostics;
    assert!(d.kappa.unwrap() < 1e-10, "{d:?}");
    assert!(d.sigma2.unwrap() > 0.0);
    assert!((d.ess_plus - 100.0).abs() < 1e-9);
    assert!(d.ess_denominator < 100.0);
}

#[test]
fn shared_posterior_batches_reduce_to_snis() {
    let model = TailModel::one_dim();
    let (y, theta) = ([1.3], [0.4]);
    let q = model.posterior(&y).unwrap();
    let b = tail_batch(&model, &q, 500, &y, &theta, &mut RngStream::new(6, 0));
    let a = amci_two_term(&b, &b).unwrap().value;
    let s = snis_estimate(&b).unwrap();
    assert!((a / s - 1.0).abs() < 1e-14, "{a} vs {s}");
}

#[test]
fn positivised_matches_two_term_for_non_negative_targets() {
    let model = TailModel::one_dim();
    let (y, theta) = ([0.2], [0.5]);
    let prior = Density::normal(0.0, 1.0).unwrap();
    let mut rng = RngStream::new(7, 0);
    let b1 = tail_batch(&model, &prior, 50, &y, &theta, &mut rng);
    let bm = tail_batch(&model, &prior, 50, &y, &theta, &mut rng);
    let b2 = tail_batch(&model, &prior, 50, &y, &theta, &mut rng);
    let two = amci_two_term(&b1, &b2).unwrap();
    for minus in [None, Some(&bm)] {
        let pos = amci_positivised(&b1, minus, &b2, 0.0).unwrap();
        assert!(pos.e1_minus.is_zero());
        assert_eq!(pos.value, two.value);
    }
}

#[test]
fn positivised_first_moment_of_standard_normal_cancels() {
    let target = |x: f64| normal_log_pdf(x, 0.0, 1.0);
    let plus = HalfMoment { m: 0.0, s: 1.0, upper: true };
    let minus = HalfMoment { m: 0.0, s: 1.0, upper: false };
    // the half-expectation is the half-normal mean over two
    assert!((plus.mass() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
    let q2 = Density::normal(0.0, 1.0).unwrap();
    let mut rng = RngStream::new(8, 0);
    let draw = |q: &dyn Distribution, rng: &mut RngStream| {
        WeightedBatch::draw(q, 1, rng, |x| -> Result<_, EstimatorError> { Ok(Evaluation { log_joint: target(x[0]), f: x[0] }) })
            .unwrap()
    };
    for _ in 0..20 {
        let bp = draw(&plus, &mut rng);
        let bm = draw(&minus, &mut rng);
        let b2 = draw(&q2, &mut rng);
        let est = amci_positivised(&bp, Some(&bm), &b2, 0.0).unwrap();
        let half = 1.0 / (2.0 * PI).sqrt();
        assert!((est.e1_plus.to_f64() / half - 1.0).abs() < 1e-12);
        assert!((est.e1_minus.to_f64() / half - 1.0).abs() < 1e-12);
        assert!(est.value.abs() < 1e-15, "{}", est.value);
    }
}

#[test]
fn positivised_posterior_mean_is_exact() {
    let model = TailModel::one_dim();
    let y = [2.0];
    let (m, s) = (1.0, 0.5f64.sqrt());
    let plus = HalfMoment { m, s, upper: true };
    let minus = HalfMoment { m, s, upper: false };
    // quadrature of the two half-expectations against their closed forms
    let qp = integrate(|x| x * normal_log_pdf(x, m, s).exp(), 0.0, f64::INFINITY, 1e-14, 1e-12).unwrap();
    let qm = integrate(|x| -x * normal_log_pdf(x, m, s).exp(), f64::NEG_INFINITY, 0.0, 1e-14, 1e-12).unwrap();
    assert!((qp.value / plus.mass() - 1.0).abs() < 1e-10);
    assert!((qm.value / minus.mass() - 1.0).abs() < 1e-10);
    assert!((qp.value - qm.value - 1.0).abs() < 1e-10);

    let q2 = model.posterior(&y).unwrap();
    let mut rng = RngStream::new(9, 0);
    let draw = |q: &dyn Distribution, rng: &mut RngStream| {
        WeightedBatch::draw(q, 1, rng, |x| -> Result<_, EstimatorError> {
            Ok(Evaluation { log_joint: model.log_joint(x, &y)?, f: x[0] })
        })
        .unwrap()
    };
    for _ in 0..20 {
        let est = amci_positivised(&draw(&plus, &mut rng), Some(&draw(&minus, &mut rng)), &draw(&q2, &mut rng), 0.0).unwrap();
        assert!((est.value - 1.0).abs() < 1e-10, "{}", est.value);
    }
}

#[test]
fn truncation_point_is_added_back() {
    // constant f = 2 with c = 0.5: only the positive part contributes 1.5
    let b = batch(vec![0.0, 0.0], vec![2.0, 2.0]);
    let est = amci_positivised(&b, Some(&b), &b, 0.5).unwrap();
    assert!(est.e1_minus.is_zero());
    assert_eq!(est.value, 2.0);
    let est = amci_positivised(&b, Some(&b), &b, 3.0).unwrap();
    assert!(est.e1_plus.is_zero());
    assert_eq!(est.value, 2.0);
    assert!(amci_positivised(&b, None, &b, f64::NAN).is_err());
}

#[test]
fn combined_reduces_to_two_term() {
    let model = TailModel::one_dim();
    let (y, theta) = ([1.0], [1.0]);
    let mut rng = RngStream::new(10, 0);
    let q1 = Density::truncated_normal(0.5, 0.8, 1.0, f64::INFINITY).unwrap();
    let q2 = Density::normal(0.4, 0.8).unwrap();
    let b1 = tail_batch(&model, &q1, 64, &y, &theta, &mut rng);
    let b2 = tail_batch(&model, &q2, 64, &y, &theta, &mut rng);
    let two = amci_two_term(&b1, &b2).unwrap();
    let cab = CombinedAlphaBeta::from_batches(&b1, &b2, 1.0, 0.0).unwrap();
    assert_eq!(cab.estimate().unwrap(), two.value);
    assert_eq!(cab.total(), 128);
    // q₁ only covers x > 1, which is where f lives, so the swap stays finite
    let swapped = cab.with_mixing(0.0, 1.0).unwrap().estimate().unwrap();
    assert!(swapped.is_finite() && swapped > 0.0);
    let half = cab.with_mixing(0.5, 0.5).unwrap();
    let num = 0.5 * (cab.e1_q1.to_f64() + cab.e1_q2.to_f64());
    let den = 0.5 * (cab.e2_q1.to_f64() + cab.e2_q2.to_f64());
    assert!((half.estimate().unwrap() / (num / den) - 1.0).abs() < 1e-13);
    assert!(cab.with_mixing(1.2, 0.0).is_err());
    assert!(cab.with_mixing(0.5, -0.1).is_err());
}

#[test]
fn optimal_alpha_beta_reference_values() {
    let eq = WeightVariances { fw_q1: 2.0, fw_q2: 2.0, w_q1: 0.3, w_q2: 0.3 };
    let ab = optimal_alpha_beta(&eq, 50, 100).unwrap();
    assert_eq!((ab.alpha, ab.beta), (0.5, 0.5));
    assert!(!ab.alpha_limit && !ab.beta_limit);
    let zero = WeightVariances { fw_q1: 0.0, fw_q2: 1.0, w_q1: 1.0, w_q2: 0.0 };
    let ab = optimal_alpha_beta(&zero, 10, 30).unwrap();
    assert_eq!((ab.alpha, ab.alpha_limit), (1.0, true));
    assert_eq!((ab.beta, ab.beta_limit), (0.0, true));
    let ratio = WeightVariances { fw_q1: 4.0, fw_q2: 1.0, w_q1: 4.0, w_q2: 1.0 };
    let ab = optimal_alpha_beta(&ratio, 32, 64).unwrap();
    assert!((ab.alpha - 0.2).abs() < 1e-15);
    assert!(optimal_alpha_beta(&ratio, 64, 64).is_err());
    assert!(optimal_alpha_beta(&ratio, 0, 64).is_err());
    assert!(optimal_alpha_beta(&WeightVariances { fw_q1: -1.0, ..ratio }, 3, 6).is_err());
}

#[test]
fn remse_reference_values() {
    let r = remse(&[0.5, 0.5, 0.5], 0.5).unwrap();
    assert_eq!((r.delta, r.mse), (0.0, 0.0));
    let r = remse(&[0.0; 4], 0.3).unwrap();
    assert_eq!(r.delta, 1.0);
    let r = remse(&[0.4, 0.6], 0.5).unwrap();
    assert!((r.delta - 0.04).abs() < 1e-15);
    assert!((r.mse - 0.01).abs() < 1e-15);
    assert!(r.relative);
    let r = remse(&[0.1, -0.1], 0.0).unwrap();
    assert!(!r.relative);
    assert!((r.delta - 0.01).abs() < 1e-15);
    assert!(remse(&[0.4], 0.5).is_err());
    assert!(remse(&[0.4, f64::NAN], 0.5).is_err());
}

#[test]
fn quantiles_interpolate_linearly() {
    let v = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(quantile(&v, 0.5), 3.0);
    assert_eq!(quantile(&v, 0.25), 2.0);
    assert_eq!(quantile(&[1.0, 2.0], 0.75), 1.75);
    assert_eq!(quantile(&[7.0], 0.1), 7.0);
    assert!(quantile(&[], 0.5).is_nan());
}

#[test]
fn snis_bound_reference_values() {
    assert_eq!(snis_optimal_bound(2.0 * 0.5 * 0.5, 1), 0.25);
    assert_eq!(snis_optimal_bound(0.0, 10), 0.0);
    let mu: f64 = 2.034760087e-4;
    let b = snis_optimal_bound(2.0 * mu * (1.0 - mu), 100);
    assert!((b / 1.65543e-9 - 1.0).abs() < 1e-5, "{b}");
}

#[test]
fn denominator_is_unbiased_for_the_evidence() {
    let model = TailModel::one_dim();
    let (y, theta) = ([0.8], [0.0]);
    let prior = Density::normal(0.0, 1.0).unwrap();
    let mut rng = RngStream::new(11, 0);
    let reps = 10_000;
    let est: Vec<f64> = (0..reps)
        .map(|_| {
            let b = amci_two_term(&tail_batch(&model, &prior, 1, &y, &theta, &mut rng), &tail_batch(&model, &prior, 10, &y, &theta, &mut rng))
                .unwrap();
            b.e2.to_f64()
        })
        .collect();
    let mean = est.iter().sum::<f64>() / reps as f64;
    let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let truth = model.log_evidence(&y).unwrap().exp();
    assert!((mean - truth).abs() < 4.0 * sd / (reps as f64).sqrt(), "{mean} vs {truth}");
}

/// `α² V₁ / N + (1−α)² V₂ / M + r² (β² W₁ / N + (1−β)² W₂ / M)`.
fn reuse_variance(v: &WeightVariances, ratio: f64, n: f64, m: f64, a: f64, b: f64) -> f64 {
    a * a * v.fw_q1 / n + (1.0 - a).powi(2) * v.fw_q2 / m + ratio * ratio * (b * b * v.w_q1 / n + (1.0 - b).powi(2) * v.w_q2 / m)
}

fn golden_min(g: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    while b - a > 1e-12 {
        let (c, d) = (b - r * (b - a), a + r * (b - a));
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

proptest! {
    #[test]
    fn snis_is_invariant_to_a_common_log_weight_shift(
        k in prop::collection::vec(-(1i64 << 30)..(1i64 << 30), 1..40),
        f in prop::collection::vec(-5.0f64..5.0, 40),
        shift in -500i64..500,
    ) {
        let lw: Vec<f64> = k.iter().map(|v| *v as f64 / (1u64 << 24) as f64).collect();
        let f = f[..lw.len()].to_vec();
        let a = snis_estimate(&batch(lw.clone(), f.clone())).unwrap();
        let b = snis_estimate(&batch(lw.iter().map(|v| v + shift as f64).collect(), f)).unwrap();
        prop_assert!((a - b).abs() <= f64::EPSILON * a.abs(), "{} vs {}", a, b);
    }

    #[test]
    fn snis_is_permutation_invariant(
        lw in prop::collection::vec(-30.0f64..30.0, 2..30),
        f in prop::collection::vec(0.0f64..5.0, 30),
        rot in 0usize..30,
    ) {
        let f = f[..lw.len()].to_vec();
        let a = snis_estimate(&batch(lw.clone(), f.clone())).unwrap();
        let r = rot % lw.len();
        let (mut lw2, mut f2) = (lw.clone(), f.clone());
        lw2.rotate_left(r);
        f2.rotate_left(r);
        let b = snis_estimate(&batch(lw2, f2)).unwrap();
        prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-300));
    }

    #[test]
    fn amci_value_is_assembled_from_components(
        lw1 in prop::collection::vec(-20.0f64..5.0, 2..20),
        lw2 in prop::collection::vec(-20.0f64..5.0, 2..20),
        f in prop::collection::vec(-1.0f64..3.0, 20),
        c in -0.5f64..0.5,
    ) {
        let b1 = batch(lw1.clone(), f[..lw1.len()].to_vec());
        let b2 = batch(lw2.clone(), f[..lw2.len()].to_vec());
        let est = amci_positivised(&b1, Some(&b1), &b2, c).unwrap();
        prop_assert_eq!(est.value, ((est.e1_plus - est.e1_minus) / est.e2).to_f64() + c);
        if let (Some(s1), Some(s2), Some(kappa)) = (est.diagnostics.sigma1, est.diagnostics.sigma2, est.diagnostics.kappa) {
            if s2 > 0.0 && est.value != 0.0 {
                prop_assert!((kappa / (s1 / (est.value.abs() * s2)) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn optimal_alpha_beta_minimizes_the_reuse_variance(
        v in prop::array::uniform4(1e-3f64..1e3),
        ratio in 0.01f64..10.0,
        n in 1usize..500,
        m in 1usize..500,
    ) {
        let v = WeightVariances { fw_q1: v[0], fw_q2: v[1], w_q1: v[2], w_q2: v[3] };
        let ab = optimal_alpha_beta(&v, n, n + m).unwrap();
        let (nf, mf) = (n as f64, m as f64);
        let a = golden_min(|a| reuse_variance(&v, ratio, nf, mf, a, ab.beta));
        let b = golden_min(|b| reuse_variance(&v, ratio, nf, mf, ab.alpha, b));
        prop_assert!((a - ab.alpha).abs() < 1e-6 && (b - ab.beta).abs() < 1e-6);
    }
}
