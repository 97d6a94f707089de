//! Direct domain estimators: Hájek weighted means, direct GREG, and their
//! design-variance estimators. Horvitz–Thompson totals and means with known
//! domain sizes are included for exact design checks.

use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::linalg::{dot, NormalEquations};
use crate::population::{Population, VarId};
use crate::sampling::SampleDraw;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    DirectHajek,
    DirectGreg,
    SyntheticReg,
    SyntheticGreg,
    Composite,
    EblupFh,
}

/// A per-domain point estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainEstimate {
    pub domain: usize,
    pub value: f64,
    pub variance: Option<f64>,
    pub kind: EstimatorKind,
    /// Realized domain sample size.
    pub n: usize,
    /// Estimated domain size, the sum of weights over the domain sample.
    pub n_hat: f64,
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMode {
    /// Double sum with second-order inclusion probabilities.
    ExactJoint,
    /// `pi_kl ~ pi_k pi_l` for `k != l`.
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    /// Truncated at 0.
    pub value: f64,
    /// Before truncation; design-unbiased where the estimator is.
    pub raw: f64,
    pub flags: Flags,
}

/// A sample together with the unit weights to estimate with: design weights
/// `1 / pi_k` for the full sample, or bootstrap replicate weights.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSample<'a> {
    pub pop: &'a Population,
    pub draw: &'a SampleDraw,
    pub weights: &'a [f64],
}

impl<'a> WeightedSample<'a> {
    pub fn new(pop: &'a Population, draw: &'a SampleDraw, weights: &'a [f64]) -> Self {
        debug_assert_eq!(weights.len(), draw.n());
        Self { pop, draw, weights }
    }

    pub fn y(&self, pos: usize, var: VarId) -> f64 {
        self.pop.y(self.draw.units[pos], var)
    }

    pub fn x(&self, pos: usize) -> &'a [f64] {
        &self.pop.unit(self.draw.units[pos]).x
    }

    /// Positions in `domain` with positive weight.
    pub fn domain_positions(&self, domain: usize) -> impl Iterator<Item = usize> + '_ {
        self.draw.domains[domain].iter().copied().filter(|&p| self.weights[p] > 0.0)
    }
}

/// `(sum w y, sum w, count)` over the domain.
fn weighted_sums(s: &WeightedSample, var: VarId, domain: usize) -> (f64, f64, usize) {
    let mut total = 0.0;
    let mut n_hat = 0.0;
    let mut n = 0;
    for p in s.domain_positions(domain) {
        total += s.weights[p] * s.y(p, var);
        n_hat += s.weights[p];
        n += 1;
    }
    (total, n_hat, n)
}

/// Hájek estimator `sum(w y) / sum(w)` over the domain sample.
pub fn hajek_mean(s: &WeightedSample, var: VarId, domain: usize) -> Result<DomainEstimate> {
    let (total, n_hat, n) = weighted_sums(s, var, domain);
    if n == 0 {
        return Err(Error::EmptyDomain { domain });
    }
    Ok(DomainEstimate { domain, value: total / n_hat, variance: None, kind: EstimatorKind::DirectHajek, n, n_hat, flags: Flags::empty() })
}

/// Horvitz–Thompson domain total `sum(w y)`; zero for an empty domain sample.
pub fn ht_total(s: &WeightedSample, var: VarId, domain: usize) -> f64 {
    weighted_sums(s, var, domain).0
}

/// Horvitz–Thompson mean with the known domain size.
pub fn ht_mean(s: &WeightedSample, var: VarId, domain: usize, domain_size: usize) -> f64 {
    ht_total(s, var, domain) / domain_size as f64
}

/// Horvitz–Thompson variance estimator of [`ht_mean`]:
/// `(1/N_i^2) sum_k sum_l (1 - pi_k pi_l / pi_kl) y_k y_l / (pi_k pi_l)`.
pub fn ht_mean_variance(pop: &Population, draw: &SampleDraw, var: VarId, domain: usize, domain_size: usize) -> Result<VarianceEstimate> {
    let positions = &draw.domains[domain];
    let values: Vec<f64> = positions.iter().map(|&p| pop.y(draw.units[p], var)).collect();
    let sum = joint_double_sum(draw, positions, &values)?;
    Ok(clamp_variance(sum / (domain_size as f64).powi(2)))
}

fn clamp_variance(v: f64) -> VarianceEstimate {
    if v < 0.0 {
        VarianceEstimate { value: 0.0, raw: v, flags: Flags::VARIANCE_CLAMPED }
    } else {
        VarianceEstimate { value: v, raw: v, flags: Flags::empty() }
    }
}

fn joint_double_sum(draw: &SampleDraw, positions: &[usize], e: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for (a, &pa) in positions.iter().enumerate() {
        for (b, &pb) in positions.iter().enumerate() {
            let pi_a = draw.pi[pa];
            let pi_b = draw.pi[pb];
            let pi_ab = draw.joint_probability(pa, pb).ok_or(Error::JointProbabilitiesUnavailable)?;
            if !(pi_ab > 0.0) {
                return Err(Error::invalid("zero joint inclusion probability"));
            }
            sum += (1.0 - pi_a * pi_b / pi_ab) * e[a] * e[b] / (pi_a * pi_b);
        }
    }
    Ok(sum)
}

/// Direct variance estimator from residuals `e` over the domain positions.
fn residual_variance(draw: &SampleDraw, positions: &[usize], e: &[f64], n_hat: f64, mode: VarianceMode) -> Result<VarianceEstimate> {
    let sum = match mode {
        VarianceMode::Approx => positions
            .iter()
            .zip(e)
            .map(|(&p, r)| {
                let inv = 1.0 / draw.pi[p];
                inv * (inv - 1.0) * r * r
            })
            .sum(),
        VarianceMode::ExactJoint => joint_double_sum(draw, positions, e)?,
    };
    Ok(clamp_variance(sum / (n_hat * n_hat)))
}

fn require_two(draw: &SampleDraw, domain: usize) -> Result<&[usize]> {
    let positions = &draw.domains[domain];
    if positions.len() < 2 {
        return Err(Error::UndefinedVariance { domain, n: positions.len() });
    }
    Ok(positions)
}

/// Variance estimator of the design-weighted Hájek mean.
pub fn hajek_var_direct(pop: &Population, draw: &SampleDraw, var: VarId, domain: usize, mode: VarianceMode) -> Result<VarianceEstimate> {
    let positions = require_two(draw, domain)?;
    let weights = draw.design_weights();
    let est = hajek_mean(&WeightedSample::new(pop, draw, &weights), var, domain)?;
    let e: Vec<f64> = positions.iter().map(|&p| pop.y(draw.units[p], var) - est.value).collect();
    residual_variance(draw, positions, &e, est.n_hat, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GregEstimate {
    pub estimate: DomainEstimate,
    /// Domain regression coefficient `B_i`.
    pub coef: Vec<f64>,
}

/// Direct GREG: `theta_x' B_i` with `B_i` the weighted least-squares fit of
/// `y` on `x` within the domain sample.
pub fn greg_direct(s: &WeightedSample, var: VarId, domain: usize, theta_x: &[f64]) -> Result<GregEstimate> {
    let p = s.pop.aux_dim();
    if theta_x.len() != p {
        return Err(Error::invalid(format!("theta_x has length {}, expected {p}", theta_x.len())));
    }
    let mut ne = NormalEquations::new(p);
    let mut n = 0;
    let mut n_hat = 0.0;
    for pos in s.domain_positions(domain) {
        ne.add(s.x(pos), s.y(pos, var), s.weights[pos]);
        n += 1;
        n_hat += s.weights[pos];
    }
    if n == 0 {
        return Err(Error::EmptyDomain { domain });
    }
    let sol = ne.solve(&format!("direct GREG, domain {domain}"))?;
    let flags = if sol.ridged { Flags::RIDGE } else { Flags::empty() };
    Ok(GregEstimate {
        estimate: DomainEstimate {
            domain,
            value: dot(theta_x, &sol.coef),
            variance: None,
            kind: EstimatorKind::DirectGreg,
            n,
            n_hat,
            flags,
        },
        coef: sol.coef,
    })
}

/// Direct GREG, or the Hájek mean flagged [`Flags::HAJEK_FALLBACK`] when the
/// domain Gram matrix is singular.
pub fn greg_direct_or_hajek(s: &WeightedSample, var: VarId, domain: usize, theta_x: &[f64]) -> Result<GregEstimate> {
    match greg_direct(s, var, domain, theta_x) {
        Err(Error::SingularGram { .. }) => {
            let mut estimate = hajek_mean(s, var, domain)?;
            estimate.flags |= Flags::HAJEK_FALLBACK;
            let mut coef = vec![0.0; s.pop.aux_dim()];
            coef[0] = estimate.value;
            Ok(GregEstimate { estimate, coef })
        }
        other => other,
    }
}

/// Variance estimator of direct GREG with residuals `y_k - x_k' B_i`.
pub fn greg_var_direct(
    pop: &Population,
    draw: &SampleDraw,
    var: VarId,
    domain: usize,
    coef: &[f64],
    mode: VarianceMode,
) -> Result<VarianceEstimate> {
    let positions = require_two(draw, domain)?;
    let n_hat: f64 = positions.iter().map(|&p| 1.0 / draw.pi[p]).sum();
    let e: Vec<f64> = positions
        .iter()
        .map(|&p| {
            let u = pop.unit(draw.units[p]);
            u.y[var.0] - dot(&u.x, coef)
        })
        .collect();
    residual_variance(draw, positions, &e, n_hat, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Unit;
    use crate::sampling::{draw_srswor, enumerate_all_samples, DesignSpec};

    fn pop(ys: &[f64], xs: &[f64], domains: &[usize]) -> Population {
        let units = ys
            .iter()
            .zip(xs)
            .zip(domains)
            .enumerate()
            .map(|(k, ((&y, &x), &d))| Unit { unit_id: k as u64 + 1, household_id: k as u64 + 1, domain: d, y: vec![y], x: vec![1.0, x] })
            .collect();
        let m = domains.iter().max().unwrap() + 1;
        Population::new(units, vec!["y".into()], (1..=m as u64).collect()).unwrap()
    }

    const Y: VarId = VarId(0);

    #[test]
    fn census_hajek_is_true_mean() {
        let p = pop(&[1.0, 2.0, 6.0, 0.0, 1.0], &[0.0; 5], &[0, 0, 0, 1, 1]);
        let draw = draw_srswor(&p, 5, 1).unwrap();
        let w = draw.design_weights();
        let s = WeightedSample::new(&p, &draw, &w);
        assert!((hajek_mean(&s, Y, 0).unwrap().value - 3.0).abs() < 1e-15);
        assert!((hajek_mean(&s, Y, 1).unwrap().value - 0.5).abs() < 1e-15);
        let v = hajek_var_direct(&p, &draw, Y, 0, VarianceMode::Approx).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn equal_weights_cancel() {
        let p = pop(&[0.0, 1.0, 5.0, 5.0], &[0.0; 4], &[0, 0, 1, 1]);
        let draw = draw_srswor(&p, 4, 1).unwrap();
        let w = vec![3.0; 4];
        let s = WeightedSample::new(&p, &draw, &w);
        assert_eq!(hajek_mean(&s, Y, 0).unwrap().value, 0.5);
    }

    #[test]
    fn empty_domain_is_signalled() {
        let p = pop(&[0.0, 1.0, 5.0], &[0.0; 3], &[0, 0, 1]);
        let draw = draw_srswor(&p, 3, 1).unwrap();
        let w = vec![1.0, 1.0, 0.0];
        let s = WeightedSample::new(&p, &draw, &w);
        assert!(matches!(hajek_mean(&s, Y, 1), Err(Error::EmptyDomain { domain: 1 })));
        assert_eq!(ht_total(&s, Y, 1), 0.0);
        assert!(matches!(hajek_var_direct(&p, &draw, Y, 1, VarianceMode::Approx), Err(Error::UndefinedVariance { n: 1, .. })));
    }

    #[test]
    fn constant_y_has_zero_variance() {
        let p = pop(&[2.0; 8], &[0.0; 8], &[0; 8]);
        for (draw, _) in enumerate_all_samples(&p, &DesignSpec::Srswor { n: 3 }).unwrap() {
            for mode in [VarianceMode::Approx, VarianceMode::ExactJoint] {
                assert!(hajek_var_direct(&p, &draw, Y, 0, mode).unwrap().value.abs() < 1e-15);
            }
        }
    }

    /// Oracle: Hájek mean of y = (1,2,3,4) over all 6 srswor samples of size 2.
    /// Every sample has both units in the single domain, weights equal, so
    /// each estimate is the sample average and the design expectation is
    /// exactly 2.5 (sum of pair means / 6 = 15/6).
    #[test]
    fn hajek_expectation_small_frame() {
        let p = pop(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], &[0; 4]);
        let all = enumerate_all_samples(&p, &DesignSpec::Srswor { n: 2 }).unwrap();
        let pair_means = [1.5, 2.0, 2.5, 2.5, 3.0, 3.5];
        let oracle = pair_means.iter().sum::<f64>() / 6.0;
        let mut e = 0.0;
        for (draw, prob) in &all {
            let w = draw.design_weights();
            e += prob * hajek_mean(&WeightedSample::new(&p, draw, &w), Y, 0).unwrap().value;
        }
        assert!((e - oracle).abs() < 1e-12);
        assert!((e - 2.5).abs() < 1e-12);
    }

    #[test]
    fn greg_with_intercept_only_equals_hajek() {
        let units: Vec<Unit> = (0..6)
            .map(|k| Unit { unit_id: k + 1, household_id: k + 1, domain: (k % 2) as usize, y: vec![(k * k) as f64], x: vec![1.0] })
            .collect();
        let p = Population::new(units, vec!["y".into()], vec![1, 2]).unwrap();
        let draw = draw_srswor(&p, 5, 9).unwrap();
        let w = [1.0, 2.0, 0.5, 3.0, 1.5];
        let s = WeightedSample::new(&p, &draw, &w);
        for d in 0..2 {
            let g = greg_direct(&s, Y, d, &[1.0]).unwrap();
            let h = hajek_mean(&s, Y, d).unwrap();
            assert!((g.estimate.value - h.value).abs() < 1e-12);
        }
    }

    #[test]
    fn greg_exact_fit_recovers_mean() {
        // y = 2 + 3 x within the domain
        let xs = [0.0, 1.0, 2.0, 5.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let p = pop(&ys, &xs, &[0; 5]);
        let theta_x = p.domain_x_means().unwrap().theta_x[0].clone();
        let draw = draw_srswor(&p, 3, 4).unwrap();
        let w = draw.design_weights();
        let g = greg_direct(&WeightedSample::new(&p, &draw, &w), Y, 0, &theta_x).unwrap();
        assert!((g.estimate.value - p.true_domain_mean(Y, 0).unwrap()).abs() < 1e-10);
        let v = greg_var_direct(&p, &draw, Y, 0, &g.coef, VarianceMode::Approx).unwrap();
        assert!(v.value < 1e-20);
    }

    /// Oracle: closed-form 2x2 weighted normal equations.
    #[test]
    fn greg_two_by_two_closed_form() {
        let xs = [0.0, 1.0, 1.0, 3.0];
        let ys = [1.0, 0.0, 4.0, 2.0];
        let p = pop(&ys, &xs, &[0; 4]);
        let draw = draw_srswor(&p, 4, 0).unwrap();
        let w = [2.0, 1.0, 3.0, 0.5];
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (pos, &k) in draw.units.iter().enumerate() {
            let (x, y, wk) = (xs[k], ys[k], w[pos]);
            s0 += wk;
            s1 += wk * x;
            s2 += wk * x * x;
            t0 += wk * y;
            t1 += wk * x * y;
        }
        let det = s0 * s2 - s1 * s1;
        let b0 = (s2 * t0 - s1 * t1) / det;
        let b1 = (s0 * t1 - s1 * t0) / det;
        let theta_x = [1.0, 0.7];
        let g = greg_direct(&WeightedSample::new(&p, &draw, &w), Y, 0, &theta_x).unwrap();
        assert!((g.coef[0] - b0).abs() < 1e-12);
        assert!((g.coef[1] - b1).abs() < 1e-12);
        assert!((g.estimate.value - (b0 + 0.7 * b1)).abs() < 1e-12);
    }

    /// Oracle: hand expansion of the double sum for srswor N = 6, n = 3.
    #[test]
    fn greg_exact_joint_variance_matches_expansion() {
        let xs = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let ys = [0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let p = pop(&ys, &xs, &[0; 6]);
        let (big_n, n) = (6.0, 3.0);
        let pi = n / big_n;
        let pi_kl = n * (n - 1.0) / (big_n * (big_n - 1.0));
        let coef = [0.3, 0.4];
        for (draw, _) in enumerate_all_samples(&p, &DesignSpec::Srswor { n: 3 }).unwrap() {
            let e: Vec<f64> = draw.units.iter().map(|&k| ys[k] - coef[0] - coef[1] * xs[k]).collect();
            let n_hat = 3.0 / pi;
            let mut sum = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    let c = if a == b { 1.0 - pi } else { 1.0 - pi * pi / pi_kl };
                    sum += c * e[a] * e[b] / (pi * pi);
                }
            }
            let expected = (sum / (n_hat * n_hat)).max(0.0);
            let got = greg_var_direct(&p, &draw, Y, 0, &coef, VarianceMode::ExactJoint).unwrap();
            assert!((got.value - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn greg_falls_back_when_gram_is_zero() {
        let units = vec![
            Unit { unit_id: 1, household_id: 1, domain: 0, y: vec![1.0], x: vec![1.0, 0.0] },
            Unit { unit_id: 2, household_id: 2, domain: 0, y: vec![3.0], x: vec![1.0, 0.0] },
        ];
        let p = Population::new(units, vec!["y".into()], vec![1]).unwrap();
        let draw = draw_srswor(&p, 2, 0).unwrap();
        let w = draw.design_weights();
        let s = WeightedSample::new(&p, &draw, &w);
        // constant x_2 is collinear with the intercept: ridge, not fallback
        let g = greg_direct_or_hajek(&s, Y, 0, &[1.0, 0.0]).unwrap();
        assert!(g.estimate.flags.contains(Flags::RIDGE));
        assert!((g.estimate.value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn exact_mode_requires_joint_probabilities() {
        let p = pop(&[0.0, 1.0, 1.0, 0.0], &[0.0; 4], &[0; 4]);
        let mut draw = draw_srswor(&p, 3, 0).unwrap();
        draw.joint = None;
        assert!(matches!(hajek_var_direct(&p, &draw, Y, 0, VarianceMode::ExactJoint), Err(Error::JointProbabilitiesUnavailable)));
    }
}
