//! Rescaling bootstrap over primary sampling units (households).
//!
//! Replicate `b` resamples `m` PSUs with replacement from the `n'` sampled
//! ones and multiplies the weight of every unit in PSU `l` by
//! `1 - c + c (n'/m) m_l`, `c = sqrt(m (1 - f) / (n' - 1))`, where `m_l` is
//! the number of times PSU `l` was drawn and `f` the first-stage sampling
//! fraction when the finite population correction is enabled (0 otherwise).

use rand::Rng as _;
use rayon::prelude::*;
use serde::Deserialize;

use crate::direct::WeightedSample;
use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::population::Population;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::sampling::SampleDraw;

/// Share of missing replicates above which a variance is flagged.
pub const MAX_MISSING_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSpec {
    /// Number of replicates `B`.
    pub replicates: usize,
    /// PSUs per resample `m`; `None` means `n' - 1`.
    pub resample_size: Option<usize>,
    /// Apply the `(1 - f)` first-stage correction.
    pub fpc: bool,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self { replicates: 200, resample_size: None, fpc: false, seed: 0 }
    }
}

/// Per-PSU weight multipliers for every replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateWeights {
    multipliers: Vec<Vec<f64>>,
    pub resample_size: usize,
}

impl ReplicateWeights {
    pub fn generate(draw: &SampleDraw, spec: &BootstrapSpec) -> Result<Self> {
        let n_psu = draw.psu_count;
        if spec.replicates < 2 {
            return Err(Error::invalid("bootstrap needs at least 2 replicates"));
        }
        if n_psu < 2 {
            return Err(Error::invalid("bootstrap needs at least 2 sampled PSUs"));
        }
        let m = spec.resample_size.unwrap_or(n_psu - 1);
        if m == 0 || m > n_psu {
            return Err(Error::invalid(format!("resample size {m} must be in 1..={n_psu}")));
        }
        let f = if spec.fpc { n_psu as f64 / draw.frame_psus as f64 } else { 0.0 };
        let c = (m as f64 * (1.0 - f) / (n_psu - 1) as f64).sqrt();
        let scale = c * n_psu as f64 / m as f64;
        let multipliers = (0..spec.replicates)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng_from_seed(derive_seed(spec.seed, stream::REPLICATE, b as u64));
                let mut counts = vec![0u32; n_psu];
                for _ in 0..m {
                    counts[rng.random_range(0..n_psu)] += 1;
                }
                counts.into_iter().map(|ml| 1.0 - c + scale * ml as f64).collect()
            })
            .collect();
        Ok(Self { multipliers, resample_size: m })
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    pub fn psu_multipliers(&self, b: usize) -> &[f64] {
        &self.multipliers[b]
    }

    /// Unit weights of replicate `b`: design weight times the PSU multiplier.
    pub fn unit_weights(&self, b: usize, draw: &SampleDraw) -> Vec<f64> {
        let a = &self.multipliers[b];
        draw.pi.iter().zip(&draw.psu).map(|(p, &l)| a[l] / p).collect()
    }
}

/// A per-domain statistic on the full sample and on every replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicated {
    pub full: Vec<Option<f64>>,
    /// `reps[b][i]`.
    pub reps: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapVariance {
    pub value: Option<f64>,
    pub missing: usize,
    pub flags: Flags,
}

impl Replicated {
    pub fn domain_count(&self) -> usize {
        self.full.len()
    }

    fn moment_at<F>(&self, other: &Replicated, i: usize, product: F) -> BootstrapVariance
    where
        F: Fn(f64, f64) -> f64,
    {
        let b_total = self.reps.len();
        let (Some(a0), Some(b0)) = (self.full[i], other.full[i]) else {
            return BootstrapVariance { value: None, missing: b_total, flags: Flags::BOOTSTRAP_UNRELIABLE };
        };
        let mut sum = 0.0;
        let mut valid = 0usize;
        for (ra, rb) in self.reps.iter().zip(&other.reps) {
            if let (Some(a), Some(b)) = (ra[i], rb[i]) {
                sum += product(a - a0, b - b0);
                valid += 1;
            }
        }
        let missing = b_total - valid;
        let mut flags = Flags::empty();
        if missing as f64 > MAX_MISSING_SHARE * b_total as f64 {
            flags |= Flags::BOOTSTRAP_UNRELIABLE;
        }
        let value = if valid > 0 { Some(sum / valid as f64) } else { None };
        BootstrapVariance { value, missing, flags }
    }

    fn moment<F>(&self, other: &Replicated, product: F) -> Vec<BootstrapVariance>
    where
        F: Fn(f64, f64) -> f64 + Copy,
    {
        (0..self.domain_count()).map(|i| self.moment_at(other, i, product)).collect()
    }

    /// Variance of `f(self, other)` in a single domain, evaluated on the
    /// shared replicates.
    pub fn combined_variance<F>(&self, other: &Replicated, domain: usize, f: F) -> BootstrapVariance
    where
        F: Fn(Option<f64>, Option<f64>) -> Option<f64>,
    {
        let single = Replicated {
            full: vec![f(self.full[domain], other.full[domain])],
            reps: self.reps.iter().zip(&other.reps).map(|(a, b)| vec![f(a[domain], b[domain])]).collect(),
        };
        single.moment_at(&single, 0, |a, _| a * a)
    }

    /// `(1/B) sum_b (theta_b - theta)^2` over the available replicates.
    pub fn variance(&self) -> Vec<BootstrapVariance> {
        self.moment(self, |a, _| a * a)
    }

    /// Replicate covariance around the two full-sample values.
    pub fn covariance(&self, other: &Replicated) -> Vec<BootstrapVariance> {
        self.moment(other, |a, b| a * b)
    }

    /// Element-wise combination of two statistics on the same replicates.
    pub fn combine<F>(&self, other: &Replicated, f: F) -> Replicated
    where
        F: Fn(usize, Option<f64>, Option<f64>) -> Option<f64>,
    {
        let zip = |a: &[Option<f64>], b: &[Option<f64>]| -> Vec<Option<f64>> {
            a.iter().zip(b).enumerate().map(|(i, (x, y))| f(i, *x, *y)).collect()
        };
        Replicated { full: zip(&self.full, &other.full), reps: self.reps.iter().zip(&other.reps).map(|(a, b)| zip(a, b)).collect() }
    }
}

/// Evaluates `statistic` on the full sample and on each replicate. The
/// statistic returns several per-domain vectors; all of them see the same
/// replicate weights, so derived differences are paired.
pub fn replicate_statistics<F>(pop: &Population, draw: &SampleDraw, weights: &ReplicateWeights, statistic: F) -> Vec<Replicated>
where
    F: Fn(&WeightedSample) -> Vec<Vec<Option<f64>>> + Sync,
{
    let design = draw.design_weights();
    let full = statistic(&WeightedSample::new(pop, draw, &design));
    let per_rep: Vec<Vec<Vec<Option<f64>>>> = (0..weights.len())
        .into_par_iter()
        .map(|b| {
            let w = weights.unit_weights(b, draw);
            statistic(&WeightedSample::new(pop, draw, &w))
        })
        .collect();
    full.into_iter().enumerate().map(|(s, full)| Replicated { full, reps: per_rep.iter().map(|r| r[s].clone()).collect() }).collect()
}

pub fn bootstrap_variance<F>(pop: &Population, draw: &SampleDraw, statistic: F, spec: &BootstrapSpec) -> Result<Vec<BootstrapVariance>>
where
    F: Fn(&WeightedSample) -> Vec<Option<f64>> + Sync,
{
    let weights = ReplicateWeights::generate(draw, spec)?;
    let stats = replicate_statistics(pop, draw, &weights, |s| vec![statistic(s)]);
    Ok(stats[0].variance())
}

pub fn bootstrap_covariance<A, B>(
    pop: &Population,
    draw: &SampleDraw,
    stat_a: A,
    stat_b: B,
    spec: &BootstrapSpec,
) -> Result<Vec<BootstrapVariance>>
where
    A: Fn(&WeightedSample) -> Vec<Option<f64>> + Sync,
    B: Fn(&WeightedSample) -> Vec<Option<f64>> + Sync,
{
    let weights = ReplicateWeights::generate(draw, spec)?;
    let stats = replicate_statistics(pop, draw, &weights, |s| vec![stat_a(s), stat_b(s)]);
    Ok(stats[0].covariance(&stats[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::hajek_mean;
    use crate::population::{Unit, VarId};
    use crate::sampling::draw_pps_households;

    fn pop() -> Population {
        let mut units = Vec::new();
        for h in 0..60u64 {
            let size = 1 + (h % 3) as usize;
            for j in 0..size {
                let id = units.len() as u64 + 1;
                let y = ((h * 7 + j as u64 * 3) % 5) as f64 / 4.0;
                units.push(Unit { unit_id: id, household_id: h + 1, domain: (h % 2) as usize, y: vec![y], x: vec![1.0] });
            }
        }
        Population::new(units, vec!["y".into()], vec![1, 2]).unwrap()
    }

    fn hajek_all(s: &WeightedSample) -> Vec<Option<f64>> {
        (0..2).map(|d| hajek_mean(s, VarId(0), d).ok().map(|e| e.value)).collect()
    }

    #[test]
    fn multipliers_are_nonnegative_and_centered() {
        let p = pop();
        let draw = draw_pps_households(&p, 12, 4).unwrap();
        let spec = BootstrapSpec { replicates: 4000, seed: 9, ..Default::default() };
        let rw = ReplicateWeights::generate(&draw, &spec).unwrap();
        assert_eq!(rw.resample_size, 11);
        let mut mean = vec![0.0; draw.psu_count];
        for b in 0..rw.len() {
            for (l, a) in rw.psu_multipliers(b).iter().enumerate() {
                assert!(*a >= 0.0);
                mean[l] += a / rw.len() as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0).abs() < 0.1, "{m}");
        }
    }

    #[test]
    fn constant_statistic_has_zero_variance() {
        let p = pop();
        let draw = draw_pps_households(&p, 10, 1).unwrap();
        let spec = BootstrapSpec { replicates: 50, seed: 2, ..Default::default() };
        let v = bootstrap_variance(&p, &draw, |_| vec![Some(0.3), Some(1.0)], &spec).unwrap();
        assert!(v.iter().all(|x| x.value == Some(0.0)));
    }

    #[test]
    fn weighted_total_is_centered() {
        let p = pop();
        let draw = draw_pps_households(&p, 15, 3).unwrap();
        let spec = BootstrapSpec { replicates: 1000, seed: 5, ..Default::default() };
        let rw = ReplicateWeights::generate(&draw, &spec).unwrap();
        let stats = replicate_statistics(&p, &draw, &rw, |s| {
            vec![vec![Some(s.weights.iter().enumerate().map(|(pos, w)| w * s.y(pos, VarId(0))).sum())]]
        });
        let full = stats[0].full[0].unwrap();
        let reps: Vec<f64> = stats[0].reps.iter().map(|r| r[0].unwrap()).collect();
        let mean = reps.iter().sum::<f64>() / reps.len() as f64;
        let var = reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64;
        let se = (var / reps.len() as f64).sqrt();
        assert!(var > 0.0);
        assert!((mean - full).abs() <= 3.5 * se, "{mean} vs {full} (se {se})");
    }

    #[test]
    fn paired_replicates_decompose_difference_variance() {
        let p = pop();
        let draw = draw_pps_households(&p, 12, 8).unwrap();
        let spec = BootstrapSpec { replicates: 300, seed: 11, ..Default::default() };
        let rw = ReplicateWeights::generate(&draw, &spec).unwrap();
        let stats = replicate_statistics(&p, &draw, &rw, |s| {
            let d = hajek_all(s);
            let pooled = s.weights.iter().zip(0..).map(|(w, pos)| w * s.y(pos, VarId(0))).sum::<f64>() / s.weights.iter().sum::<f64>();
            vec![d, vec![Some(pooled); 2]]
        });
        let diff = stats[0].combine(&stats[1], |_, a, b| Some(a? - b?));
        let va = stats[0].variance();
        let vb = stats[1].variance();
        let cov = stats[0].covariance(&stats[1]);
        let vd = diff.variance();
        for i in 0..2 {
            assert_eq!(stats[0].combined_variance(&stats[1], i, |a, b| Some(a? - b?)), vd[i]);
            let lhs = vd[i].value.unwrap();
            let rhs = va[i].value.unwrap() + vb[i].value.unwrap() - 2.0 * cov[i].value.unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
        let self_cov = stats[0].covariance(&stats[0]);
        assert_eq!(self_cov, va);
    }

    #[test]
    fn results_are_reproducible_and_nonnegative() {
        let p = pop();
        let draw = draw_pps_households(&p, 10, 6).unwrap();
        let spec = BootstrapSpec { replicates: 100, seed: 21, ..Default::default() };
        let a = bootstrap_variance(&p, &draw, hajek_all, &spec).unwrap();
        let b = bootstrap_variance(&p, &draw, hajek_all, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.value.unwrap() >= 0.0));
    }

    #[test]
    fn missing_replicates_are_flagged() {
        let p = pop();
        let draw = draw_pps_households(&p, 10, 6).unwrap();
        let spec = BootstrapSpec { replicates: 40, seed: 1, ..Default::default() };
        let mut calls = std::sync::atomic::AtomicUsize::new(0);
        let v = bootstrap_variance(
            &p,
            &draw,
            |_| {
                let c = calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                // the full-sample call always succeeds
                vec![Some(1.0), if c.is_multiple_of(2) { Some(2.0) } else { None }]
            },
            &spec,
        )
        .unwrap();
        assert!(v[0].flags.is_empty());
        assert_eq!(*calls.get_mut(), 41);
        assert!(v[1].missing > 0);
    }

    #[test]
    fn bad_specs_are_rejected() {
        let p = pop();
        let draw = draw_pps_households(&p, 10, 6).unwrap();
        assert!(ReplicateWeights::generate(&draw, &BootstrapSpec { replicates: 1, ..Default::default() }).is_err());
        assert!(ReplicateWeights::generate(&draw, &BootstrapSpec { resample_size: Some(11), ..Default::default() }).is_err());
        assert!(ReplicateWeights::generate(&draw, &BootstrapSpec { resample_size: Some(0), ..Default::default() }).is_err());
    }
}
