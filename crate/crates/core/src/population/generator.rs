//! Synthetic population generator for desk-scale simulations.
//!
//! Units live in households inside domains. Auxiliaries `x_2..x_P` are
//! binary with domain-varying prevalence; each binary outcome follows a
//! logistic model in `x` plus a per-domain intercept shift and a household
//! effect. The shifts are what makes synthetic estimators biased.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use super::{Population, Unit};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream, Rng};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeSpec {
    pub name: String,
    pub intercept: f64,
    /// Logistic coefficients of `x_2..x_P`.
    pub coefficients: Vec<f64>,
    /// Random per-domain shift scale on the logit scale.
    pub shift_sd: f64,
    /// Fixed per-domain shifts, recycled over domains; added to the random part.
    pub shifts: Vec<f64>,
}

impl Default for OutcomeSpec {
    fn default() -> Self {
        Self { name: "y".into(), intercept: -1.5, coefficients: vec![2.0, 0.3, -0.5], shift_sd: 0.0, shifts: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub units: usize,
    pub domains: usize,
    /// Probabilities of household sizes 1, 2, 3, ...
    pub household_sizes: Vec<f64>,
    /// Log-scale spread of domain sizes.
    pub domain_size_spread: f64,
    /// Base prevalence of each binary auxiliary `x_2..x_P`.
    pub aux_prevalence: Vec<f64>,
    /// Logit-scale spread of auxiliary prevalence across domains.
    pub aux_domain_spread: f64,
    pub household_effect_sd: f64,
    pub outcomes: Vec<OutcomeSpec>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            units: 20_000,
            domains: 30,
            household_sizes: vec![0.30, 0.30, 0.20, 0.15, 0.05],
            domain_size_spread: 0.6,
            aux_prevalence: vec![0.1, 0.5, 0.5],
            aux_domain_spread: 0.5,
            household_effect_sd: 0.3,
            outcomes: vec![OutcomeSpec::default()],
            seed: 1,
        }
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

impl GeneratorSpec {
    /// Population resembling the scale of a national labour force survey
    /// frame: 1,396,763 persons in 30 domains, two binary outcomes and five
    /// binary auxiliaries. Household sizes are calibrated so that 3700
    /// households drawn proportionally to size hold about 7667 persons.
    pub fn paper_scale() -> Self {
        Self {
            units: 1_396_763,
            domains: 30,
            household_sizes: vec![0.48, 0.39, 0.09, 0.04],
            domain_size_spread: 0.5,
            aux_prevalence: vec![0.08, 0.55, 0.48, 0.25, 0.27],
            aux_domain_spread: 0.4,
            household_effect_sd: 0.3,
            outcomes: vec![
                OutcomeSpec {
                    name: "unemployed".into(),
                    intercept: -3.2,
                    coefficients: vec![2.2, -0.6, 0.2, 0.3, 0.2],
                    shift_sd: 0.3,
                    shifts: Vec::new(),
                },
                OutcomeSpec {
                    name: "employed".into(),
                    intercept: -0.8,
                    coefficients: vec![-1.5, 1.6, 0.3, 0.9, 0.8],
                    shift_sd: 0.25,
                    shifts: Vec::new(),
                },
            ],
            seed: 2018,
        }
    }

    pub fn aux_dim(&self) -> usize {
        self.aux_prevalence.len() + 1
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("generator: {m}")));
        if self.domains == 0 || self.units < self.domains {
            return bad("need at least one unit per domain");
        }
        if self.household_sizes.is_empty()
            || self.household_sizes.iter().any(|p| !(*p >= 0.0))
            || self.household_sizes.iter().sum::<f64>() <= 0.0
        {
            return bad("household_sizes must be nonnegative probabilities with positive sum");
        }
        if self.aux_prevalence.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return bad("aux_prevalence entries must lie in (0, 1)");
        }
        if self.outcomes.is_empty() {
            return bad("at least one outcome required");
        }
        for o in &self.outcomes {
            if o.coefficients.len() != self.aux_prevalence.len() {
                return bad("each outcome needs one coefficient per auxiliary");
            }
        }
        Ok(())
    }

    fn domain_sizes(&self, rng: &mut Rng) -> Vec<usize> {
        let m = self.domains;
        let weights: Vec<f64> = (0..m).map(|_| (self.domain_size_spread * normal(rng)).exp()).collect();
        let total: f64 = weights.iter().sum();
        let spare = self.units - m;
        let exact: Vec<f64> = weights.iter().map(|w| spare as f64 * w / total).collect();
        let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize + 1).collect();
        let mut remaining = self.units - sizes.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &d in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            sizes[d] += 1;
            remaining -= 1;
        }
        sizes
    }

    fn household_size(&self, rng: &mut Rng) -> usize {
        let total: f64 = self.household_sizes.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, p) in self.household_sizes.iter().enumerate() {
            if u < *p {
                return i + 1;
            }
            u -= p;
        }
        self.household_sizes.len()
    }

    pub fn generate(&self) -> Result<Population> {
        self.validate()?;
        let mut rng = rng_from_seed(derive_seed(self.seed, stream::GENERATOR, 0));
        let sizes = self.domain_sizes(&mut rng);
        let shifts: Vec<Vec<f64>> = self
            .outcomes
            .iter()
            .map(|o| {
                (0..self.domains)
                    .map(|d| {
                        let fixed = if o.shifts.is_empty() { 0.0 } else { o.shifts[d % o.shifts.len()] };
                        fixed + o.shift_sd * normal(&mut rng)
                    })
                    .collect()
            })
            .collect();

        let mut units = Vec::with_capacity(self.units);
        let mut household_id = 0u64;
        for (d, &size) in sizes.iter().enumerate() {
            let prevalence: Vec<f64> =
                self.aux_prevalence.iter().map(|p| logistic(logit(*p) + self.aux_domain_spread * normal(&mut rng))).collect();
            let mut left = size;
            while left > 0 {
                let h = self.household_size(&mut rng).min(left);
                left -= h;
                household_id += 1;
                let effect = self.household_effect_sd * normal(&mut rng);
                for _ in 0..h {
                    let mut x = Vec::with_capacity(self.aux_dim());
                    x.push(1.0);
                    for p in &prevalence {
                        x.push(if rng.random::<f64>() < *p { 1.0 } else { 0.0 });
                    }
                    let y = self
                        .outcomes
                        .iter()
                        .zip(&shifts)
                        .map(|(o, s)| {
                            let eta = o.intercept + o.coefficients.iter().zip(&x[1..]).map(|(b, v)| b * v).sum::<f64>() + s[d] + effect;
                            if rng.random::<f64>() < logistic(eta) {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    units.push(Unit { unit_id: units.len() as u64 + 1, household_id, domain: d, y, x });
                }
            }
        }
        let names = self.outcomes.iter().map(|o| o.name.clone()).collect();
        let labels = (1..=self.domains as u64).collect();
        Population::new(units, names, labels)
    }
}
