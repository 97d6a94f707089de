//! Finite populations partitioned into domains and households.

mod csv_io;
mod generator;
mod synthesis;

use std::collections::HashMap;

pub use csv_io::{load_population_csv, open_csv, read_area_file, read_unit_records, write_population_csv, AreaFile, UnitFile};
pub use generator::{GeneratorSpec, OutcomeSpec};
pub use synthesis::{synthesize_population, synthesize_population_with, DomainFilter, SampleRecord, SynthesisReport};

use crate::error::{Error, Result};

/// Index of a study variable within a population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub unit_id: u64,
    pub household_id: u64,
    /// Zero-based domain index.
    pub domain: usize,
    /// Study values, indexed by [`VarId`].
    pub y: Vec<f64>,
    /// Auxiliary vector with `x[0] == 1`.
    pub x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Household {
    pub id: u64,
    pub domain: usize,
    /// Indices into [`Population::units`].
    pub members: Vec<usize>,
}

impl Household {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Immutable finite population.
#[derive(Debug, Clone)]
pub struct Population {
    units: Vec<Unit>,
    variables: Vec<String>,
    aux_dim: usize,
    domain_labels: Vec<u64>,
    domain_members: Vec<Vec<usize>>,
    households: Vec<Household>,
    unit_household: Vec<usize>,
}

/// Area-level auxiliary information: `z` are the covariates used by the
/// area-level model, `theta_x` the true domain means of the unit-level `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaAuxiliary {
    pub z: Vec<Vec<f64>>,
    pub theta_x: Vec<Vec<f64>>,
}

impl Population {
    /// Builds a population. `domain_labels[d]` is the external id of domain `d`.
    pub fn new(units: Vec<Unit>, variables: Vec<String>, domain_labels: Vec<u64>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidPopulation(m));
        if units.is_empty() {
            return bad("no units".into());
        }
        let m = domain_labels.len();
        let aux_dim = units[0].x.len();
        if aux_dim == 0 {
            return bad("auxiliary vector must contain the intercept".into());
        }
        let mut domain_members = vec![Vec::new(); m];
        let mut households: Vec<Household> = Vec::new();
        let mut household_index: HashMap<u64, usize> = HashMap::new();
        let mut unit_household = Vec::with_capacity(units.len());
        let mut seen_ids: HashMap<u64, ()> = HashMap::with_capacity(units.len());

        for (k, u) in units.iter().enumerate() {
            if u.x.len() != aux_dim {
                return bad(format!("unit {} has {} auxiliaries, expected {}", u.unit_id, u.x.len(), aux_dim));
            }
            if u.x[0] != 1.0 {
                return bad(format!("unit {} has x_1 = {}, expected 1", u.unit_id, u.x[0]));
            }
            if u.y.len() != variables.len() {
                return bad(format!("unit {} has {} study values, expected {}", u.unit_id, u.y.len(), variables.len()));
            }
            if u.x.iter().chain(&u.y).any(|v| !v.is_finite()) {
                return bad(format!("unit {} has non-finite values", u.unit_id));
            }
            if u.domain >= m {
                return bad(format!("unit {} has domain index {} out of {}", u.unit_id, u.domain, m));
            }
            if seen_ids.insert(u.unit_id, ()).is_some() {
                return bad(format!("duplicate unit id {}", u.unit_id));
            }
            domain_members[u.domain].push(k);
            let h = *household_index.entry(u.household_id).or_insert_with(|| {
                households.push(Household { id: u.household_id, domain: u.domain, members: Vec::new() });
                households.len() - 1
            });
            if households[h].domain != u.domain {
                return bad(format!("household {} spans more than one domain", u.household_id));
            }
            households[h].members.push(k);
            unit_household.push(h);
        }
        Ok(Self { units, variables, aux_dim, domain_labels, domain_members, households, unit_household })
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn unit(&self, k: usize) -> &Unit {
        &self.units[k]
    }

    pub fn size(&self) -> usize {
        self.units.len()
    }

    pub fn domain_count(&self) -> usize {
        self.domain_labels.len()
    }

    /// Number of auxiliaries `P`, intercept included.
    pub fn aux_dim(&self) -> usize {
        self.aux_dim
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Result<VarId> {
        self.variables.iter().position(|v| v == name).map(VarId).ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn domain_labels(&self) -> &[u64] {
        &self.domain_labels
    }

    pub fn domain_members(&self, domain: usize) -> &[usize] {
        &self.domain_members[domain]
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        self.domain_members.iter().map(Vec::len).collect()
    }

    pub fn households(&self) -> &[Household] {
        &self.households
    }

    /// Household index (into [`Population::households`]) of unit `k`.
    pub fn household_of(&self, k: usize) -> usize {
        self.unit_household[k]
    }

    pub fn y(&self, k: usize, var: VarId) -> f64 {
        self.units[k].y[var.0]
    }

    pub fn true_domain_mean(&self, var: VarId, domain: usize) -> Result<f64> {
        if var.0 >= self.variables.len() {
            return Err(Error::UnknownVariable(format!("#{}", var.0)));
        }
        let members = self.domain_members.get(domain).ok_or_else(|| Error::invalid(format!("domain index {domain} out of range")))?;
        if members.is_empty() {
            return Err(Error::EmptyDomain { domain });
        }
        let sum: f64 = members.iter().map(|&k| self.y(k, var)).sum();
        Ok(sum / members.len() as f64)
    }

    pub fn true_domain_means(&self, var: VarId) -> Result<Vec<f64>> {
        (0..self.domain_count()).map(|d| self.true_domain_mean(var, d)).collect()
    }

    /// Componentwise domain means of `x`; these also serve as `z`.
    pub fn domain_x_means(&self) -> Result<AreaAuxiliary> {
        let mut theta_x = Vec::with_capacity(self.domain_count());
        for (d, members) in self.domain_members.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyDomain { domain: d });
            }
            let mut mean = vec![0.0; self.aux_dim];
            for &k in members {
                for (m, x) in mean.iter_mut().zip(&self.units[k].x) {
                    *m += x;
                }
            }
            let n = members.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            theta_x.push(mean);
        }
        Ok(AreaAuxiliary { z: theta_x.clone(), theta_x })
    }
}
