//! Artificial populations built by replicating weighted sample records.

use std::collections::BTreeMap;

use super::{Population, Unit};
use crate::error::{Error, Result};

/// A weighted survey record.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub unit_id: u64,
    pub household_id: u64,
    pub domain_id: u64,
    pub weight: f64,
    pub y: Vec<f64>,
    /// Auxiliaries including the leading intercept.
    pub x: Vec<f64>,
}

/// Which domains of the sample file survive into the population.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainFilter {
    /// Drop domains with fewer than `count` records having a positive value of `variable`.
    pub min_positive: Option<(String, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthesisReport {
    /// Records whose rounded weight is zero.
    pub dropped_records: usize,
    pub dropped_domains: Vec<u64>,
}

/// Clones each record `round_half_even(weight)` times. The `c`-th clone of a
/// household becomes a new household with a fresh id; unit ids are fresh too.
pub fn synthesize_population(
    records: &[SampleRecord],
    variables: &[String],
    filter: &DomainFilter,
) -> Result<(Population, SynthesisReport)> {
    let min_positive = match &filter.min_positive {
        Some((name, count)) => {
            let idx = variables.iter().position(|v| v == name).ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            Some((idx, *count))
        }
        None => None,
    };
    synthesize_population_with(records, variables, |_, rows| match min_positive {
        Some((idx, count)) => rows.iter().filter(|r| r.y[idx] > 0.0).count() >= count,
        None => true,
    })
}

/// As [`synthesize_population`] with an arbitrary domain predicate.
pub fn synthesize_population_with<F>(
    records: &[SampleRecord],
    variables: &[String],
    keep_domain: F,
) -> Result<(Population, SynthesisReport)>
where
    F: Fn(u64, &[&SampleRecord]) -> bool,
{
    let mut by_domain: BTreeMap<u64, Vec<&SampleRecord>> = BTreeMap::new();
    for r in records {
        if !(r.weight > 0.0) || !r.weight.is_finite() {
            return Err(Error::invalid(format!("record {} has non-positive weight {}", r.unit_id, r.weight)));
        }
        by_domain.entry(r.domain_id).or_default().push(r);
    }

    let mut report = SynthesisReport::default();
    let mut labels = Vec::new();
    let mut units = Vec::new();
    let mut next_household = 1u64;
    let mut next_unit = 1u64;

    for (label, rows) in &by_domain {
        if !keep_domain(*label, rows) {
            report.dropped_domains.push(*label);
            continue;
        }
        let domain = labels.len();
        let mut households: BTreeMap<u64, Vec<(&SampleRecord, u64)>> = BTreeMap::new();
        for r in rows {
            let copies = r.weight.round_ties_even() as u64;
            if copies == 0 {
                report.dropped_records += 1;
                continue;
            }
            households.entry(r.household_id).or_default().push((r, copies));
        }
        if households.is_empty() {
            report.dropped_domains.push(*label);
            continue;
        }
        labels.push(*label);
        for members in households.values() {
            let max_copies = members.iter().map(|(_, c)| *c).max().unwrap_or(0);
            for c in 0..max_copies {
                for (r, copies) in members {
                    if c < *copies {
                        units.push(Unit { unit_id: next_unit, household_id: next_household, domain, y: r.y.clone(), x: r.x.clone() });
                        next_unit += 1;
                    }
                }
                next_household += 1;
            }
        }
    }
    if units.is_empty() {
        return Err(Error::invalid("synthesis produced an empty population"));
    }
    Ok((Population::new(units, variables.to_vec(), labels)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, hh: u64, dom: u64, w: f64, y: f64) -> SampleRecord {
        SampleRecord { unit_id: id, household_id: hh, domain_id: dom, weight: w, y: vec![y], x: vec![1.0] }
    }

    fn vars() -> Vec<String> {
        vec!["y".into()]
    }

    #[test]
    fn clone_counts_use_half_even_rounding() {
        let (pop, _) = synthesize_population(&[rec(1, 1, 1, 3.4, 0.0)], &vars(), &DomainFilter::default()).unwrap();
        assert_eq!(pop.size(), 3);
        let (pop, _) = synthesize_population(&[rec(1, 1, 1, 1.0, 0.0)], &vars(), &DomainFilter::default()).unwrap();
        assert_eq!(pop.size(), 1);
        let (pop, _) = synthesize_population(&[rec(1, 1, 1, 2.5, 0.0)], &vars(), &DomainFilter::default()).unwrap();
        assert_eq!(pop.size(), 2);
        let (pop, _) = synthesize_population(&[rec(1, 1, 1, 3.5, 0.0)], &vars(), &DomainFilter::default()).unwrap();
        assert_eq!(pop.size(), 4);
    }

    #[test]
    fn households_are_cloned_whole() {
        let records = [rec(1, 10, 1, 3.0, 1.0), rec(2, 10, 1, 3.0, 0.0), rec(3, 11, 1, 2.0, 1.0)];
        let (pop, report) = synthesize_population(&records, &vars(), &DomainFilter::default()).unwrap();
        assert_eq!(pop.size(), 8);
        assert_eq!(report.dropped_records, 0);
        let mut sizes: Vec<usize> = pop.households().iter().map(|h| h.size()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 1, 2, 2, 2]);
    }

    #[test]
    fn zero_replication_and_bad_weights() {
        let records = [rec(1, 1, 1, 0.4, 1.0), rec(2, 2, 1, 2.0, 1.0)];
        let (pop, report) = synthesize_population(&records, &vars(), &DomainFilter::default()).unwrap();
        assert_eq!(pop.size(), 2);
        assert_eq!(report.dropped_records, 1);
        assert!(synthesize_population(&[rec(1, 1, 1, 0.0, 1.0)], &vars(), &DomainFilter::default()).is_err());
        assert!(synthesize_population(&[rec(1, 1, 1, -2.0, 1.0)], &vars(), &DomainFilter::default()).is_err());
    }

    #[test]
    fn domain_filter_drops_sparse_domains() {
        let records =
            [rec(1, 1, 1, 2.0, 1.0), rec(2, 2, 1, 2.0, 1.0), rec(3, 3, 2, 2.0, 0.0), rec(4, 4, 2, 2.0, 1.0), rec(5, 5, 3, 2.0, 0.0)];
        let filter = DomainFilter { min_positive: Some(("y".into(), 2)) };
        let (pop, report) = synthesize_population(&records, &vars(), &filter).unwrap();
        assert_eq!(pop.domain_labels(), &[1]);
        assert_eq!(report.dropped_domains, vec![2, 3]);
        assert_eq!(pop.size(), 4);
    }
}
