//! Sample selection: households with probability proportional to size
//! (systematic selection over a random household order), simple random
//! sampling of units, and exhaustive enumeration of small designs.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::population::Population;
use crate::rng::rng_from_seed;

/// Default limit on the number of enumerated samples.
pub const ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    /// `n_prime` households, probability proportional to household size.
    PpsHouseholds { n_prime: usize },
    /// `n` units by simple random sampling without replacement.
    Srswor { n: usize },
}

/// Second-order inclusion probabilities, when known.
#[derive(Debug, Clone, PartialEq)]
pub enum JointInclusion {
    /// Same `pi_kl` for every pair of distinct units.
    Uniform(f64),
    /// Dense `N x N` matrix over population unit indices.
    Full { size: usize, probs: Arc<Vec<f64>> },
}

impl JointInclusion {
    pub fn probability(&self, k: usize, l: usize) -> f64 {
        match self {
            JointInclusion::Uniform(p) => *p,
            JointInclusion::Full { size, probs } => probs[k * size + l],
        }
    }
}

/// A realized sample. Positions `0..n()` index the selected units.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDraw {
    /// Population unit indices.
    pub units: Vec<usize>,
    /// First-order inclusion probabilities.
    pub pi: Vec<f64>,
    /// Domain of each selected unit.
    pub domain: Vec<usize>,
    /// Primary sampling unit of each selected unit, in `0..psu_count`.
    pub psu: Vec<usize>,
    pub psu_count: usize,
    /// Number of PSUs in the frame.
    pub frame_psus: usize,
    /// Positions belonging to each domain.
    pub domains: Vec<Vec<usize>>,
    pub seed: u64,
    pub joint: Option<JointInclusion>,
}

impl SampleDraw {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        pop: &Population,
        units: Vec<usize>,
        pi: Vec<f64>,
        psu: Vec<usize>,
        psu_count: usize,
        frame_psus: usize,
        seed: u64,
        joint: Option<JointInclusion>,
    ) -> Self {
        let domain: Vec<usize> = units.iter().map(|&k| pop.unit(k).domain).collect();
        let mut domains = vec![Vec::new(); pop.domain_count()];
        for (pos, &d) in domain.iter().enumerate() {
            domains[d].push(pos);
        }
        Self { units, pi, domain, psu, psu_count, frame_psus, domains, seed, joint }
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn domain_count(&self) -> usize {
        self.domains.len()
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        self.domains.iter().map(Vec::len).collect()
    }

    /// Design weights `1 / pi_k`.
    pub fn design_weights(&self) -> Vec<f64> {
        self.pi.iter().map(|p| 1.0 / p).collect()
    }

    /// Joint inclusion probability of the units at positions `a` and `b`.
    pub fn joint_probability(&self, a: usize, b: usize) -> Option<f64> {
        if a == b {
            return Some(self.pi[a]);
        }
        self.joint.as_ref().map(|j| j.probability(self.units[a], self.units[b]))
    }
}

impl DesignSpec {
    pub fn draw(&self, pop: &Population, seed: u64) -> Result<SampleDraw> {
        match *self {
            DesignSpec::PpsHouseholds { n_prime } => draw_pps_households(pop, n_prime, seed),
            DesignSpec::Srswor { n } => draw_srswor(pop, n, seed),
        }
    }
}

fn check_pps(pop: &Population, n_prime: usize) -> Result<()> {
    let households = pop.households();
    if n_prime == 0 || n_prime >= households.len() {
        return Err(Error::invalid(format!("household sample size {n_prime} must be in 1..{}", households.len())));
    }
    let n = pop.size();
    if let Some(h) = households.iter().max_by_key(|h| (h.size(), std::cmp::Reverse(h.id))) {
        if h.size() * n_prime > n {
            return Err(Error::DesignInfeasible { household: h.id, size: h.size(), pi: (h.size() * n_prime) as f64 / n as f64 });
        }
    }
    Ok(())
}

/// Systematic selection over households in `order`. `start` lies in `[0, N)`
/// on the scale where household `t` covers `[C_{t-1} n', C_t n')` and the
/// selection points are `start + j N`, `j = 0..n'`.
fn systematic_select(pop: &Population, order: &[usize], n_prime: usize, start: f64) -> Vec<usize> {
    let households = pop.households();
    let n = pop.size() as f64;
    let mut selected = Vec::with_capacity(n_prime);
    let mut j = 0usize;
    let mut lower = 0.0;
    for &h in order {
        let upper = lower + (households[h].size() * n_prime) as f64;
        while j < n_prime {
            let point = start + j as f64 * n;
            if point >= upper {
                break;
            }
            if point >= lower {
                selected.push(h);
            }
            j += 1;
        }
        lower = upper;
    }
    selected.sort_unstable();
    selected.dedup();
    selected
}

fn pps_draw_from_households(
    pop: &Population,
    n_prime: usize,
    households: &[usize],
    seed: u64,
    joint: Option<JointInclusion>,
) -> SampleDraw {
    let n = pop.size() as f64;
    let mut units = Vec::new();
    let mut pi = Vec::new();
    let mut psu = Vec::new();
    for (l, &h) in households.iter().enumerate() {
        let hh = &pop.households()[h];
        let p = (hh.size() * n_prime) as f64 / n;
        for &k in &hh.members {
            units.push(k);
            pi.push(p);
            psu.push(l);
        }
    }
    SampleDraw::assemble(pop, units, pi, psu, households.len(), pop.households().len(), seed, joint)
}

/// Draws `n_prime` households with probabilities proportional to their
/// sizes; every member of a selected household is surveyed and gets
/// `pi_k = h_l n' / N`.
pub fn draw_pps_households(pop: &Population, n_prime: usize, seed: u64) -> Result<SampleDraw> {
    check_pps(pop, n_prime)?;
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..pop.households().len()).collect();
    order.shuffle(&mut rng);
    let start = rng.random::<f64>() * pop.size() as f64;
    let selected = systematic_select(pop, &order, n_prime, start);
    debug_assert_eq!(selected.len(), n_prime);
    Ok(pps_draw_from_households(pop, n_prime, &selected, seed, None))
}

/// Simple random sample of `n` units; each unit is its own PSU.
pub fn draw_srswor(pop: &Population, n: usize, seed: u64) -> Result<SampleDraw> {
    let big_n = pop.size();
    if n == 0 || n > big_n {
        return Err(Error::invalid(format!("sample size {n} must be in 1..={big_n}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut units = rand::seq::index::sample(&mut rng, big_n, n).into_vec();
    units.sort_unstable();
    Ok(srswor_draw(pop, units, seed))
}

fn srswor_joint(big_n: usize, n: usize) -> f64 {
    if big_n < 2 {
        return 0.0;
    }
    (n * (n.saturating_sub(1))) as f64 / (big_n * (big_n - 1)) as f64
}

fn srswor_draw(pop: &Population, units: Vec<usize>, seed: u64) -> SampleDraw {
    let big_n = pop.size();
    let n = units.len();
    let p = n as f64 / big_n as f64;
    let psu: Vec<usize> = (0..n).collect();
    SampleDraw::assemble(pop, units, vec![p; n], psu, n, big_n, seed, Some(JointInclusion::Uniform(srswor_joint(big_n, n))))
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn factorial(n: usize, cap: u128) -> Option<u128> {
    let mut acc: u128 = 1;
    for i in 2..=n as u128 {
        acc = acc.checked_mul(i)?;
        if acc > cap {
            return None;
        }
    }
    Some(acc)
}

/// Every sample the design can produce, with its probability. Draws carry
/// exact joint inclusion probabilities.
pub fn enumerate_all_samples(pop: &Population, design: &DesignSpec) -> Result<Vec<(SampleDraw, f64)>> {
    enumerate_all_samples_capped(pop, design, ENUMERATION_CAP)
}

pub fn enumerate_all_samples_capped(pop: &Population, design: &DesignSpec, cap: u128) -> Result<Vec<(SampleDraw, f64)>> {
    match *design {
        DesignSpec::Srswor { n } => enumerate_srswor(pop, n, cap),
        DesignSpec::PpsHouseholds { n_prime } => enumerate_pps(pop, n_prime, cap),
    }
}

fn enumerate_srswor(pop: &Population, n: usize, cap: u128) -> Result<Vec<(SampleDraw, f64)>> {
    let big_n = pop.size();
    if n == 0 || n > big_n {
        return Err(Error::invalid(format!("sample size {n} must be in 1..={big_n}")));
    }
    let count = binomial(big_n, n);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let p = 1.0 / count as f64;
    let mut out = Vec::with_capacity(count as usize);
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        out.push((srswor_draw(pop, idx.clone(), 0), p));
        // next combination in lexicographic order
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if idx[i] != i + big_n - n {
                break;
            }
            if i == 0 {
                return Ok(out);
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Enumerates the systematic PPS scheme: all household orders are equally
/// likely, and for each order the start point is uniform, so the selection
/// is piecewise constant between the household boundaries taken modulo `N`.
fn enumerate_pps(pop: &Population, n_prime: usize, cap: u128) -> Result<Vec<(SampleDraw, f64)>> {
    check_pps(pop, n_prime)?;
    let households = pop.households();
    let h_count = households.len();
    let perms = factorial(h_count, cap).ok_or(Error::EnumerationCap { count: u128::MAX, cap })?;
    let work = perms * (h_count as u128 + 1);
    if work > cap {
        return Err(Error::EnumerationCap { count: work, cap });
    }
    let n = pop.size() as f64;
    let mut support: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut order: Vec<usize> = (0..h_count).collect();
    loop {
        let mut cuts = vec![0.0, n];
        let mut acc = 0.0;
        for &h in &order {
            acc += (households[h].size() * n_prime) as f64;
            cuts.push(acc % n);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for w in cuts.windows(2) {
            let width = w[1] - w[0];
            if width <= 0.0 {
                continue;
            }
            let chosen = systematic_select(pop, &order, n_prime, 0.5 * (w[0] + w[1]));
            *support.entry(chosen).or_insert(0.0) += width / n / perms as f64;
        }
        if !next_permutation(&mut order) {
            break;
        }
    }

    let big_n = pop.size();
    let mut household_joint = vec![0.0; h_count * h_count];
    for (set, p) in &support {
        for &a in set {
            for &b in set {
                household_joint[a * h_count + b] += p;
            }
        }
    }
    let mut probs = vec![0.0; big_n * big_n];
    for k in 0..big_n {
        let hk = pop.household_of(k);
        for l in 0..big_n {
            probs[k * big_n + l] = household_joint[hk * h_count + pop.household_of(l)];
        }
    }
    let joint = JointInclusion::Full { size: big_n, probs: Arc::new(probs) };
    Ok(support.into_iter().map(|(set, p)| (pps_draw_from_households(pop, n_prime, &set, 0, Some(joint.clone())), p)).collect())
}
