use composite_sae::bootstrap::{bootstrap_variance, replicate_statistics, BootstrapSpec, ReplicateWeights};
use composite_sae::direct::{hajek_mean, ht_mean};
use composite_sae::population::{Population, Unit, VarId};
use composite_sae::rng::rng_from_seed;
use composite_sae::sampling::{enumerate_all_samples, DesignSpec};
use rand::Rng as _;

fn population(ys: &[[f64; 2]], households: &[u64]) -> Population {
    let units = ys
        .iter()
        .zip(households)
        .enumerate()
        .map(|(k, (y, &h))| Unit { unit_id: k as u64 + 1, household_id: h, domain: 0, y: y.to_vec(), x: vec![1.0] })
        .collect();
    Population::new(units, vec!["a".into(), "b".into()], vec![1]).unwrap()
}

#[test]
fn independent_statistics_have_near_zero_covariance() {
    let mut rng = rng_from_seed(31);
    let n_units = 3000;
    let ys: Vec<[f64; 2]> = (0..n_units).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let households: Vec<u64> = (0..n_units as u64).map(|k| k / 2 + 1).collect();
    let pop = population(&ys, &households);
    let draw = DesignSpec::PpsHouseholds { n_prime: 150 }.draw(&pop, 9).unwrap();
    let spec = BootstrapSpec { replicates: 2000, seed: 4, ..Default::default() };
    let weights = ReplicateWeights::generate(&draw, &spec).unwrap();
    let stats = replicate_statistics(&pop, &draw, &weights, |s| {
        vec![vec![hajek_mean(s, VarId(0), 0).ok().map(|e| e.value)], vec![hajek_mean(s, VarId(1), 0).ok().map(|e| e.value)]]
    });
    let (a, b) = (&stats[0], &stats[1]);
    let cov = a.covariance(b)[0].value.unwrap();
    let corr = cov / (a.variance()[0].value.unwrap() * b.variance()[0].value.unwrap()).sqrt();
    // chance correlation of the realized sample is of order 1 / sqrt(n')
    let bound = 3.0 / (draw.psu_count as f64).sqrt();
    assert!(corr.abs() <= bound, "bootstrap correlation {corr} exceeds {bound}");
}

#[test]
fn fpc_bootstrap_matches_enumeration_on_small_frame() {
    let ys: Vec<[f64; 2]> = [3.0, 7.0, 1.0, 4.0, 9.0, 2.0, 6.0, 5.0, 8.0, 0.5].iter().map(|&y| [y, 0.0]).collect();
    let households: Vec<u64> = (1..=10).collect();
    let pop = population(&ys, &households);
    let samples = enumerate_all_samples(&pop, &DesignSpec::Srswor { n: 5 }).unwrap();
    let stat = |s: &composite_sae::direct::WeightedSample| vec![Some(ht_mean(s, VarId(0), 0, 10))];

    let estimates: Vec<(f64, f64)> = samples
        .iter()
        .map(|(d, p)| {
            let w = d.design_weights();
            (stat(&composite_sae::direct::WeightedSample::new(&pop, d, &w))[0].unwrap(), *p)
        })
        .collect();
    let mean: f64 = estimates.iter().map(|(v, p)| v * p).sum();
    let exact: f64 = estimates.iter().map(|(v, p)| p * (v - mean).powi(2)).sum();

    let expected: f64 = samples
        .iter()
        .enumerate()
        .map(|(i, (d, p))| {
            let spec = BootstrapSpec { replicates: 2000, fpc: true, seed: i as u64, ..Default::default() };
            p * bootstrap_variance(&pop, d, stat, &spec).unwrap()[0].value.unwrap()
        })
        .sum();
    let rel = (expected / exact - 1.0).abs();
    assert!(rel < 0.15, "bootstrap {expected} vs exact {exact}");
}
