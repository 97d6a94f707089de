//! Synthetic estimators: area-level regression-synthetic and unit-level
//! GREG-synthetic. Both produce a value for every domain, sampled or not.

use crate::direct::WeightedSample;
use crate::error::{Error, Result};
use crate::linalg::{dot, NormalEquations};
use crate::population::VarId;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coef: Vec<f64>,
    pub gram_condition: f64,
    pub ridged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticResult {
    /// One value per domain.
    pub values: Vec<f64>,
    pub fit: RegressionFit,
}

/// Regression-synthetic estimator `z_i' beta` with `beta` the weighted least
/// squares fit of the direct estimates on `z` with weights `1 / psi_s`.
/// Domains whose direct estimate is `None` are left out of the fit.
pub fn regression_synthetic(direct: &[Option<f64>], psi_s: &[f64], z: &[Vec<f64>]) -> Result<SyntheticResult> {
    let m = z.len();
    if direct.len() != m || psi_s.len() != m {
        return Err(Error::invalid("direct, psi_s and z must have one entry per domain"));
    }
    let p = z.first().map(Vec::len).unwrap_or(0);
    if p == 0 || z.iter().any(|zi| zi.len() != p) {
        return Err(Error::invalid("z vectors must share a positive length"));
    }
    let mut ne = NormalEquations::new(p);
    let mut used = 0;
    for i in 0..m {
        if let Some(theta) = direct[i] {
            if !(psi_s[i] > 0.0) || !psi_s[i].is_finite() {
                return Err(Error::invalid(format!("smoothed variance of domain {i} is {}", psi_s[i])));
            }
            ne.add(&z[i], theta, 1.0 / psi_s[i]);
            used += 1;
        }
    }
    if used < p {
        return Err(Error::TooFewPoints { usable: used, needed: p });
    }
    let sol = ne.solve("regression-synthetic")?;
    let values = z.iter().map(|zi| dot(zi, &sol.coef)).collect();
    Ok(SyntheticResult { values, fit: RegressionFit { coef: sol.coef, gram_condition: sol.condition, ridged: sol.ridged } })
}

/// GREG-synthetic estimator `theta_x_i' B` with a single `B` fitted on the
/// whole weighted sample.
pub fn greg_synthetic(s: &WeightedSample, var: VarId, theta_x: &[Vec<f64>]) -> Result<SyntheticResult> {
    let p = s.pop.aux_dim();
    if theta_x.iter().any(|t| t.len() != p) {
        return Err(Error::invalid(format!("theta_x vectors must have length {p}")));
    }
    let mut ne = NormalEquations::new(p);
    for (pos, &w) in s.weights.iter().enumerate() {
        if w > 0.0 {
            ne.add(s.x(pos), s.y(pos, var), w);
        }
    }
    let sol = ne.solve("GREG-synthetic")?;
    let values = theta_x.iter().map(|t| dot(t, &sol.coef)).collect();
    Ok(SyntheticResult { values, fit: RegressionFit { coef: sol.coef, gram_condition: sol.condition, ridged: sol.ridged } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::hajek_mean;
    use crate::population::{Population, Unit};
    use crate::sampling::draw_srswor;

    #[test]
    fn standard_basis_interpolates() {
        let z = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = regression_synthetic(&[Some(0.3), Some(0.7)], &[0.1, 0.5], &z).unwrap();
        assert!((r.values[0] - 0.3).abs() < 1e-12);
        assert!((r.values[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_is_precision_weighted_mean() {
        let z = vec![vec![1.0]; 3];
        let d = [0.2, 0.5, 0.4];
        let psi = [0.01, 0.04, 0.02];
        let r = regression_synthetic(&[Some(d[0]), Some(d[1]), Some(d[2])], &psi, &z).unwrap();
        let num: f64 = d.iter().zip(&psi).map(|(a, b)| a / b).sum();
        let den: f64 = psi.iter().map(|b| 1.0 / b).sum();
        for v in r.values {
            assert!((v - num / den).abs() < 1e-12);
        }
    }

    /// Oracle: closed-form 2x2 weighted normal equations for M = 3, P = 2.
    #[test]
    fn three_domains_two_covariates() {
        let zs = [0.2, 0.5, 0.9];
        let d = [0.1, 0.35, 0.4];
        let psi = [0.02, 0.01, 0.05];
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..3 {
            let w = 1.0 / psi[i];
            s0 += w;
            s1 += w * zs[i];
            s2 += w * zs[i] * zs[i];
            t0 += w * d[i];
            t1 += w * zs[i] * d[i];
        }
        let det = s0 * s2 - s1 * s1;
        let b = [(s2 * t0 - s1 * t1) / det, (s0 * t1 - s1 * t0) / det];
        let z: Vec<Vec<f64>> = zs.iter().map(|&v| vec![1.0, v]).collect();
        let r = regression_synthetic(&[Some(d[0]), Some(d[1]), Some(d[2])], &psi, &z).unwrap();
        assert!((r.fit.coef[0] - b[0]).abs() < 1e-12);
        assert!((r.fit.coef[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn unsampled_domains_still_get_values() {
        let z = vec![vec![1.0, 0.1], vec![1.0, 0.4], vec![1.0, 0.8]];
        let r = regression_synthetic(&[Some(0.1), None, Some(0.8)], &[0.01, 0.01, 0.01], &z).unwrap();
        assert!((r.values[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn input_errors() {
        let z = vec![vec![1.0]; 2];
        assert!(regression_synthetic(&[Some(0.1), Some(0.2)], &[0.0, 0.1], &z).is_err());
        assert!(regression_synthetic(&[None, None], &[0.1, 0.1], &z).is_err());
        let z2 = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        // z_2 identically zero: the ridge keeps the fit usable
        let r = regression_synthetic(&[Some(0.1), Some(0.3)], &[0.1, 0.1], &z2).unwrap();
        assert!(r.fit.ridged);
        assert!((r.values[0] - 0.2).abs() < 1e-6);
    }

    fn pop8() -> Population {
        let x2 = [0.0, 1.0, 2.0, 3.0, 1.0, 0.5, 2.5, 4.0];
        let units = (0..8)
            .map(|k| Unit {
                unit_id: k as u64 + 1,
                household_id: k as u64 + 1,
                domain: k % 2,
                y: vec![x2[k], (k as f64).sin()],
                x: vec![1.0, x2[k]],
            })
            .collect();
        Population::new(units, vec!["x".into(), "s".into()], vec![1, 2]).unwrap()
    }

    #[test]
    fn greg_synthetic_exact_fit() {
        let pop = pop8();
        let draw = draw_srswor(&pop, 5, 2).unwrap();
        let w = draw.design_weights();
        let aux = pop.domain_x_means().unwrap();
        let r = greg_synthetic(&WeightedSample::new(&pop, &draw, &w), VarId(0), &aux.theta_x).unwrap();
        assert!(r.fit.coef[0].abs() < 1e-12);
        assert!((r.fit.coef[1] - 1.0).abs() < 1e-12);
        for d in 0..2 {
            assert!((r.values[d] - aux.theta_x[d][1]).abs() < 1e-12);
        }
    }

    #[test]
    fn greg_synthetic_intercept_only_is_overall_hajek() {
        let units: Vec<Unit> = (0..8)
            .map(|k| Unit { unit_id: k + 1, household_id: k + 1, domain: (k % 3) as usize, y: vec![(k * 7 % 5) as f64], x: vec![1.0] })
            .collect();
        let pop = Population::new(units, vec!["y".into()], vec![1, 2, 3]).unwrap();
        let draw = draw_srswor(&pop, 6, 5).unwrap();
        let w = [1.0, 2.0, 3.0, 1.5, 0.5, 2.5];
        let s = WeightedSample::new(&pop, &draw, &w);
        let r = greg_synthetic(&s, VarId(0), &vec![vec![1.0]; 3]).unwrap();
        let total: f64 = (0..6).map(|p| w[p] * s.y(p, VarId(0))).sum();
        let overall = total / w.iter().sum::<f64>();
        for v in &r.values {
            assert!((v - overall).abs() < 1e-12);
        }
        // also equals the Hájek mean when all domains are pooled
        let _ = hajek_mean(&s, VarId(0), 0).unwrap();
    }

    /// Oracle: explicit weighted least squares on a fixed 8-unit sample.
    #[test]
    fn greg_synthetic_matches_wls_oracle() {
        let pop = pop8();
        let draw = draw_srswor(&pop, 8, 0).unwrap();
        let w = [1.0, 2.0, 0.5, 1.5, 3.0, 1.0, 2.0, 0.25];
        let s = WeightedSample::new(&pop, &draw, &w);
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in 0..8 {
            let x = s.x(p)[1];
            let y = s.y(p, VarId(1));
            s0 += w[p];
            s1 += w[p] * x;
            s2 += w[p] * x * x;
            t0 += w[p] * y;
            t1 += w[p] * x * y;
        }
        let det = s0 * s2 - s1 * s1;
        let b = [(s2 * t0 - s1 * t1) / det, (s0 * t1 - s1 * t0) / det];
        let r = greg_synthetic(&s, VarId(1), &[vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((r.fit.coef[0] - b[0]).abs() < 1e-12);
        assert!((r.fit.coef[1] - b[1]).abs() < 1e-12);
        assert!((r.values[1] - (b[0] + 2.0 * b[1])).abs() < 1e-12);
    }
}
