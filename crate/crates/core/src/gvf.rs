//! Generalized variance function `psi ~ K N^gamma`, fitted by ordinary least
//! squares of `ln psi` on `ln N`.

use crate::error::{Error, Result};
use crate::flags::Flags;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GvfModel {
    pub k: f64,
    pub gamma: f64,
    pub n_fit: usize,
    pub r2: f64,
    pub flags: Flags,
}

/// Fits the GVF on domains with a positive, finite variance estimate.
pub fn fit_gvf(psi_d: &[Option<f64>], domain_sizes: &[usize]) -> Result<GvfModel> {
    if psi_d.len() != domain_sizes.len() {
        return Err(Error::invalid("psi_d and domain sizes differ in length"));
    }
    let points: Vec<(f64, f64)> = psi_d
        .iter()
        .zip(domain_sizes)
        .filter_map(|(psi, &n)| match psi {
            Some(v) if *v > 0.0 && v.is_finite() && n > 0 => Some(((n as f64).ln(), v.ln())),
            _ => None,
        })
        .collect();
    if points.len() < 2 {
        return Err(Error::TooFewPoints { usable: points.len(), needed: 2 });
    }
    let m = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let (gamma, intercept, flags) = if sxx <= 1e-12 * m {
        (0.0, mean_y, Flags::GVF_FLAT)
    } else {
        let g = sxy / sxx;
        (g, mean_y - g * mean_x, Flags::empty())
    };
    let r2 = if syy > 0.0 && flags.is_empty() { (sxy * sxy) / (sxx * syy) } else { 0.0 };
    Ok(GvfModel { k: intercept.exp(), gamma, n_fit: points.len(), r2, flags })
}

impl GvfModel {
    pub fn predict(&self, domain_size: usize) -> f64 {
        self.k * (domain_size as f64).powf(self.gamma)
    }

    /// Smoothed variances `K N_i^gamma` for every domain.
    pub fn smooth(&self, domain_sizes: &[usize]) -> Vec<f64> {
        domain_sizes.iter().map(|&n| self.predict(n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_is_recovered() {
        let sizes = [100, 200, 400];
        let psi: Vec<Option<f64>> = sizes.iter().map(|&n| Some(2.0 * (n as f64).powf(-0.8))).collect();
        let m = fit_gvf(&psi, &sizes).unwrap();
        assert!((m.k - 2.0).abs() < 1e-10);
        assert!((m.gamma + 0.8).abs() < 1e-10);
        assert_eq!(m.n_fit, 3);
        let back = m.smooth(&sizes);
        for (b, p) in back.iter().zip(&psi) {
            assert!((b - p.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn underdetermined_fit_fails() {
        let r = fit_gvf(&[Some(0.1), Some(0.0), None], &[10, 20, 30]);
        assert!(matches!(r, Err(Error::TooFewPoints { usable: 1, needed: 2 })));
    }

    #[test]
    fn equal_sizes_give_flat_function() {
        let m = fit_gvf(&[Some(0.01), Some(0.04)], &[50, 50]).unwrap();
        assert_eq!(m.gamma, 0.0);
        assert!((m.k - 0.02).abs() < 1e-12);
        assert!(m.flags.contains(Flags::GVF_FLAT));
    }

    #[test]
    fn smoothing_values() {
        let m = GvfModel { k: 2.0, gamma: -1.0, n_fit: 2, r2: 1.0, flags: Flags::empty() };
        assert!((m.predict(100) - 0.02).abs() < 1e-15);
        let flat = GvfModel { gamma: 0.0, ..m };
        assert_eq!(flat.smooth(&[1, 10, 1000]), vec![2.0; 3]);
    }

    /// Oracle: textbook simple-regression slope and intercept on the logs.
    #[test]
    fn noisy_fit_matches_closed_form() {
        let sizes: Vec<usize> = (0..30).map(|i| 200 + 137 * i).collect();
        let psi: Vec<Option<f64>> =
            sizes.iter().enumerate().map(|(i, &n)| Some(0.5 * (n as f64).powf(-0.9) * (0.3 * ((i * 7) as f64).sin()).exp())).collect();
        let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = psi.iter().map(|p| p.unwrap().ln()).collect();
        let n = 30.0;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let sxx: f64 = xs.iter().map(|a| a * a).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        let m = fit_gvf(&psi, &sizes).unwrap();
        assert!((m.gamma - slope).abs() < 1e-9);
        assert!((m.k.ln() - intercept).abs() < 1e-9);
        assert!(m.r2 > 0.0 && m.r2 <= 1.0);
    }
}
