//! Fay–Herriot area-level EBLUP with a moment estimator of the random-effect
//! variance and the `g1 + g2` plug-in MSE.

use nalgebra::{DMatrix, DVector};

use crate::composition::compose;
use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::linalg::{dot, NormalEquations};

/// Absolute tolerance on the moment equation residual.
pub const MOMENT_TOLERANCE: f64 = 1e-10;
/// Upper bisection bound as a multiple of the largest sampling variance.
pub const UPPER_FACTOR: f64 = 100.0;
const MAX_BISECTIONS: usize = 500;

#[derive(Debug, Clone)]
pub struct FhFit {
    pub sigma_v2: f64,
    pub beta: Vec<f64>,
    /// Shrinkage `sigma_v2 / (sigma_v2 + psi_i)`; 0 for domains without a direct estimate.
    pub gamma: Vec<f64>,
    /// Domains that entered the fit.
    pub sampled: Vec<bool>,
    /// `(sum_i z_i z_i' / (sigma_v2 + psi_i))^-1`.
    pub gls_inverse: DMatrix<f64>,
    pub ridged: bool,
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FhPrediction {
    pub value: f64,
    pub flags: Flags,
}

struct Gls {
    beta: Vec<f64>,
    inverse: DMatrix<f64>,
    ridged: bool,
    weighted_rss: f64,
}

fn gls(points: &[(f64, f64, &[f64])], sigma2: f64) -> Result<Gls> {
    let p = points[0].2.len();
    let mut ne = NormalEquations::new(p);
    for &(theta, psi, z) in points {
        ne.add(z, theta, 1.0 / (sigma2 + psi));
    }
    let sol = ne.solve("Fay-Herriot GLS")?;
    let weighted_rss = points.iter().map(|&(theta, psi, z)| (theta - dot(z, &sol.coef)).powi(2) / (sigma2 + psi)).sum();
    Ok(Gls { beta: sol.coef, inverse: sol.inverse, ridged: sol.ridged, weighted_rss })
}

/// Fits the model on domains with a direct estimate. `sigma_v2` solves
/// `sum (theta_i - z_i' beta(s))^2 / (s + psi_i) = m - P` by bisection on
/// `[0, 100 max psi]`, truncated at 0.
pub fn fit_fh(direct: &[Option<f64>], psi: &[f64], z: &[Vec<f64>]) -> Result<FhFit> {
    let m_all = z.len();
    if direct.len() != m_all || psi.len() != m_all {
        return Err(Error::invalid("direct, psi and z must have one entry per domain"));
    }
    let p = z.first().map(Vec::len).unwrap_or(0);
    if p == 0 || z.iter().any(|zi| zi.len() != p) {
        return Err(Error::invalid("z vectors must share a positive length"));
    }
    let mut points = Vec::new();
    for i in 0..m_all {
        if let Some(theta) = direct[i] {
            if !(psi[i] > 0.0 && psi[i].is_finite()) {
                return Err(Error::invalid(format!("sampling variance of domain {i} is {}", psi[i])));
            }
            points.push((theta, psi[i], z[i].as_slice()));
        }
    }
    let m = points.len();
    if m <= p {
        return Err(Error::TooFewPoints { usable: m, needed: p + 1 });
    }
    let target = (m - p) as f64;
    let residual = |s: f64| -> Result<(Gls, f64)> {
        let g = gls(&points, s)?;
        let r = g.weighted_rss - target;
        Ok((g, r))
    };

    let (at_zero, r0) = residual(0.0)?;
    let (sigma_v2, fit) = if r0 <= 0.0 {
        (0.0, at_zero)
    } else {
        let upper = UPPER_FACTOR * points.iter().map(|pt| pt.1).fold(0.0, f64::max);
        let (mut hi_fit, r_hi) = residual(upper)?;
        if r_hi > 0.0 {
            return Err(Error::NonConvergence { upper });
        }
        let (mut lo, mut hi) = (0.0, upper);
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let (g, r) = residual(mid)?;
            if r > 0.0 {
                lo = mid;
            } else {
                hi = mid;
                hi_fit = g;
            }
            if r.abs() < MOMENT_TOLERANCE {
                hi = mid;
                break;
            }
        }
        (hi, hi_fit)
    };

    let gamma = (0..m_all).map(|i| if direct[i].is_some() { sigma_v2 / (sigma_v2 + psi[i]) } else { 0.0 }).collect();
    let mut flags = Flags::empty();
    if fit.ridged {
        flags |= Flags::RIDGE;
    }
    if sigma_v2 == 0.0 {
        flags |= Flags::VARIANCE_CLAMPED;
    }
    Ok(FhFit {
        sigma_v2,
        beta: fit.beta,
        gamma,
        sampled: direct.iter().map(Option::is_some).collect(),
        gls_inverse: fit.inverse,
        ridged: fit.ridged,
        flags,
    })
}

/// `gamma_i theta_d_i + (1 - gamma_i) z_i' beta`; domains without a direct
/// estimate get the regression prediction, flagged.
pub fn eblup_fh(fit: &FhFit, direct: &[Option<f64>], z: &[Vec<f64>]) -> Result<Vec<FhPrediction>> {
    z.iter()
        .zip(direct)
        .zip(&fit.gamma)
        .map(|((zi, d), &g)| {
            let synthetic = dot(zi, &fit.beta);
            match d {
                Some(d) => Ok(FhPrediction { value: compose(*d, synthetic, g)?, flags: Flags::empty() }),
                None => Ok(FhPrediction { value: synthetic, flags: Flags::EMPTY_DOMAIN }),
            }
        })
        .collect()
}

fn quad(inv: &DMatrix<f64>, z: &[f64]) -> f64 {
    let v = DVector::from_column_slice(z);
    (v.transpose() * inv * &v)[(0, 0)]
}

/// `g1 + g2` with `g1 = gamma psi` and `g2 = (1 - gamma)^2 z' A^-1 z`. A
/// domain outside the fit gets `sigma_v2 + z' A^-1 z`.
pub fn mse_fh(fit: &FhFit, psi: &[f64], z: &[Vec<f64>]) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            let q = quad(&fit.gls_inverse, &z[i]).max(0.0);
            if fit.sampled[i] {
                let g = fit.gamma[i];
                g * psi[i] + (1.0 - g).powi(2) * q
            } else {
                fit.sigma_v2 + q
            }
        })
        .collect()
}
