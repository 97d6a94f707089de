//! Convex compositions of a direct and a synthetic estimator, their weights
//! and MSE estimators, and the two-step procedure.

use crate::bootstrap::BootstrapVariance;
use crate::error::{Error, Result};
use crate::flags::Flags;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeComponents {
    /// `None` for a domain without sample.
    pub theta_d: Option<f64>,
    /// The synthetic side of the composition; for the second step this is
    /// the first-step composite.
    pub theta_s: f64,
    pub psi_s: f64,
    /// `sigma^2(theta_S)` for the first step, the first-step MSE for the second.
    pub sigma2_syn: f64,
    pub sigma2_comp: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeResult {
    pub domain: usize,
    pub theta_c: f64,
    pub lambda: f64,
    /// Total weight on the direct estimator after all steps.
    pub direct_weight: f64,
    pub step: Step,
    /// `None` when the bootstrap variance of the composite is undefined.
    pub mse: Option<f64>,
    pub components: CompositeComponents,
    pub flags: Flags,
}

/// A weight together with the flags raised while computing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight {
    pub value: f64,
    pub flags: Flags,
}

fn check_unit(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("weight {lambda} outside [0, 1]")));
    }
    Ok(())
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} = {v} must be finite and nonnegative")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} = {v} must be finite and positive")));
    }
    Ok(())
}

pub fn compose(theta_d: f64, theta_s: f64, lambda: f64) -> Result<f64> {
    check_unit(lambda)?;
    Ok(lambda * theta_d + (1.0 - lambda) * theta_s)
}

/// MSE-minimizing weight `(mse_S - C) / (mse_d + mse_S - 2C)`, clamped to `[0, 1]`.
pub fn optimal_lambda(mse_d: f64, mse_s: f64, cross: f64) -> Result<Weight> {
    let denominator = mse_d + mse_s - 2.0 * cross;
    if !(denominator > 0.0) {
        return Err(Error::DegenerateWeight { denominator });
    }
    let raw = (mse_s - cross) / denominator;
    let value = raw.clamp(0.0, 1.0);
    let flags = if value != raw { Flags::LAMBDA_CLAMPED } else { Flags::empty() };
    Ok(Weight { value, flags })
}

/// `mse_S / (psi + mse_S)`, the weight obtained by ignoring the cross term.
pub fn lambda_approx(psi: f64, mse_s: f64) -> Result<f64> {
    check_positive("psi", psi)?;
    check_nonneg("mse_S", mse_s)?;
    Ok(mse_s / (psi + mse_s))
}

/// Approximately unbiased MSE estimator of the synthetic estimator,
/// `(theta_S - theta_d)^2 - sigma^2(theta_S - theta_d) + sigma^2(theta_S)`.
/// Negative values are returned as is, flagged.
pub fn gw_mse_synthetic(theta_s: f64, theta_d: f64, sigma2_diff: f64, sigma2_s: f64) -> Result<Weight> {
    check_nonneg("sigma2_diff", sigma2_diff)?;
    check_nonneg("sigma2_S", sigma2_s)?;
    let value = (theta_s - theta_d).powi(2) - sigma2_diff + sigma2_s;
    let flags = if value < 0.0 { Flags::NEGATIVE_MSE } else { Flags::empty() };
    Ok(Weight { value, flags })
}

/// `lambda (1 - lambda) psi_s + sigma^2(theta_C)`.
pub fn mse_composite(lambda: f64, psi_s: f64, sigma2_comp: f64) -> Result<f64> {
    check_unit(lambda)?;
    check_positive("psi_s", psi_s)?;
    check_nonneg("sigma2_comp", sigma2_comp)?;
    Ok(lambda * (1.0 - lambda) * psi_s + sigma2_comp)
}

fn variance_part(v: BootstrapVariance) -> (Option<f64>, Flags) {
    let flags = if v.value.is_none() { v.flags | Flags::VARIANCE_UNDEFINED } else { v.flags };
    (v.value, flags)
}

fn mse_or_none(lambda: f64, psi_s: f64, sigma2: Option<f64>) -> Result<Option<f64>> {
    sigma2.map(|s| mse_composite(lambda, psi_s, s)).transpose()
}

/// First step: `lambda1 = sigma^2(theta_S) / (psi_s + sigma^2(theta_S))`.
///
/// `sigma2_comp` receives the chosen weight and returns the bootstrap
/// variance of the composite at that weight. A domain without sample gets
/// the synthetic estimate with weight 0.
pub fn first_step<F>(
    domain: usize,
    theta_d: Option<f64>,
    theta_s: f64,
    psi_s: f64,
    sigma2_s: f64,
    sigma2_comp: F,
) -> Result<CompositeResult>
where
    F: FnOnce(f64) -> BootstrapVariance,
{
    let lambda_raw = lambda_approx(psi_s, sigma2_s)?;
    let (lambda, theta_c, mut flags) = match theta_d {
        Some(d) => (lambda_raw, compose(d, theta_s, lambda_raw)?, Flags::empty()),
        None => (0.0, theta_s, Flags::EMPTY_DOMAIN),
    };
    let (s2, vflags) = variance_part(sigma2_comp(lambda));
    flags |= vflags;
    Ok(CompositeResult {
        domain,
        theta_c,
        lambda,
        direct_weight: lambda,
        step: Step::First,
        mse: mse_or_none(lambda, psi_s, s2)?,
        components: CompositeComponents { theta_d, theta_s, psi_s, sigma2_syn: sigma2_s, sigma2_comp: s2 },
        flags,
    })
}

/// Second step: the first-step composite plays the synthetic role, with
/// `lambda2 = m1 / (psi_s + m1)` where `m1` is the first-step MSE.
///
/// `sigma2_comp` receives `lambda2` and returns the bootstrap variance of
/// `lambda2 theta_d + (1 - lambda2) theta_C1`.
pub fn second_step<F>(first: &CompositeResult, sigma2_comp: F) -> Result<CompositeResult>
where
    F: FnOnce(f64) -> BootstrapVariance,
{
    let psi_s = first.components.psi_s;
    let Some(m1) = first.mse else {
        return Err(Error::UndefinedVariance { domain: first.domain, n: 0 });
    };
    let lambda_raw = lambda_approx(psi_s, m1)?;
    let (lambda, theta_c, mut flags) = match first.components.theta_d {
        Some(d) => (lambda_raw, compose(d, first.theta_c, lambda_raw)?, first.flags & !Flags::VARIANCE_UNDEFINED),
        None => (0.0, first.theta_c, first.flags),
    };
    let (s2, vflags) = variance_part(sigma2_comp(lambda));
    flags |= vflags;
    Ok(CompositeResult {
        domain: first.domain,
        theta_c,
        lambda,
        direct_weight: lambda + (1.0 - lambda) * first.direct_weight,
        step: Step::Second,
        mse: mse_or_none(lambda, psi_s, s2)?,
        components: CompositeComponents {
            theta_d: first.components.theta_d,
            theta_s: first.theta_c,
            psi_s,
            sigma2_syn: m1,
            sigma2_comp: s2,
        },
        flags,
    })
}
