//! The full estimation chain on one sample: direct estimates, GVF-smoothed
//! variances, synthetic estimates, paired bootstrap, the two composition
//! steps, and the Fay–Herriot benchmark.

use serde::Deserialize;

use crate::bootstrap::{replicate_statistics, BootstrapSpec, BootstrapVariance, ReplicateWeights};
use crate::composition::{first_step, gw_mse_synthetic, second_step, CompositeResult, Weight};
use crate::direct::{greg_direct_or_hajek, greg_var_direct, hajek_mean, hajek_var_direct, VarianceMode, WeightedSample};
use crate::error::{Error, Result};
use crate::fh::{eblup_fh, fit_fh, mse_fh, FhFit, FhPrediction};
use crate::flags::Flags;
use crate::gvf::{fit_gvf, GvfModel};
use crate::population::{AreaAuxiliary, Population, VarId};
use crate::sampling::SampleDraw;
use crate::synthetic::{greg_synthetic, regression_synthetic, RegressionFit};

/// Which direct/synthetic pair feeds the compositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    /// Hájek direct with the area-level regression-synthetic estimator.
    Area,
    /// Direct GREG with the GREG-synthetic estimator.
    Unit,
}

impl PipelineKind {
    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Area => "area",
            PipelineKind::Unit => "unit",
        }
    }
}

impl std::str::FromStr for PipelineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "area" => Ok(PipelineKind::Area),
            "unit" => Ok(PipelineKind::Unit),
            other => Err(Error::Config(format!("unknown pipeline '{other}' (expected area or unit)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSpec {
    pub kind: PipelineKind,
    pub var: VarId,
    pub bootstrap: BootstrapSpec,
    pub variance_mode: VarianceMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainResult {
    pub domain: usize,
    /// Realized domain sample size.
    pub n: usize,
    pub direct: Option<f64>,
    pub direct_flags: Flags,
    pub psi_d: Option<f64>,
    pub psi_s: f64,
    pub synthetic: f64,
    pub sigma2_syn: BootstrapVariance,
    /// Approximately unbiased MSE estimate of the synthetic estimator.
    pub gw_mse: Option<Weight>,
    /// `None` when the bootstrap variance of the synthetic estimator is undefined.
    pub first: Option<CompositeResult>,
    pub second: Option<CompositeResult>,
    /// `None` when the benchmark fit failed; see [`PipelineOutput::fh_error`].
    pub eblup: Option<FhPrediction>,
    pub mse_eblup: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub domains: Vec<DomainResult>,
    pub gvf: GvfModel,
    pub synthetic_fit: RegressionFit,
    pub fh: Option<FhFit>,
    pub fh_error: Option<String>,
}

fn direct_all(s: &WeightedSample, kind: PipelineKind, var: VarId, aux: &AreaAuxiliary) -> Vec<Option<f64>> {
    (0..s.pop.domain_count())
        .map(|i| match kind {
            PipelineKind::Area => hajek_mean(s, var, i).ok().map(|e| e.value),
            PipelineKind::Unit => greg_direct_or_hajek(s, var, i, &aux.theta_x[i]).ok().map(|g| g.estimate.value),
        })
        .collect()
}

fn synthetic_all(
    s: &WeightedSample,
    kind: PipelineKind,
    var: VarId,
    aux: &AreaAuxiliary,
    direct: &[Option<f64>],
    psi_s: &[f64],
) -> Result<(Vec<f64>, RegressionFit)> {
    let r = match kind {
        PipelineKind::Area => regression_synthetic(direct, psi_s, &aux.z)?,
        PipelineKind::Unit => greg_synthetic(s, var, &aux.theta_x)?,
    };
    Ok((r.values, r.fit))
}

/// Runs every estimator on one sample.
pub fn run_pipeline(pop: &Population, draw: &SampleDraw, aux: &AreaAuxiliary, spec: &PipelineSpec) -> Result<PipelineOutput> {
    let m = pop.domain_count();
    if aux.z.len() != m || aux.theta_x.len() != m {
        return Err(Error::invalid("auxiliary data must have one row per domain"));
    }
    let var = spec.var;
    let design = draw.design_weights();
    let full = WeightedSample::new(pop, draw, &design);
    let sizes = pop.domain_sizes();

    // direct estimates and their variances
    let mut direct = Vec::with_capacity(m);
    let mut direct_flags = Vec::with_capacity(m);
    let mut psi_d = Vec::with_capacity(m);
    for i in 0..m {
        let (value, flags, coef) = match spec.kind {
            PipelineKind::Area => match hajek_mean(&full, var, i) {
                Ok(e) => (Some(e.value), e.flags, None),
                Err(Error::EmptyDomain { .. }) => (None, Flags::EMPTY_DOMAIN, None),
                Err(e) => return Err(e),
            },
            PipelineKind::Unit => match greg_direct_or_hajek(&full, var, i, &aux.theta_x[i]) {
                Ok(g) => (Some(g.estimate.value), g.estimate.flags, Some(g.coef)),
                Err(Error::EmptyDomain { .. }) => (None, Flags::EMPTY_DOMAIN, None),
                Err(e) => return Err(e),
            },
        };
        let v = match (value, &coef) {
            (None, _) => None,
            (Some(_), None) => hajek_var_direct(pop, draw, var, i, spec.variance_mode).ok(),
            (Some(_), Some(c)) => greg_var_direct(pop, draw, var, i, c, spec.variance_mode).ok(),
        };
        direct.push(value);
        direct_flags.push(flags | v.map_or(Flags::empty(), |v| v.flags));
        psi_d.push(v.map(|v| v.value));
    }

    // smoothed variances; only domains with at least two sampled units count
    let fit_input: Vec<Option<f64>> = (0..m).map(|i| psi_d[i].filter(|_| draw.domains[i].len() >= 2)).collect();
    let gvf = fit_gvf(&fit_input, &sizes)?;
    let psi_s = gvf.smooth(&sizes);
    if let Some((domain, &value)) = psi_s.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::GvfOutOfRange { domain, value });
    }

    let (synthetic, synthetic_fit) = synthetic_all(&full, spec.kind, var, aux, &direct, &psi_s)?;

    // paired bootstrap of the direct and synthetic estimators; psi_s stays fixed
    let weights = ReplicateWeights::generate(draw, &spec.bootstrap)?;
    let stats = replicate_statistics(pop, draw, &weights, |s| {
        let d = direct_all(s, spec.kind, var, aux);
        let syn = match synthetic_all(s, spec.kind, var, aux, &d, &psi_s) {
            Ok((v, _)) => v.into_iter().map(Some).collect(),
            Err(_) => vec![None; m],
        };
        vec![d, syn]
    });
    let (boot_d, boot_s) = (&stats[0], &stats[1]);
    let sigma2_syn = boot_s.variance();

    let fh = fit_fh(&direct, &psi_s, &aux.z);
    let (fh_fit, fh_error, eblup, mse_eblup) = match fh {
        Ok(fit) => {
            let e = eblup_fh(&fit, &direct, &aux.z)?;
            let mse = mse_fh(&fit, &psi_s, &aux.z);
            (Some(fit), None, e.into_iter().map(Some).collect(), mse.into_iter().map(Some).collect())
        }
        Err(e) => (None, Some(e.to_string()), vec![None; m], vec![None; m]),
    };

    let mut domains = Vec::with_capacity(m);
    for i in 0..m {
        let gw_mse = match (direct[i], sigma2_syn[i].value) {
            (Some(d), Some(s2)) => {
                let diff = boot_s.combined_variance(boot_d, i, |s, d| Some(s? - d?));
                diff.value.map(|v| gw_mse_synthetic(synthetic[i], d, v, s2)).transpose()?
            }
            _ => None,
        };
        let (first, second) = match sigma2_syn[i].value {
            Some(s2) => {
                let first = first_step(i, direct[i], synthetic[i], psi_s[i], s2, |l1| {
                    boot_d.combined_variance(boot_s, i, |d, s| composite_value(d, s, &[l1]))
                })?;
                let second = match first.mse {
                    Some(_) => Some(second_step(&first, |l2| {
                        boot_d.combined_variance(boot_s, i, |d, s| composite_value(d, s, &[first.lambda, l2]))
                    })?),
                    None => None,
                };
                (Some(first), second)
            }
            None => (None, None),
        };
        domains.push(DomainResult {
            domain: i,
            n: draw.domains[i].len(),
            direct: direct[i],
            direct_flags: direct_flags[i],
            psi_d: psi_d[i],
            psi_s: psi_s[i],
            synthetic: synthetic[i],
            sigma2_syn: sigma2_syn[i],
            gw_mse,
            first,
            second,
            eblup: eblup[i],
            mse_eblup: mse_eblup[i],
        });
    }
    Ok(PipelineOutput { domains, gvf, synthetic_fit, fh: fh_fit, fh_error })
}

/// Applies successive compositions with the direct value: the synthetic
/// value is composed with weight `lambdas[0]`, the result with `lambdas[1]`,
/// and so on. A zero weight does not require a direct value.
fn composite_value(d: Option<f64>, s: Option<f64>, lambdas: &[f64]) -> Option<f64> {
    let mut acc = s?;
    for &l in lambdas {
        if l > 0.0 {
            acc = l * d? + (1.0 - l) * acc;
        }
    }
    Some(acc)
}
