//! Monte-Carlo evaluation: repeated sampling from a fixed population,
//! estimation on each sample, and accuracy tables per size class.

mod metrics;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::bootstrap::BootstrapSpec;
use crate::composition::optimal_lambda;
use crate::direct::VarianceMode;
use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, DomainResult, PipelineKind, PipelineSpec};
use crate::population::{
    load_population_csv, read_area_file, read_unit_records, synthesize_population, AreaAuxiliary, DomainFilter, GeneratorSpec, Population,
};
use crate::rng::{derive_seed, stream};
use crate::sampling::DesignSpec;

pub use metrics::{class_average, classify_domains, relative_table, rmse_ab, Cell, SizeClass, TableRow};
pub use report::{write_domain_results, write_report};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinPositive {
    pub variable: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum PopulationSource {
    /// Built from the `[generator]` section.
    #[default]
    Generate,
    Csv {
        units: PathBuf,
        /// Area covariates `domain_id,N_i,z_1..z_P`; domain means of `x` otherwise.
        #[serde(default)]
        area: Option<PathBuf>,
        /// Treat `units` as a weighted sample and expand it by rounded weights.
        #[serde(default)]
        synthesize: bool,
        #[serde(default)]
        min_positive: Option<MinPositive>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassSpec {
    /// Explicit `[small/medium, medium/large]` cut points; terciles otherwise.
    pub boundaries: Option<[f64; 2]>,
}

fn default_seed() -> u64 {
    1
}

fn default_replicates() -> usize {
    100
}

fn default_pipelines() -> Vec<PipelineKind> {
    vec![PipelineKind::Area]
}

fn default_design() -> DesignSpec {
    DesignSpec::PpsHouseholds { n_prime: 600 }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Number of Monte-Carlo samples `R`.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Study variables; all population variables when empty.
    #[serde(default)]
    pub variables: Vec<String>,
    #[serde(default = "default_pipelines")]
    pub pipelines: Vec<PipelineKind>,
    #[serde(default)]
    pub population: PopulationSource,
    #[serde(default)]
    pub generator: GeneratorSpec,
    #[serde(default = "default_design")]
    pub design: DesignSpec,
    /// The seed field is replaced by a per-sample derived seed.
    #[serde(default)]
    pub bootstrap: BootstrapSpec,
    #[serde(default)]
    pub classes: ClassSpec,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults parse")
    }
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let PopulationSource::Csv { units, area, .. } = &mut cfg.population {
            let base = path.parent().unwrap_or(Path::new("."));
            *units = base.join(&*units);
            if let Some(a) = area {
                *a = base.join(&*a);
            }
        }
        Ok(cfg)
    }

    /// Large-population preset: about 1.4 million persons in 30 domains and
    /// 3700 sampled households.
    pub fn apply_paper_scale(&mut self) {
        self.population = PopulationSource::Generate;
        self.generator = GeneratorSpec { seed: self.generator.seed, ..GeneratorSpec::paper_scale() };
        self.design = DesignSpec::PpsHouseholds { n_prime: 3700 };
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.pipelines.is_empty() {
            return Err(Error::Config("at least one pipeline is required".into()));
        }
        if let Some([a, b]) = self.classes.boundaries {
            if !(a < b) {
                return Err(Error::Config(format!("class boundaries {a} and {b} must increase")));
            }
        }
        if self.bootstrap.replicates < 2 {
            return Err(Error::Config("bootstrap replicates must be at least 2".into()));
        }
        Ok(())
    }
}

/// The study population with its area-level covariates.
#[derive(Debug, Clone)]
pub struct StudyPopulation {
    pub pop: Population,
    pub aux: AreaAuxiliary,
    /// Records dropped by synthesis, if any.
    pub dropped_records: usize,
    pub dropped_domains: Vec<u64>,
}

pub fn build_population(cfg: &SimulationConfig) -> Result<StudyPopulation> {
    let (pop, dropped_records, dropped_domains, area) = match &cfg.population {
        PopulationSource::Generate => (cfg.generator.generate()?, 0, Vec::new(), None),
        PopulationSource::Csv { units, area, synthesize, min_positive } => {
            if *synthesize {
                let file = read_unit_records(units)?;
                if !file.has_weight {
                    return Err(Error::Config(format!("{}: synthesis needs a weight column", units.display())));
                }
                let filter = DomainFilter { min_positive: min_positive.as_ref().map(|m| (m.variable.clone(), m.count)) };
                let (pop, rep) = synthesize_population(&file.records, &file.variables, &filter)?;
                (pop, rep.dropped_records, rep.dropped_domains, area.as_ref())
            } else {
                if min_positive.is_some() {
                    return Err(Error::Config("min_positive applies only with synthesize = true".into()));
                }
                (load_population_csv(units)?, 0, Vec::new(), area.as_ref())
            }
        }
    };
    let mut aux = pop.domain_x_means()?;
    if let Some(path) = area {
        aux.z = read_area_file(path)?.align(&pop)?;
    }
    Ok(StudyPopulation { pop, aux, dropped_records, dropped_domains })
}

/// Estimators tracked by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatorDef {
    pub id: &'static str,
    /// For MSE estimators, the index of the point estimator whose
    /// Monte-Carlo MSE is the target.
    pub target: Option<usize>,
}

pub const DIRECT: usize = 0;
pub const SYNTHETIC: usize = 1;
pub const COMPOSITE_FIRST: usize = 2;
pub const COMPOSITE_TWO_STEP: usize = 3;
pub const EBLUP_FH: usize = 4;
pub const GW_SYNTHETIC: usize = 5;
pub const MSEB_FIRST: usize = 6;
pub const MSEB_TWO_STEP: usize = 7;
pub const MSE_EBLUP_FH: usize = 8;

pub const ESTIMATORS: [EstimatorDef; 9] = [
    EstimatorDef { id: "direct", target: None },
    EstimatorDef { id: "synthetic", target: None },
    EstimatorDef { id: "composite_first", target: None },
    EstimatorDef { id: "composite_two_step", target: None },
    EstimatorDef { id: "eblup_fh", target: None },
    EstimatorDef { id: "gw_mse_synthetic", target: Some(SYNTHETIC) },
    EstimatorDef { id: "mseb_composite_first", target: Some(COMPOSITE_FIRST) },
    EstimatorDef { id: "mseb_composite_two_step", target: Some(COMPOSITE_TWO_STEP) },
    EstimatorDef { id: "mse_eblup_fh", target: Some(EBLUP_FH) },
];

/// Relative tables divide by this estimator (point) or by [`MSE_EBLUP_FH`] (MSE).
pub const BENCHMARK: usize = EBLUP_FH;

type CellValues = [Option<f64>; ESTIMATORS.len()];

fn cell_values(r: &DomainResult) -> CellValues {
    [
        r.direct,
        Some(r.synthetic),
        r.first.map(|c| c.theta_c),
        r.second.map(|c| c.theta_c),
        r.eblup.map(|e| e.value),
        r.gw_mse.map(|g| g.value),
        r.first.and_then(|c| c.mse),
        r.second.and_then(|c| c.mse),
        r.mse_eblup,
    ]
}

#[derive(Debug, Clone)]
struct StudySample {
    cells: Vec<CellValues>,
    lambda_first: Vec<Option<f64>>,
    weight_two_step: Vec<Option<f64>>,
    error: Option<String>,
    fh_failed: bool,
}

#[derive(Debug, Clone)]
struct SampleRecord {
    draw_seed: u64,
    bootstrap_seed: u64,
    n: Vec<usize>,
    studies: Vec<StudySample>,
}

/// Per-domain Monte-Carlo diagnostics of the direct/synthetic pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainDiagnostics {
    /// Variance of the direct estimator.
    pub psi: Option<f64>,
    pub var_synthetic: Option<f64>,
    pub bias_synthetic: Option<f64>,
    /// `E[(theta_d - theta)(theta_S - theta)]`.
    pub cross: Option<f64>,
    pub mse_direct: Option<f64>,
    pub mse_synthetic: Option<f64>,
    /// Optimal weight from the three moments above.
    pub lambda_opt: Option<f64>,
    pub mean_lambda_first: Option<f64>,
    pub mean_weight_two_step: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub variable: String,
    pub pipeline: PipelineKind,
    pub truth: Vec<f64>,
    /// `cells[e][i]` for estimator `e` of [`ESTIMATORS`] and domain `i`.
    pub cells: Vec<Vec<Cell>>,
    pub diagnostics: Vec<DomainDiagnostics>,
    pub pipeline_failures: usize,
    pub fh_failures: usize,
    /// First failure message, if any.
    pub first_error: Option<String>,
}

impl StudyReport {
    pub fn table(&self, classes: &[SizeClass]) -> Vec<TableRow> {
        let mut rows = Vec::new();
        for (e, def) in ESTIMATORS.iter().enumerate() {
            let bench = if def.target.is_some() { MSE_EBLUP_FH } else { BENCHMARK };
            rows.extend(relative_table(def.id, &self.cells[e], &self.cells[bench], classes));
        }
        rows
    }

    pub fn cell(&self, estimator: usize, domain: usize) -> &Cell {
        &self.cells[estimator][domain]
    }
}

#[derive(Debug, Clone)]
pub struct SampleMeta {
    pub draw_seed: u64,
    pub bootstrap_seed: u64,
    pub failed_studies: usize,
}

#[derive(Debug, Clone)]
pub struct AccuracyReport {
    pub replicates: usize,
    pub seed: u64,
    pub domain_labels: Vec<u64>,
    pub domain_sizes: Vec<usize>,
    pub nbar: Vec<f64>,
    pub classes: Vec<SizeClass>,
    pub studies: Vec<StudyReport>,
    pub samples: Vec<SampleMeta>,
}

impl AccuracyReport {
    pub fn study(&self, variable: &str, pipeline: PipelineKind) -> Option<&StudyReport> {
        self.studies.iter().find(|s| s.variable == variable && s.pipeline == pipeline)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn minimum(v: &[f64]) -> Option<f64> {
    v.iter().copied().reduce(f64::min)
}

/// Runs `cfg.replicates` samples on `study`. `threads = None` uses the
/// global pool; results do not depend on the thread count.
pub fn run_monte_carlo(cfg: &SimulationConfig, study: &StudyPopulation, threads: Option<usize>) -> Result<AccuracyReport> {
    cfg.validate()?;
    let pop = &study.pop;
    let variables: Vec<String> = if cfg.variables.is_empty() { pop.variables().to_vec() } else { cfg.variables.clone() };
    let var_ids = variables.iter().map(|v| pop.variable(v)).collect::<Result<Vec<_>>>()?;
    let studies: Vec<(usize, PipelineKind)> = (0..variables.len()).flat_map(|v| cfg.pipelines.iter().map(move |&p| (v, p))).collect();
    let m = pop.domain_count();

    let one = |r: usize| -> Result<SampleRecord> {
        let draw_seed = derive_seed(cfg.seed, stream::DRAW, r as u64);
        let bootstrap_seed = derive_seed(cfg.seed, stream::BOOTSTRAP, r as u64);
        let draw = cfg.design.draw(pop, draw_seed)?;
        let samples = studies
            .iter()
            .map(|&(v, kind)| {
                let spec = PipelineSpec {
                    kind,
                    var: var_ids[v],
                    bootstrap: BootstrapSpec { seed: bootstrap_seed, ..cfg.bootstrap },
                    variance_mode: VarianceMode::Approx,
                };
                match run_pipeline(pop, &draw, &study.aux, &spec) {
                    Ok(out) => StudySample {
                        cells: out.domains.iter().map(cell_values).collect(),
                        lambda_first: out.domains.iter().map(|d| d.first.map(|c| c.lambda)).collect(),
                        weight_two_step: out.domains.iter().map(|d| d.second.map(|c| c.direct_weight)).collect(),
                        error: None,
                        fh_failed: out.fh_error.is_some(),
                    },
                    Err(e) => StudySample {
                        cells: vec![[None; ESTIMATORS.len()]; m],
                        lambda_first: vec![None; m],
                        weight_two_step: vec![None; m],
                        error: Some(e.to_string()),
                        fh_failed: false,
                    },
                }
            })
            .collect();
        Ok(SampleRecord { draw_seed, bootstrap_seed, n: draw.domain_sizes(), studies: samples })
    };
    let run = || (0..cfg.replicates).into_par_iter().map(one).collect::<Result<Vec<_>>>();
    let records = match threads {
        Some(t) => {
            rayon::ThreadPoolBuilder::new().num_threads(t).build().map_err(|e| Error::Config(format!("thread pool: {e}")))?.install(run)?
        }
        None => run()?,
    };

    let r_count = records.len() as f64;
    let nbar: Vec<f64> = (0..m).map(|i| records.iter().map(|s| s.n[i] as f64).sum::<f64>() / r_count).collect();
    let classes = classify_domains(&nbar, pop.domain_labels(), cfg.classes.boundaries);

    let reports = studies
        .iter()
        .enumerate()
        .map(|(s, &(v, kind))| {
            let truth = pop.true_domain_means(var_ids[v])?;
            Ok(aggregate_study(&records, s, &variables[v], kind, truth))
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = records
        .iter()
        .map(|r| SampleMeta {
            draw_seed: r.draw_seed,
            bootstrap_seed: r.bootstrap_seed,
            failed_studies: r.studies.iter().filter(|s| s.error.is_some()).count(),
        })
        .collect();
    Ok(AccuracyReport {
        replicates: cfg.replicates,
        seed: cfg.seed,
        domain_labels: pop.domain_labels().to_vec(),
        domain_sizes: pop.domain_sizes(),
        nbar,
        classes,
        studies: reports,
        samples,
    })
}

fn aggregate_study(records: &[SampleRecord], s: usize, variable: &str, pipeline: PipelineKind, truth: Vec<f64>) -> StudyReport {
    let m = truth.len();
    let r_total = records.len();
    let values = |e: usize, i: usize| -> Vec<f64> { records.iter().filter_map(|r| r.studies[s].cells[i][e]).collect() };

    let mut cells: Vec<Vec<Cell>> = vec![Vec::with_capacity(m); ESTIMATORS.len()];
    // point estimators first; their Monte-Carlo MSE is the target of the MSE estimators
    for e in (0..ESTIMATORS.len()).filter(|&e| ESTIMATORS[e].target.is_none()) {
        for i in 0..m {
            let v = values(e, i);
            let acc = rmse_ab(&v, truth[i]);
            cells[e].push(Cell {
                truth: truth[i],
                mean: mean(&v),
                min: minimum(&v),
                rmse: acc.map(|a| a.0),
                ab: acc.map(|a| a.1),
                valid: v.len(),
                failed: r_total - v.len(),
            });
        }
    }
    for (e, def) in ESTIMATORS.iter().enumerate() {
        let Some(target) = def.target else { continue };
        for i in 0..m {
            let v = values(e, i);
            let target_mse = cells[target][i].rmse.map(|r| r * r);
            let acc = target_mse.and_then(|t| rmse_ab(&v, t));
            cells[e].push(Cell {
                truth: target_mse.unwrap_or(f64::NAN),
                mean: mean(&v),
                min: minimum(&v),
                rmse: acc.map(|a| a.0),
                ab: acc.map(|a| a.1),
                valid: v.len(),
                failed: r_total - v.len(),
            });
        }
    }

    let diagnostics = (0..m)
        .map(|i| {
            let pairs: Vec<(f64, f64)> = records
                .iter()
                .filter_map(|r| {
                    let c = &r.studies[s].cells[i];
                    Some((c[DIRECT]?, c[SYNTHETIC]?))
                })
                .collect();
            let d: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let syn: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let t = truth[i];
            let centered_var = |x: &[f64]| mean(x).and_then(|mu| mean(&x.iter().map(|v| (v - mu).powi(2)).collect::<Vec<_>>()));
            let mse = |x: &[f64]| mean(&x.iter().map(|v| (v - t).powi(2)).collect::<Vec<_>>());
            let cross = mean(&pairs.iter().map(|(a, b)| (a - t) * (b - t)).collect::<Vec<_>>());
            let (mse_d, mse_s) = (mse(&d), mse(&syn));
            let lambda_opt = match (mse_d, mse_s, cross) {
                (Some(a), Some(b), Some(c)) => optimal_lambda(a, b, c).ok().map(|w| w.value),
                _ => None,
            };
            let lf: Vec<f64> = records.iter().filter_map(|r| r.studies[s].lambda_first[i]).collect();
            let lw: Vec<f64> = records.iter().filter_map(|r| r.studies[s].weight_two_step[i]).collect();
            DomainDiagnostics {
                psi: centered_var(&d),
                var_synthetic: centered_var(&syn),
                bias_synthetic: mean(&syn).map(|mu| mu - t),
                cross,
                mse_direct: mse_d,
                mse_synthetic: mse_s,
                lambda_opt,
                mean_lambda_first: mean(&lf),
                mean_weight_two_step: mean(&lw),
            }
        })
        .collect();

    StudyReport {
        variable: variable.to_string(),
        pipeline,
        truth,
        cells,
        diagnostics,
        pipeline_failures: records.iter().filter(|r| r.studies[s].error.is_some()).count(),
        fh_failures: records.iter().filter(|r| r.studies[s].fh_failed).count(),
        first_error: records.iter().find_map(|r| r.studies[s].error.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SimulationConfig {
        SimulationConfig::from_toml(
            r#"
            seed = 3
            replicates = 8
            pipelines = ["area", "unit"]
            [generator]
            units = 3000
            domains = 6
            [design]
            kind = "pps_households"
            n_prime = 150
            [bootstrap]
            replicates = 20
            "#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_and_errors() {
        let cfg = SimulationConfig::default();
        assert_eq!(cfg.replicates, 100);
        assert_eq!(cfg.bootstrap.replicates, 200);
        assert_eq!(cfg.population, PopulationSource::Generate);
        assert!(SimulationConfig::from_toml("replicates = 0").is_err());
        assert!(SimulationConfig::from_toml("bogus = 1").is_err());
        assert!(SimulationConfig::from_toml("[classes]\nboundaries = [5.0, 2.0]").is_err());
        let c = SimulationConfig::from_toml("[population]\nsource = \"csv\"\nunits = \"p.csv\"").unwrap();
        assert!(matches!(c.population, PopulationSource::Csv { synthesize: false, .. }));
    }

    #[test]
    fn monte_carlo_report_is_consistent() {
        let cfg = small_config();
        let study = build_population(&cfg).unwrap();
        let report = run_monte_carlo(&cfg, &study, Some(2)).unwrap();
        assert_eq!(report.studies.len(), 2);
        assert_eq!(report.samples.len(), 8);
        for s in &report.studies {
            for cells in &s.cells {
                for c in cells {
                    if let (Some(r), Some(a)) = (c.rmse, c.ab) {
                        assert!(r + 1e-12 >= a && a >= 0.0);
                    }
                }
            }
            let rows = s.table(&report.classes);
            assert!(rows.iter().filter(|r| r.estimator == "eblup_fh" && r.metric == "rel_rmse").all(|r| r.value == Some(1.0)));
        }
        let again = run_monte_carlo(&cfg, &study, Some(1)).unwrap();
        assert_eq!(format!("{:?}", report.studies), format!("{:?}", again.studies));
    }

    #[test]
    fn unknown_variable_is_rejected() {
        let mut cfg = small_config();
        cfg.variables = vec!["nope".into()];
        let study = build_population(&cfg).unwrap();
        assert!(matches!(run_monte_carlo(&cfg, &study, None), Err(Error::UnknownVariable(_))));
    }
}
