//! CSV and manifest output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AccuracyReport, PopulationSource, SimulationConfig, StudyPopulation, ESTIMATORS};
use crate::error::{Error, Result};
use crate::pipeline::PipelineOutput;
use crate::population::Population;
use crate::sampling::DesignSpec;

fn num(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v}"),
        _ => "NA".to_string(),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes the tables, per-domain results, diagnostics, per-sample seeds and
/// a manifest into `out`.
pub fn write_report(report: &AccuracyReport, cfg: &SimulationConfig, study: &StudyPopulation, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for s in &report.studies {
        let stem = format!("{}_{}", s.variable, s.pipeline.name());

        let mut w = csv_writer(&out.join(format!("table_{stem}.csv")))?;
        w.write_record(["estimator", "class", "metric", "value"])?;
        for row in s.table(&report.classes) {
            w.write_record([row.estimator.as_str(), row.class, row.metric, &num(row.value)])?;
        }
        w.flush().map_err(|e| Error::io(out, e))?;

        let mut w = csv_writer(&out.join(format!("domains_{stem}.csv")))?;
        w.write_record(["estimator", "domain_id", "class", "nbar", "truth", "mean", "rmse", "ab", "valid", "failed"])?;
        for (e, def) in ESTIMATORS.iter().enumerate() {
            for (i, c) in s.cells[e].iter().enumerate() {
                w.write_record([
                    def.id.to_string(),
                    report.domain_labels[i].to_string(),
                    report.classes[i].to_string(),
                    num(Some(report.nbar[i])),
                    num(Some(c.truth)),
                    num(c.mean),
                    num(c.rmse),
                    num(c.ab),
                    c.valid.to_string(),
                    c.failed.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(out, e))?;

        let mut w = csv_writer(&out.join(format!("diagnostics_{stem}.csv")))?;
        w.write_record([
            "domain_id",
            "class",
            "N_i",
            "nbar",
            "theta",
            "psi_mc",
            "var_synthetic_mc",
            "bias_synthetic_mc",
            "cross_mc",
            "mse_direct_mc",
            "mse_synthetic_mc",
            "lambda_opt",
            "mean_lambda_first",
            "mean_weight_two_step",
        ])?;
        for (i, d) in s.diagnostics.iter().enumerate() {
            w.write_record([
                report.domain_labels[i].to_string(),
                report.classes[i].to_string(),
                report.domain_sizes[i].to_string(),
                num(Some(report.nbar[i])),
                num(Some(s.truth[i])),
                num(d.psi),
                num(d.var_synthetic),
                num(d.bias_synthetic),
                num(d.cross),
                num(d.mse_direct),
                num(d.mse_synthetic),
                num(d.lambda_opt),
                num(d.mean_lambda_first),
                num(d.mean_weight_two_step),
            ])?;
        }
        w.flush().map_err(|e| Error::io(out, e))?;
    }

    let mut w = csv_writer(&out.join("samples.csv"))?;
    w.write_record(["replicate", "draw_seed", "bootstrap_seed", "failed_studies"])?;
    for (r, s) in report.samples.iter().enumerate() {
        w.write_record([r.to_string(), s.draw_seed.to_string(), s.bootstrap_seed.to_string(), s.failed_studies.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;

    let path = out.join("manifest.txt");
    fs::write(&path, manifest(report, cfg, study)).map_err(|e| Error::io(&path, e))
}

fn manifest(report: &AccuracyReport, cfg: &SimulationConfig, study: &StudyPopulation) -> String {
    let mut m = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(m, "{k} = {v}");
    };
    kv("crate_version", env!("CARGO_PKG_VERSION").to_string());
    kv("seed", cfg.seed.to_string());
    kv("replicates", cfg.replicates.to_string());
    match &cfg.population {
        PopulationSource::Generate => {
            kv("population.source", "generate".into());
            kv("generator.seed", cfg.generator.seed.to_string());
            kv("generator.units", cfg.generator.units.to_string());
            kv("generator.domains", cfg.generator.domains.to_string());
        }
        PopulationSource::Csv { units, area, synthesize, min_positive } => {
            kv("population.source", "csv".into());
            kv("population.units", units.display().to_string());
            kv("population.area", area.as_ref().map_or("none".into(), |a| a.display().to_string()));
            kv("population.synthesize", synthesize.to_string());
            if let Some(mp) = min_positive {
                kv("population.min_positive", format!("{} >= {}", mp.variable, mp.count));
            }
        }
    }
    let pop = &study.pop;
    kv("population.size", pop.size().to_string());
    kv("population.households", pop.households().len().to_string());
    kv("population.domains", pop.domain_count().to_string());
    kv("population.dropped_records", study.dropped_records.to_string());
    kv("population.dropped_domains", format!("{:?}", study.dropped_domains));
    kv(
        "design",
        match cfg.design {
            DesignSpec::PpsHouseholds { n_prime } => format!("pps_households n_prime={n_prime}"),
            DesignSpec::Srswor { n } => format!("srswor n={n}"),
        },
    );
    kv("bootstrap.replicates", cfg.bootstrap.replicates.to_string());
    kv("bootstrap.resample_size", cfg.bootstrap.resample_size.map_or("n_prime-1".into(), |m| m.to_string()));
    kv("bootstrap.fpc", cfg.bootstrap.fpc.to_string());
    kv("classes.boundaries", cfg.classes.boundaries.map_or("terciles".into(), |[a, b]| format!("{a},{b}")));
    for s in &report.studies {
        let key = format!("study.{}.{}", s.variable, s.pipeline.name());
        kv(&format!("{key}.pipeline_failures"), s.pipeline_failures.to_string());
        kv(&format!("{key}.fh_failures"), s.fh_failures.to_string());
        if let Some(e) = &s.first_error {
            kv(&format!("{key}.first_error"), e.clone());
        }
    }
    m
}

/// One row per domain with every estimate of a single-sample run.
pub fn write_domain_results<W: Write>(out: W, pop: &Population, result: &PipelineOutput) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "domain_id",
        "n",
        "direct",
        "psi_d",
        "psi_s",
        "synthetic",
        "sigma2_synthetic",
        "gw_mse_synthetic",
        "lambda_first",
        "composite_first",
        "mseb_composite_first",
        "lambda_two_step",
        "composite_two_step",
        "mseb_composite_two_step",
        "eblup_fh",
        "mse_eblup_fh",
        "flags",
    ])?;
    for r in &result.domains {
        let mut flags = r.direct_flags | r.sigma2_syn.flags;
        for c in [r.first, r.second].into_iter().flatten() {
            flags |= c.flags;
        }
        if let Some(e) = r.eblup {
            flags |= e.flags;
        }
        w.write_record([
            pop.domain_labels()[r.domain].to_string(),
            r.n.to_string(),
            num(r.direct),
            num(r.psi_d),
            num(Some(r.psi_s)),
            num(Some(r.synthetic)),
            num(r.sigma2_syn.value),
            num(r.gw_mse.map(|g| g.value)),
            num(r.first.map(|c| c.lambda)),
            num(r.first.map(|c| c.theta_c)),
            num(r.first.and_then(|c| c.mse)),
            num(r.second.map(|c| c.lambda)),
            num(r.second.map(|c| c.theta_c)),
            num(r.second.and_then(|c| c.mse)),
            num(r.eblup.map(|e| e.value)),
            num(r.mse_eblup),
            flags.label(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io { path: "<output>".into(), source: e })?;
    Ok(())
}
