use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use composite_sae::bootstrap::BootstrapSpec;
use composite_sae::direct::VarianceMode;
use composite_sae::gvf::fit_gvf;
use composite_sae::harness::{build_population, run_monte_carlo, write_domain_results, write_report, SimulationConfig};
use composite_sae::pipeline::{run_pipeline, PipelineKind, PipelineSpec};
use composite_sae::population::{load_population_csv, open_csv, read_area_file, write_population_csv};
use composite_sae::sampling::DesignSpec;
use composite_sae::{Error, Result};

#[derive(Parser)]
#[command(name = "composite-sae", version, about = "Design-based composite small area estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Design {
    Pps,
    Srswor,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo evaluation driven by a TOML config.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long = "bootstrap-B")]
        bootstrap_b: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        /// Replace population and design by the large preset.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Draws one sample from a population file and writes every estimate per domain.
    Estimate {
        population: PathBuf,
        #[arg(long, value_enum, default_value = "pps")]
        design: Design,
        /// Sampled households (pps).
        #[arg(long)]
        n_prime: Option<usize>,
        /// Sampled units (srswor).
        #[arg(long)]
        n: Option<usize>,
        /// Study variable; the first one by default.
        #[arg(long)]
        var: Option<String>,
        #[arg(long, default_value = "area")]
        pipeline: PipelineKind,
        /// Area covariates `domain_id,N_i,z_1..z_P`.
        #[arg(long)]
        area: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "bootstrap-B", default_value_t = 200)]
        bootstrap_b: usize,
        /// Output CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fits the log-log variance function to `domain_id,N_i,psi` rows.
    GvfFit {
        variances: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the population generated from a config's `[generator]` section.
    Generate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(io::BufWriter::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, replicates, bootstrap_b, out, threads, paper_scale } => {
            let mut cfg = SimulationConfig::load(&config)?;
            if paper_scale {
                cfg.apply_paper_scale();
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(b) = bootstrap_b {
                cfg.bootstrap.replicates = b;
            }
            cfg.validate()?;
            let study = build_population(&cfg)?;
            let report = run_monte_carlo(&cfg, &study, threads)?;
            write_report(&report, &cfg, &study, &out)?;
            eprintln!("wrote {} studies to {}", report.studies.len(), out.display());
            Ok(())
        }
        Command::Estimate { population, design, n_prime, n, var, pipeline, area, seed, bootstrap_b, out } => {
            let pop = load_population_csv(&population)?;
            let mut aux = pop.domain_x_means()?;
            if let Some(a) = area {
                aux.z = read_area_file(&a)?.align(&pop)?;
            }
            let design = match (design, n_prime, n) {
                (Design::Pps, Some(k), None) => DesignSpec::PpsHouseholds { n_prime: k },
                (Design::Srswor, None, Some(k)) => DesignSpec::Srswor { n: k },
                (Design::Pps, _, _) => return Err(Error::Config("pps design needs --n-prime (and no --n)".into())),
                (Design::Srswor, _, _) => return Err(Error::Config("srswor design needs --n (and no --n-prime)".into())),
            };
            let var = match var {
                Some(v) => pop.variable(&v)?,
                None => composite_sae::population::VarId(0),
            };
            let draw = design.draw(&pop, seed)?;
            let spec = PipelineSpec {
                kind: pipeline,
                var,
                bootstrap: BootstrapSpec { replicates: bootstrap_b, seed, ..Default::default() },
                variance_mode: VarianceMode::Approx,
            };
            let result = run_pipeline(&pop, &draw, &aux, &spec)?;
            if let Some(e) = &result.fh_error {
                eprintln!("warning: Fay-Herriot fit failed: {e}");
            }
            write_domain_results(open_out(out.as_deref())?, &pop, &result)
        }
        Command::GvfFit { variances, out } => {
            let mut reader = open_csv(&variances)?;
            let headers = reader.headers()?.clone();
            let col = |name: &str| {
                headers
                    .iter()
                    .position(|h| h.trim() == name)
                    .ok_or_else(|| Error::invalid(format!("{}: missing column {name}", variances.display())))
            };
            let (size_col, psi_col) = (col("N_i")?, col("psi")?);
            let mut sizes = Vec::new();
            let mut psi = Vec::new();
            for row in reader.records() {
                let row = row?;
                let parse = |j: usize| row[j].trim().to_string();
                sizes.push(parse(size_col).parse::<usize>().map_err(|e| Error::invalid(format!("N_i '{}': {e}", parse(size_col))))?);
                let p = parse(psi_col);
                psi.push(if p == "NA" || p.is_empty() {
                    None
                } else {
                    Some(p.parse::<f64>().map_err(|e| Error::invalid(format!("psi '{p}': {e}")))?)
                });
            }
            let model = fit_gvf(&psi, &sizes)?;
            let mut w = csv::Writer::from_writer(open_out(out.as_deref())?);
            w.write_record(["K", "gamma", "r2", "n_fit", "flags"])?;
            w.write_record([
                model.k.to_string(),
                model.gamma.to_string(),
                model.r2.to_string(),
                model.n_fit.to_string(),
                model.flags.label(),
            ])?;
            w.flush().map_err(|e| Error::io(Path::new("<output>"), e))
        }
        Command::Generate { config, seed, out } => {
            let mut cfg = SimulationConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.generator.seed = s;
            }
            let pop = cfg.generator.generate()?;
            write_population_csv(&pop, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
