//! Command-line driver: resolves a run configuration from flags and an
//! optional JSON file, runs the experiments and writes the reports.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::WeightConfig;
use crate::report::{verdict_table, write_reports, RunReport};
use crate::varieties::ConeVariety;
use crate::verify::{run_experiment, ExperimentConfig, ExperimentReport, EXPERIMENTS};

/// Exit code when every experiment passes.
pub const EXIT_PASS: i32 = 0;
/// Exit code when at least one experiment fails or errors.
pub const EXIT_FAIL: i32 = 1;
/// Exit code for an invalid configuration.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "koppelman", version, about = "Runs integral-estimate and homotopy-formula experiments on affine cones")]
struct Args {
    /// Catalog name (hyperplane, a1, fermat2..fermat4, ci22) or path to a variety JSON file.
    #[arg(long)]
    variety: Option<String>,
    /// Experiment to run; repeat for several. Defaults to all registered experiments.
    #[arg(long = "experiment")]
    experiments: Vec<String>,
    /// Monte Carlo samples per integral (at least 1000).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and tables.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplier on every tolerance.
    #[arg(long = "tolerance-scale")]
    tolerance_scale: Option<f64>,
    /// JSON file with any of the run configuration fields; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// A run as read from `--config`; every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub variety: Option<String>,
    pub experiments: Option<Vec<String>>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub tolerance_scale: Option<f64>,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    pub omega_prime: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variety: String,
    pub experiments: Vec<String>,
    pub out_dir: PathBuf,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    fn resolve(args: Args) -> Result<Self> {
        let file = match &args.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str::<RunConfigFile>(&text)?
            }
            None => RunConfigFile::default(),
        };
        let defaults = ExperimentConfig::default();
        let weight = WeightConfig {
            rho1: file.rho1.unwrap_or(defaults.weight.rho1),
            rho2: file.rho2.unwrap_or(defaults.weight.rho2),
            omega_prime: file.omega_prime.unwrap_or(defaults.weight.omega_prime),
        };
        let experiments = if !args.experiments.is_empty() {
            args.experiments
        } else {
            file.experiments.unwrap_or_else(|| EXPERIMENTS.iter().map(|s| s.to_string()).collect())
        };
        if let Some(bad) = experiments.iter().find(|e| !EXPERIMENTS.contains(&e.as_str())) {
            return Err(Error::UnknownExperiment(bad.clone()));
        }
        let cfg = RunConfig {
            variety: args.variety.or(file.variety).unwrap_or_else(|| "a1".into()),
            experiments,
            out_dir: args.out.or(file.out_dir).unwrap_or_else(|| PathBuf::from("koppelman-out")),
            experiment: ExperimentConfig {
                samples: args.samples.or(file.samples).unwrap_or(defaults.samples),
                seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
                weight,
                tolerance_scale: args.tolerance_scale.or(file.tolerance_scale).unwrap_or(defaults.tolerance_scale),
            },
        };
        cfg.experiment.validate()?;
        Ok(cfg)
    }
}

/// Catalog name, or a path to a JSON variety description.
pub fn load_variety(spec: &str) -> Result<ConeVariety> {
    let path = Path::new(spec);
    if spec.ends_with(".json") || path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{spec}: {e}")))?;
        ConeVariety::from_json(&text)
    } else {
        ConeVariety::catalog(spec)
    }
}

fn error_report(name: &str, v: &ConeVariety, cfg: &ExperimentConfig, e: &Error) -> ExperimentReport {
    ExperimentReport {
        name: name.into(),
        variety: v.name().into(),
        seed: cfg.seed,
        samples: cfg.samples,
        parameters: serde_json::Value::Null,
        rows: vec![crate::verify::ReportRow {
            param: "error".into(),
            predicted: None,
            fitted: 0.0,
            ci_lo: 0.0,
            ci_hi: 0.0,
            criterion: e.to_string(),
            pass: false,
            gated: true,
        }],
        tables: Vec::new(),
        notes: vec![e.to_string()],
        verdict: false,
        runtime_s: 0.0,
    }
}

/// Runs the configured experiments and writes the reports.
pub fn execute(cfg: &RunConfig) -> Result<RunReport> {
    let v = load_variety(&cfg.variety)?;
    let mut reports = Vec::with_capacity(cfg.experiments.len());
    for name in &cfg.experiments {
        log::info!("running {name} on {}", v.name());
        let rep = match run_experiment(name, &v, &cfg.experiment) {
            Ok(r) => r,
            Err(e) => {
                log::error!("{name} failed: {e}");
                error_report(name, &v, &cfg.experiment, &e)
            }
        };
        log::info!("{name}: {} in {:.1}s", if rep.verdict { "pass" } else { "fail" }, rep.runtime_s);
        reports.push(rep);
    }
    let run = RunReport::new(v.name(), cfg.experiment.clone(), reports);
    write_reports(&run, &cfg.out_dir)?;
    Ok(run)
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match RunConfig::resolve(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return EXIT_CONFIG;
        }
    };
    // variety problems are configuration errors, not experiment failures
    if let Err(e) = load_variety(&cfg.variety) {
        eprintln!("configuration error: {e}");
        return EXIT_CONFIG;
    }
    match execute(&cfg) {
        Ok(run) => {
            print!("{}", verdict_table(&run));
            if run.verdict {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAIL
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Args {
        Args::try_parse_from(std::iter::once("koppelman").chain(list.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"samples": 5000, "seed": 9, "rho2": 1.5, "experiments": ["v_bounds"]}"#).unwrap();
        let cfg = RunConfig::resolve(args(&["--config", p.to_str().unwrap(), "--seed", "4"])).unwrap();
        assert_eq!(cfg.experiment.samples, 5000);
        assert_eq!(cfg.experiment.seed, 4);
        assert_eq!(cfg.experiment.weight.rho2, 1.5);
        assert_eq!(cfg.experiments, vec!["v_bounds".to_string()]);
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        assert!(matches!(RunConfig::resolve(args(&["--experiment", "nope"])), Err(Error::UnknownExperiment(_))));
        assert!(RunConfig::resolve(args(&["--samples", "10"])).is_err());
        assert!(RunConfig::resolve(args(&["--tolerance-scale", "0"])).is_err());
        assert_eq!(run(["koppelman", "--variety", "fermat9"]), EXIT_CONFIG);
        assert_eq!(run(["koppelman", "--bogus"]), EXIT_CONFIG);
    }

    #[test]
    fn defaults_run_everything() {
        let cfg = RunConfig::resolve(args(&[])).unwrap();
        assert_eq!(cfg.experiments.len(), EXPERIMENTS.len());
        assert_eq!(cfg.variety, "a1");
    }
}
