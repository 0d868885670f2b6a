use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use medbounds::calibration::Calibrator;
use medbounds::config::RunConfig;
use medbounds::dataset::{load_sample, write_sample, AnalysisSample};
use medbounds::error::ErrorClass;
use medbounds::exec::{self, Execution};
use medbounds::oracle::SyntheticDgp;
use medbounds::pipeline::{run_analysis, PipelineOptions};
use medbounds::propensity::estimate_propensities;
use medbounds::report::{self, Report, SampleSummary};
use medbounds::{Error, Result};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "medbounds", version, about = "Bounds on natural direct and indirect effects under relaxed weighting assumptions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: machine parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate bounds for every grid cell and write the report.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Skip subsampling confidence intervals.
        #[arg(long)]
        no_ci: bool,
    },
    /// Rank covariates and mediators of each propensity model by deviance drop.
    Rank {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Predictors listed per model and block.
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
    /// Write a synthetic data set, its true values and a matching config.
    Synth {
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        covariates: usize,
        #[arg(long, default_value_t = 3)]
        mediators: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Full generator specification as JSON; replaces the size flags.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Load and check the configuration and data without estimating anything.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Config => "config",
        ErrorClass::Data => "data",
        ErrorClass::Numerical => "numerical",
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if overrides.threads.is_some() {
        cfg.threads = overrides.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execution(threads: Option<usize>) -> Execution {
    if threads == Some(1) {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn load_data(cfg: &RunConfig) -> Result<AnalysisSample> {
    Ok(load_sample(&cfg.data, &cfg.roles, &cfg.load)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn run(config: &Path, overrides: &Overrides, no_ci: bool) -> Result<()> {
    let mut cfg = load_config(config, overrides)?;
    if no_ci {
        cfg.subsampling = None;
    }
    let sample = load_data(&cfg)?;
    let mut opts = PipelineOptions::from_config(&cfg);
    opts.execution = execution(cfg.threads);
    let plan = cfg.subsampling.clone().map(|mut p| {
        p.rng_seed ^= cfg.seed;
        p
    });
    let cells = cfg.grid.cells();
    let analysis = exec::install(cfg.threads, || run_analysis(&sample, &cells, &opts, plan.as_ref()))?;
    let report = Report::build(&cfg, &sample, &analysis, plan.as_ref());
    for w in &report.warnings {
        log::warn!("{w}");
    }
    for path in report::write_artifacts(&cfg.output, &report)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn rank(config: &Path, overrides: &Overrides, top: usize) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let sample = load_data(&cfg)?;
    let fit = cfg.fit_controls();
    let threads = cfg.threads;
    let rep = exec::install(threads, || -> Result<_> {
        let scores = estimate_propensities(&sample, cfg.link, &fit)?;
        let cal = Calibrator::new(&sample, &scores, &cfg.grouping, fit.clone(), execution(threads));
        report::rank_report(&cal, cfg.link, top)
    })?;
    print!("{}", report::render_rank(&rep));
    std::fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", cfg.output.dir.display())))?;
    let path = cfg.output.dir.join("rank.json");
    write_json(&path, &rep)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn synth(out: &Path, dgp: SyntheticDgp) -> Result<()> {
    let generated = dgp.generate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    let data = out.join("synthetic.csv");
    write_sample(&generated.sample, &data, ',')?;
    let truth = out.join("truth.json");
    write_json(
        &truth,
        &json!({
            "mean_potential_outcomes": generated.truth,
            "effects": generated.true_effects(),
            "design": dgp,
        }),
    )?;
    let mut cfg = RunConfig::new("synthetic.csv", generated.sample.roles().clone());
    cfg.seed = dgp.seed;
    let config = out.join("config.json");
    write_json(&config, &cfg)?;
    for p in [data, truth, config] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn validate(config: &Path, overrides: &Overrides) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let sample = load_data(&cfg)?;
    let summary = SampleSummary::of(&sample);
    let cells = cfg.grid.cells();
    let out = json!({
        "status": "ok",
        "data": cfg.data.display().to_string(),
        "sample": summary,
        "grid_cells": cells.len(),
        "subsampling": cfg.subsampling,
    });
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| Error::Config(e.to_string()))?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, overrides, no_ci } => run(&config, &overrides, no_ci),
        Command::Rank { config, overrides, top } => rank(&config, &overrides, top),
        Command::Synth {
            out,
            n,
            covariates,
            mediators,
            seed,
            design,
        } => {
            let dgp = match design {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid design: {e}")))?
                }
                None => SyntheticDgp::random(n, covariates, mediators, seed),
            };
            synth(&out, dgp)
        }
        Command::Validate { config, overrides } => validate(&config, &overrides),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            let record = json!({
                "error": {
                    "class": class_name(class),
                    "kind": e.kind(),
                    "message": e.to_string(),
                    "exit_code": exit_code(class),
                }
            });
            eprintln!("{record}");
            ExitCode::from(exit_code(class))
        }
    }
}
