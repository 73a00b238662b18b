//! Command-line front end: scenario and design ingestion, subcommand
//! dispatch, and artifact emission. Every artifact embeds the resolved
//! configuration and seed so a run can be reproduced bit-exactly.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use seqtrial::boundary_engine::{BoundaryFile, Sidedness, SpendingFunction};
use seqtrial::repro;
use seqtrial::resample::{
    fit_hybrid_model, hybrid_confidence_set, HybridConfig, OrderingScheme, PhatMode,
};
use seqtrial::survival_core::TrialData;
use seqtrial::trial_sim::{
    operating_characteristics, run_test, sample_size_search, Scenario, TestSpec,
};
use seqtrial::Error;

#[derive(Parser)]
#[command(name = "seqtrial", version, about = "Time-sequential trial design and analysis engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Path to the JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master random seed; required by every stochastic subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads; defaults to the available cores. Results do not
    /// depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve group-sequential thresholds from an error-spending function.
    Boundary,
    /// Estimate operating characteristics, optionally searching for the
    /// smallest adequate sample size.
    Design,
    /// Simulate a design and write per-replicate outcomes.
    Simulate,
    /// Hybrid-resampling confidence interval for the Cox parameter from an
    /// observed trial.
    Analyze,
    /// Reproduction harnesses for the published tables.
    Reproduce {
        #[command(subcommand)]
        which: ReproCmd,
    },
}

#[derive(Subcommand)]
enum ReproCmd {
    /// Bootstrap tail probabilities of the two-sample Wilcoxon statistic.
    Table1(Table1Args),
    /// Coverage of the hybrid and Brownian-comparator intervals on the
    /// worked time-sequential design.
    Example2(Example2Args),
}

#[derive(Args)]
struct Table1Args {
    /// Macro-replications per table row.
    #[arg(long = "macro", default_value_t = 500)]
    macro_reps: usize,
    /// Bootstrap resamples per estimate.
    #[arg(long, default_value_t = 500)]
    resamples: usize,
}

#[derive(Args)]
struct Example2Args {
    /// Outer trial replications per beta.
    #[arg(long, default_value_t = 2000)]
    outer: usize,
    /// Inner resamples per p-hat evaluation.
    #[arg(long, default_value_t = 2000)]
    inner: usize,
    /// Run the Brownian-approximation comparator instead of hybrid
    /// resampling.
    #[arg(long)]
    brownian: bool,
    /// True log hazard ratios; defaults to 0, log(2/3), log(1/2).
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundaryConfig {
    info: Vec<f64>,
    #[serde(default = "two_sided")]
    sided: Sidedness,
    spending: SpendingFunction,
}

fn two_sided() -> Sidedness {
    Sidedness::TwoSided
}

#[derive(Debug, Serialize, Deserialize)]
struct SearchConfig {
    target: f64,
    #[serde(default = "default_probe_sims")]
    probe_sims: u64,
    #[serde(default = "default_confirm_sims")]
    confirm_sims: u64,
    #[serde(default = "default_n_min")]
    n_min: usize,
    #[serde(default = "default_n_cap")]
    n_cap: usize,
}

fn default_probe_sims() -> u64 {
    2000
}

fn default_confirm_sims() -> u64 {
    10_000
}

fn default_n_min() -> usize {
    8
}

fn default_n_cap() -> usize {
    100_000
}

#[derive(Debug, Serialize, Deserialize)]
struct DesignConfig {
    scenario: Scenario,
    test: TestSpec,
    n_sims: u64,
    #[serde(default)]
    search: Option<SearchConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnalyzeConfig {
    /// Path to the observed trial CSV.
    data: PathBuf,
    test: TestSpec,
    analysis_times: Vec<f64>,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_b")]
    b: usize,
    #[serde(default = "default_mode")]
    mode: PhatMode,
    #[serde(default)]
    ordering: Option<OrderingScheme>,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_b() -> usize {
    2000
}

fn default_mode() -> PhatMode {
    PhatMode::Importance
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: failed to configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Infeasible(_)
                | Error::RootSearch(_)
                | Error::Degenerate(_)
                | Error::Quadrature { .. } => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn load_config<T: serde::de::DeserializeOwned>(cli: &Cli) -> Result<T, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Invalid("--config is required for this subcommand".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("malformed config {}: {e}", path.display())))
}

fn require_seed(cli: &Cli) -> Result<u64, Error> {
    cli.seed
        .ok_or_else(|| Error::Invalid("--seed is required for stochastic subcommands".into()))
}

fn write_artifact(out: &Path, name: &str, value: &serde_json::Value) -> Result<(), Error> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.cmd {
        Cmd::Boundary => {
            let cfg: BoundaryConfig = load_config(cli)?;
            let grid = seqtrial::boundary_engine::spend_and_solve_opt(
                &cfg.spending,
                &cfg.info,
                cfg.sided,
                Default::default(),
            )?;
            let file = BoundaryFile::from_grid(&grid, cfg.spending.alpha(), Some(cfg.spending.clone()));
            write_artifact(
                &cli.out,
                "boundary.json",
                &json!({ "config": cfg, "seed": cli.seed, "result": file }),
            )
        }
        Cmd::Design => {
            let seed = require_seed(cli)?;
            let cfg: DesignConfig = load_config(cli)?;
            let report = operating_characteristics(&cfg.scenario, &cfg.test, cfg.n_sims, seed)?;
            let search = cfg
                .search
                .as_ref()
                .map(|s| {
                    sample_size_search(
                        &cfg.scenario,
                        &cfg.test,
                        s.target,
                        s.probe_sims,
                        s.confirm_sims,
                        s.n_min,
                        s.n_cap,
                        seed,
                    )
                })
                .transpose()?;
            write_artifact(
                &cli.out,
                "design.json",
                &json!({
                    "config": cfg,
                    "seed": seed,
                    "result": { "operating_characteristics": report, "sample_size_search": search },
                }),
            )
        }
        Cmd::Simulate => {
            let seed = require_seed(cli)?;
            let cfg: DesignConfig = load_config(cli)?;
            let report = operating_characteristics(&cfg.scenario, &cfg.test, cfg.n_sims, seed)?;
            std::fs::create_dir_all(&cli.out)?;
            let csv_path = cli.out.join("replicates.csv");
            let mut wtr = csv::Writer::from_path(&csv_path)?;
            wtr.write_record(["replicate", "stop_index", "stop_time", "S", "V", "decision"])?;
            for r in &report.replicates {
                wtr.write_record([
                    r.replicate.to_string(),
                    r.stop_index.to_string(),
                    r.stop_time.to_string(),
                    r.statistic.to_string(),
                    r.variance.to_string(),
                    if r.reject { "reject" } else { "accept" }.to_string(),
                ])?;
            }
            wtr.flush()?;
            println!("wrote {}", csv_path.display());
            write_artifact(
                &cli.out,
                "simulate.json",
                &json!({ "config": cfg, "seed": seed, "result": report }),
            )
        }
        Cmd::Analyze => {
            let seed = require_seed(cli)?;
            let cfg: AnalyzeConfig = load_config(cli)?;
            let data = TrialData::from_csv_path(&cfg.data)?;
            let observed = run_test(&data, &cfg.test, &cfg.analysis_times)?;
            let model =
                fit_hybrid_model(&data, &cfg.test, &cfg.analysis_times, observed.stop_index)?;
            let mut hybrid_cfg = HybridConfig::new(cfg.b, seed, cfg.mode);
            if let Some(ordering) = &cfg.ordering {
                hybrid_cfg.ordering = ordering.clone();
            }
            let interval = hybrid_confidence_set(&observed, cfg.alpha, &model, &hybrid_cfg)?;
            write_artifact(
                &cli.out,
                "analyze.json",
                &json!({
                    "config": cfg,
                    "seed": seed,
                    "result": {
                        "beta_hat": interval.beta_hat,
                        "interval": [interval.lower, interval.upper],
                        "alpha": interval.alpha,
                        "mode": interval.mode,
                        "B": interval.b,
                        "diagnostics": {
                            "se": interval.se,
                            "stop_index": observed.stop_index,
                            "reject": observed.reject,
                            "excluded": interval.excluded,
                            "trace": interval.trace,
                        },
                    },
                }),
            )
        }
        Cmd::Reproduce { which } => {
            let seed = require_seed(cli)?;
            std::fs::create_dir_all(&cli.out)?;
            match which {
                ReproCmd::Table1(args) => {
                    let rows = repro::table1(args.macro_reps, args.resamples, seed)?;
                    let path = cli.out.join("table1.csv");
                    repro::write_table1_csv(&rows, std::fs::File::create(&path)?)?;
                    println!("wrote {}", path.display());
                    write_artifact(
                        &cli.out,
                        "table1.meta.json",
                        &json!({
                            "config": { "macro": args.macro_reps, "resamples": args.resamples },
                            "seed": seed,
                            "result": rows,
                        }),
                    )
                }
                ReproCmd::Example2(args) => {
                    let betas = args.betas.clone().unwrap_or_else(|| {
                        vec![0.0, (2.0_f64 / 3.0).ln(), 0.5_f64.ln()]
                    });
                    let (rows, name) = if args.brownian {
                        (repro::example2_brownian(args.outer, seed, &betas)?, "example2_brownian.csv")
                    } else {
                        (
                            repro::example2_hybrid(args.outer, args.inner, seed, &betas)?,
                            "example2.csv",
                        )
                    };
                    let path = cli.out.join(name);
                    repro::write_coverage_csv(&rows, std::fs::File::create(&path)?)?;
                    println!("wrote {}", path.display());
                    write_artifact(
                        &cli.out,
                        "example2.meta.json",
                        &json!({
                            "config": {
                                "outer": args.outer,
                                "inner": args.inner,
                                "brownian": args.brownian,
                                "betas": betas,
                            },
                            "seed": seed,
                            "result": rows,
                        }),
                    )
                }
            }
        }
    }
}
