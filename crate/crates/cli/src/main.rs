//! `cflab`: run the simulation grid, check a config, or re-render tables.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use log::{error, info};

use cflab::config::ExperimentConfig;
use cflab::report::{emit_csv, emit_markdown, load_csv, RunManifest};
use cflab::{run_grid, Method, Scenario};

const CSV_FILE: &str = "results.csv";
const MARKDOWN_FILE: &str = "results.md";
const MANIFEST_FILE: &str = "manifest.json";
const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Parser)]
#[command(name = "cflab", version, about = "Counterfactual-prediction ATE simulation grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured grid and write CSV, markdown and a run manifest.
    Simulate(SimulateArgs),
    /// Parse and validate a config without running anything.
    Validate(ConfigArgs),
    /// Re-render the markdown tables from a results CSV.
    Render(RenderArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override n_replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Restrict to these scenarios (1a, 1b, 1c, 2a, 2b, 2c).
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<String>,
    /// Restrict to these methods (LM, Lasso, RF).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long, env = "CFLAB_OUT_DIR", default_value = "results")]
    out_dir: PathBuf,
    /// Write results even when some cells aborted.
    #[arg(long)]
    allow_partial: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// Results CSV to read; defaults to results.csv in the output directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Markdown file to write; defaults to results.md next to the input.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Output directory used for the defaults above.
    #[arg(long, env = "CFLAB_OUT_DIR", default_value = "results")]
    out_dir: PathBuf,
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_path(path).with_context(|| format!("in {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(n) = args.replicates {
        config.n_replicates = n;
    }
    if let Some(t) = args.threads {
        config.threads = t;
    }
    if !args.scenario.is_empty() {
        config.scenarios = args
            .scenario
            .iter()
            .map(|id| Scenario::parse_id(id))
            .collect::<cflab::Result<_>>()?;
    }
    if !args.methods.is_empty() {
        config.methods = args
            .methods
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<cflab::Result<_>>()?;
    }
    config.validate()?;
    Ok(config)
}

fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn simulate(args: &SimulateArgs) -> Result<bool> {
    let config = load_config(&args.config)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let echo = args.out_dir.join(CONFIG_ECHO_FILE);
    std::fs::write(&echo, config.to_toml()?).with_context(|| format!("writing {}", echo.display()))?;

    let cells: usize = config.scenarios.len() * config.ate_true_grid.len() * config.pi_grid.len();
    info!(
        "running {cells} cells x {} replicates (seed {})",
        config.n_replicates, config.master_seed
    );
    let started_at = timestamp();
    let report = run_grid(&config)?;
    let finished_at = timestamp();

    let manifest = RunManifest::new(&report, &config, started_at, finished_at);
    manifest.write(&args.out_dir.join(MANIFEST_FILE))?;

    let complete = report.is_complete();
    if complete || args.allow_partial {
        emit_csv(&report, &args.out_dir.join(CSV_FILE), args.allow_partial)?;
        emit_markdown(&report, &args.out_dir.join(MARKDOWN_FILE), args.allow_partial)?;
    }
    if complete {
        info!("wrote {} cells to {}", report.cells.len(), args.out_dir.display());
    } else {
        for a in &report.aborted {
            error!("aborted: {} ate_true={} pi={}: {}", a.scenario, a.ate_true, a.pi, a.reason);
        }
        if args.allow_partial {
            error!(
                "{} of {cells} cells aborted; partial results written to {}",
                report.aborted.len(),
                args.out_dir.display()
            );
        } else {
            error!(
                "{} of {cells} cells aborted; no tables written (use --allow-partial to keep the rest)",
                report.aborted.len()
            );
        }
    }
    Ok(complete)
}

fn validate(args: &ConfigArgs) -> Result<()> {
    let config = load_config(args)?;
    let scenarios: Vec<String> = config.scenarios.iter().map(Scenario::id).collect();
    let methods: Vec<&str> = config.methods.iter().map(|m| m.label()).collect();
    println!(
        "config ok: scenarios [{}], methods [{}], {} cells x {} replicates, n_samples {}, seed {}",
        scenarios.join(", "),
        methods.join(", "),
        config.scenarios.len() * config.ate_true_grid.len() * config.pi_grid.len(),
        config.n_replicates,
        config.n_samples,
        config.master_seed
    );
    Ok(())
}

fn render(args: &RenderArgs) -> Result<()> {
    let input = args.input.clone().unwrap_or_else(|| args.out_dir.join(CSV_FILE));
    let output = args.output.clone().unwrap_or_else(|| {
        input
            .parent()
            .unwrap_or(Path::new("."))
            .join(MARKDOWN_FILE)
    });
    let report = load_csv(&input)?;
    emit_markdown(&report, &output, false)?;
    info!("rendered {} cells to {}", report.cells.len(), output.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Validate(args) => validate(args).map(|_| true),
        Command::Render(args) => render(args).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
