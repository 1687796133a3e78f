mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ndpcast::experiment::{
    fingerprint_bytes, generate_synthetic_panel, run_experiment, write_manifest, write_outputs, Manifest,
    Structure, SyntheticSpec,
};
use ndpcast::{parse_panel_csv, PanelDataset, Quarter};

use config::{ConfigBuilder, RunConfig};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "ndpcast", version, about = "TD(0) value-function GDP forecasting over indicator panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a panel CSV and print countries, quarter ranges and gaps
    Validate {
        /// Panel CSV with header country,quarter,indicator,value
        data: PathBuf,
        #[arg(long, default_value = "GDP")]
        target: String,
    },
    /// Write a synthetic panel CSV
    Synth(SynthArgs),
    /// Train, fit the OLS benchmark, and write the report directory
    #[command(after_help = config::keys_help())]
    Run(Box<RunArgs>),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 27)]
    countries: usize,
    #[arg(long, default_value_t = 96)]
    quarters: usize,
    #[arg(long, default_value_t = 6)]
    indicators: usize,
    /// linear or nonlinear
    #[arg(long, default_value = "nonlinear")]
    structure: Structure,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "2000Q1")]
    start: Quarter,
    #[arg(long, default_value = "GDP")]
    target: String,
}

/// Each flag overrides the config key of the same name.
#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    test_country: Option<String>,
    #[arg(long)]
    ols_cutoff: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    gamma0: Option<String>,
    #[arg(long)]
    decay_tau: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    shuffle: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    hidden_width: Option<String>,
    #[arg(long)]
    network_features: Option<String>,
    #[arg(long)]
    linear_features: Option<String>,
    #[arg(long)]
    forecast_rule: Option<String>,
    #[arg(long)]
    sign_heuristic: Option<String>,
    #[arg(long)]
    strict_listing_order: Option<String>,
    #[arg(long)]
    log_stride: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let pairs: [(&'static str, &Option<String>); 20] = [
            ("data", &self.data),
            ("target", &self.target),
            ("test_country", &self.test_country),
            ("ols_cutoff", &self.ols_cutoff),
            ("output_dir", &self.output_dir),
            ("models", &self.models),
            ("alpha", &self.alpha),
            ("gamma0", &self.gamma0),
            ("decay_tau", &self.decay_tau),
            ("epochs", &self.epochs),
            ("shuffle", &self.shuffle),
            ("seed", &self.seed),
            ("activation", &self.activation),
            ("hidden_width", &self.hidden_width),
            ("network_features", &self.network_features),
            ("linear_features", &self.linear_features),
            ("forecast_rule", &self.forecast_rule),
            ("sign_heuristic", &self.sign_heuristic),
            ("strict_listing_order", &self.strict_listing_order),
            ("log_stride", &self.log_stride),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }
}

/// An error paired with its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { data, target } => cmd_validate(&data, &target),
        Command::Synth(args) => cmd_synth(&args),
        Command::Run(args) => cmd_run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_panel(path: &PathBuf, target: &str) -> Result<(PanelDataset, Vec<u8>)> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let panel = parse_panel_csv(bytes.as_slice(), target)
        .with_context(|| format!("invalid panel {}", path.display()))?;
    Ok((panel, bytes))
}

fn cmd_validate(data: &PathBuf, target: &str) -> Result<(), Failure> {
    let (panel, _) = load_panel(data, target).exit_with(EXIT_VALIDATION)?;
    println!("file: {}", data.display());
    println!("target: {}", panel.target());
    println!("indicators: {}", panel.indicators().join(", "));
    println!("countries: {}", panel.countries().len());
    for c in panel.countries() {
        match (c.rows.first(), c.rows.last()) {
            (Some(a), Some(b)) => {
                println!("  {:<6} {}..{} ({} quarters)", c.country, a.quarter, b.quarter, c.rows.len())
            }
            _ => println!("  {:<6} no complete quarters", c.country),
        }
    }
    for d in panel.dropped_quarters() {
        println!("warning: {} {} dropped, missing {}", d.country, d.quarter, d.missing.join(", "));
    }
    let gaps = panel.gaps();
    for g in &gaps {
        println!(
            "warning: gap in {} between {} and {} ({} quarters missing)",
            g.country,
            g.after,
            g.before,
            g.missing_quarters()
        );
    }
    println!("gap warnings: {}", gaps.len());
    panel.regularize().exit_with(EXIT_VALIDATION)?;
    println!("ok");
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let spec = SyntheticSpec {
        countries: args.countries,
        quarters: args.quarters,
        seed: args.seed,
        indicators: args.indicators,
        structure: args.structure,
        noise: args.noise,
        start: args.start,
        target: args.target.clone(),
    };
    let panel = generate_synthetic_panel(&spec).exit_with(EXIT_VALIDATION)?;
    let mut buf = Vec::new();
    panel.write_csv(&mut buf).exit_with(EXIT_RUNTIME)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).exit_with(EXIT_RUNTIME)?;
    }
    fs::write(&args.out, buf).exit_with(EXIT_RUNTIME)?;
    println!(
        "wrote {} ({} countries x {} quarters, {} observations)",
        args.out.display(),
        spec.countries,
        spec.quarters,
        panel.observation_count()
    );
    Ok(())
}

fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut builder = ConfigBuilder::new();
    if let Some(path) = &args.config {
        builder.load_file(path)?;
    }
    for (k, v) in args.overrides() {
        builder.override_key(k, v)?;
    }
    builder.resolve()
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve_config(args).exit_with(EXIT_VALIDATION)?;
    let (panel, bytes) = load_panel(&cfg.data, &cfg.target).exit_with(EXIT_VALIDATION)?;
    let panel = panel.regularize().exit_with(EXIT_VALIDATION)?;

    let mut manifest = Manifest::new();
    manifest.push("data_sha256", fingerprint_bytes(&bytes));
    for (k, v) in &cfg.echo {
        manifest.push(&format!("config.{k}"), v);
    }
    for m in &cfg.models {
        manifest.push(&format!("seed.{}", m.name), m.train.seed);
    }
    write_manifest(&cfg.output_dir, &manifest).exit_with(EXIT_RUNTIME)?;

    let outcome = run_experiment(&panel, &cfg.test_country, &cfg.models, cfg.ols_cutoff)
        .context("experiment failed")
        .exit_with(EXIT_RUNTIME)?;
    write_outputs(&cfg.output_dir, &outcome).exit_with(EXIT_RUNTIME)?;

    println!(
        "training transitions: {} | OLS rows: {} | test window: {} quarters ({}..{})",
        outcome.training_transitions,
        outcome.ols_rows,
        outcome.test_window.len(),
        outcome.test_window.first().map(|q| q.to_string()).unwrap_or_default(),
        outcome.test_window.last().map(|q| q.to_string()).unwrap_or_default(),
    );
    for s in &outcome.skipped {
        println!("warning: skipped {} ({} quarters)", s.country, s.quarters);
    }
    println!("{:<14} {:>10} {:>10}", "model", "MAE", "RMSE");
    for r in &outcome.reports {
        println!("{:<14} {:>10.4} {:>10.4}", r.model, r.mae, r.rmse);
    }
    println!("reports written to {}", cfg.output_dir.display());
    Ok(())
}
