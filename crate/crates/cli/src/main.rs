use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coltopic_cli::config::{CampaignConfig, ContextSetting, Overrides};
use coltopic_cli::{classify, evaluate, plots, validate, CliError};

#[derive(Parser)]
#[command(
    name = "coltopic",
    version,
    about = "Topic classification of column headers with LLMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Query every backend for every missing (dataset, context, run) cell.
    Classify(CampaignArgs),
    /// Compute tallies, consistency, alignment, agreement and tests from the store.
    Evaluate {
        #[command(flatten)]
        campaign: CampaignArgs,
        /// Output directory for the report bundle.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Draw box plots from an evaluated bundle.
    ReportPlots {
        /// Bundle directory written by `evaluate`.
        bundle: PathBuf,
        /// Where to write figures (defaults to the bundle).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the corpus, vocabulary, labels and store named by a config.
    Validate(CampaignArgs),
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, value_enum)]
    context: Option<ContextSetting>,
    #[arg(long)]
    runs: Option<u32>,
    /// Restrict to these backends (repeatable).
    #[arg(long = "backend")]
    backends: Vec<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "match")]
    match_score: Option<f64>,
    #[arg(long)]
    mismatch: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    gap: Option<f64>,
}

impl CampaignArgs {
    fn load(&self) -> Result<CampaignConfig, CliError> {
        let mut config = CampaignConfig::load(&self.config)?;
        config.apply(&Overrides {
            store: self.store.clone(),
            context: self.context,
            runs: self.runs,
            backends: self.backends.clone(),
            alpha: self.alpha,
            match_score: self.match_score,
            mismatch: self.mismatch,
            gap: self.gap,
        })?;
        Ok(config)
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Classify(args) => {
            let config = args.load()?;
            let summary = classify::run(&config)?;
            println!(
                "{} cells planned, {} already stored, {} written, {} failed",
                summary.planned,
                summary.skipped,
                summary.written,
                summary.failures.len()
            );
            for (cell, err) in &summary.failures {
                eprintln!("{cell}: {err}");
            }
            if !summary.failures.is_empty() {
                return Err(CliError::Partial(format!(
                    "{} cell(s) failed; re-run to retry them",
                    summary.failures.len()
                )));
            }
        }
        Command::Evaluate { campaign, out } => {
            let bundle = evaluate::run(&campaign.load()?, &campaign.backends)?;
            bundle.write(&out)?;
            for notice in &bundle.notices {
                eprintln!("note: {notice}");
            }
            println!("wrote {} tables to {}", bundle.files.len(), out.display());
        }
        Command::ReportPlots { bundle, out } => {
            let out = out.unwrap_or_else(|| bundle.clone());
            let written = plots::run(&bundle, &out)?;
            println!("wrote {} files to {}", written.len(), out.display());
        }
        Command::Validate(args) => {
            let lint = validate::run(&args.load()?);
            for w in &lint.warnings {
                println!("warning: {w}");
            }
            for e in &lint.errors {
                println!("error: {e}");
            }
            if !lint.is_clean() {
                return Err(CliError::invalid(format!(
                    "{} problem(s) found",
                    lint.errors.len()
                )));
            }
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
