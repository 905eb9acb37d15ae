use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lcp_core::config::PipelineConfig;
use lcp_core::workflow::{Stage, Workflow};

#[derive(Parser)]
#[command(name = "lcp", version, about = "Lexical complexity prediction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Count unigrams, bigrams and trigrams over the corpora and learn BPE merges.
    BuildIndex(Common),
    /// Fit character and phoneme transition models.
    FitPhonetics(Common),
    /// Compute feature matrices for the train and test sets.
    Extract(Common),
    /// Fit the full and reduced models and run cross-validation.
    Train(Common),
    /// Predict the test sets with the trained models.
    Predict(Common),
    /// Combine model predictions.
    Ensemble(Common),
    /// Score predictions against test labels.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Score this predictions file instead of the pipeline outputs.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Correlate attention received per word with word frequency.
    AttentionReport(Common),
    /// Print a reference configuration.
    ReferenceConfig,
}

fn workflow(common: &Common) -> anyhow::Result<Workflow> {
    let mut config =
        PipelineConfig::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let wf = Workflow::new(config, &common.out, common.workers)?;
    log::info!("config hash {} seed {}", wf.config_hash(), wf.config().seed);
    Ok(wf)
}

fn run_stage(common: &Common, stage: Stage) -> anyhow::Result<()> {
    let wf = workflow(common)?;
    let manifest = wf.run(stage).with_context(|| format!("{stage} failed"))?;
    for a in &manifest.artifacts {
        println!("{}", wf.out_dir().join(&a.path).display());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::BuildIndex(c) => run_stage(&c, Stage::BuildIndex),
        Command::FitPhonetics(c) => run_stage(&c, Stage::FitPhonetics),
        Command::Extract(c) => run_stage(&c, Stage::Extract),
        Command::Train(c) => run_stage(&c, Stage::Train),
        Command::Predict(c) => run_stage(&c, Stage::Predict),
        Command::Ensemble(c) => run_stage(&c, Stage::Ensemble),
        Command::Evaluate {
            common,
            predictions: None,
        } => run_stage(&common, Stage::Evaluate),
        Command::Evaluate {
            common,
            predictions: Some(p),
        } => {
            let wf = workflow(&common)?;
            let (report, written) = wf
                .evaluate_file(&p)
                .with_context(|| format!("evaluating {}", p.display()))?;
            print!("{}", report.render_text());
            for w in written {
                eprintln!("wrote {}", w.display());
            }
            Ok(())
        }
        Command::AttentionReport(c) => run_stage(&c, Stage::AttentionReport),
        Command::ReferenceConfig => {
            print!("{}", PipelineConfig::reference().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
