use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cssi_lab::{cmd_boundary, cmd_eval, cmd_gen, cmd_oracle, cmd_train, ensure_passed, exit, ExperimentConfig, LabError, LabResult};

#[derive(Parser)]
#[command(name = "cssi-lab", version, about = "Generate data, train and evaluate neural contextual decomposition")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this seed (oracle-check: campaign seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to eval.out_dir or runs/<name>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, env = "CSSI_LAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the dataset and write the train/val/test splits.
    Gen,
    /// Train one model per seed and target.
    Train,
    /// Pooled ROC of every trained model on the test split.
    Eval,
    /// Gate-pattern grids for epoch checkpoints.
    Boundary {
        /// Comma-separated epochs; defaults to eval.boundary.epochs.
        #[arg(long, value_delimiter = ',')]
        epochs: Option<Vec<usize>>,
    },
    /// Run a randomized oracle campaign.
    OracleCheck {
        campaign: String,
        #[arg(long, default_value_t = 200)]
        instances: usize,
    },
}

fn load(cli: &Cli) -> LabResult<(ExperimentConfig, PathBuf)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| LabError::from(cssi_core::Error::invalid_config("--config", "required for this command")))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = cfg.out_dir(cli.out.as_deref());
    Ok((cfg, out))
}

fn run(cli: &Cli) -> LabResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(cssi_core::Error::invalid_config("CSSI_LAB_THREADS", "must be positive").into());
        }
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Gen => {
            let (cfg, out) = load(cli)?;
            let r = cmd_gen(&cfg, &out)?;
            println!("wrote {} / {} / {} rows to {}", r.rows[0], r.rows[1], r.rows[2], r.dir.display());
        }
        Command::Train => {
            let (cfg, out) = load(cli)?;
            for r in cmd_train(&cfg, &out)? {
                let nll = r.final_val_nll.map_or("n/a".into(), |v| format!("{v:.4}"));
                println!("seed {} target {}: {} epochs, val nll {nll}, {}", r.seed, r.target + 1, r.epochs, r.checkpoint.display());
            }
        }
        Command::Eval => {
            let (cfg, out) = load(cli)?;
            let s = cmd_eval(&cfg, &out)?;
            for seed in &s.seeds {
                println!("seed {}: AUC {:.4} (shuffled {:.4})", seed.seed, seed.auc, seed.null_auc);
            }
            println!("AUC {:.4} +- {:.4} over {} seeds", s.auc.mean, s.auc.std, s.seeds.len());
        }
        Command::Boundary { epochs } => {
            let (cfg, out) = load(cli)?;
            let epochs = epochs.clone().or_else(|| cfg.eval.boundary.as_ref().map(|b| b.epochs.clone())).unwrap_or_default();
            for r in cmd_boundary(&cfg, &out, &epochs)? {
                let agree = r.agreement.map_or(String::new(), |a| format!(" (agreement {:.1}%)", 100.0 * a));
                println!("epoch {}: {}{agree}", r.epoch, r.path.display());
            }
        }
        Command::OracleCheck { campaign, instances } => {
            let report = cmd_oracle(campaign, cli.seed.unwrap_or(0), *instances)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ensure_passed(&report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
