use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tric::harness::{eval_cmd, sample_cmd, selftest, train, EvalOptions, RunConfig, SampleRequest};

#[derive(Parser)]
#[command(name = "tric", about = "Tri-domain causal motion diffusion at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a denoiser; writes losses.csv and checkpoints under paths.out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides paths.out.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample motions for a prompt from a checkpoint.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Guidance scale; defaults to the checkpoint's diffusion.guidance_scale.
        #[arg(long)]
        guidance: Option<f64>,
        /// Runtime config that must agree with the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Repeated toy-metric evaluation against a corpus directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value = "report.txt")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        guidance: Option<f64>,
    },
    /// Run the invariant suites, optionally the ablation matrix too.
    Selftest {
        #[arg(long)]
        ablations: bool,
    },
}

fn run(cli: Cli) -> tric::Result<bool> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            let (_, summary) = train(&cfg, &cfg.out.clone())?;
            let last = summary.history.last().copied().unwrap_or_default();
            println!(
                "trained {} iters, final simple {:.5}, checkpoint {}",
                summary.history.len(),
                last.simple,
                summary.checkpoint.display()
            );
        }
        Command::Sample {
            ckpt,
            prompt,
            seed,
            count,
            out,
            guidance,
            config,
        } => {
            let runtime = config.map(|p| RunConfig::load(&p)).transpose()?;
            let req = SampleRequest {
                prompt: &prompt,
                seed,
                count,
                guidance,
            };
            for f in sample_cmd(&ckpt, runtime.as_ref(), &req, &out)? {
                println!("{}", f.display());
            }
        }
        Command::Eval {
            ckpt,
            corpus,
            repeats,
            out,
            seed,
            guidance,
        } => {
            let opts = EvalOptions { repeats, seed, guidance };
            let report = eval_cmd(&ckpt, &corpus, &opts, &out)?;
            println!("repeated {repeats} times, mean \u{b1} 95% half-width");
            for (name, i) in report.entries() {
                println!("{name:<18} {i}");
            }
        }
        Command::Selftest { ablations } => {
            let checks = selftest(ablations);
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            println!("{} checks, {failed} failed", checks.len());
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
