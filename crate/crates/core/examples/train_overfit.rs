//! Overfits a small denoiser on eight synthetic sequences.
//!
//! `cargo run --release --example train_overfit -- [iters] [ccmd on|off]`

use tric::harness::{train, RunConfig};

fn main() -> tric::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(400);
    let ccmd = args.next().map(|s| s != "off").unwrap_or(true);
    let mut cfg = RunConfig::default();
    cfg.apply_text(
        "model.J = 2\nmodel.D = 32\nmodel.M = 8\nmodel.frames = 64\n\
         data.corpus_size = 8\noptim.batch = 4\noptim.lr = 2e-3\ntrain.checkpoint_every = 0",
    )?;
    cfg.optim.iters = iters;
    cfg.ccmd.enabled = ccmd;
    let out = std::env::temp_dir().join("tric_train_overfit");
    let (_, summary) = train(&cfg, &out)?;
    let step = (iters / 10).max(1);
    println!("iter   simple    fcf       perceptual");
    for (i, chunk) in summary.history.chunks(step).enumerate() {
        let n = chunk.len() as f64;
        let avg = |f: fn(&tric::harness::StepLosses) -> f64| chunk.iter().map(f).sum::<f64>() / n;
        println!(
            "{:<6} {:<9.4} {:<9.4} {:.4}",
            (i + 1) * chunk.len(),
            avg(|l| l.simple),
            avg(|l| l.fcf),
            avg(|l| l.perceptual)
        );
    }
    println!("tail L_simple {:.4}; log {}", summary.tail_simple(100), summary.loss_log.display());
    Ok(())
}
