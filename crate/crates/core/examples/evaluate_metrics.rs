//! Toy FID, R-precision, MM-Dist and Diversity for a briefly trained model,
//! repeated with reseeding and reported as mean and 95% half-width.

use tric::harness::{evaluate, train, EvalOptions, RunConfig};
use tric::motion::{synth_dataset, CorpusItem, Vocab};

fn main() -> tric::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(
        "model.J = 1\nmodel.D = 16\nmodel.M = 4\nmodel.frames = 16\nmodel.heads = 2\nmodel.d_text = 16\n\
         data.corpus_size = 48\noptim.batch = 8\noptim.iters = 150\noptim.lr = 2e-3\ndiffusion.T = 10\ntrain.checkpoint_every = 0",
    )?;
    let (trainer, _) = train(&cfg, &std::env::temp_dir().join("tric_evaluate_metrics"))?;
    let items: Vec<CorpusItem> = synth_dataset(99, 48, 4, 16, &Vocab::default())?
        .into_iter()
        .enumerate()
        .map(|(i, (prompt, motion))| CorpusItem { id: format!("{i:05}"), prompt, motion })
        .collect();
    let opts = EvalOptions {
        repeats: 5,
        seed: 0,
        guidance: None,
    };
    let report = evaluate(&cfg, &trainer.state, &items, &opts)?;
    println!("repeated {} times, mean \u{b1} 95% half-width", opts.repeats);
    for (name, i) in report.entries() {
        println!("  {name:<18} {i}");
    }
    Ok(())
}
