//! Train briefly, then sample with several guidance scales and export the
//! motions plus per-joint ground-plane trajectories.

use tric::harness::{sample_to_dir, train, RunConfig, SampleRequest};

fn main() -> tric::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(
        "model.J = 2\nmodel.D = 16\nmodel.M = 8\nmodel.frames = 32\nmodel.heads = 2\nmodel.d_text = 16\n\
         data.corpus_size = 4\noptim.batch = 4\noptim.iters = 150\noptim.lr = 2e-3\ndiffusion.T = 20\ntrain.checkpoint_every = 0",
    )?;
    let root = std::env::temp_dir().join("tric_sample_motion");
    let (trainer, _) = train(&cfg, &root.join("run"))?;
    let prompt = trainer.items[0].prompt.clone();
    for g in [0.0, 1.0, 4.0] {
        let req = SampleRequest {
            prompt: &prompt,
            seed: 3,
            count: 2,
            guidance: Some(g),
        };
        let out = root.join(format!("g{g}"));
        let files = sample_to_dir(&cfg, &trainer.state, &req, &out)?;
        let m = tric::numcore::Tensor::load(&files[0])?;
        let mse = m.zip_map(trainer.items[0].motion.tensor(), |a, b| (a - b).powi(2))?.mean();
        println!("`{prompt}` g={g}: {} files in {}, mse to training motion {mse:.4}", 2 * files.len(), out.display());
    }
    Ok(())
}
