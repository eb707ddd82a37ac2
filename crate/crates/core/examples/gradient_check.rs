//! Finite-difference check of the full training loss on a toy denoiser.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tric::causal::{CcmdConfig, Mode};
use tric::denoiser::{DenoiserState, ModelConfig};
use tric::motion::{toy_text_encode, Conditioning};
use tric::numcore::{finite_diff_check, Coordinates, Tensor};
use tric::objective::{loss_fcf, loss_perceptual, loss_simple, loss_total, LossParts, LossWeights, PerceptualEncoder};

fn main() -> tric::Result<()> {
    let cfg = ModelConfig {
        blocks: 2,
        dim: 8,
        joints: 4,
        frames: 8,
        stride: 2,
        heads: 2,
        d_text: 8,
        ..Default::default()
    };
    let mut state = DenoiserState::new(&cfg, &CcmdConfig::default(), 0)?;
    let weights = LossWeights::with_defaults(cfg.blocks);
    let enc = PerceptualEncoder::new(cfg.joints)?;
    let text = toy_text_encode("run fast left", cfg.d_text)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x0 = Tensor::randn(&[8, 4, 12], &mut rng);
    let x_t = Tensor::randn(&[8, 4, 12], &mut rng);
    let structure = state.clone();
    println!("{} scalar parameters", state.params.num_scalars());
    let report = finite_diff_check(
        &mut state.params,
        &Coordinates::Fraction { fraction: 0.02, seed: 2 },
        1e-5,
        1e-4,
        |g| {
            let out = structure.forward(g, &x_t, 12, Conditioning::Text(&text), Mode::Train)?;
            let x0v = g.constant(x0.clone());
            let simple = loss_simple(g, x0v, out.x0_hat)?;
            let fcf = out.bundle.as_ref().map(|b| loss_fcf(g, b, x0v, &weights.layers)).transpose()?;
            let perceptual = loss_perceptual(g, x0v, out.x0_hat, &enc)?;
            loss_total(g, &LossParts { simple, fcf, perceptual }, &weights)
        },
    )?;
    println!(
        "checked {} coordinates: max rel err {:.2e}, max abs err {:.2e}, worst {:?} -> {}",
        report.checked,
        report.max_rel_err,
        report.max_abs_err,
        report.worst,
        if report.pass { "pass" } else { "FAIL" }
    );
    Ok(())
}
