//! Cosine schedule, forward noising and an oracle reverse chain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tric::numcore::Tensor;
use tric::schedule::{DiffusionSchedule, SamplerVariance};

fn main() -> tric::Result<()> {
    let s = DiffusionSchedule::cosine(50)?;
    println!("t   beta        alpha_bar");
    for t in [1, 5, 10, 20, 30, 40, 50] {
        println!("{t:<3} {:<11.4e} {:.6}", s.beta(t), s.alpha_bar(t));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x0 = Tensor::zeros(&[50_000]);
    for t in [10, 40] {
        let eps = Tensor::randn(x0.shape(), &mut rng);
        let xt = s.q_sample(&x0, t, &eps)?;
        let var = xt.data().iter().map(|v| v * v).sum::<f64>() / xt.len() as f64;
        println!("q_sample t={t}: empirical var {var:.4}, expected {:.4}", 1.0 - s.alpha_bar(t));
    }

    // a denoiser that always knows the answer walks noise back to it
    let target = Tensor::randn(&[16, 2, 12], &mut rng);
    for variance in [SamplerVariance::Posterior, SamplerVariance::Beta] {
        let s = s.clone().with_variance(variance);
        let mut x = Tensor::randn(target.shape(), &mut rng);
        for t in (1..=s.steps()).rev() {
            let z = Tensor::randn(target.shape(), &mut rng);
            x = s.ddpm_step(&x, &target, t, &z)?;
        }
        let mse = x.zip_map(&target, |a, b| (a - b).powi(2))?.mean();
        println!("oracle chain ({variance}): final mse {mse:.3e}");
    }
    Ok(())
}
