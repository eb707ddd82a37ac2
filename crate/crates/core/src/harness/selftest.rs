//! `tric selftest`: invariant suites and the ablation matrix.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::RunConfig;
use super::metrics::{frechet_distance, r_precision, Interval, RETRIEVAL_POOL};
use crate::causal::Mode;
use crate::denoiser::{DenoiserState, FusionMode, Hfa, HfaConfig, SFus};
use crate::error::{invalid, Result};
use crate::motion::{synth_clean, toy_text_encode, Conditioning, Vocab, CHANNELS};
use crate::nn::Init;
use crate::numcore::{finite_diff_check, spectral, Coordinates, Graph, ParamGrads, ParamStore, Tensor};
use crate::objective::{loss_fcf, loss_perceptual, loss_simple, loss_total, LossParts, PerceptualEncoder};
use crate::schedule::DiffusionSchedule;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} ({:.2}s) {}", self.name, self.seconds, self.detail)
    }
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let t0 = Instant::now();
    let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        name: name.to_string(),
        pass,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn transforms(cases: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let len = 2 + 2 * (case % 16);
        let cols = 1 + case % 5;
        let x: Vec<f64> = (0..len * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y = spectral::haar_split(&x, len, cols);
        worst = worst.max(max_diff(&spectral::haar_merge(&y, len / 2, cols), &x));
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let band: f64 = y.iter().map(|v| v * v).sum();
        worst = worst.max((energy - band).abs() / energy.max(1.0));
        let n = len - case % 2;
        let (re, im) = spectral::rfft(&x[..n * cols], n, cols);
        worst = worst.max(max_diff(&spectral::irfft(&re, &im, n, cols), &x[..n * cols]));
    }
    Ok((worst < 1e-9, format!("max error {worst:.2e} over {cases} cases")))
}

fn hfa_identity(cases: usize) -> Result<(bool, String)> {
    let mut ps = ParamStore::new();
    let hfa = Hfa::new(&mut Init::new(&mut ps, 2), "hfa", 16, HfaConfig::default())?;
    hfa.set_residual_identity(&mut ps);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let x = Tensor::randn(&[5 + case % 12, 4, 16], &mut rng);
        let mut g = Graph::with_params(&ps);
        let v = g.constant(x.clone());
        let out = hfa.forward(&mut g, v)?;
        worst = worst.max(g.value(out.out).max_abs_diff(&x));
    }
    Ok((worst < 1e-8, format!("max deviation {worst:.2e}")))
}

fn fusion_simplex(cases: usize) -> Result<(bool, String)> {
    let mut ps = ParamStore::new();
    let sfus = SFus::new(&mut Init::new(&mut ps, 4), "sfus", 8, 8, 3, FusionMode::Score)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut interior = true;
    for _ in 0..cases {
        let mut g = Graph::with_params(&ps);
        let feats: Vec<_> = (0..3).map(|_| g.constant(Tensor::randn(&[6, 4, 8], &mut rng))).collect();
        let x = g.constant(Tensor::randn(&[6, 4, 8], &mut rng));
        let cls = g.constant(Tensor::randn(&[8], &mut rng));
        let out = sfus.forward(&mut g, &feats, x, cls)?;
        let alpha = g.value(out.alpha.ok_or_else(|| invalid!("score fusion without weights"))?);
        for row in alpha.data().chunks(3) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            interior &= row.iter().all(|&a| a > 0.0 && a < 1.0);
        }
    }
    Ok((worst < 1e-6 && interior, format!("max |sum - 1| {worst:.2e}, interior {interior}")))
}

fn toy_run_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.model.blocks = 2;
    c.model.dim = 8;
    c.model.joints = 4;
    c.model.frames = 8;
    c.model.stride = 2;
    c.model.heads = 2;
    c.model.d_text = 8;
    c
}

fn end_to_end_gradients() -> Result<(bool, String)> {
    let cfg = toy_run_config();
    let mut state = DenoiserState::new(&cfg.model, &cfg.ccmd, 6)?;
    let enc = PerceptualEncoder::new(cfg.model.joints)?;
    let weights = cfg.loss_weights()?;
    let text = toy_text_encode("walk slow forward", cfg.model.d_text)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x0 = Tensor::randn(&[8, 4, CHANNELS], &mut rng);
    let x_t = Tensor::randn(&[8, 4, CHANNELS], &mut rng);
    let structure = state.clone();
    let coords = Coordinates::Fraction { fraction: 0.01, seed: 8 };
    let report = finite_diff_check(&mut state.params, &coords, 1e-5, 1e-4, |g| {
        let out = structure.forward(g, &x_t, 5, Conditioning::Text(&text), Mode::Train)?;
        let x0v = g.constant(x0.clone());
        let simple = loss_simple(g, x0v, out.x0_hat)?;
        let bundle = out.bundle.as_ref().ok_or_else(|| invalid!("missing causal bundle"))?;
        let fcf = Some(loss_fcf(g, bundle, x0v, &weights.layers)?);
        let perceptual = loss_perceptual(g, x0v, out.x0_hat, &enc)?;
        loss_total(g, &LossParts { simple, fcf, perceptual }, &weights)
    })?;
    Ok((
        report.pass,
        format!("{} coords, max rel err {:.2e}", report.checked, report.max_rel_err),
    ))
}

fn diffusion_contract() -> Result<(bool, String)> {
    let s = DiffusionSchedule::cosine(50)?;
    let decreasing = s.alpha_bars().windows(2).all(|w| w[1] < w[0]);
    let last = s.alpha_bar(50);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = 100_000;
    let t = 20;
    let x0 = Tensor::zeros(&[draws]);
    let eps = Tensor::randn(&[draws], &mut rng);
    let xt = s.q_sample(&x0, t, &eps)?;
    let var = xt.data().iter().map(|v| v * v).sum::<f64>() / draws as f64;
    let rel = (var / (1.0 - s.alpha_bar(t)) - 1.0).abs();
    let target = Tensor::randn(&[8, 2, CHANNELS], &mut rng);
    let mut x = Tensor::randn(target.shape(), &mut rng);
    for step in (1..=50).rev() {
        let noise = Tensor::randn(target.shape(), &mut rng);
        x = s.ddpm_step(&x, &target, step, &noise)?;
    }
    let mse = x.zip_map(&target, |a, b| (a - b) * (a - b))?.mean();
    Ok((
        decreasing && last < 0.01 && rel < 0.02 && mse < 0.05,
        format!("alpha_bar_T {last:.2e}, variance rel err {rel:.2e}, oracle mse {mse:.2e}"),
    ))
}

fn causal_invariance() -> Result<(bool, String)> {
    let cfg = toy_run_config();
    let mut state = DenoiserState::new(&cfg.model, &cfg.ccmd, 10)?;
    let text = toy_text_encode("jump fast left", cfg.model.d_text)?;
    let x = crate::motion::MotionTensor::new(Tensor::randn(&[8, 4, CHANNELS], &mut ChaCha8Rng::seed_from_u64(11)))?;
    let before = state.predict(&x, 7, Conditioning::Text(&text))?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for id in state.ccmd_params() {
        let shape = state.params.get(id).shape().to_vec();
        *state.params.get_mut(id) = Tensor::randn(&shape, &mut rng);
    }
    let after = state.predict(&x, 7, Conditioning::Text(&text))?;
    Ok((before == after, format!("{} causal tensors randomized", state.ccmd_params().len())))
}

fn metric_oracles() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let vocab = Vocab::default();
    let enc = PerceptualEncoder::new(2)?;
    let real = vocab
        .prompts()
        .iter()
        .map(|p| enc.features(synth_clean(p, &vocab, 2, 16)?.tensor()))
        .collect::<Result<Vec<_>>>()?;
    let fid = frechet_distance(&real, &real)?;
    let rand_rows = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..8).map(|_| StandardNormal.sample(rng)).collect()).collect()
    };
    let (n, repeats) = (64, 20);
    let labels: Vec<usize> = (0..n).collect();
    let mut r1 = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let m = rand_rows(n, &mut rng);
        let t = rand_rows(n, &mut rng);
        r1.push(r_precision(&m, &t, &labels, &mut rng)?[0]);
    }
    let ci = Interval::from_samples(&r1)?;
    let p = 1.0 / RETRIEVAL_POOL as f64;
    let band = 3.0 * (p * (1.0 - p) / (n * repeats) as f64).sqrt();
    Ok((
        fid < 1e-6 && (ci.mean - p).abs() <= band,
        format!("FID(self) {fid:.2e}, chance R@1 {ci} (expected {p:.4} +/- {band:.4})"),
    ))
}

/// The invariant suites at reduced case counts.
pub fn run_invariants() -> Vec<Check> {
    vec![
        timed("transforms", || transforms(200)),
        timed("hfa_identity", || hfa_identity(20)),
        timed("fusion_simplex", || fusion_simplex(20)),
        timed("gradients_end_to_end", end_to_end_gradients),
        timed("diffusion_contract", diffusion_contract),
        timed("causal_inference_invariance", causal_invariance),
        timed("metric_oracles", metric_oracles),
    ]
}

/// Named structural variants, each a list of config overrides on a small
/// four-block base model.
pub fn ablation_overrides() -> Vec<(&'static str, &'static str)> {
    vec![
        ("domains_temp_concat", "model.domains = temp\nmodel.fusion = concat\nccmd.domains = temp"),
        ("domains_temp_spa_concat", "model.domains = temp+spa\nmodel.fusion = concat\nccmd.domains = temp+spa"),
        ("domains_temp_freq_concat", "model.domains = temp+freq\nmodel.fusion = concat\nccmd.domains = temp+freq"),
        ("domains_all_concat", "model.fusion = concat"),
        ("full_score_fusion", ""),
        ("without_freq_score", "model.domains = temp+spa\nccmd.domains = temp+spa"),
        ("hfa_without_fft", "hfa.fft = false"),
        ("hfa_without_joint", "hfa.joint = false"),
        ("hfa_without_high", "hfa.high = false"),
        ("ccmd_disabled", "ccmd.enabled = false"),
        ("ccmd_post", "ccmd.placement = post"),
        ("ccmd_temp", "ccmd.domains = temp"),
        ("ccmd_temp_spa", "ccmd.domains = temp+spa"),
        ("ccmd_all", "ccmd.domains = temp+spa+freq"),
        ("weights_last_only", "loss.layer_weights = {0, 0, 0, 1}"),
        ("weights_uniform", "loss.layer_weights = {0.25, 0.25, 0.25, 0.25}"),
        ("weights_ramp", "loss.layer_weights = {0.1, 0.2, 0.3, 0.4}"),
        ("lambda_fcf_0.5", "loss.lambda_fcf = 0.5"),
        ("lambda_fcf_2", "loss.lambda_fcf = 2"),
        ("lambda_p_1", "loss.lambda_p = 1"),
        ("lambda_p_20", "loss.lambda_p = 20"),
        ("without_perceptual", "loss.lambda_p = 0"),
    ]
}

pub fn ablation_base() -> RunConfig {
    let mut c = RunConfig::default();
    c.apply_text("model.J = 4\nmodel.D = 16\nmodel.M = 8\nmodel.frames = 16\nmodel.heads = 2\nmodel.d_text = 16")
        .expect("valid base");
    c
}

/// One training-mode forward/backward with shape and finiteness checks.
pub fn probe_variant(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let m = &cfg.model;
    let state = DenoiserState::new(m, &cfg.ccmd, cfg.seed)?;
    let weights = cfg.loss_weights()?;
    let enc = PerceptualEncoder::new(m.joints)?;
    let vocab = Vocab::default();
    let prompt = "walk slow forward";
    let x0 = synth_clean(prompt, &vocab, m.joints, m.frames)?.into_tensor();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eps = Tensor::randn(x0.shape(), &mut rng);
    let schedule = DiffusionSchedule::cosine(cfg.diffusion.steps)?;
    let x_t = schedule.q_sample(&x0, schedule.steps() / 2, &eps)?;
    let text = toy_text_encode(prompt, m.d_text)?;

    let mut g = Graph::with_params(&state.params);
    let out = state.forward(&mut g, &x_t, schedule.steps() / 2, Conditioning::Text(&text), Mode::Train)?;
    let raw = [m.frames, m.joints, CHANNELS];
    if g.shape(out.x0_hat) != raw {
        return Err(invalid!("prediction shape {:?}, expected {raw:?}", g.shape(out.x0_hat)));
    }
    let expect_alphas = if m.fusion == FusionMode::Score { m.blocks } else { 0 };
    if out.alphas.len() != expect_alphas {
        return Err(invalid!("{} fusion weight sets for {} blocks", out.alphas.len(), m.blocks));
    }
    match (&out.bundle, cfg.ccmd.enabled) {
        (Some(b), true) => {
            if b.layers.len() != m.blocks || b.layers.iter().any(|l| g.shape(l.tde) != raw) {
                return Err(invalid!("causal bundle does not have one raw-shaped decode per block"));
            }
        }
        (None, false) => {}
        _ => return Err(invalid!("causal bundle presence disagrees with ccmd.enabled")),
    }
    let x0v = g.constant(x0);
    let simple = loss_simple(&mut g, x0v, out.x0_hat)?;
    let fcf = match &out.bundle {
        Some(b) => Some(loss_fcf(&mut g, b, x0v, &weights.layers)?),
        None => None,
    };
    let perceptual = loss_perceptual(&mut g, x0v, out.x0_hat, &enc)?;
    let total = loss_total(&mut g, &LossParts { simple, fcf, perceptual }, &weights)?;
    let loss = g.value(total).data()[0];
    g.backward(total)?;
    let mut grads = ParamGrads::zeros_like(&state.params);
    g.accumulate_param_grads(&mut grads, 1.0);
    if !loss.is_finite() || !grads.all_finite() {
        return Err(invalid!("non-finite loss {loss} or gradient"));
    }
    if grads.norm() == 0.0 {
        return Err(invalid!("all gradients are zero"));
    }
    Ok(format!(
        "{} params, loss {loss:.4}, |grad| {:.3e}",
        state.params.num_scalars(),
        grads.norm()
    ))
}

pub fn run_ablations() -> Vec<Check> {
    ablation_overrides()
        .into_iter()
        .map(|(name, text)| {
            timed(&format!("ablation_{name}"), || {
                let mut cfg = ablation_base();
                cfg.apply_text(text)?;
                probe_variant(&cfg).map(|d| (true, d))
            })
        })
        .collect()
}

pub fn selftest(ablations: bool) -> Vec<Check> {
    let mut checks = run_invariants();
    if ablations {
        checks.extend(run_ablations());
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_names_are_unique_and_configs_parse() {
        let list = ablation_overrides();
        let mut names: Vec<_> = list.iter().map(|(n, _)| *n).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), list.len());
        for (_, text) in list {
            let mut cfg = ablation_base();
            cfg.apply_text(text).unwrap();
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn cheap_suites_pass() {
        for check in [timed("t", || transforms(20)), timed("h", || hfa_identity(3)), timed("f", || fusion_simplex(3))] {
            assert!(check.pass, "{check}");
        }
    }
}
