//! Guided ancestral sampling and motion export.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{check_compatible, load_checkpoint};
use super::config::RunConfig;
use crate::denoiser::DenoiserState;
use crate::error::{Error, Result};
use crate::motion::{toy_text_encode, Conditioning, MotionTensor, TextCondition, CHANNELS, DEFAULT_JOINTS};
use crate::numcore::{format_value, Tensor};
use crate::schedule::{cfg_combine, DiffusionSchedule};

/// Deterministic RNG for sample `index` of a given seed.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs all `T` reverse steps from Gaussian noise. Each step predicts the
/// clean motion with and without the prompt and combines them with scale `g`.
pub fn sample_motion(
    state: &DenoiserState,
    schedule: &DiffusionSchedule,
    text: &TextCondition,
    guidance: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MotionTensor> {
    let c = &state.config;
    let shape = [c.frames, c.joints, CHANNELS];
    let mut x = MotionTensor::new(Tensor::randn(&shape, rng))?;
    for t in (1..=schedule.steps()).rev() {
        let cond = state.predict(&x, t, Conditioning::Text(text))?;
        let uncond = state.predict(&x, t, Conditioning::Null)?;
        let x0_hat = cfg_combine(cond.tensor(), uncond.tensor(), guidance)?;
        let noise = Tensor::randn(&shape, rng);
        x = MotionTensor::new(schedule.ddpm_step(x.tensor(), &x0_hat, t, &noise)?)?;
    }
    Ok(x)
}

/// Plain-text `(x, z)` series per joint: a `joint <name>` line followed by
/// one `frame x z` line per frame.
pub fn trajectory_text(m: &MotionTensor) -> String {
    let mut out = String::new();
    for j in 0..m.joints() {
        let name = if m.joints() == DEFAULT_JOINTS.len() {
            DEFAULT_JOINTS[j].to_string()
        } else {
            format!("j{j}")
        };
        out.push_str(&format!("joint {name}\n"));
        for f in 0..m.frames() {
            out.push_str(&format!("{f} {} {}\n", format_value(m.get(f, j, 0)), format_value(m.get(f, j, 2))));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct SampleRequest<'a> {
    pub prompt: &'a str,
    pub seed: u64,
    pub count: usize,
    /// Overrides `diffusion.guidance_scale` from the checkpoint.
    pub guidance: Option<f64>,
}

/// Samples `count` motions and writes `sample_<k>.motion` plus
/// `sample_<k>.traj.txt` into `out`.
pub fn sample_to_dir(
    cfg: &RunConfig,
    state: &DenoiserState,
    req: &SampleRequest,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    if req.count == 0 {
        return Err(crate::error::invalid!("sample count must be >= 1"));
    }
    let g = req.guidance.unwrap_or(cfg.diffusion.guidance_scale);
    if !(g >= 0.0) {
        return Err(crate::error::invalid!("guidance scale must be >= 0, got {g}"));
    }
    let schedule = DiffusionSchedule::cosine(cfg.diffusion.steps)?.with_variance(cfg.diffusion.variance);
    let text = toy_text_encode(req.prompt, cfg.model.d_text)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::with_capacity(req.count);
    for k in 0..req.count {
        let mut rng = sample_rng(req.seed, k as u64);
        let m = sample_motion(state, &schedule, &text, g, &mut rng)?;
        let path = out.join(format!("sample_{k:03}.motion"));
        m.tensor().save(&path)?;
        let traj = out.join(format!("sample_{k:03}.traj.txt"));
        std::fs::write(&traj, trajectory_text(&m)).map_err(|e| Error::io(&traj, e))?;
        written.push(path);
    }
    Ok(written)
}

/// `tric sample`: loads the checkpoint, checks it against an optional
/// runtime config and samples.
pub fn sample_cmd(ckpt: &Path, runtime: Option<&RunConfig>, req: &SampleRequest, out: &Path) -> Result<Vec<PathBuf>> {
    let (cfg, state) = load_checkpoint(ckpt)?;
    if let Some(rt) = runtime {
        check_compatible(&cfg, rt)?;
    }
    sample_to_dir(&cfg, &state, req, out)
}
