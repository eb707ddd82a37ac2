//! Cosine noise schedule, forward noising, x0-parameterized ancestral
//! sampling steps and classifier-free guidance.
//!
//! Steps are indexed `1..=T`; index 0 is the clean endpoint with
//! `alpha_bar(0) == 1`.

use std::f64::consts::FRAC_PI_2;

use crate::error::{invalid, Error, Result};
use crate::numcore::Tensor;

pub const COSINE_OFFSET: f64 = 0.008;
pub const BETA_MIN: f64 = 1e-8;
pub const BETA_MAX: f64 = 0.999;

/// Which variance the ancestral sampler injects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SamplerVariance {
    /// `beta_t (1 - abar_{t-1}) / (1 - abar_t)`.
    #[default]
    Posterior,
    /// `beta_t`.
    Beta,
}

impl std::str::FromStr for SamplerVariance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "posterior" => Ok(SamplerVariance::Posterior),
            "beta" => Ok(SamplerVariance::Beta),
            other => Err(invalid!("unknown sampler variance `{other}` (posterior|beta)")),
        }
    }
}

impl std::fmt::Display for SamplerVariance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerVariance::Posterior => "posterior",
            SamplerVariance::Beta => "beta",
        })
    }
}

#[derive(Clone, Debug)]
pub struct DiffusionSchedule {
    steps: usize,
    /// `beta[t-1]` is beta_t.
    beta: Vec<f64>,
    /// `alpha_bar[t]` for t in 0..=T.
    alpha_bar: Vec<f64>,
    pub variance: SamplerVariance,
}

fn cosine_f(t: f64, steps: f64) -> f64 {
    let x = ((t / steps + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)) * FRAC_PI_2;
    x.cos().powi(2)
}

impl DiffusionSchedule {
    /// `abar_t = f(t)/f(0)` with `f(t) = cos^2(((t/T + s)/(1+s)) pi/2)`;
    /// betas are clipped to `[1e-8, 0.999]` and `abar` is rebuilt as the
    /// running product of `1 - beta`.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps < 1 {
            return Err(invalid!("diffusion needs at least one step, got {steps}"));
        }
        let tf = steps as f64;
        let f0 = cosine_f(0.0, tf);
        let raw: Vec<f64> = (0..=steps).map(|t| cosine_f(t as f64, tf) / f0).collect();
        let beta: Vec<f64> = (1..=steps)
            .map(|t| (1.0 - raw[t] / raw[t - 1]).clamp(BETA_MIN, BETA_MAX))
            .collect();
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        for b in &beta {
            let prev = *alpha_bar.last().unwrap();
            alpha_bar.push(prev * (1.0 - b));
        }
        Ok(DiffusionSchedule {
            steps,
            beta,
            alpha_bar,
            variance: SamplerVariance::Posterior,
        })
    }

    pub fn with_variance(mut self, variance: SamplerVariance) -> Self {
        self.variance = variance;
        self
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of noising steps (`beta` entries).
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.steps {
            return Err(invalid!("timestep {t} outside [1, {}]", self.steps));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta(t)
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
    pub fn q_sample(&self, x0: &Tensor, t: usize, eps: &Tensor) -> Result<Tensor> {
        self.check_step(t)?;
        if x0.shape() != eps.shape() {
            return Err(Error::shape("q_sample", x0.shape(), eps.shape()));
        }
        let ab = self.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        x0.zip_map(eps, |x, e| a * x + b * e)
    }

    /// Coefficients `(c_x0, c_xt)` of the posterior mean.
    pub fn posterior_coefficients(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t - 1);
        let beta = self.beta(t);
        let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let ct = self.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        (c0, ct)
    }

    /// Standard deviation of the noise injected at step `t` (zero at t = 1).
    pub fn sampler_sigma(&self, t: usize) -> f64 {
        if t <= 1 {
            return 0.0;
        }
        let var = match self.variance {
            SamplerVariance::Posterior => {
                self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))
            }
            SamplerVariance::Beta => self.beta(t),
        };
        var.sqrt()
    }

    /// One ancestral step from `x_t` to `x_{t-1}` given the clean prediction.
    pub fn ddpm_step(&self, x_t: &Tensor, x0_hat: &Tensor, t: usize, noise: &Tensor) -> Result<Tensor> {
        self.check_step(t)?;
        if x_t.shape() != x0_hat.shape() {
            return Err(Error::shape("ddpm_step", x_t.shape(), x0_hat.shape()));
        }
        if x_t.shape() != noise.shape() {
            return Err(Error::shape("ddpm_step noise", x_t.shape(), noise.shape()));
        }
        let (c0, ct) = self.posterior_coefficients(t);
        let sigma = self.sampler_sigma(t);
        let data = x0_hat
            .data()
            .iter()
            .zip(x_t.data())
            .zip(noise.data())
            .map(|((&x0, &xt), &z)| c0 * x0 + ct * xt + sigma * z)
            .collect();
        Tensor::new(x_t.shape(), data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceConfig {
    pub scale: f64,
}

impl GuidanceConfig {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(invalid!("guidance scale must be >= 0, got {scale}"));
        }
        Ok(GuidanceConfig { scale })
    }
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig { scale: 4.0 }
    }
}

/// `uncond + g (cond - uncond)`.
pub fn cfg_combine(pred_cond: &Tensor, pred_uncond: &Tensor, g: f64) -> Result<Tensor> {
    if pred_cond.shape() != pred_uncond.shape() {
        return Err(Error::shape("cfg_combine", pred_cond.shape(), pred_uncond.shape()));
    }
    if g == 1.0 {
        return Ok(pred_cond.clone());
    }
    if g == 0.0 {
        return Ok(pred_uncond.clone());
    }
    pred_cond.zip_map(pred_uncond, |c, u| u + g * (c - u))
}
