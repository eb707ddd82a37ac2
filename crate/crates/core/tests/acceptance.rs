//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line straight to stderr so the outcome is
//! visible without `--nocapture`. A global lock serializes the tests so the
//! wall-clock budgets are measured on an otherwise idle core.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tric::causal::{intervene, CcmdConfig, Gate, Mode};
use tric::denoiser::{dwt_haar, idwt_haar, irfft_frames, rfft_frames, DenoiserState, FusionMode, Hfa, HfaConfig, ModelConfig, SFus, Stm, Tij, Tme};
use tric::harness::{
    frechet_distance, psd_sqrt, r_precision, sample_motion, sample_rng, train, Interval, RunConfig, RETRIEVAL_POOL,
};
use tric::motion::{default_skeleton, toy_text_encode, Conditioning, MotionTensor, TokenEmbedder, CHANNELS};
use tric::nn::{Init, Linear};
use tric::numcore::{finite_diff_check, Coordinates, GradCheckReport, Graph, ParamId, ParamStore, Tensor, Var};
use tric::objective::{loss_fcf, loss_perceptual, loss_simple, loss_total, LossParts, PerceptualEncoder};
use tric::schedule::DiffusionSchedule;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|p| p.into_inner())
}

fn report(n: usize, name: &str, pass: bool, elapsed: Duration, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n}: {tag} {name} [{:.2}s] {detail}\n", elapsed.as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{}", line.trim_end());
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn_vec(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

// ---------------------------------------------------------------- 1

/// Quadratic-time DFT of column 0 of a `[len, cols]` buffer.
fn naive_dft(x: &[f64], len: usize, cols: usize, col: usize) -> Vec<(f64, f64)> {
    (0..=len / 2)
        .map(|k| {
            let mut acc = (0.0, 0.0);
            for n in 0..len {
                let th = -2.0 * std::f64::consts::PI * (k * n) as f64 / len as f64;
                acc.0 += x[n * cols + col] * th.cos();
                acc.1 += x[n * cols + col] * th.sin();
            }
            acc
        })
        .collect()
}

#[test]
fn criterion_1_transform_exactness() {
    let _g = serial();
    let t0 = Instant::now();
    let mut r = rng(101);
    let (mut round, mut parseval, mut oracle) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..1000 {
        let len = r.random_range(2..=40usize);
        let cols = r.random_range(1..=6usize);
        let x = Tensor::new(&[len, cols], randn_vec(len * cols, &mut r)).unwrap();

        let (lo, hi) = dwt_haar(&x).unwrap();
        round = round.max(idwt_haar(&lo, &hi, len).unwrap().max_abs_diff(&x));
        // Haar is orthonormal on the edge-padded signal
        let mut padded_energy: f64 = x.data().iter().map(|v| v * v).sum();
        if len % 2 == 1 {
            padded_energy += x.data()[(len - 1) * cols..].iter().map(|v| v * v).sum::<f64>();
        }
        let band_energy: f64 = lo.data().iter().chain(hi.data()).map(|v| v * v).sum();
        parseval = parseval.max((padded_energy - band_energy).abs() / padded_energy);
        for k in 0..lo.shape()[0] {
            let a = x.data()[2 * k * cols];
            let b = x.data()[(2 * k + 1).min(len - 1) * cols];
            oracle = oracle.max((lo.data()[k * cols] - (a + b) / 2f64.sqrt()).abs());
            oracle = oracle.max((hi.data()[k * cols] - (a - b) / 2f64.sqrt()).abs());
        }

        let (re, im) = rfft_frames(&x).unwrap();
        round = round.max(irfft_frames(&re, &im, len).unwrap().max_abs_diff(&x));
        let energy: f64 = x.data().iter().map(|v| v * v).sum();
        let bins = re.shape()[0];
        let mut spec = 0.0;
        for k in 0..bins {
            let mult = if k == 0 || (len % 2 == 0 && k == len / 2) { 1.0 } else { 2.0 };
            for c in 0..cols {
                let (a, b) = (re.data()[k * cols + c], im.data()[k * cols + c]);
                spec += mult * (a * a + b * b);
            }
        }
        parseval = parseval.max((energy - spec / len as f64).abs() / energy);
        if case % 10 == 0 {
            for (k, (a, b)) in naive_dft(x.data(), len, cols, 0).into_iter().enumerate() {
                oracle = oracle.max((re.data()[k * cols] - a).abs().max((im.data()[k * cols] - b).abs()));
            }
        }
    }
    let el = t0.elapsed();
    let pass = round < 1e-9 && parseval < 1e-9 && oracle < 1e-9 && el < Duration::from_secs(5);
    report(
        1,
        "transform exactness",
        pass,
        el,
        &format!("1000 cases: round-trip {round:.2e}, Parseval {parseval:.2e}, vs naive {oracle:.2e}"),
    );
}

// ---------------------------------------------------------------- 2

fn zero_params(ps: &mut ParamStore, names: &[&str]) {
    for n in names {
        let id = ps.id(n).unwrap_or_else(|| panic!("no parameter {n}"));
        ps.get_mut(id).data_mut().fill(0.0);
    }
}

#[test]
fn criterion_2_hfa_identity() {
    let _g = serial();
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut r = rng(202);
    for case in 0..100u64 {
        let dim = 8 * (1 + case as usize % 3);
        let mut ps = ParamStore::new();
        let hfa = Hfa::new(&mut Init::new(&mut ps, case), "hfa", dim, HfaConfig::default()).unwrap();
        zero_params(
            &mut ps,
            &["hfa.low.proj.w", "hfa.low.proj.b", "hfa.high.gn.gamma", "hfa.high.gn.beta"],
        );
        let frames = r.random_range(2..=20usize);
        let joints = r.random_range(1..=8usize);
        let x = Tensor::randn(&[frames, joints, dim], &mut r);
        let mut g = Graph::with_params(&ps);
        let v = g.constant(x.clone());
        let out = hfa.forward(&mut g, v).unwrap();
        worst = worst.max(g.value(out.out).max_abs_diff(&x));
    }
    let el = t0.elapsed();
    report(
        2,
        "HFA identity",
        worst < 1e-8 && el < Duration::from_secs(5),
        el,
        &format!("100 inputs, max |hfa(X) - X| {worst:.2e}"),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_fusion_simplex() {
    let _g = serial();
    let t0 = Instant::now();
    let (dim, d_text) = (8, 8);
    let mut ps = ParamStore::new();
    let sfus = SFus::new(&mut Init::new(&mut ps, 3), "sfus", dim, d_text, 3, FusionMode::Score).unwrap();
    let mut r = rng(303);
    let (mut sum_err, mut inside) = (0.0f64, true);
    for _ in 0..100 {
        let (l, m) = (r.random_range(1..=10usize), r.random_range(1..=8usize));
        let mut g = Graph::with_params(&ps);
        let feats: Vec<Var> = (0..3).map(|_| g.constant(Tensor::randn(&[l, m, dim], &mut r))).collect();
        let x = g.constant(Tensor::randn(&[l, m, dim], &mut r));
        let cls = g.constant(Tensor::randn(&[d_text], &mut r));
        let out = sfus.forward(&mut g, &feats, x, cls).unwrap();
        for row in g.value(out.alpha.unwrap()).data().chunks(3) {
            sum_err = sum_err.max((row.iter().sum::<f64>() - 1.0).abs());
            inside &= row.iter().all(|&a| a > 0.0 && a < 1.0);
        }
    }
    // zero output layers of both scorers: every logit is exactly 0
    zero_params(&mut ps, &["sfus.f_mot.1.w", "sfus.f_mot.1.b", "sfus.f_sem.1.w", "sfus.f_sem.1.b"]);
    let mut g = Graph::with_params(&ps);
    let feats: Vec<Var> = (0..3).map(|_| g.constant(Tensor::randn(&[4, 3, dim], &mut r))).collect();
    let x = g.constant(Tensor::randn(&[4, 3, dim], &mut r));
    let cls = g.constant(Tensor::randn(&[d_text], &mut r));
    let out = sfus.forward(&mut g, &feats, x, cls).unwrap();
    let uniform = g
        .value(out.alpha.unwrap())
        .data()
        .iter()
        .map(|a| (a - 1.0 / 3.0).abs())
        .fold(0.0, f64::max);
    let el = t0.elapsed();
    report(
        3,
        "fusion simplex",
        sum_err < 1e-6 && inside && uniform < 1e-9,
        el,
        &format!("max |sum - 1| {sum_err:.2e}, all in (0,1): {inside}, uniform-logit error {uniform:.2e}"),
    );
}

// ---------------------------------------------------------------- 4

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

/// Registers a random input tensor as a parameter so its gradient is
/// checked along with the block's weights, then checks `sum(f(x) * probe)`.
fn check_block<F>(ps: &mut ParamStore, input_shape: &[usize], seed: u64, f: F) -> GradCheckReport
where
    F: Fn(&mut Graph, Var) -> tric::Result<Var>,
{
    let mut r = rng(seed);
    let input = ps.add("input", Tensor::randn(input_shape, &mut r)).unwrap();
    let probe_seed: u64 = r.random();
    finite_diff_check(ps, &Coordinates::All, FD_STEP, FD_TOL, |g| {
        let x = g.param(input);
        let y = f(g, x)?;
        let probe = g.constant(Tensor::randn(g.shape(y), &mut rng(probe_seed)));
        let p = g.mul(y, probe)?;
        Ok(g.sum_all(p))
    })
    .unwrap()
}

fn toy_model() -> ModelConfig {
    ModelConfig {
        blocks: 2,
        dim: 8,
        joints: 4,
        frames: 8,
        stride: 2,
        heads: 2,
        d_text: 8,
        ..Default::default()
    }
}

#[test]
fn criterion_4_gradient_correctness() {
    let _g = serial();
    let t0 = Instant::now();
    let (d, m, l, dt) = (8usize, 4usize, 6usize, 8usize);
    let sk = default_skeleton(m).unwrap();
    let text = toy_text_encode("walk fast left", dt).unwrap();
    let mut results: Vec<(String, GradCheckReport)> = Vec::new();
    let mut push = |name: &str, rep: GradCheckReport| results.push((name.to_string(), rep));

    let mut ps = ParamStore::new();
    let tme = Tme::new(&mut Init::new(&mut ps, 1), "tme", d, 2, 2).unwrap();
    push("TME", check_block(&mut ps, &[l, m, d], 11, |g, x| Ok(tme.forward(g, x)?.out)));

    let mut ps = ParamStore::new();
    let stm = Stm::new(&mut Init::new(&mut ps, 2), "stm", d, &sk.a_hat).unwrap();
    push("STM", check_block(&mut ps, &[l, m, d], 12, |g, x| stm.forward(g, x)));

    for (tag, cfg, frames) in [
        ("HFA", HfaConfig::default(), l),
        ("HFA odd frames", HfaConfig::default(), 7),
        ("HFA w/o FFT", HfaConfig { fft: false, ..Default::default() }, l),
        ("HFA w/o joint", HfaConfig { joint: false, ..Default::default() }, l),
        ("HFA w/o high", HfaConfig { high: false, ..Default::default() }, l),
    ] {
        let mut ps = ParamStore::new();
        let hfa = Hfa::new(&mut Init::new(&mut ps, 3), "hfa", d, cfg).unwrap();
        push(tag, check_block(&mut ps, &[frames, m, d], 13, |g, x| Ok(hfa.forward(g, x)?.out)));
    }

    for (tag, mode) in [("S-Fus", FusionMode::Score), ("S-Fus concat", FusionMode::Concat)] {
        let mut ps = ParamStore::new();
        let sfus = SFus::new(&mut Init::new(&mut ps, 4), "sfus", d, dt, 3, mode).unwrap();
        let mut r = rng(14);
        let extra: Vec<ParamId> = (0..3)
            .map(|i| ps.add(format!("feat{i}"), Tensor::randn(&[l, m, d], &mut r)).unwrap())
            .collect();
        let cls = ps.add("cls", Tensor::randn(&[dt], &mut r)).unwrap();
        push(
            tag,
            check_block(&mut ps, &[l, m, d], 15, |g, x| {
                let feats: Vec<Var> = extra.iter().map(|&id| g.param(id)).collect();
                let c = g.param(cls);
                Ok(sfus.forward(g, &feats, x, c)?.out)
            }),
        );
    }

    let mut ps = ParamStore::new();
    let tij = Tij::new(&mut Init::new(&mut ps, 5), "tij", d, dt, 2).unwrap();
    let tau = ps.add("tau", Tensor::randn(&[3, dt], &mut rng(16))).unwrap();
    push(
        "TIJ",
        check_block(&mut ps, &[l, m, d], 17, |g, x| {
            let t = g.param(tau);
            Ok(tij.forward(g, x, t)?.0)
        }),
    );

    let mut ps = ParamStore::new();
    let embed = TokenEmbedder::new(&mut Init::new(&mut ps, 6), d, dt).unwrap();
    push(
        "token embedding",
        check_block(&mut ps, &[8, m, CHANNELS], 18, |g, x| {
            let (cls, _) = embed.condition(g, Conditioning::Text(&text))?;
            let h = embed.embed_motion(g, x, 2)?;
            embed.assemble_tokens(g, h, 9, cls)
        }),
    );

    let mut ps = ParamStore::new();
    let mut init = Init::new(&mut ps, 7);
    let fact = Gate::new(&mut init, "fact", d).unwrap();
    let cf = Gate::new(&mut init, "cf", d).unwrap();
    let w_do = Linear::no_bias(&mut init, "w_do", d, d).unwrap();
    push(
        "CCMD gates + intervention",
        check_block(&mut ps, &[l, m, d], 19, |g, x| {
            let (e, _) = fact.extract(g, x)?;
            let (c, _) = cf.extract(g, x)?;
            intervene(g, e, c, &w_do)
        }),
    );

    let enc = PerceptualEncoder::new(m).unwrap();
    let target = Tensor::randn(&[8, m, CHANNELS], &mut rng(20));
    let mut ps = ParamStore::new();
    push(
        "perceptual loss",
        check_block(&mut ps, &[8, m, CHANNELS], 21, |g, x| {
            let t = g.constant(target.clone());
            loss_perceptual(g, t, x, &enc)
        }),
    );

    // end to end: J=2, D=8, M=4, N_raw=8, L_total, 1% of parameters
    let cfg = RunConfig {
        model: ModelConfig { blocks: 2, ..toy_model() },
        ..Default::default()
    };
    let mut state = DenoiserState::new(&cfg.model, &cfg.ccmd, 22).unwrap();
    let weights = cfg.loss_weights().unwrap();
    let mut r = rng(23);
    let x0 = Tensor::randn(&[8, 4, CHANNELS], &mut r);
    let x_t = Tensor::randn(&[8, 4, CHANNELS], &mut r);
    let structure = state.clone();
    let e2e = finite_diff_check(
        &mut state.params,
        &Coordinates::Fraction { fraction: 0.01, seed: 24 },
        FD_STEP,
        FD_TOL,
        |g| {
            let out = structure.forward(g, &x_t, 17, Conditioning::Text(&text), Mode::Train)?;
            let x0v = g.constant(x0.clone());
            let simple = loss_simple(g, x0v, out.x0_hat)?;
            let fcf = Some(loss_fcf(g, out.bundle.as_ref().unwrap(), x0v, &weights.layers)?);
            let perceptual = loss_perceptual(g, x0v, out.x0_hat, &enc)?;
            loss_total(g, &LossParts { simple, fcf, perceptual }, &weights)
        },
    )
    .unwrap();
    push("end-to-end L_total (1%)", e2e);

    let el = t0.elapsed();
    let failing: Vec<String> = results
        .iter()
        .filter(|(_, r)| !r.pass)
        .map(|(n, r)| format!("{n} ({:.2e} at {:?})", r.max_rel_err, r.worst))
        .collect();
    let worst = results.iter().map(|(_, r)| r.max_rel_err).fold(0.0, f64::max);
    let coords: usize = results.iter().map(|(_, r)| r.checked).sum();
    report(
        4,
        "gradient correctness",
        failing.is_empty() && el < Duration::from_secs(120),
        el,
        &format!(
            "{} checks, {coords} coordinates, worst rel err {worst:.2e}; failing: {failing:?}",
            results.len()
        ),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_diffusion_contract() {
    let _g = serial();
    let t0 = Instant::now();
    let s = DiffusionSchedule::cosine(50).unwrap();
    let decreasing = (1..=50).all(|t| s.alpha_bar(t) < s.alpha_bar(t - 1));
    let last = s.alpha_bar(50);
    let mut r = rng(505);
    let draws = 100_000;
    let mut worst_var: f64 = 0.0;
    for t in [1, 10, 25, 40, 50] {
        let x0 = Tensor::full(&[draws], 0.7);
        let eps = Tensor::randn(&[draws], &mut r);
        let xt = s.q_sample(&x0, t, &eps).unwrap();
        let mean = xt.mean();
        let var = xt.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        worst_var = worst_var.max((var / (1.0 - s.alpha_bar(t)) - 1.0).abs());
    }
    let mut worst_mse: f64 = 0.0;
    for trial in 0..10 {
        let target = Tensor::randn(&[16, 4, CHANNELS], &mut r);
        let mut x = Tensor::randn(target.shape(), &mut r);
        for t in (1..=50).rev() {
            // oracle denoiser: always predicts the true clean sample
            let noise = Tensor::randn(target.shape(), &mut rng(trial * 1000 + t as u64));
            x = s.ddpm_step(&x, &target, t, &noise).unwrap();
        }
        worst_mse = worst_mse.max(x.zip_map(&target, |a, b| (a - b).powi(2)).unwrap().mean());
    }
    let el = t0.elapsed();
    report(
        5,
        "diffusion contract",
        decreasing && last < 0.01 && worst_var < 0.02 && worst_mse < 0.05,
        el,
        &format!(
            "strictly decreasing {decreasing}, alpha_bar_50 {last:.3e}, variance rel err {worst_var:.2e}, oracle MSE {worst_mse:.2e}"
        ),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_ccmd_inference_invariance() {
    let _g = serial();
    let t0 = Instant::now();
    let cfg = toy_model();
    let mut state = DenoiserState::new(&cfg, &CcmdConfig::default(), 61).unwrap();
    let schedule = DiffusionSchedule::cosine(10).unwrap();
    let text = toy_text_encode("kick slow backward", cfg.d_text).unwrap();
    let draw = |s: &DenoiserState| sample_motion(s, &schedule, &text, 4.0, &mut sample_rng(62, 0)).unwrap();
    let before = draw(&state);
    let mut r = rng(63);
    let mut randomized = 0;
    for id in state.ccmd_params() {
        let shape = state.params.get(id).shape().to_vec();
        *state.params.get_mut(id) = Tensor::randn(&shape, &mut r).map(|v| 3.0 * v);
        randomized += 1;
    }
    let after = draw(&state);
    let sample_invariant = before == after;

    let mut ps = ParamStore::new();
    let w = Linear::no_bias(&mut Init::new(&mut ps, 64), "w_do", 8, 8).unwrap();
    let mut g = Graph::with_params(&ps);
    let e = Tensor::randn(&[5, 4, 8], &mut r);
    let c = Tensor::randn(&[5, 4, 8], &mut r);
    let ev = g.constant(e.clone());
    let cv = g.constant(c.clone());
    let zero = intervene(&mut g, ev, ev, &w).unwrap();
    let cancels = g.value(zero).data().iter().all(|&v| v == 0.0);
    let base = intervene(&mut g, ev, cv, &w).unwrap();
    let base_t = g.value(base).clone();
    let mut scale_exact = true;
    for a in [2.0, 0.5, -4.0] {
        let ea = g.constant(e.map(|v| a * v));
        let ca = g.constant(c.map(|v| a * v));
        let y = intervene(&mut g, ea, ca, &w).unwrap();
        scale_exact &= g.value(y) == &base_t.map(|v| a * v);
    }
    let swapped = intervene(&mut g, cv, ev, &w).unwrap();
    let antisymmetric = g.value(swapped) == &base_t.map(|v| -v);
    // additivity in each slot; sums reassociate, so compare to rounding
    let e2 = Tensor::randn(&[5, 4, 8], &mut r);
    let e2v = g.constant(e2.clone());
    let sum = g.constant(e.zip_map(&e2, |a, b| a + b).unwrap());
    let lhs = intervene(&mut g, sum, cv, &w).unwrap();
    let zeros = g.constant(Tensor::zeros(&[5, 4, 8]));
    let part = intervene(&mut g, e2v, zeros, &w).unwrap();
    let rhs = g.add(base, part).unwrap();
    let additive = g.value(lhs).max_abs_diff(g.value(rhs));

    let el = t0.elapsed();
    report(
        6,
        "CCMD inference invariance",
        sample_invariant && cancels && scale_exact && antisymmetric && additive < 1e-12,
        el,
        &format!(
            "samples bit-identical after randomizing {randomized} tensors: {sample_invariant}; E==C -> 0: {cancels}; \
             scaling exact: {scale_exact}; swap negates: {antisymmetric}; additivity err {additive:.1e}"
        ),
    );
}

// ---------------------------------------------------------------- 7

fn smoke_config(ccmd: bool) -> RunConfig {
    let mut c = RunConfig::default();
    c.apply_text(
        "model.J = 2\nmodel.D = 32\nmodel.M = 8\nmodel.frames = 64\nmodel.s = 4\n\
         data.corpus_size = 8\noptim.batch = 4\noptim.iters = 2000\noptim.lr = 2e-3\n\
         train.checkpoint_every = 0\nseed = 7",
    )
    .unwrap();
    c.ccmd.enabled = ccmd;
    c
}

fn features(enc: &PerceptualEncoder, ms: &[Tensor]) -> Vec<Vec<f64>> {
    ms.iter().map(|m| enc.features(m).unwrap()).collect()
}

fn mean_pairwise(f: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for i in 0..f.len() {
        for j in i + 1..f.len() {
            total += f[i].iter().zip(&f[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            n += 1;
        }
    }
    total / n as f64
}

#[test]
fn criterion_7_overfit_smoke() {
    let _g = serial();
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let on_cfg = smoke_config(true);
    let (trainer, on) = train(&on_cfg, &dir.path().join("on")).unwrap();
    let (_, off) = train(&smoke_config(false), &dir.path().join("off")).unwrap();
    let (final_on, final_off) = (on.tail_simple(100), off.tail_simple(100));

    let schedule = DiffusionSchedule::cosine(on_cfg.diffusion.steps).unwrap();
    let mut worst = [0.0f64; 2];
    let mut generated = Vec::new();
    for (slot, g) in [1.0, 4.0].into_iter().enumerate() {
        for (i, item) in trainer.items.iter().enumerate() {
            let x = sample_motion(&trainer.state, &schedule, &item.text, g, &mut sample_rng(70, i as u64)).unwrap();
            let mse = x.tensor().zip_map(item.motion.tensor(), |a, b| (a - b).powi(2)).unwrap().mean();
            worst[slot] = worst[slot].max(mse);
            if slot == 0 {
                generated.push(x.into_tensor());
            }
        }
    }
    let enc = PerceptualEncoder::new(on_cfg.model.joints).unwrap();
    let real: Vec<Tensor> = trainer.items.iter().map(|it| it.motion.tensor().clone()).collect();
    let mut r = rng(71);
    let noise: Vec<Tensor> = real.iter().map(|m| Tensor::randn(m.shape(), &mut r)).collect();
    let (fr, fg, fnz) = (features(&enc, &real), features(&enc, &generated), features(&enc, &noise));
    let fid_gen = frechet_distance(&fr, &fg).unwrap();
    let fid_noise = frechet_distance(&fr, &fnz).unwrap();
    let (div_gen, div_noise) = (mean_pairwise(&fg), mean_pairwise(&fnz));

    let el = t0.elapsed();
    let pass = final_on < 0.05
        && worst[0] < 0.1
        && final_on <= 1.1 * final_off
        && fid_noise > fid_gen
        && el < Duration::from_secs(600);
    report(
        7,
        "overfit smoke",
        pass,
        el,
        &format!(
            "L_simple (mean of last 100 iters) ccmd on {final_on:.4}, off {final_off:.4}; \
             worst sample MSE g=1 {:.4} (g=4 {:.4}); FID real-vs-samples {fid_gen:.3} < real-vs-noise {fid_noise:.3}; \
             info: diversity samples {div_gen:.3}, noise {div_noise:.3}",
            worst[0], worst[1]
        ),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_8_ablation_drivability() {
    let _g = serial();
    let t0 = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_tric"))
        .args(["selftest", "--ablations"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let ablations: Vec<&str> = stdout.lines().filter(|l| l.contains(" ablation_")).collect();
    let passed = ablations.iter().filter(|l| l.starts_with("PASS")).count();
    let required = [
        "domains_temp_concat",
        "domains_temp_spa_concat",
        "domains_temp_freq_concat",
        "domains_all_concat",
        "full_score_fusion",
        "hfa_without_fft",
        "hfa_without_joint",
        "hfa_without_high",
        "ccmd_disabled",
        "ccmd_post",
        "ccmd_temp",
        "ccmd_temp_spa",
        "ccmd_all",
        "weights_last_only",
        "weights_uniform",
        "weights_ramp",
    ];
    let missing: Vec<&str> = required
        .iter()
        .copied()
        .filter(|n| !ablations.iter().any(|l| l.contains(&format!("ablation_{n} "))))
        .collect();
    let el = t0.elapsed();
    report(
        8,
        "ablation drivability",
        out.status.success() && passed == ablations.len() && missing.is_empty() && el < Duration::from_secs(120),
        el,
        &format!("{passed}/{} variants built and stepped via config; missing {missing:?}", ablations.len()),
    );
}

// ---------------------------------------------------------------- 9

fn denman_beavers(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (mut y, mut z) = (a.clone(), DMatrix::identity(a.nrows(), a.ncols()));
    for _ in 0..60 {
        let yi = y.clone().try_inverse().unwrap();
        let zi = z.clone().try_inverse().unwrap();
        y = (&y + zi) * 0.5;
        z = (&z + yi) * 0.5;
    }
    y
}

#[test]
fn criterion_9_metric_oracles() {
    let _g = serial();
    let t0 = Instant::now();
    let mut r = rng(909);
    let mut sqrt_err: f64 = 0.0;
    for _ in 0..20 {
        let b = DMatrix::<f64>::from_fn(8, 8, |_, _| StandardNormal.sample(&mut r));
        let spd = &b * b.transpose() + DMatrix::identity(8, 8);
        sqrt_err = sqrt_err.max((psd_sqrt(&spd) - denman_beavers(&spd)).amax());
    }
    let set: Vec<Vec<f64>> = (0..200).map(|_| randn_vec(16, &mut r)).collect();
    let fid_self = frechet_distance(&set, &set).unwrap();

    let (n, repeats) = (256usize, 20usize);
    let labels: Vec<usize> = (0..n).collect();
    let mut top1 = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        // text embeddings are drawn independently of the motions
        let motions: Vec<Vec<f64>> = (0..n).map(|_| randn_vec(16, &mut r)).collect();
        let texts: Vec<Vec<f64>> = (0..n).map(|_| randn_vec(16, &mut r)).collect();
        top1.push(r_precision(&motions, &texts, &labels, &mut r).unwrap()[0]);
    }
    let ci = Interval::from_samples(&top1).unwrap();
    let p = 1.0 / RETRIEVAL_POOL as f64;
    let sigma = (p * (1.0 - p) / (n * repeats) as f64).sqrt();
    let el = t0.elapsed();
    report(
        9,
        "metric oracles",
        fid_self < 1e-6 && sqrt_err < 1e-8 && (ci.mean - p).abs() <= 3.0 * sigma,
        el,
        &format!(
            "FID(set, set) {fid_self:.2e}; sqrt vs Denman-Beavers {sqrt_err:.2e}; chance R@1 repeated {repeats} times {ci} \
             (1/32 = {p:.4}, 3 sigma = {:.4})",
            3.0 * sigma
        ),
    );
}

// ---------------------------------------------------------------- 10

fn run_tric(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_tric")).args(args).output().unwrap();
    assert!(out.status.success(), "tric {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (p.file_name().unwrap().to_string_lossy().to_string(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_10_determinism() {
    let _g = serial();
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "# determinism run\nmodel.J = 2\nmodel.D = 8\nmodel.M = 4\nmodel.frames = 16\nmodel.heads = 2\nmodel.d_text = 16\n\
         diffusion.T = 10\ndata.corpus_size = 6\noptim.batch = 3\noptim.iters = 25\noptim.lr = 1e-3\ntrain.checkpoint_every = 10\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let out_s = out.to_str().unwrap();
        run_tric(&["train", "--config", cfg_path.to_str().unwrap(), "--seed", "5", "--out", out_s]);
        let samples = out.join("samples");
        run_tric(&[
            "sample",
            "--ckpt",
            out.join("model.ckpt").to_str().unwrap(),
            "--prompt",
            "wave fast right",
            "--seed",
            "9",
            "--count",
            "3",
            "--out",
            samples.to_str().unwrap(),
        ]);
        outputs.push((std::fs::read(out.join("losses.csv")).unwrap(), files_in(&samples), files_in(&out)));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    let logs_equal = a.0 == b.0 && a.0.len() > 100;
    let motions = a.1.iter().filter(|(n, _)| n.ends_with(".motion")).count();
    let samples_equal = a.1 == b.1 && motions == 3;
    let run_dirs_equal = a.2.iter().filter(|(n, _)| n.ends_with(".ckpt")).collect::<Vec<_>>()
        == b.2.iter().filter(|(n, _)| n.ends_with(".ckpt")).collect::<Vec<_>>();
    let el = t0.elapsed();
    report(
        10,
        "determinism",
        logs_equal && samples_equal && run_dirs_equal,
        el,
        &format!(
            "losses.csv identical: {logs_equal}; {motions} motion + trajectory files identical: {samples_equal}; checkpoints identical: {run_dirs_equal}"
        ),
    );
}

#[test]
fn smoke_corpus_has_eight_distinct_prompts() {
    let _g = serial();
    let cfg = smoke_config(true);
    let items = tric::harness::load_training_corpus(&cfg).unwrap();
    let mut prompts: Vec<_> = items.iter().map(|i| i.prompt.clone()).collect();
    prompts.sort();
    prompts.dedup();
    assert_eq!(items.len(), 8);
    assert_eq!(prompts.len(), 8);
    let _ = MotionTensor::zeros(1, 1);
}
