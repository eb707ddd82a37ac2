//! Denoiser training loop.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::save_checkpoint;
use super::config::RunConfig;
use super::optim::AdamW;
use crate::causal::Mode;
use crate::denoiser::DenoiserState;
use crate::error::{Error, Result};
use crate::motion::{read_corpus, synth_dataset, toy_text_encode, Conditioning, MotionTensor, TextCondition, Vocab};
use crate::numcore::{format_value, Graph, ParamGrads, Tensor};
use crate::objective::{loss_fcf, loss_perceptual, loss_simple, loss_total, LossParts, LossWeights, PerceptualEncoder};
use crate::schedule::DiffusionSchedule;

pub const LOSS_HEADER: &str = "iter,total,simple,fcf,perceptual";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "losses.csv";

/// Batch means of each loss term at one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    pub total: f64,
    pub simple: f64,
    pub fcf: f64,
    pub perceptual: f64,
}

impl StepLosses {
    pub fn csv_row(&self, iter: usize) -> String {
        format!(
            "{iter},{},{},{},{}",
            format_value(self.total),
            format_value(self.simple),
            format_value(self.fcf),
            format_value(self.perceptual)
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainItem {
    pub prompt: String,
    pub text: TextCondition,
    pub motion: MotionTensor,
}

/// Generates the synthetic corpus from the run seed, or reads `data.corpus`.
pub fn load_training_corpus(cfg: &RunConfig) -> Result<Vec<TrainItem>> {
    let m = &cfg.model;
    let pairs: Vec<(String, MotionTensor)> = match &cfg.corpus {
        Some(dir) => read_corpus(dir)?.into_iter().map(|c| (c.prompt, c.motion)).collect(),
        None => synth_dataset(cfg.seed, cfg.corpus_size, m.joints, m.frames, &Vocab::default())?,
    };
    pairs
        .into_iter()
        .map(|(prompt, motion)| {
            if motion.frames() != m.frames || motion.joints() != m.joints {
                return Err(Error::shape(
                    "corpus motion",
                    motion.tensor().shape(),
                    &[m.frames, m.joints, crate::motion::CHANNELS],
                ));
            }
            let text = toy_text_encode(&prompt, m.d_text)?;
            Ok(TrainItem { prompt, text, motion })
        })
        .collect()
}

/// One item of a batch as fed to the denoiser.
#[derive(Clone, Debug)]
struct Draw {
    item: usize,
    t: usize,
    dropped: bool,
    x_t: Tensor,
}

pub struct Trainer {
    pub config: RunConfig,
    pub state: DenoiserState,
    pub items: Vec<TrainItem>,
    pub schedule: DiffusionSchedule,
    pub weights: LossWeights,
    pub encoder: PerceptualEncoder,
    opt: AdamW,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    iter: usize,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        let items = load_training_corpus(&config)?;
        Self::with_items(config, items)
    }

    pub fn with_items(config: RunConfig, items: Vec<TrainItem>) -> Result<Self> {
        config.validate()?;
        if items.is_empty() {
            return Err(Error::Config("training corpus is empty".into()));
        }
        let state = DenoiserState::new(&config.model, &config.ccmd, config.seed)?;
        let o = &config.optim;
        let opt = AdamW::new(&state.params, o.lr, (o.beta1, o.beta2), o.eps, o.weight_decay)?;
        let schedule = DiffusionSchedule::cosine(config.diffusion.steps)?.with_variance(config.diffusion.variance);
        let weights = config.loss_weights()?;
        let encoder = PerceptualEncoder::new(config.model.joints)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed_0001));
        Ok(Trainer {
            order: (0..items.len()).collect(),
            cursor: items.len(),
            config,
            state,
            items,
            schedule,
            weights,
            encoder,
            opt,
            rng,
            iter: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    fn next_item(&mut self) -> usize {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    fn draw_batch(&mut self) -> Result<Vec<Draw>> {
        let steps = self.schedule.steps();
        let p_drop = self.config.diffusion.cond_dropout;
        let mut batch = Vec::with_capacity(self.config.optim.batch);
        for _ in 0..self.config.optim.batch {
            let item = self.next_item();
            let t = self.rng.random_range(1..=steps);
            let dropped = self.rng.random::<f64>() < p_drop;
            let x0 = self.items[item].motion.tensor();
            let eps = Tensor::randn(x0.shape(), &mut self.rng);
            let x_t = self.schedule.q_sample(x0, t, &eps)?;
            batch.push(Draw { item, t, dropped, x_t });
        }
        Ok(batch)
    }

    /// Loss terms and gradients for one item, without touching parameters.
    fn item_losses(&self, d: &Draw, grads: Option<(&mut ParamGrads, f64)>) -> Result<StepLosses> {
        let item = &self.items[d.item];
        let cond = if d.dropped {
            Conditioning::Null
        } else {
            Conditioning::Text(&item.text)
        };
        let mut g = Graph::with_params(&self.state.params);
        let out = self.state.forward(&mut g, &d.x_t, d.t, cond, Mode::Train)?;
        let x0 = g.constant(item.motion.tensor().clone());
        let simple = loss_simple(&mut g, x0, out.x0_hat)?;
        let fcf = match &out.bundle {
            Some(b) => Some(loss_fcf(&mut g, b, x0, &self.weights.layers)?),
            None => None,
        };
        let perceptual = loss_perceptual(&mut g, x0, out.x0_hat, &self.encoder)?;
        let total = loss_total(&mut g, &LossParts { simple, fcf, perceptual }, &self.weights)?;
        let val = |v| g.value(v).data()[0];
        let losses = StepLosses {
            total: val(total),
            simple: val(simple),
            fcf: fcf.map(val).unwrap_or(0.0),
            perceptual: val(perceptual),
        };
        if let Some((acc, scale)) = grads {
            if losses.total.is_finite() {
                g.backward(total)?;
                g.accumulate_param_grads(acc, scale);
            }
        }
        Ok(losses)
    }

    /// One optimizer step; on a non-finite loss or gradient the batch is
    /// written to `dump_dir` and training aborts.
    pub fn step(&mut self, dump_dir: &Path) -> Result<StepLosses> {
        let batch = self.draw_batch()?;
        let mut grads = ParamGrads::zeros_like(&self.state.params);
        let scale = 1.0 / batch.len() as f64;
        let mut mean = StepLosses::default();
        for d in &batch {
            let l = self.item_losses(d, Some((&mut grads, scale)))?;
            mean.total += l.total * scale;
            mean.simple += l.simple * scale;
            mean.fcf += l.fcf * scale;
            mean.perceptual += l.perceptual * scale;
        }
        self.iter += 1;
        if !mean.total.is_finite() || !grads.all_finite() {
            let dump = self.dump_batch(dump_dir, &batch, &mean)?;
            return Err(Error::NonFinite { iter: self.iter, dump });
        }
        self.opt.step(&mut self.state.params, &grads);
        Ok(mean)
    }

    fn dump_batch(&self, dir: &Path, batch: &[Draw], mean: &StepLosses) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("nonfinite_iter{}.txt", self.iter));
        let mut text = format!("iter {}\n{LOSS_HEADER}\n{}\n", self.iter, mean.csv_row(self.iter));
        for d in batch {
            let l = self.item_losses(d, None).unwrap_or_default();
            text.push_str(&format!(
                "item {} t {} dropped {} prompt {}\nlosses {}\n",
                d.item,
                d.t,
                d.dropped,
                self.items[d.item].prompt,
                l.csv_row(self.iter)
            ));
            text.push_str(&d.x_t.to_text());
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub history: Vec<StepLosses>,
}

impl TrainSummary {
    /// Mean of `L_simple` over the last `window` iterations.
    pub fn tail_simple(&self, window: usize) -> f64 {
        let n = window.clamp(1, self.history.len().max(1));
        let tail = &self.history[self.history.len().saturating_sub(n)..];
        tail.iter().map(|l| l.simple).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Full run: writes `losses.csv`, periodic checkpoints and a final
/// `model.ckpt` under `out`.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<(Trainer, TrainSummary)> {
    let mut trainer = Trainer::new(cfg.clone())?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join(LOSS_FILE);
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    writeln!(log, "{LOSS_HEADER}").map_err(|e| Error::io(&log_path, e))?;
    let mut history = Vec::with_capacity(cfg.optim.iters);
    for _ in 0..cfg.optim.iters {
        let l = match trainer.step(out) {
            Ok(l) => l,
            Err(e) => {
                log.flush().map_err(|e| Error::io(&log_path, e))?;
                return Err(e);
            }
        };
        let it = trainer.iteration();
        writeln!(log, "{}", l.csv_row(it)).map_err(|e| Error::io(&log_path, e))?;
        history.push(l);
        if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it < cfg.optim.iters {
            save_checkpoint(&out.join(format!("model_{it:06}.ckpt")), cfg, &trainer.state)?;
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint, cfg, &trainer.state)?;
    Ok((
        trainer,
        TrainSummary {
            checkpoint,
            loss_log: log_path,
            history,
        },
    ))
}
