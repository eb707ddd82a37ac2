//! `tric eval`: repeated sampling against a reference corpus.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::load_checkpoint;
use super::config::RunConfig;
use super::metrics::{diversity, frechet_distance, mm_dist, r_precision, Interval, MetricsReport, RidgeMap, RETRIEVAL_POOL, RIDGE_LAMBDA, TOP_K};
use super::sample::{sample_motion, sample_rng};
use crate::denoiser::DenoiserState;
use crate::error::{invalid, Error, Result};
use crate::motion::{read_corpus, toy_text_encode, CorpusItem};
use crate::objective::PerceptualEncoder;
use crate::schedule::DiffusionSchedule;

pub const DIVERSITY_PAIRS: usize = 300;

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub repeats: usize,
    pub seed: u64,
    pub guidance: Option<f64>,
}

/// Per-repeat metric values, before aggregation.
#[derive(Clone, Debug, Default)]
pub struct RepeatMetrics {
    pub fid: f64,
    pub r_precision: [f64; TOP_K],
    pub mm_dist: f64,
    pub diversity: f64,
}

pub fn aggregate(runs: &[RepeatMetrics]) -> Result<MetricsReport> {
    let col = |f: &dyn Fn(&RepeatMetrics) -> f64| Interval::from_samples(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(MetricsReport {
        fid: col(&|r| r.fid)?,
        r_precision: [col(&|r| r.r_precision[0])?, col(&|r| r.r_precision[1])?, col(&|r| r.r_precision[2])?],
        mm_dist: col(&|r| r.mm_dist)?,
        diversity: col(&|r| r.diversity)?,
    })
}

/// Reference side of the evaluation: real features, text embeddings mapped
/// into motion-feature space by a ridge fit on the corpus, prompt labels.
pub struct Reference {
    pub real: Vec<Vec<f64>>,
    pub texts: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Reference {
    pub fn build(items: &[CorpusItem], encoder: &PerceptualEncoder, d_text: usize) -> Result<Self> {
        if items.len() < RETRIEVAL_POOL {
            return Err(invalid!(
                "evaluation corpus has {} items, retrieval needs at least {RETRIEVAL_POOL}",
                items.len()
            ));
        }
        let real = items
            .iter()
            .map(|c| encoder.features(c.motion.tensor()))
            .collect::<Result<Vec<_>>>()?;
        let cls = items
            .iter()
            .map(|c| Ok(toy_text_encode(&c.prompt, d_text)?.cls.into_data()))
            .collect::<Result<Vec<_>>>()?;
        let map = RidgeMap::fit(&cls, &real, RIDGE_LAMBDA)?;
        let texts = cls.iter().map(|c| map.apply(c)).collect();
        let mut ids = BTreeMap::new();
        let labels = items
            .iter()
            .map(|c| {
                let next = ids.len();
                *ids.entry(c.prompt.clone()).or_insert(next)
            })
            .collect();
        Ok(Reference { real, texts, labels })
    }

    /// Metrics of one generated set, aligned item-by-item with the corpus.
    pub fn score(&self, generated: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<RepeatMetrics> {
        Ok(RepeatMetrics {
            fid: frechet_distance(&self.real, generated)?,
            r_precision: r_precision(generated, &self.texts, &self.labels, rng)?,
            mm_dist: mm_dist(generated, &self.texts)?,
            diversity: diversity(generated, DIVERSITY_PAIRS, rng)?,
        })
    }
}

/// Samples one motion per corpus prompt for each repeat and aggregates.
pub fn evaluate(cfg: &RunConfig, state: &DenoiserState, items: &[CorpusItem], opts: &EvalOptions) -> Result<MetricsReport> {
    if opts.repeats == 0 {
        return Err(invalid!("repeats must be >= 1"));
    }
    let m = &cfg.model;
    for c in items {
        if c.motion.frames() != m.frames || c.motion.joints() != m.joints {
            return Err(Error::shape(
                "evaluation corpus item",
                c.motion.tensor().shape(),
                &[m.frames, m.joints, crate::motion::CHANNELS],
            ));
        }
    }
    let encoder = PerceptualEncoder::new(m.joints)?;
    let reference = Reference::build(items, &encoder, m.d_text)?;
    let schedule = DiffusionSchedule::cosine(cfg.diffusion.steps)?.with_variance(cfg.diffusion.variance);
    let g = opts.guidance.unwrap_or(cfg.diffusion.guidance_scale);
    let texts = items
        .iter()
        .map(|c| toy_text_encode(&c.prompt, m.d_text))
        .collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::with_capacity(opts.repeats);
    for r in 0..opts.repeats {
        let repeat_seed = opts.seed.wrapping_add(r as u64);
        let generated = texts
            .iter()
            .enumerate()
            .map(|(i, text)| {
                let mut rng = sample_rng(repeat_seed, i as u64);
                let x = sample_motion(state, &schedule, text, g, &mut rng)?;
                encoder.features(x.tensor())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(repeat_seed ^ 0xe7a1);
        runs.push(reference.score(&generated, &mut rng)?);
    }
    aggregate(&runs)
}

/// `tric eval`: writes one `name mean halfwidth` line per metric to `out`.
pub fn eval_cmd(ckpt: &Path, corpus: &Path, opts: &EvalOptions, out: &Path) -> Result<MetricsReport> {
    let (cfg, state) = load_checkpoint(ckpt)?;
    let items = read_corpus(corpus)?;
    let report = evaluate(&cfg, &state, &items, opts)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(out, report.to_text()).map_err(|e| Error::io(out, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{synth_dataset, write_corpus, Vocab};

    #[test]
    fn small_corpus_is_rejected() {
        let enc = PerceptualEncoder::new(2).unwrap();
        let items: Vec<CorpusItem> = synth_dataset(0, 10, 2, 8, &Vocab::default())
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, (prompt, motion))| CorpusItem { id: i.to_string(), prompt, motion })
            .collect();
        assert!(Reference::build(&items, &enc, 8).is_err());
    }

    #[test]
    fn eval_writes_report_lines() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("model.J = 1\nmodel.D = 8\nmodel.M = 2\nmodel.frames = 8\nmodel.heads = 2\nmodel.d_text = 8\ndiffusion.T = 2")
            .unwrap();
        let state = DenoiserState::new(&cfg.model, &cfg.ccmd, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("m.ckpt");
        super::super::checkpoint::save_checkpoint(&ckpt, &cfg, &state).unwrap();
        let corpus = dir.path().join("corpus");
        write_corpus(&corpus, &synth_dataset(0, 40, 2, 8, &Vocab::default()).unwrap()).unwrap();
        let out = dir.path().join("report.txt");
        let opts = EvalOptions { repeats: 2, seed: 0, guidance: None };
        let report = eval_cmd(&ckpt, &corpus, &opts, &out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 6);
        for line in text.lines() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(parts.len(), 3);
            assert!(parts[1].parse::<f64>().is_ok() && parts[2].parse::<f64>().is_ok());
        }
        assert!(report.fid.mean >= 0.0);
        for r in report.r_precision {
            assert!((0.0..=1.0).contains(&r.mean));
        }
        assert!(report.r_precision[0].mean <= report.r_precision[2].mean);
    }
}
