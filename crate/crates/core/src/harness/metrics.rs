//! Toy-scale distribution and retrieval metrics over feature vectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{invalid, Result};

/// Candidates per retrieval query: the true text plus mismatched ones.
pub const RETRIEVAL_POOL: usize = 32;
pub const TOP_K: usize = 3;
/// Normal-approximation 95% quantile.
pub const Z_95: f64 = 1.96;
pub const RIDGE_LAMBDA: f64 = 1e-2;

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map(Vec::len).ok_or_else(|| invalid!("empty feature set"))?;
    if rows.iter().any(|r| r.len() != d) {
        return Err(invalid!("feature vectors have differing lengths"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn mean_cov(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let mu = x.row_mean().transpose();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mu.transpose();
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let cov = c.transpose() * &c / denom;
    (mu, cov)
}

/// Principal square root of a symmetric positive semi-definite matrix;
/// tiny negative eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))`, using the similar
/// symmetric form `(S1^(1/2) S2 S1^(1/2))^(1/2)` for the cross term.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (xa, xb) = (to_matrix(a)?, to_matrix(b)?);
    if xa.ncols() != xb.ncols() {
        return Err(invalid!("feature dims differ: {} vs {}", xa.ncols(), xb.ncols()));
    }
    let (m1, s1) = mean_cov(&xa);
    let (m2, s2) = mean_cov(&xb);
    let r1 = psd_sqrt(&s1);
    let cross = psd_sqrt(&(&r1 * &s2 * &r1));
    let fid = (m1 - m2).norm_squared() + s1.trace() + s2.trace() - 2.0 * cross.trace();
    Ok(fid.max(0.0))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Top-k retrieval accuracy for `k = 1..=TOP_K`. Query `i` ranks its own
/// `texts[i]` against `RETRIEVAL_POOL - 1` texts whose `labels` differ.
pub fn r_precision<R: Rng>(
    motions: &[Vec<f64>],
    texts: &[Vec<f64>],
    labels: &[usize],
    rng: &mut R,
) -> Result<[f64; TOP_K]> {
    let n = motions.len();
    if texts.len() != n || labels.len() != n {
        return Err(invalid!("motions, texts and labels must have equal length"));
    }
    let mut hits = [0usize; TOP_K];
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[i]).collect();
        if others.len() < RETRIEVAL_POOL - 1 {
            return Err(invalid!(
                "retrieval needs {} mismatched candidates, query {i} has {}",
                RETRIEVAL_POOL - 1,
                others.len()
            ));
        }
        let own = dist(&motions[i], &texts[i]);
        let closer = sample(rng, others.len(), RETRIEVAL_POOL - 1)
            .into_iter()
            .filter(|&j| dist(&motions[i], &texts[others[j]]) < own)
            .count();
        for (k, h) in hits.iter_mut().enumerate() {
            if closer <= k {
                *h += 1;
            }
        }
    }
    Ok(hits.map(|h| h as f64 / n as f64))
}

/// Mean distance between matched motion and text embeddings.
pub fn mm_dist(motions: &[Vec<f64>], texts: &[Vec<f64>]) -> Result<f64> {
    if motions.len() != texts.len() || motions.is_empty() {
        return Err(invalid!("need equally many, non-zero motions and texts"));
    }
    Ok(motions.iter().zip(texts).map(|(m, t)| dist(m, t)).sum::<f64>() / motions.len() as f64)
}

/// Mean distance over `pairs` random pairs of distinct items.
pub fn diversity<R: Rng>(features: &[Vec<f64>], pairs: usize, rng: &mut R) -> Result<f64> {
    let n = features.len();
    if n < 2 || pairs == 0 {
        return Err(invalid!("diversity needs >= 2 items and >= 1 pair"));
    }
    let mut total = 0.0;
    for _ in 0..pairs {
        let ij = sample(rng, n, 2);
        total += dist(&features[ij.index(0)], &features[ij.index(1)]);
    }
    Ok(total / pairs as f64)
}

/// Mean and 95% half-width `1.96 s / sqrt(n)` with the `n - 1` sample
/// standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(invalid!("no samples"));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z_95 * var.sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Interval { mean, half_width })
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4}\u{b1}{:.4}", self.mean, self.half_width)
    }
}

/// Linear map from text features to motion feature space, with bias.
#[derive(Clone, Debug)]
pub struct RidgeMap {
    w: DMatrix<f64>,
}

impl RidgeMap {
    pub fn fit(inputs: &[Vec<f64>], targets: &[Vec<f64>], lambda: f64) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(invalid!("{} inputs for {} targets", inputs.len(), targets.len()));
        }
        let x = to_matrix(inputs)?.insert_column(0, 1.0);
        let y = to_matrix(targets)?;
        let mut gram = x.transpose() * &x;
        for i in 1..gram.nrows() {
            gram[(i, i)] += lambda;
        }
        let w = gram
            .cholesky()
            .ok_or_else(|| invalid!("ridge system is not positive definite"))?
            .solve(&(x.transpose() * y));
        Ok(RidgeMap { w })
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let x = DVector::from_iterator(input.len() + 1, std::iter::once(1.0).chain(input.iter().copied()));
        (self.w.transpose() * x).iter().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub fid: Interval,
    pub r_precision: [Interval; TOP_K],
    pub mm_dist: Interval,
    pub diversity: Interval,
}

impl MetricsReport {
    pub fn entries(&self) -> Vec<(&'static str, Interval)> {
        vec![
            ("fid_toy", self.fid),
            ("r_precision_top1", self.r_precision[0]),
            ("r_precision_top2", self.r_precision[1]),
            ("r_precision_top3", self.r_precision[2]),
            ("mm_dist", self.mm_dist),
            ("diversity", self.diversity),
        ]
    }

    /// One `name mean halfwidth` line per metric.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(n, i)| format!("{n} {:.6} {:.6}\n", i.mean, i.half_width))
            .collect()
    }
}
