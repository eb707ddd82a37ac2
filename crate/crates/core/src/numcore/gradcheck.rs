//! Central finite-difference oracle for tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Gradients below this magnitude of disagreement count as exact.
pub const ABS_FALLBACK: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub pass: bool,
}

/// Which parameter coordinates to perturb.
#[derive(Clone, Debug)]
pub enum Coordinates {
    All,
    /// A seeded random fraction of every parameter's scalars (at least one
    /// per tensor).
    Fraction { fraction: f64, seed: u64 },
    Only(Vec<ParamId>),
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= ABS_FALLBACK {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Compares tape gradients of `f` against `(f(p+h) - f(p-h)) / 2h`.
///
/// `f` receives a graph bound to `params` and returns a scalar loss node.
/// Fails hard if two evaluations at the same point disagree.
pub fn finite_diff_check<F>(
    params: &mut ParamStore,
    coords: &Coordinates,
    step: f64,
    tol: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(crate::error::invalid!("finite-difference step must be > 0"));
    }
    let eval = |ps: &ParamStore| -> Result<f64> {
        let mut g = Graph::with_params(ps);
        let loss = f(&mut g)?;
        Ok(g.value(loss).data()[0])
    };

    let mut g = Graph::with_params(params);
    let loss = f(&mut g)?;
    let base = g.value(loss).data()[0];
    g.backward(loss)?;
    let analytic: Vec<(ParamId, Vec<f64>)> = params
        .ids()
        .map(|id| {
            let grad = g
                .param_grad(id)
                .unwrap_or_else(|| vec![0.0; params.get(id).len()]);
            (id, grad)
        })
        .collect();
    drop(g);

    let again = eval(params)?;
    if again.to_bits() != base.to_bits() {
        return Err(Error::NonDeterministic {
            first: base,
            second: again,
        });
    }

    let selected: Vec<(ParamId, usize)> = match coords {
        Coordinates::All => params
            .ids()
            .flat_map(|id| (0..params.get(id).len()).map(move |i| (id, i)))
            .collect(),
        Coordinates::Only(ids) => ids
            .iter()
            .flat_map(|&id| (0..params.get(id).len()).map(move |i| (id, i)))
            .collect(),
        Coordinates::Fraction { fraction, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut out = Vec::new();
            for id in params.ids() {
                let n = params.get(id).len();
                let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
                let mut idx: Vec<usize> = sample(&mut rng, n, k).into_vec();
                idx.sort_unstable();
                out.extend(idx.into_iter().map(|i| (id, i)));
            }
            out
        }
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: None,
        pass: true,
    };
    for (id, i) in selected {
        let orig = params.get(id).data()[i];
        params.get_mut(id).data_mut()[i] = orig + step;
        let plus = eval(params)?;
        params.get_mut(id).data_mut()[i] = orig - step;
        let minus = eval(params)?;
        params.get_mut(id).data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[id.index()].1[i];
        let rel = relative_error(a, numeric);
        report.checked += 1;
        report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((params.name(id).to_string(), i));
        }
    }
    report.pass = report.max_rel_err <= tol;
    Ok(report)
}
