//! Dense tensors, a reverse-mode tape and a finite-difference oracle.

mod gradcheck;
mod graph;
pub mod kernels;
mod params;
pub mod spectral;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, Coordinates, GradCheckReport, ABS_FALLBACK};
pub use graph::{Graph, Var};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tensor::{format_value, Tensor, TENSOR_MAGIC};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::eye(3));
        let a = g.constant(Tensor::new(&[3, 3], (0..9).map(|v| v as f64 - 4.0).collect()).unwrap());
        let y = g.matmul(i, a).unwrap();
        assert_eq!(g.value(y), g.value(a));
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::zeros(&[3]));
        let s = g.softmax(z);
        for &v in g.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn analytic_activation_values() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::zeros(&[1]));
        let a = g.gelu(z);
        let b = g.sigmoid(z);
        assert_eq!(g.value(a).data()[0], 0.0);
        assert_eq!(g.value(b).data()[0], 0.5);
    }

    #[test]
    fn square_derivative() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(3.0).with_grad());
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn cross_entropy_grad_at_uniform_logits_is_zero_mean() {
        let mut g = Graph::new();
        let z = g.input(Tensor::zeros(&[5]).with_grad());
        let p = g.softmax(z);
        let lp = g.ln(p).unwrap();
        let onehot = g.constant(Tensor::new(&[5], vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap());
        let picked = g.mul(lp, onehot).unwrap();
        let s = g.sum_all(picked);
        let loss = g.scale(s, -1.0);
        g.backward(loss).unwrap();
        let grad = g.grad(z).unwrap();
        assert!(grad.sum().abs() < 1e-15);
        assert!((grad.data()[2] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn backward_rejects_non_scalar_and_reuse() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2]).with_grad());
        assert!(g.backward(x).is_err());
        let s = g.sum_all(x);
        g.backward(s).unwrap();
        assert!(g.backward(s).is_err());
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
        let c = g.constant(Tensor::zeros(&[4]));
        assert!(g.add(a, c).is_err());
    }

    #[test]
    fn group_norm_rejects_indivisible_channels() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[4, 6]));
        let gm = g.constant(Tensor::full(&[6], 1.0));
        let bt = g.constant(Tensor::zeros(&[6]));
        assert!(g.group_norm(x, 4, gm, bt, 1e-5).is_err());
        assert!(g.group_norm(x, 3, gm, bt, 1e-5).is_ok());
    }

    #[test]
    fn sum_of_squares_gradcheck() {
        let mut ps = ParamStore::new();
        let id = ps.add("x", Tensor::new(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        let mut g = Graph::with_params(&ps);
        let x = g.param(id);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum_all(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.param_grad(id).unwrap(), vec![2.0, 4.0]);
        drop(g);
        let report = finite_diff_check(&mut ps, &Coordinates::All, 1e-5, 1e-8, |g| {
            let x = g.param(id);
            let sq = g.mul(x, x)?;
            Ok(g.sum_all(sq))
        })
        .unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.max_rel_err < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let mut ps = ParamStore::new();
        let id = ps.add("x", Tensor::new(&[3], vec![0.3, -1.0, 2.0]).unwrap()).unwrap();
        let report = finite_diff_check(&mut ps, &Coordinates::All, 1e-5, 1e-4, |g| {
            let _ = g.param(id);
            Ok(g.constant(Tensor::scalar(7.0)))
        })
        .unwrap();
        assert!(report.pass);
        assert!(report.max_abs_err < 1e-8);
    }

    #[test]
    fn nondeterministic_function_is_rejected() {
        use std::cell::Cell;
        let mut ps = ParamStore::new();
        let id = ps.add("x", Tensor::scalar(1.0)).unwrap();
        let counter = Cell::new(0.0);
        let err = finite_diff_check(&mut ps, &Coordinates::All, 1e-5, 1e-4, |g| {
            counter.set(counter.get() + 1.0);
            let x = g.param(id);
            let c = g.constant(Tensor::scalar(counter.get()));
            let y = g.mul(x, c)?;
            Ok(g.sum_all(y))
        });
        assert!(matches!(err, Err(crate::error::Error::NonDeterministic { .. })));
    }
}
