//! Finite-difference checks for every differentiable tape op, plus the
//! algebraic properties of broadcasting and concatenation.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tric::numcore::{finite_diff_check, Coordinates, Graph, ParamStore, Tensor, Var};
use tric::Result;

const TRIALS: u64 = 100;
const TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

type OpFn = fn(&mut Graph, &[Var]) -> Result<Var>;

/// Runs `op` on random inputs of `shapes` and checks d(sum(op * probe)).
fn check_op(name: &str, shapes: impl Fn(&mut ChaCha8Rng) -> Vec<Vec<usize>>, op: OpFn) {
    let mut worst: f64 = 0.0;
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(trial * 7919 + name.len() as u64);
        let mut ps = ParamStore::new();
        let ids: Vec<_> = shapes(&mut rng)
            .iter()
            .enumerate()
            .map(|(i, s)| ps.add(format!("in{i}"), Tensor::randn(s, &mut rng)).unwrap())
            .collect();
        let probe_seed: u64 = rng.random();
        let report = finite_diff_check(&mut ps, &Coordinates::All, STEP, TOL, |g| {
            let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
            let y = op(g, &vars)?;
            let mut prng = ChaCha8Rng::seed_from_u64(probe_seed);
            let probe = g.constant(Tensor::randn(g.shape(y), &mut prng));
            let w = g.mul(y, probe)?;
            Ok(g.sum_all(w))
        })
        .unwrap();
        worst = worst.max(report.max_rel_err);
        assert!(report.pass, "{name} trial {trial}: {report:?}");
    }
    eprintln!("{name}: worst relative error {worst:.2e} over {TRIALS} trials");
}

fn dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

#[test]
fn elementwise_ops() {
    check_op("add_broadcast", |r| {
        let (a, b) = (dims(r, 1, 4), dims(r, 1, 4));
        vec![vec![a, b], vec![b]]
    }, |g, v| g.add(v[0], v[1]));
    check_op("sub_broadcast", |r| {
        let (a, b) = (dims(r, 1, 4), dims(r, 1, 4));
        vec![vec![a, 1], vec![a, b]]
    }, |g, v| g.sub(v[0], v[1]));
    check_op("mul_broadcast", |r| {
        let (a, b, c) = (dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 3));
        vec![vec![a, b, c], vec![1, b, 1]]
    }, |g, v| g.mul(v[0], v[1]));
    check_op("scale", |r| vec![vec![dims(r, 1, 6)]], |g, v| Ok(g.scale(v[0], -2.5)));
    check_op("broadcast_to", |r| vec![vec![1, dims(r, 1, 4)]], |g, v| {
        let s = g.shape(v[0]).to_vec();
        g.broadcast_to(v[0], &[3, s[1]])
    });
    check_op("gelu", |r| vec![vec![dims(r, 1, 8)]], |g, v| Ok(g.gelu(v[0])));
    check_op("sigmoid", |r| vec![vec![dims(r, 1, 8)]], |g, v| Ok(g.sigmoid(v[0])));
    check_op("relu", |r| vec![vec![dims(r, 1, 8)]], |g, v| Ok(g.relu(v[0])));
    check_op("ln_of_sigmoid", |r| vec![vec![dims(r, 1, 8)]], |g, v| {
        let s = g.sigmoid(v[0]);
        g.ln(s)
    });
    check_op("softmax", |r| vec![vec![dims(r, 1, 3), dims(r, 1, 5)]], |g, v| Ok(g.softmax(v[0])));
}

#[test]
fn product_ops() {
    check_op("matmul", |r| {
        let (m, k, n) = (dims(r, 1, 4), dims(r, 1, 4), dims(r, 1, 4));
        vec![vec![m, k], vec![k, n]]
    }, |g, v| g.matmul(v[0], v[1]));
    check_op("bmm", |r| {
        let (b, m, k, n) = (dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 3));
        vec![vec![b, m, k], vec![b, k, n]]
    }, |g, v| g.bmm(v[0], v[1]));
    check_op("linear", |r| {
        let (a, b, i, o) = (dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 4), dims(r, 1, 4));
        vec![vec![a, b, i], vec![i, o], vec![o]]
    }, |g, v| g.linear(v[0], v[1], Some(v[2])));
}

#[test]
fn normalization_ops() {
    check_op("layer_norm", |r| {
        let c = dims(r, 2, 6);
        vec![vec![dims(r, 1, 4), c], vec![c], vec![c]]
    }, |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5));
    check_op("group_norm", |r| {
        let groups = dims(r, 1, 3);
        let c = groups * dims(r, 1, 3);
        vec![vec![dims(r, 1, 3), dims(r, 1, 3), c], vec![c], vec![c]]
    }, |g, v| {
        let c = *g.shape(v[0]).last().unwrap();
        let groups = (1..=3).rev().find(|k| c % k == 0).unwrap();
        g.group_norm(v[0], groups, v[1], v[2], 1e-5)
    });
}

#[test]
fn convolution_ops() {
    check_op("conv1d", |r| {
        let (b, l, ci, co) = (dims(r, 1, 2), dims(r, 1, 6), dims(r, 1, 3), dims(r, 1, 3));
        let k = [1, 3, 5][dims(r, 0, 2)];
        vec![vec![b, l, ci], vec![k, ci, co], vec![co]]
    }, |g, v| g.conv1d(v[0], v[1], Some(v[2])));
    check_op("depthwise_conv1d", |r| {
        let (b, l, c) = (dims(r, 1, 2), dims(r, 1, 6), dims(r, 1, 4));
        vec![vec![b, l, c], vec![3, c], vec![c]]
    }, |g, v| g.depthwise_conv1d(v[0], v[1], Some(v[2])));
    check_op("pointwise_conv1d", |r| {
        let (l, ci, co) = (dims(r, 1, 5), dims(r, 1, 4), dims(r, 1, 4));
        vec![vec![1, l, ci], vec![ci, co]]
    }, |g, v| g.pointwise_conv1d(v[0], v[1], None));
}

#[test]
fn reduction_and_layout_ops() {
    check_op("mean_axis", |r| vec![vec![dims(r, 1, 3), dims(r, 1, 4), dims(r, 1, 3)]], |g, v| g.mean_axis(v[0], 1));
    check_op("max_axis", |r| vec![vec![dims(r, 1, 3), dims(r, 1, 4)]], |g, v| g.max_axis(v[0], 0));
    check_op("sum_all", |r| vec![vec![dims(r, 1, 5)]], |g, v| Ok(g.sum_all(v[0])));
    check_op("mean_all", |r| vec![vec![dims(r, 1, 5), 2]], |g, v| Ok(g.mean_all(v[0])));
    check_op("concat", |r| {
        let a = dims(r, 1, 3);
        vec![vec![a, dims(r, 1, 3)], vec![a, dims(r, 1, 3)]]
    }, |g, v| g.concat(&[v[0], v[1]], 1));
    check_op("slice", |r| vec![vec![dims(r, 1, 3), 5]], |g, v| g.slice(v[0], 1, 1, 3));
    check_op("permute", |r| vec![vec![dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 3)]], |g, v| g.permute(v[0], &[2, 0, 1]));
    check_op("reshape", |r| vec![vec![dims(r, 1, 3), 4]], |g, v| {
        let n = g.value(v[0]).len();
        g.reshape(v[0], &[n])
    });
}

#[test]
fn frame_axis_ops() {
    check_op("avg_pool_frames", |r| vec![vec![dims(r, 1, 11), dims(r, 1, 3)]], |g, v| g.avg_pool_frames(v[0], 4));
    check_op("repeat_frames", |r| vec![vec![dims(r, 1, 4), 2]], |g, v| {
        let n = g.shape(v[0])[0];
        g.repeat_frames(v[0], 3, 3 * n - 1)
    });
    check_op("pad_edge_frames", |r| vec![vec![dims(r, 1, 4), 3]], |g, v| g.pad_edge_frames(v[0], 1));
    check_op("haar_split", |r| vec![vec![2 * dims(r, 1, 4), dims(r, 1, 3)]], |g, v| g.haar_split(v[0]));
    check_op("haar_merge", |r| vec![vec![2, dims(r, 1, 4), dims(r, 1, 3)]], |g, v| g.haar_merge(v[0]));
    check_op("rfft_frames", |r| vec![vec![dims(r, 1, 9), dims(r, 1, 2), dims(r, 1, 3)]], |g, v| g.rfft_frames(v[0]));
    check_op("irfft_frames", |r| {
        let len = dims(r, 1, 9);
        vec![vec![len / 2 + 1, dims(r, 1, 2), 2 * dims(r, 1, 2)], vec![len]]
    }, |g, v| {
        let len = g.shape(v[1])[0];
        g.irfft_frames(v[0], len)
    });
}

#[test]
fn concat_backward_has_no_cross_talk() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b_values = [Tensor::randn(&[3, 2], &mut rng), Tensor::randn(&[3, 2], &mut rng)];
    let a = Tensor::randn(&[3, 4], &mut rng);
    let probe = Tensor::randn(&[3, 6], &mut rng);
    let mut grads = Vec::new();
    for b in &b_values {
        let mut g = Graph::new();
        let av = g.input(a.clone().with_grad());
        let bv = g.input(b.clone().with_grad());
        let c = g.concat(&[av, bv], 1).unwrap();
        let p = g.constant(probe.clone());
        let w = g.mul(c, p).unwrap();
        let s = g.sum_all(w);
        g.backward(s).unwrap();
        grads.push(g.grad(av).unwrap());
    }
    assert_eq!(grads[0], grads[1]);
}

proptest! {
    #[test]
    fn broadcast_add_commutes_and_associates(
        seed in any::<u64>(),
        a in 1usize..4, b in 1usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::randn(&[a, b], &mut rng);
        let y = Tensor::randn(&[b], &mut rng);
        let z = Tensor::randn(&[a, 1], &mut rng);
        let mut g = Graph::new();
        let (xv, yv, zv) = (g.constant(x), g.constant(y), g.constant(z));
        let xy = g.add(xv, yv).unwrap();
        let yx = g.add(yv, xv).unwrap();
        prop_assert!(g.value(xy).max_abs_diff(g.value(yx)) <= 1e-12);
        let left = g.add(xy, zv).unwrap();
        let yz = g.add(yv, zv).unwrap();
        let right = g.add(xv, yz).unwrap();
        prop_assert!(g.value(left).max_abs_diff(g.value(right)) <= 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::randn(&[rows, cols], &mut rng).map(|v| v * 10.0);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let s = g.softmax(xv);
        for row in g.value(s).data().chunks(cols) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }
}

#[test]
fn layer_norm_matches_finite_differences_on_4x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    let mut ps = ParamStore::new();
    let x = ps.add("x", Tensor::randn(&[4, 8], &mut rng)).unwrap();
    let gm = ps.add("gamma", Tensor::randn(&[8], &mut rng)).unwrap();
    let bt = ps.add("beta", Tensor::randn(&[8], &mut rng)).unwrap();
    let probe = Tensor::randn(&[4, 8], &mut rng);
    let report = finite_diff_check(&mut ps, &Coordinates::All, 1e-5, 1e-4, |g| {
        let (xv, gv, bv) = (g.param(x), g.param(gm), g.param(bt));
        let y = g.layer_norm(xv, gv, bv, 1e-5)?;
        let p = g.constant(probe.clone());
        let w = g.mul(y, p)?;
        Ok(g.sum_all(w))
    })
    .unwrap();
    assert!(report.pass && report.max_rel_err < 1e-4, "{report:?}");
}
