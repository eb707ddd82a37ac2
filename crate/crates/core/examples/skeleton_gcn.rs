//! Normalized skeleton adjacency and how far the graph branch reaches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tric::denoiser::Stm;
use tric::motion::{default_skeleton, DEFAULT_JOINTS};
use tric::nn::Init;
use tric::numcore::{Graph, ParamStore, Tensor};

fn main() -> tric::Result<()> {
    let sk = default_skeleton(8)?;
    println!("edges: {:?}", sk.edges);
    println!("A_hat rows:");
    for (j, name) in DEFAULT_JOINTS.iter().enumerate() {
        let row: Vec<String> = (0..8).map(|k| format!("{:.2}", sk.a_hat.get(&[j, k]))).collect();
        println!("  {name:<7} {}", row.join(" "));
    }

    let mut ps = ParamStore::new();
    let stm = Stm::new(&mut Init::new(&mut ps, 0), "stm", 16, &sk.a_hat)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::randn(&[4, 8, 16], &mut rng);
    let mut bumped = x.clone();
    bumped.data_mut()[4 * 16] += 1.0; // frame 0, l_hand
    let run = |t: &Tensor| -> tric::Result<Tensor> {
        let mut g = Graph::with_params(&ps);
        let v = g.constant(t.clone());
        let y = stm.forward(&mut g, v)?;
        Ok(g.value(y).clone())
    };
    let (a, b) = (run(&x)?, run(&bumped)?);
    println!("response to a bump on l_hand (frame 0):");
    for (j, name) in DEFAULT_JOINTS.iter().enumerate() {
        let d: f64 = (0..16).map(|c| (a.get(&[0, j, c]) - b.get(&[0, j, c])).abs()).sum();
        println!("  {name:<7} {d:.4}");
    }
    Ok(())
}
