//! Toy text features and where the joint-level cross-attention looks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tric::denoiser::Tij;
use tric::motion::toy_text_encode;
use tric::nn::Init;
use tric::numcore::{Graph, ParamStore, Tensor};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

fn main() -> tric::Result<()> {
    let prompts = ["walk slow forward", "walk fast forward", "jump slow left"];
    let texts: Vec<_> = prompts.iter().map(|p| toy_text_encode(p, 32)).collect::<tric::Result<_>>()?;
    for i in 0..prompts.len() {
        for j in i + 1..prompts.len() {
            println!(
                "cos(cls) {:<18} vs {:<18} {:.3}",
                prompts[i],
                prompts[j],
                cosine(texts[i].cls.data(), texts[j].cls.data())
            );
        }
    }

    let mut ps = ParamStore::new();
    let tij = Tij::new(&mut Init::new(&mut ps, 2), "tij", 16, 32, 2)?;
    let mut g = Graph::with_params(&ps);
    let y = g.constant(Tensor::randn(&[4, 3, 16], &mut ChaCha8Rng::seed_from_u64(3)));
    let tau = g.constant(texts[2].tau.clone());
    let (out, w) = tij.forward(&mut g, y, tau)?;
    println!("tij output {:?}, attention {:?} over words of `{}`", g.shape(out), g.shape(w), prompts[2]);
    let words = texts[2].words();
    for (q, row) in g.value(w).data().chunks(words).take(3).enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("  query {q}: {}", cells.join(" "));
    }
    Ok(())
}
