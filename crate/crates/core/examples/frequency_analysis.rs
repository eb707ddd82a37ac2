//! Haar and Fourier views of a synthetic motion, and the HFA block on top.

use tric::denoiser::{dwt_haar, rfft_frames, Hfa, HfaConfig};
use tric::motion::{synth_clean, Vocab};
use tric::nn::Init;
use tric::numcore::{Graph, ParamStore, Tensor};

fn energy(t: &Tensor) -> f64 {
    t.data().iter().map(|v| v * v).sum()
}

fn main() -> tric::Result<()> {
    let vocab = Vocab::default();
    for prompt in ["walk slow forward", "walk fast forward"] {
        let m = synth_clean(prompt, &vocab, 8, 64)?;
        let x = m.tensor().clone().reshape(&[64, 8 * 12])?;
        let (lo, hi) = dwt_haar(&x)?;
        let (re, im) = rfft_frames(&lo)?;
        // dominant non-DC bin of the low band, summed over every channel
        let bins = re.shape()[0];
        let cols = re.len() / bins;
        let power: Vec<f64> = (0..bins)
            .map(|k| (0..cols).map(|c| re.data()[k * cols + c].powi(2) + im.data()[k * cols + c].powi(2)).sum())
            .collect();
        let peak = (1..bins).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap();
        println!(
            "{prompt:<20} low/high energy {:.2}/{:.4}  peak low-band bin {peak}",
            energy(&lo),
            energy(&hi)
        );
    }

    let mut ps = ParamStore::new();
    let hfa = Hfa::new(&mut Init::new(&mut ps, 1), "hfa", 16, HfaConfig::default())?;
    let mut g = Graph::with_params(&ps);
    let x = g.constant(Tensor::randn(&[18, 8, 16], &mut rand::rng()));
    let out = hfa.forward(&mut g, x)?;
    println!(
        "hfa: {:?} -> {:?}, temporal gate over {} bins, joint gate over {} joints",
        g.shape(x),
        g.shape(out.out),
        g.shape(out.low.w_t)[0],
        out.low.w_s.map(|w| g.shape(w)[1]).unwrap_or(0)
    );
    Ok(())
}
