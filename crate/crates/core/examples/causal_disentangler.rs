//! The training-only causal branch: gates, intervention, decoded TDE
//! predictions, and its absence at inference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tric::causal::{CcmdConfig, Mode, Placement};
use tric::denoiser::{DenoiserState, ModelConfig};
use tric::motion::{toy_text_encode, Conditioning, MotionTensor};
use tric::numcore::{Graph, Tensor};

fn main() -> tric::Result<()> {
    let cfg = ModelConfig {
        blocks: 2,
        dim: 16,
        joints: 8,
        frames: 16,
        heads: 2,
        d_text: 16,
        ..Default::default()
    };
    let text = toy_text_encode("wave slow right", cfg.d_text)?;
    let x = Tensor::randn(&[16, 8, 12], &mut ChaCha8Rng::seed_from_u64(0));
    for placement in [Placement::Pre, Placement::Post] {
        let ccmd = CcmdConfig { placement, ..Default::default() };
        let state = DenoiserState::new(&cfg, &ccmd, 1)?;
        let mut g = Graph::with_params(&state.params);
        let out = state.forward(&mut g, &x, 10, Conditioning::Text(&text), Mode::Train)?;
        let bundle = out.bundle.expect("training mode emits the bundle");
        println!("placement {placement}: {} causal parameters", state.ccmd_params().len());
        for (j, layer) in bundle.layers.iter().enumerate() {
            let norms: Vec<String> = layer
                .domains
                .iter()
                .map(|d| format!("{:?} |F~| {:.3}", d.stream, g.value(d.f_tilde).data().iter().map(|v| v * v).sum::<f64>().sqrt()))
                .collect();
            println!("  layer {j}: tde {:?}; {}", g.shape(layer.tde), norms.join(", "));
        }
        let inf = state.forward(&mut g, &x, 10, Conditioning::Text(&text), Mode::Inference)?;
        println!("  inference bundle present: {}", inf.bundle.is_some());
    }

    let with = DenoiserState::new(&cfg, &CcmdConfig::default(), 1)?;
    let without = DenoiserState::new(&cfg, &CcmdConfig { enabled: false, ..Default::default() }, 1)?;
    let xm = MotionTensor::new(x)?;
    let same = with.predict(&xm, 10, Conditioning::Text(&text))? == without.predict(&xm, 10, Conditioning::Text(&text))?;
    println!("inference identical with and without the branch: {same}");
    Ok(())
}
