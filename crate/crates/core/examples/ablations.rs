//! Every structural variant, built from config overrides alone and stepped
//! once forward and backward.

use tric::harness::{ablation_base, ablation_overrides, probe_variant};

fn main() -> tric::Result<()> {
    for (name, overrides) in ablation_overrides() {
        let mut cfg = ablation_base();
        cfg.apply_text(overrides)?;
        let shown = if overrides.is_empty() { "(base)".to_string() } else { overrides.replace('\n', "; ") };
        match probe_variant(&cfg) {
            Ok(detail) => println!("ok   {name:<26} {shown}\n     {detail}"),
            Err(e) => println!("FAIL {name:<26} {shown}\n     {e}"),
        }
    }
    Ok(())
}
