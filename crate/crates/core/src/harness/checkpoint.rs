//! `TRIC v1` header, config echo, then `param <name>` + tensor blocks.

use std::path::Path;

use super::config::{RunConfig, MODEL_KEYS};
use crate::denoiser::DenoiserState;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const CHECKPOINT_MAGIC: &str = "TRIC v1";
const CONFIG_END: &str = "end config";

/// Keys describing where a run wrote its files rather than what it trained;
/// left out so identical runs in different directories match byte for byte.
const LOCATION_KEYS: &[&str] = &["paths.out"];

pub fn checkpoint_text(cfg: &RunConfig, state: &DenoiserState) -> String {
    let mut out = format!("{CHECKPOINT_MAGIC}\n");
    for line in cfg.to_text().lines() {
        let key = line.split('=').next().unwrap_or("").trim();
        if !LOCATION_KEYS.contains(&key) {
            out.push_str(line);
            out.push('\n');
        }
    }
    out.push_str(CONFIG_END);
    out.push('\n');
    for (_, name, t) in state.params.iter() {
        out.push_str(&format!("param {name}\n"));
        out.push_str(&t.to_text());
    }
    out
}

pub fn save_checkpoint(path: &Path, cfg: &RunConfig, state: &DenoiserState) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, checkpoint_text(cfg, state)).map_err(|e| Error::io(path, e))
}

/// Rebuilds the model from the stored config and loads every parameter.
pub fn load_checkpoint(path: &Path) -> Result<(RunConfig, DenoiserState)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

pub fn parse_checkpoint(text: &str) -> Result<(RunConfig, DenoiserState)> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CHECKPOINT_MAGIC) {
        return Err(Error::Parse(format!("checkpoint does not start with `{CHECKPOINT_MAGIC}`")));
    }
    let mut cfg_text = String::new();
    loop {
        match lines.next() {
            Some(l) if l.trim() == CONFIG_END => break,
            Some(l) => {
                cfg_text.push_str(l);
                cfg_text.push('\n');
            }
            None => return Err(Error::Parse("checkpoint config block is not terminated".into())),
        }
    }
    let cfg = RunConfig::from_text(&cfg_text)?;
    let mut state = DenoiserState::new(&cfg.model, &cfg.ccmd, cfg.seed)?;
    let mut seen = vec![false; state.params.len()];
    while let Some(line) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let name = line
            .strip_prefix("param ")
            .ok_or_else(|| Error::Parse(format!("expected `param <name>`, got `{line}`")))?;
        let id = state
            .params
            .id(name)
            .ok_or_else(|| Error::Parse(format!("checkpoint parameter `{name}` not in model")))?;
        let t = Tensor::parse_lines(&mut lines)?;
        let slot = state.params.get_mut(id);
        if t.shape() != slot.shape() {
            return Err(Error::shape("checkpoint parameter", t.shape(), slot.shape()));
        }
        slot.data_mut().copy_from_slice(t.data());
        seen[id.index()] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        let name = state.params.iter().nth(i).map(|(_, n, _)| n.to_string()).unwrap_or_default();
        return Err(Error::Parse(format!("checkpoint is missing parameter `{name}`")));
    }
    Ok((cfg, state))
}

/// Fails with the divergent model keys if `runtime` disagrees with the
/// checkpoint's config.
pub fn check_compatible(stored: &RunConfig, runtime: &RunConfig) -> Result<()> {
    let diff = stored.diff(runtime, MODEL_KEYS);
    if diff.is_empty() {
        Ok(())
    } else {
        Err(Error::ConfigMismatch(diff))
    }
}
