use std::path::Path;

use super::MotionTensor;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusItem {
    pub id: String,
    pub prompt: String,
    pub motion: MotionTensor,
}

/// Writes `<id>.motion` and `<id>.txt` per item, ids zero-padded.
pub fn write_corpus(dir: &Path, items: &[(String, MotionTensor)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, (prompt, motion)) in items.iter().enumerate() {
        let id = format!("{i:05}");
        motion.tensor().save(&dir.join(format!("{id}.motion")))?;
        let p = dir.join(format!("{id}.txt"));
        std::fs::write(&p, format!("{prompt}\n")).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Reads every `<id>.motion` with a matching `<id>.txt`, sorted by id.
pub fn read_corpus(dir: &Path) -> Result<Vec<CorpusItem>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "motion") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Parse(format!("no .motion files in {}", dir.display())));
    }
    ids.into_iter()
        .map(|id| {
            let motion = MotionTensor::new(Tensor::load(&dir.join(format!("{id}.motion")))?)?;
            let p = dir.join(format!("{id}.txt"));
            let prompt = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?.trim().to_string();
            Ok(CorpusItem { id, prompt, motion })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{synth_dataset, Vocab};

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let items = synth_dataset(3, 5, 8, 16, &Vocab::default()).unwrap();
        write_corpus(dir.path(), &items).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        assert_eq!(back.len(), 5);
        for ((p, m), item) in items.iter().zip(&back) {
            assert_eq!(p, &item.prompt);
            assert!(m.tensor().max_abs_diff(item.motion.tensor()) < 1e-7);
        }
    }
}
