//! On-disk model snapshots.
//!
//! A checkpoint is a directory holding `manifest.json`, the two vocabularies
//! and one `<name>.bin` per parameter (little-endian `f32`, row-major).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamGroup, Tensor};
use crate::error::{Error, Result};
use crate::model::{DssVae, LossWeights, ModelDims};
use crate::text::{SyntaxVocab, Vocabulary};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const VOCAB: &str = "vocab.json";
const SYNTAX_VOCAB: &str = "syntax_vocab.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub dims: ModelDims,
    pub vocab_hash: String,
    pub syntax_vocab_hash: String,
    pub weights: LossWeights,
    pub step: u64,
    pub validation_elbo: f64,
    pub params: Vec<ParamEntry>,
}

/// A loaded snapshot.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: DssVae,
    pub manifest: Manifest,
    pub vocab: Vocabulary,
    pub syntax_vocab: SyntaxVocab,
}

fn blob_name(param: &str) -> String {
    format!("{param}.bin")
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Write a checkpoint to `dir`, replacing any previous one there.
pub fn save_checkpoint(
    dir: &Path,
    model: &DssVae,
    vocab: &Vocabulary,
    syntax_vocab: &SyntaxVocab,
    weights: &LossWeights,
    step: u64,
    validation_elbo: f64,
) -> Result<Manifest> {
    if vocab.len() != model.dims().vocab_size || syntax_vocab.len() != model.dims().syntax_vocab_size {
        return Err(Error::Incompatible("vocabulary sizes do not match the model".into()));
    }
    let store = model.store();
    let manifest = Manifest {
        version: FORMAT_VERSION,
        dims: *model.dims(),
        vocab_hash: vocab.content_hash(),
        syntax_vocab_hash: syntax_vocab.content_hash(),
        weights: *weights,
        step,
        validation_elbo,
        params: store
            .ids()
            .map(|id| ParamEntry {
                name: store.name(id).to_string(),
                group: store.group(id),
                shape: store.get(id).shape().to_vec(),
            })
            .collect(),
    };
    let staging = staging_dir(dir);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    for id in store.ids() {
        let bytes: Vec<u8> = store
            .get(id)
            .data()
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect();
        write(&staging.join(blob_name(store.name(id))), &bytes)?;
    }
    write(&staging.join(VOCAB), serde_json::to_string_pretty(vocab)?.as_bytes())?;
    write(&staging.join(SYNTAX_VOCAB), serde_json::to_string_pretty(syntax_vocab)?.as_bytes())?;
    write(&staging.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
    Ok(manifest)
}

fn staging_dir(dir: &Path) -> PathBuf {
    let mut name = dir.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    dir.with_file_name(name)
}

/// Load and verify a checkpoint against the vocabularies stored with it.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest: Manifest = serde_json::from_slice(&read(&dir.join(MANIFEST))?)
        .map_err(|e| Error::Corruption(format!("manifest: {e}")))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Incompatible(format!(
            "format version {} (supported: {FORMAT_VERSION})",
            manifest.version
        )));
    }
    let vocab: Vocabulary = serde_json::from_slice(&read(&dir.join(VOCAB))?)
        .map_err(|e| Error::Corruption(format!("vocabulary: {e}")))?;
    check_hash("vocabulary", &manifest.vocab_hash, &vocab.content_hash())?;
    let syntax_vocab: SyntaxVocab = serde_json::from_slice(&read(&dir.join(SYNTAX_VOCAB))?)
        .map_err(|e| Error::Corruption(format!("syntax vocabulary: {e}")))?;
    check_hash("syntax vocabulary", &manifest.syntax_vocab_hash, &syntax_vocab.content_hash())?;

    let mut model = DssVae::zeroed(manifest.dims).map_err(|e| Error::Corruption(e.to_string()))?;
    if manifest.params.len() != model.store().len() {
        return Err(Error::Corruption(format!(
            "manifest lists {} parameters, model has {}",
            manifest.params.len(),
            model.store().len()
        )));
    }
    for entry in &manifest.params {
        let id = model
            .store()
            .find(&entry.name)
            .ok_or_else(|| Error::Corruption(format!("unknown parameter {}", entry.name)))?;
        if model.store().get(id).shape() != entry.shape.as_slice() || model.store().group(id) != entry.group {
            return Err(Error::Corruption(format!("parameter {} has an unexpected shape or group", entry.name)));
        }
        let path = dir.join(blob_name(&entry.name));
        let bytes = read(&path)?;
        let expected = entry.shape.iter().product::<usize>() * 4;
        if bytes.len() != expected {
            return Err(Error::Corruption(format!(
                "{} holds {} bytes, expected {expected}",
                path.display(),
                bytes.len()
            )));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        model.store_mut().set(id, Tensor::new(entry.shape.clone(), data)?)?;
    }
    Ok(Checkpoint {
        model,
        manifest,
        vocab,
        syntax_vocab,
    })
}

/// Load a checkpoint and require that it was trained with `active`.
pub fn load_checkpoint_for(dir: &Path, active: &Vocabulary) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(dir)?;
    check_hash("vocabulary", &ckpt.manifest.vocab_hash, &active.content_hash())?;
    Ok(ckpt)
}

fn check_hash(what: &str, recorded: &str, actual: &str) -> Result<()> {
    if recorded != actual {
        return Err(Error::Incompatible(format!(
            "{what} hash mismatch: checkpoint has {recorded}, found {actual}"
        )));
    }
    Ok(())
}
