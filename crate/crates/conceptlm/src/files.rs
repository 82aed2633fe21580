//! On-disk formats: vocabulary JSON, `ckpt-v1` checkpoints, JSON-lines
//! sample and prediction files, surface-text corpora.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use conceptlm_core::bpe::{VocabFile, Vocabulary};
use conceptlm_core::nn::{Checkpoint, EpochLog, Layout, ModelConfig, ParamSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLMCKPT\0";
pub const CHECKPOINT_VERSION: &str = "ckpt-v1";

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling so readers never see half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_string(path)?).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(items)
}

pub fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut out = Vec::new();
    for line in lines {
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_string(path)?.lines().map(str::to_owned).collect())
}

pub fn save_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    write_json(path, &vocab.to_file())
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let file: VocabFile = read_json(path)?;
    Vocabulary::from_file(&file).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    version: String,
    preset: String,
    config: ModelConfig,
    tensors: Vec<ParamSpec>,
    log: Vec<EpochLog>,
}

/// A checkpoint plus what the service reports about it.
#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub checkpoint: Checkpoint,
    pub preset: String,
    pub sha256: String,
}

/// Layout: 8-byte magic, u64 LE header length, JSON header (config,
/// preset, tensor manifest, training log), then all parameters as f32 LE
/// in manifest order.
pub fn checkpoint_bytes(ckpt: &Checkpoint, preset: &str) -> Result<Vec<u8>> {
    let layout = Layout::new(&ckpt.config);
    if layout.total() != ckpt.params.len() {
        return Err(Error::Config(format!(
            "checkpoint holds {} parameters, config expects {}",
            ckpt.params.len(),
            layout.total()
        )));
    }
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION.into(),
        preset: preset.into(),
        config: ckpt.config.clone(),
        tensors: layout.specs().to_vec(),
        log: ckpt.log.clone(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + header.len() + 4 * ckpt.params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in &ckpt.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint, preset: &str) -> Result<()> {
    write_atomic(path, &checkpoint_bytes(ckpt, preset)?)
}

pub fn parse_checkpoint(path: &Path, bytes: &[u8]) -> Result<LoadedCheckpoint> {
    let bad = |m: &str| Error::format(path, m.to_string());
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body]).map_err(|e| bad(&e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {:?}", header.version)));
    }
    let layout = Layout::new(&header.config);
    if header.tensors != layout.specs() {
        return Err(bad("tensor manifest does not match the configuration"));
    }
    let data = &bytes[body..];
    if data.len() != 4 * layout.total() {
        return Err(bad(&format!("expected {} parameter bytes, found {}", 4 * layout.total(), data.len())));
    }
    let params = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok(LoadedCheckpoint {
        checkpoint: Checkpoint {
            config: header.config,
            params,
            log: header.log,
        },
        preset: header.preset,
        sha256: sha256_hex(bytes),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    parse_checkpoint(path, &read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use conceptlm_core::nn::Model;

    #[test]
    fn checkpoint_round_trip() {
        let model = Model::<f32>::init(ModelConfig::tiny(300), 3).unwrap();
        let ckpt = Checkpoint {
            config: model.config().clone(),
            params: model.params().to_vec(),
            log: vec![EpochLog {
                epoch: 1,
                train_loss: 2.5,
                validation_loss: Some(2.25),
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &ckpt, "tiny").unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.checkpoint, ckpt);
        assert_eq!(loaded.preset, "tiny");
        assert_eq!(loaded.sha256, sha256_file(&path).unwrap());
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let model = Model::<f32>::init(ModelConfig::tiny(300), 3).unwrap();
        let ckpt = Checkpoint {
            config: model.config().clone(),
            params: model.params().to_vec(),
            log: vec![],
        };
        let bytes = checkpoint_bytes(&ckpt, "tiny").unwrap();
        let p = Path::new("x");
        assert!(parse_checkpoint(p, &bytes[..bytes.len() - 4]).is_err());
        assert!(parse_checkpoint(p, b"garbage").is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(parse_checkpoint(p, &bad).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let items = vec![vec![1, 2], vec![], vec![3]];
        write_jsonl(&path, &items).unwrap();
        assert_eq!(read_jsonl::<Vec<i32>>(&path).unwrap(), items);
    }
}
