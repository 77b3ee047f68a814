//! Line-delimited JSON manifests of utterances and the feature files they
//! point to. Feature paths are resolved relative to the manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clas_core::eval::Utterance;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_features, write_features};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub features_path: String,
    pub transcript: String,
    #[serde(default)]
    pub bias_phrases: Vec<String>,
    /// Conditioning prefixes aligned with `bias_phrases`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_prefixes: Option<Vec<String>>,
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: Record =
            serde_json::from_str(line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        if let Some(p) = &r.bias_prefixes {
            if p.len() != r.bias_phrases.len() {
                return Err(Error::format(path, format!("line {}: bias_prefixes length mismatch", i + 1)));
            }
        }
        out.push(r);
    }
    Ok(out)
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Reads a manifest and every feature file it references.
pub fn read_manifest(path: &Path) -> Result<Vec<Utterance>> {
    let base = base_dir(path);
    read_records(path)?
        .into_iter()
        .map(|r| {
            Ok(Utterance {
                features: read_features(&base.join(&r.features_path))?,
                id: r.id,
                transcript: r.transcript,
                bias_phrases: r.bias_phrases,
                bias_prefixes: r.bias_prefixes,
            })
        })
        .collect()
}

/// Writes `utts` as a manifest at `path`, with one feature file per
/// utterance in `<stem>.features/` next to it.
pub fn write_manifest(path: &Path, utts: &[Utterance]) -> Result<()> {
    let base = base_dir(path);
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::format(path, "manifest path has no file name"))?;
    let feat_dir = format!("{stem}.features");
    fs::create_dir_all(base.join(&feat_dir)).map_err(Error::io(base.join(&feat_dir)))?;
    let mut out = Vec::new();
    for u in utts {
        let rel = format!("{feat_dir}/{}.bin", u.id);
        write_features(&base.join(&rel), &u.features)?;
        let r = Record {
            id: u.id.clone(),
            features_path: rel,
            transcript: u.transcript.clone(),
            bias_phrases: u.bias_phrases.clone(),
            bias_prefixes: u.bias_prefixes.clone(),
        };
        let line = serde_json::to_string(&r).map_err(|e| Error::format(path, e.to_string()))?;
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(Error::io(path))
}
