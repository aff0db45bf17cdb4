//! Versioned JSON checkpoints of trained models.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::Gan;
use crate::model::MtcmModel;
use crate::similarity::SimilarityModel;

pub const CHECKPOINT_FORMAT: &str = "mtcm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mtcm,
    Similarity,
    Gan,
}

/// Models that can be stored in a checkpoint.
pub trait Checkpointable: Serialize + DeserializeOwned {
    const KIND: ModelKind;
}

impl Checkpointable for MtcmModel {
    const KIND: ModelKind = ModelKind::Mtcm;
}

impl Checkpointable for SimilarityModel {
    const KIND: ModelKind = ModelKind::Similarity;
}

impl Checkpointable for Gan {
    const KIND: ModelKind = ModelKind::Gan;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub config_hash: String,
    pub model: M,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: ModelKind,
}

pub fn save<M: Checkpointable>(path: &Path, model: &M, config_hash: &str) -> Result<()> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        kind: M::KIND,
        config_hash: config_hash.into(),
        model,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &ck)?;
    w.flush()?;
    Ok(())
}

/// Reads only the kind recorded in a checkpoint.
pub fn peek_kind(path: &Path) -> Result<ModelKind> {
    let text = std::fs::read_to_string(path)?;
    let header: Header = serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "checkpoint".into(),
        detail: format!("{}: {e}", path.display()),
    })?;
    Ok(header.kind)
}

/// Loads a checkpoint of kind `M`, checking format, version and kind first.
pub fn load<M: Checkpointable>(path: &Path) -> Result<Checkpoint<M>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |detail: String| Error::Format {
        what: "checkpoint".into(),
        detail: format!("{}: {detail}", path.display()),
    };
    let header: Header = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("format {:?}", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!("version {} (expected {CHECKPOINT_VERSION})", header.version)));
    }
    if header.kind != M::KIND {
        return Err(bad(format!("holds a {:?} model, expected {:?}", header.kind, M::KIND)));
    }
    serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
}
