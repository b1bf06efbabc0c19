//! Checkpoint file: one JSON header line, then every parameter value as
//! little-endian f64 in [`RelationModel::params`] order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{RelationModel, TrainConfig};
use crate::model::{ModelConfig, ModelError};
use crate::numeric::Matrix;
use crate::re_head::HeadConfig;

const FORMAT: &str = "coarsen-gnn-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("i/o: {0}")]
    Stream(#[from] std::io::Error),
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("parameter {index}: header says {header:?}, model has {model:?}")]
    ShapeMismatch {
        index: usize,
        header: (usize, usize),
        model: (usize, usize),
    },
    #[error("payload holds {found} bytes, expected {expected}")]
    Payload { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    model: ModelConfig,
    head: HeadConfig,
    shapes: Vec<(usize, usize)>,
    seed: Option<u64>,
    /// Training settings, so inputs can be prepared the same way later.
    train: Option<TrainConfig>,
}

pub fn write_checkpoint<W: Write>(
    model: &RelationModel,
    train: Option<&TrainConfig>,
    mut w: W,
) -> Result<(), CheckpointError> {
    let params = model.params();
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        model: model.encoder.config().clone(),
        head: model.head.config().clone(),
        shapes: params.iter().map(|p| p.shape()).collect(),
        seed: train.map(|t| t.seed),
        train: train.cloned(),
    };
    let line = serde_json::to_string(&header).expect("header serializes");
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for p in params {
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(
    r: R,
) -> Result<(RelationModel, Option<TrainConfig>), CheckpointError> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header =
        serde_json::from_str(line.trim_end()).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(CheckpointError::Header(format!(
            "unsupported format `{}` version {}",
            header.format, header.version
        )));
    }
    let mut model = RelationModel::new(header.model, header.head.arity, header.head.classes)?;
    if model.head.config() != &header.head {
        return Err(CheckpointError::Header(format!(
            "head configuration {:?} does not fit the encoder",
            header.head
        )));
    }
    let params = model.params_mut();
    if params.len() != header.shapes.len() {
        return Err(CheckpointError::Header(format!(
            "{} parameter shapes listed, model has {}",
            header.shapes.len(),
            params.len()
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected: usize = header.shapes.iter().map(|(a, b)| a * b * 8).sum();
    if payload.len() != expected {
        return Err(CheckpointError::Payload {
            expected,
            found: payload.len(),
        });
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for (index, (p, &shape)) in params.into_iter().zip(&header.shapes).enumerate() {
        if p.shape() != shape {
            return Err(CheckpointError::ShapeMismatch {
                index,
                header: shape,
                model: p.shape(),
            });
        }
        let data: Vec<f64> = values.by_ref().take(shape.0 * shape.1).collect();
        p.value = Matrix::from_vec(shape.0, shape.1, data).map_err(ModelError::from)?;
        p.zero_grad();
    }
    Ok((model, header.train))
}

pub fn save_checkpoint(
    model: &RelationModel,
    train: Option<&TrainConfig>,
    path: &Path,
) -> Result<(), CheckpointError> {
    let f = File::create(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_checkpoint(model, train, BufWriter::new(f))
}

pub fn load_checkpoint(
    path: &Path,
) -> Result<(RelationModel, Option<TrainConfig>), CheckpointError> {
    let f = File::open(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(f)
}
