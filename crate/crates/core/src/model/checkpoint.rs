//! Binary checkpoints: magic, format version, the model configuration as
//! JSON, then every named tensor with its shape and little-endian `f64` data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelConfig, ModelError, ModelParams};
use crate::autodiff::Tensor;
use crate::binio::*;

const MAGIC: &[u8; 8] = b"LCVMODEL";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Model {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        w.write_all(MAGIC)?;
        write_u32(&mut w, CHECKPOINT_VERSION)?;
        let config = serde_json::to_string(self.config()).map_err(|e| ModelError::Format(e.to_string()))?;
        write_str(&mut w, &config)?;
        write_len(&mut w, self.params().len())?;
        for (name, tensor) in self.params().iter() {
            write_str(&mut w, name)?;
            write_len(&mut w, tensor.ndim())?;
            for &dim in tensor.shape() {
                write_len(&mut w, dim)?;
            }
            write_f64s(&mut w, tensor.data())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ModelError> {
        expect_magic(&mut r, MAGIC).map_err(|_| ModelError::Format("not a model checkpoint".into()))?;
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::VersionMismatch(format!(
                "format version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let config: ModelConfig =
            serde_json::from_str(&read_str(&mut r)?).map_err(|e| ModelError::Format(e.to_string()))?;
        let count = read_len(&mut r, 1 << 16)?;
        let mut named = Vec::with_capacity(count);
        for _ in 0..count {
            let name = read_str(&mut r)?;
            let ndim = read_len(&mut r, 4)?;
            let shape: Vec<usize> = (0..ndim).map(|_| read_len(&mut r, 1 << 24)).collect::<Result<_, _>>()?;
            let len: usize = shape.iter().product();
            if len > 1 << 28 {
                return Err(ModelError::Format(format!("tensor {name} is too large")));
            }
            let data = read_f64s(&mut r, len)?;
            named.push((name, Tensor::new(shape, data)?));
        }
        let params = ModelParams::from_named(&config, named)?;
        Model::from_parts(config, params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        Self::read_from(bytes)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model) -> Result<(), ModelError> {
    model.write_to(BufWriter::new(File::create(path)?))
}

/// Loads a checkpoint. When `expected` is given, its shape-defining fields
/// (input width, hidden width, depth, ablation) must match the stored ones.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Model, ModelError> {
    let model = Model::read_from(BufReader::new(File::open(path)?))?;
    if let Some(want) = expected {
        let got = model.config();
        if (got.input_dim, got.hidden_dim, got.layers, got.ablation)
            != (want.input_dim, want.hidden_dim, want.layers, want.ablation)
        {
            return Err(ModelError::VersionMismatch(format!(
                "checkpoint has d0={} d={} L={} ablation={}, expected d0={} d={} L={} ablation={}",
                got.input_dim,
                got.hidden_dim,
                got.layers,
                got.ablation.name(),
                want.input_dim,
                want.hidden_dim,
                want.layers,
                want.ablation.name()
            )));
        }
    }
    Ok(model)
}
