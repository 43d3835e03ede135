//! `INFMODEL` artifact: a trained network together with the embedding it
//! was trained on.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpConfig, MlpParams};
use crate::container::{Reader, Writer, MODEL_MAGIC};
use crate::embedding::{EmbeddingSpec, PosencSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: MlpConfig,
    pub embedding: EmbeddingSpec,
    /// Encoding of the view direction for the view-dependent network.
    #[serde(default)]
    pub view_encoding: Option<PosencSpec>,
    #[serde(default)]
    pub mesh_hash: Option<String>,
    #[serde(default)]
    pub basis_hash: Option<String>,
    #[serde(default)]
    pub training: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    #[serde(flatten)]
    meta: ModelMeta,
    adam_step: u64,
    tensors: Vec<TensorInfo>,
}

#[derive(Clone, Debug)]
pub struct FieldModel {
    pub meta: ModelMeta,
    pub params: MlpParams<f32>,
}

impl FieldModel {
    pub fn new(meta: ModelMeta, params: MlpParams<f32>) -> Result<FieldModel> {
        if meta.config != params.config {
            return Err(Error::invalid("model metadata and parameters disagree on the network shape"));
        }
        if meta.embedding.output_dim() != meta.config.input_dim {
            return Err(Error::shape(format!(
                "embedding '{}' has {} outputs, network takes {}",
                meta.embedding.name(),
                meta.embedding.output_dim(),
                meta.config.input_dim
            )));
        }
        Ok(FieldModel { meta, params })
    }

    fn tensors(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        for (i, l) in self.params.layers().iter().enumerate() {
            out.push(TensorInfo {
                name: format!("layers.{i}.weight"),
                shape: vec![l.fan_in, l.fan_out],
            });
            out.push(TensorInfo {
                name: format!("layers.{i}.bias"),
                shape: vec![l.fan_out],
            });
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            meta: self.meta.clone(),
            adam_step: self.params.adam.step,
            tensors: self.tensors(),
        };
        let mut w = Writer::new(MODEL_MAGIC);
        w.json_block(&header)?;
        w.f32s(&self.params.values);
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FieldModel> {
        let mut r = Reader::new(bytes, MODEL_MAGIC)?;
        let header: Header = r.json_block()?;
        let params = MlpParams::from_values(&header.meta.config, r.f32s(header.meta.config.num_params())?)?;
        r.finish()?;
        if let Some(bad) = params.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("model parameter {bad}")));
        }
        let mut model = FieldModel::new(header.meta, params)?;
        if model.tensors() != header.tensors {
            return Err(Error::Container("tensor table does not match the network shape".into()));
        }
        model.params.adam.step = header.adam_step;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FieldModel> {
        FieldModel::from_bytes(&std::fs::read(path)?)
    }
}
