//! JSON checkpoint: the model config plus every named parameter tensor.
//! Floats are written in shortest round-trip form, so save/load is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::diffcore::{ParamStore, Parameter};
use crate::error::{Error, Result};

const FORMAT: &str = "convrecon-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub params: Vec<Parameter>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Self {
            format: FORMAT.into(),
            config: model.config.clone(),
            params: model
                .params
                .iter()
                .map(|(_, p)| Parameter {
                    grad: None,
                    ..p.clone()
                })
                .collect(),
        }
    }

    /// Rebuilds the model, checking every architectural parameter against
    /// the shapes its config implies.
    pub fn into_model(self) -> Result<Model> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown format {:?}, expected {FORMAT:?}",
                self.format
            )));
        }
        let reference = Model::new(self.config.clone(), 0)?;
        let mut store = ParamStore::new();
        for p in self.params {
            match reference.params.by_name(&p.name) {
                Some(r) if r.value.shape() != p.value.shape() => {
                    return Err(Error::Checkpoint(format!(
                        "parameter {}: expected shape {:?}, found {:?}",
                        p.name,
                        r.value.shape(),
                        p.value.shape()
                    )))
                }
                None if !p.name.starts_with("hyper/") => {
                    return Err(Error::Checkpoint(format!(
                        "unexpected parameter {}",
                        p.name
                    )))
                }
                _ => {}
            }
            let id = store.insert(p.name, p.value)?;
            store.get_mut(id).trainable = p.trainable;
        }
        if let Some((_, missing)) = reference
            .params
            .iter()
            .find(|(_, r)| store.id(&r.name).is_none())
        {
            return Err(Error::Checkpoint(format!(
                "parameter {} is missing",
                missing.name
            )));
        }
        Ok(Model {
            config: self.config,
            params: store,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&Checkpoint::from_model(model))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.into_model()
}
