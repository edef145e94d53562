//! Partial-finetuning freeze masks over the parameter store.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{classify, ParamGroup, ParamStore};
use crate::tensor::Elem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeMode {
    None,
    Mhsa,
    Ffn,
}

impl FreezeMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FreezeMode::None),
            "mhsa" => Ok(FreezeMode::Mhsa),
            "ffn" => Ok(FreezeMode::Ffn),
            other => Err(Error::InvalidConfig {
                detail: format!("unknown freeze mode: {other}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreezeSummary {
    pub trainable_elements: u64,
    pub frozen_elements: u64,
}

/// Set trainable flags for every parameter according to the freeze mode.
/// Norms, embeddings and heads stay trainable in every mode; running stats
/// stay frozen. A name outside the labeling scheme is an error.
pub fn apply_freeze<E: Elem>(store: &mut ParamStore<E>, mode: FreezeMode) -> Result<FreezeSummary> {
    let names = store.names();
    for name in &names {
        let label = classify(name)?;
        let trainable = match label.group {
            ParamGroup::RunningStat => false,
            // a learned token is frozen for the student; only its projection
            // trains alongside the model
            ParamGroup::KnowledgeToken => false,
            ParamGroup::AttnQkv | ParamGroup::AttnProj => mode != FreezeMode::Mhsa,
            ParamGroup::Ffn => mode != FreezeMode::Ffn,
            _ => true,
        };
        store.set_trainable(name, trainable)?;
    }
    let mut summary = FreezeSummary {
        trainable_elements: 0,
        frozen_elements: 0,
    };
    for (_, tensor, trainable) in store.iter() {
        if trainable {
            summary.trainable_elements += tensor.numel() as u64;
        } else {
            summary.frozen_elements += tensor.numel() as u64;
        }
    }
    Ok(summary)
}
