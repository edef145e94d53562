//! Named parameter storage with deterministic iteration order.
//!
//! Every model tensor lives in a [`ParamStore`] under a structured name like
//! `block3.attn.qkv.w`. The name doubles as the label used by freeze masks
//! and layer-wise learning-rate decay; [`classify`] is the single parser.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

struct Entry<E: Elem> {
    name: String,
    tensor: Tensor<E>,
    trainable: bool,
}

/// Ordered map name -> tensor with a per-entry trainable flag.
pub struct ParamStore<E: Elem> {
    entries: Vec<Entry<E>>,
    index: HashMap<String, usize>,
}

impl<E: Elem> Default for ParamStore<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<E>) -> Result<()> {
        self.insert_with(name, tensor, true)
    }

    pub fn insert_with(&mut self, name: &str, tensor: Tensor<E>, trainable: bool) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::DuplicateParam { name: name.into() });
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            tensor,
            trainable,
        });
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<E>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].tensor)
            .ok_or_else(|| Error::MissingParam { name: name.into() })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<E>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i].tensor),
            None => Err(Error::MissingParam { name: name.into() }),
        }
    }

    pub fn is_trainable(&self, name: &str) -> Result<bool> {
        self.index
            .get(name)
            .map(|&i| self.entries[i].trainable)
            .ok_or_else(|| Error::MissingParam { name: name.into() })
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        match self.index.get(name) {
            Some(&i) => {
                self.entries[i].trainable = trainable;
                Ok(())
            }
            None => Err(Error::MissingParam { name: name.into() }),
        }
    }

    /// Insertion-order iteration.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<E>, bool)> {
        self.entries
            .iter()
            .map(|e| (e.name.as_str(), &e.tensor, e.trainable))
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all entries.
    pub fn total_elements(&self) -> u64 {
        self.entries.iter().map(|e| e.tensor.numel() as u64).sum()
    }

    /// Scalar count across trainable entries only.
    pub fn trainable_elements(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.numel() as u64)
            .sum()
    }

    /// Learnable parameter count: everything except running statistics and
    /// other non-learned state. This is the number reported by cost models.
    pub fn parameter_elements(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| {
                !matches!(
                    classify(&e.name),
                    Ok(ParamLabel {
                        group: ParamGroup::RunningStat,
                        ..
                    })
                )
            })
            .map(|e| e.tensor.numel() as u64)
            .sum()
    }

    pub fn clear_grads(&mut self) {
        for e in self.entries.iter_mut() {
            e.tensor.clear_grad();
        }
    }

    /// Order-sensitive fingerprint of all tensor bytes; used by the
    /// frozen-parameter audits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for e in &self.entries {
            for b in e.name.as_bytes() {
                h = (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3);
            }
            for v in e.tensor.data() {
                let bits = v.to_f64().to_bits();
                for shift in [0u32, 8, 16, 24, 32, 40, 48, 56] {
                    h = (h ^ ((bits >> shift) & 0xff)).wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Fingerprint restricted to entries selected by `filter`.
    pub fn fingerprint_where(&self, filter: impl Fn(&str) -> bool) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for e in &self.entries {
            if !filter(&e.name) {
                continue;
            }
            for v in e.tensor.data() {
                let bits = v.to_f64().to_bits();
                for shift in [0u32, 8, 16, 24, 32, 40, 48, 56] {
                    h = (h ^ ((bits >> shift) & 0xff)).wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn cast<F: Elem>(&self) -> ParamStore<F> {
        let mut out = ParamStore::new();
        for e in &self.entries {
            out.insert_with(&e.name, e.tensor.cast(), e.trainable)
                .expect("names already unique");
        }
        out
    }
}

/// Which submodule a parameter belongs to; drives freeze masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    PatchEmbed,
    PosEmbed,
    AttnQkv,
    AttnProj,
    Ffn,
    BlockNorm,
    FinalNorm,
    Head,
    MimHead,
    MaskToken,
    KnowledgeToken,
    TokenProj,
    RunningStat,
}

/// Position of a parameter for layer-wise lr decay: the embedding is layer 0,
/// block i is layer i+1, and everything after the blocks shares the head slot
/// (layer depth+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSlot {
    Embed,
    Block(usize),
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLabel {
    pub group: ParamGroup,
    pub slot: LayerSlot,
}

/// Parse a structured parameter name into its label. Unrecognized names are
/// an error so a freeze mask can never silently skip a tensor.
pub fn classify(name: &str) -> Result<ParamLabel> {
    let parts: Vec<&str> = name.split('.').collect();
    let unlabeled = || Error::UnlabeledParam { name: name.into() };
    match parts.as_slice() {
        ["embed", "patch", _] => Ok(ParamLabel {
            group: ParamGroup::PatchEmbed,
            slot: LayerSlot::Embed,
        }),
        ["embed", "pos"] => Ok(ParamLabel {
            group: ParamGroup::PosEmbed,
            slot: LayerSlot::Embed,
        }),
        ["final_norm", _] => Ok(ParamLabel {
            group: ParamGroup::FinalNorm,
            slot: LayerSlot::Head,
        }),
        ["head", _, rest @ ..] if !rest.is_empty() => {
            let group = if rest.last() == Some(&"rm") || rest.last() == Some(&"rv") {
                ParamGroup::RunningStat
            } else {
                ParamGroup::Head
            };
            Ok(ParamLabel {
                group,
                slot: LayerSlot::Head,
            })
        }
        ["mim", "mask_token"] => Ok(ParamLabel {
            group: ParamGroup::MaskToken,
            slot: LayerSlot::Embed,
        }),
        ["mim", "head", _] => Ok(ParamLabel {
            group: ParamGroup::MimHead,
            slot: LayerSlot::Head,
        }),
        ["distill", "token"] => Ok(ParamLabel {
            group: ParamGroup::KnowledgeToken,
            slot: LayerSlot::Embed,
        }),
        ["distill", "token_proj", _] => Ok(ParamLabel {
            group: ParamGroup::TokenProj,
            slot: LayerSlot::Embed,
        }),
        [block, rest @ ..] if block.starts_with("block") && !rest.is_empty() => {
            let idx: usize = block[5..].parse().map_err(|_| unlabeled())?;
            let slot = LayerSlot::Block(idx);
            let group = match rest {
                ["attn", "qkv", _] => ParamGroup::AttnQkv,
                ["attn", "proj", _] => ParamGroup::AttnProj,
                ["ffn", _, _] => ParamGroup::Ffn,
                ["norm1", _] | ["norm2", _] => ParamGroup::BlockNorm,
                _ => return Err(unlabeled()),
            };
            Ok(ParamLabel { group, slot })
        }
        _ => Err(unlabeled()),
    }
}

/// Running statistics and learned-then-frozen knowledge tokens default to
/// non-trainable when a checkpoint is loaded.
pub fn default_trainable(name: &str) -> bool {
    !matches!(
        classify(name),
        Ok(ParamLabel {
            group: ParamGroup::RunningStat | ParamGroup::KnowledgeToken,
            ..
        })
    )
}
