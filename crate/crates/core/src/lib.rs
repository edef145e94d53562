//! Desk-scale pose estimation engine built on a plain, non-hierarchical
//! vision transformer.
//!
//! The crate provides a minimal dense-tensor engine with reverse-mode
//! gradients, a ViT backbone with four window-attention strategies, two
//! lightweight heatmap decoders with per-dataset heads, Gaussian heatmap
//! encoding/decoding, knowledge-token distillation, a full training recipe
//! (AdamW, layer-wise lr decay, step schedule, freeze masks, masked-patch
//! pretraining, synthetic data), COCO-style OKS/AP and PCKh evaluation, and
//! an analytic parameter/FLOP/memory cost model.

pub mod config;
pub mod cost;
pub mod decoder;
pub mod distill;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod heatmap;
pub mod io;
pub mod kernels;
pub mod model;
pub mod params;
pub mod rng;
pub mod schema;
pub mod session;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use params::ParamStore;
pub use rng::Rng;
pub use tensor::{Dtype, Elem, Tensor};
