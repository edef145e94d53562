//! Full pose model: shared backbone plus one decoder head per dataset.

use crate::config::{DecoderKind, ModelConfig};
use crate::decoder::{self, HeadForward, HeadRegistry};
use crate::encoder::{self, ForwardOpts};
use crate::error::{Error, Result};
use crate::heatmap::Heatmap;
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::schema::Schema;
use crate::session::Session;
use crate::tensor::{Elem, Tensor};

pub struct PoseModel<E: Elem> {
    pub config: ModelConfig,
    pub registry: HeadRegistry,
    pub params: ParamStore<E>,
}

impl<E: Elem> PoseModel<E> {
    /// Fresh model with randomly initialized parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut params = ParamStore::new();
        encoder::init_encoder_params(&mut params, &config.encoder, &mut rng)?;
        let mut registry = HeadRegistry::new();
        for dataset in &config.datasets {
            let schema = Schema::by_name(dataset).or_else(|_| Schema::resolve(dataset))?;
            registry.register(dataset, config.decoder, schema.num_keypoints)?;
            decoder::init_head_params(
                &mut params,
                dataset,
                config.decoder,
                config.encoder.embed_dim,
                schema.num_keypoints,
                &mut rng,
            )?;
        }
        Ok(PoseModel {
            config,
            registry,
            params,
        })
    }

    /// Wrap an existing store (a loaded checkpoint). Every parameter the
    /// config requires must be present with the right shape; the position
    /// embedding is resized when the checkpoint grid differs.
    pub fn from_store(config: ModelConfig, mut params: ParamStore<E>) -> Result<Self> {
        config.validate()?;
        encoder::adapt_pos_embed(&mut params, &config.encoder)?;
        let reference = PoseModel::<E>::new(config.clone(), 0)?;
        for (name, tensor, _) in reference.params.iter() {
            let loaded = params.get(name).map_err(|_| Error::CheckpointMismatch {
                detail: format!("missing parameter {name}"),
            })?;
            if loaded.shape() != tensor.shape() {
                return Err(Error::CheckpointMismatch {
                    detail: format!(
                        "{name}: checkpoint {:?} vs config {:?}",
                        loaded.shape(),
                        tensor.shape()
                    ),
                });
            }
        }
        let registry = {
            let mut r = HeadRegistry::new();
            for spec in reference.registry.iter() {
                r.register(&spec.dataset, spec.kind, spec.num_keypoints)?;
            }
            r
        };
        Ok(PoseModel {
            config,
            registry,
            params,
        })
    }

    /// Forward one image through the backbone and one dataset head, on an
    /// existing session (so a batch can share parameter leaves).
    pub fn forward_on(
        &self,
        sess: &mut Session<E>,
        image: &Tensor<E>,
        dataset: &str,
        opts: &mut ForwardOpts<'_>,
    ) -> Result<HeadForward<E>> {
        let train = opts.train;
        let out = encoder::encode(sess, &self.params, &self.config.encoder, image, opts)?;
        decoder::multi_head_forward(
            sess,
            &self.params,
            &self.registry,
            dataset,
            out.f_out,
            self.config.head_norm,
            train,
        )
    }

    /// Heatmap stride in input pixels: the patch stride divided by the x4
    /// decoder upsampling.
    pub fn heatmap_stride(&self) -> usize {
        self.config.encoder.patch_stride / 4
    }

    /// Inference convenience: one image to an f64 heatmap.
    pub fn infer(&self, image: &Tensor<E>, dataset: &str) -> Result<Heatmap> {
        let mut sess = Session::new();
        let out = self.forward_on(&mut sess, image, dataset, &mut ForwardOpts::default())?;
        let values = sess.graph.value(out.heatmap).cast::<f64>();
        Ok(Heatmap {
            values,
            stride: self.heatmap_stride(),
        })
    }

    pub fn decoder_kind(&self) -> DecoderKind {
        self.config.decoder
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    #[test]
    fn toy_model_builds_and_infers() {
        let model = PoseModel::<f32>::new(preset("toy-s").unwrap(), 1).unwrap();
        let mut rng = Rng::new(2);
        let image = Tensor::from_fn(&[64, 48, 3], |_| rng.normal(0.0, 1.0) as f32);
        let hm = model.infer(&image, "synthetic").unwrap();
        assert_eq!(hm.values.shape(), &[16, 12, 6]);
        assert_eq!(hm.stride, 4);
    }

    #[test]
    fn unknown_dataset_head_is_an_error() {
        let model = PoseModel::<f32>::new(preset("toy-s").unwrap(), 1).unwrap();
        let image = Tensor::zeros(&[64, 48, 3]);
        assert!(matches!(
            model.infer(&image, "coco"),
            Err(Error::UnknownDataset { .. })
        ));
    }

    #[test]
    fn from_store_rejects_shape_mismatches() {
        let model = PoseModel::<f32>::new(preset("toy-s").unwrap(), 1).unwrap();
        let mut store = model.params;
        *store.get_mut("final_norm.g").unwrap() = Tensor::zeros(&[4]);
        assert!(matches!(
            PoseModel::from_store(preset("toy-s").unwrap(), store),
            Err(Error::CheckpointMismatch { .. })
        ));
    }

    #[test]
    fn from_store_accepts_a_fresh_checkpoint() {
        let model = PoseModel::<f32>::new(preset("toy-s").unwrap(), 1).unwrap();
        let fp = model.params.fingerprint();
        let restored = PoseModel::from_store(preset("toy-s").unwrap(), model.params).unwrap();
        assert_eq!(restored.params.fingerprint(), fp);
    }
}
