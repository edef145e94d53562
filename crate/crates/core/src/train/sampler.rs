//! Instance-level sampling across multiple datasets, proportional to size.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// One drawn instance: (dataset index, item index within it).
pub type Draw = (usize, usize);

pub struct MultiDatasetSampler {
    sizes: Vec<usize>,
    total: usize,
}

impl MultiDatasetSampler {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
            return Err(Error::EmptyInput { op: "multi_dataset_sampler" });
        }
        Ok(MultiDatasetSampler {
            sizes: sizes.to_vec(),
            total: sizes.iter().sum(),
        })
    }

    /// Draw one batch; each instance lands in a dataset with probability
    /// proportional to that dataset's size.
    pub fn batch(&self, batch_size: usize, rng: &mut Rng) -> Vec<Draw> {
        (0..batch_size)
            .map(|_| {
                let mut r = rng.below(self.total);
                for (d, &size) in self.sizes.iter().enumerate() {
                    if r < size {
                        return (d, r);
                    }
                    r -= size;
                }
                unreachable!("r < total by construction")
            })
            .collect()
    }
}
