//! One forward/backward cycle: a graph plus the store bindings needed to
//! route gradients back to named parameters.

use std::collections::HashMap;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::{Elem, Tensor};

pub struct Session<E: Elem> {
    pub graph: Graph<E>,
    bindings: Vec<(String, Var)>,
    bound: HashMap<String, Var>,
}

impl<E: Elem> Default for Session<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> Session<E> {
    pub fn new() -> Self {
        Session {
            graph: Graph::new(),
            bindings: Vec::new(),
            bound: HashMap::new(),
        }
    }

    /// Leaf for a named parameter. Trainable entries get gradient slots;
    /// frozen entries enter the graph as constants. Repeated calls within
    /// one session reuse the same node.
    pub fn param(&mut self, store: &ParamStore<E>, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let tensor = store.get(name)?;
        let v = if store.is_trainable(name)? {
            let v = self.graph.leaf(tensor)?;
            self.bindings.push((name.to_string(), v));
            v
        } else {
            self.graph.constant(tensor)?
        };
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn constant(&mut self, t: &Tensor<E>) -> Result<Var> {
        self.graph.constant(t)
    }

    /// Backprop from `loss` and write gradients onto the bound parameters.
    /// Parameters that did not influence the loss get zero gradients.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<E>) -> Result<()> {
        self.graph.backward(loss)?;
        for (name, var) in &self.bindings {
            let grad = match self.graph.grad(*var) {
                Some(g) => g.to_vec(),
                None => vec![E::zero(); store.get(name)?.numel()],
            };
            store.get_mut(name)?.set_grad(grad)?;
        }
        Ok(())
    }
}
