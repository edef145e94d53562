//! Central finite-difference verification of analytic gradients.
//!
//! The harness perturbs each checked coordinate by ±eps, re-evaluates the
//! objective, and compares the quotient against the analytic gradient the
//! caller left in the store (via [`crate::graph::Graph::backward`] plus a
//! write-back). This is the one oracle the rest of the crate is measured
//! against, so it deliberately knows nothing about the tape.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct CheckOpts {
    /// Central-difference step.
    pub eps: f64,
    /// Cap on coordinates checked per tensor; `None` checks all of them.
    pub max_coords_per_param: Option<usize>,
    /// Seed for coordinate subsampling.
    pub seed: u64,
}

impl Default for CheckOpts {
    fn default() -> Self {
        CheckOpts {
            eps: 1e-4,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub worst_param: Option<String>,
    pub worst_coord: usize,
}

/// Relative error between a finite difference and an analytic value. The
/// denominator floor keeps near-zero coordinates honest: below the floor the
/// comparison is effectively absolute at tolerance * floor, which sits well
/// above central-difference truncation noise at f64 but far below any real
/// gradient defect (a doubled gradient still reports rel-err ~ 1).
pub fn rel_err(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(1e-3)
}

/// Check analytic gradients stored on the trainable tensors of `store`
/// against central finite differences of `f`. `f` must be deterministic.
pub fn finite_difference_check<F>(
    store: &mut ParamStore<f64>,
    mut f: F,
    opts: &CheckOpts,
) -> Result<CheckReport>
where
    F: FnMut(&ParamStore<f64>) -> Result<f64>,
{
    // snapshot analytic grads first; perturbed evaluations must not see them
    let names: Vec<String> = store
        .iter()
        .filter(|(_, _, trainable)| *trainable)
        .map(|(n, _, _)| n.to_string())
        .collect();
    let mut analytic = Vec::new();
    for name in &names {
        let t = store.get(name)?;
        let g = t
            .grad()
            .ok_or_else(|| Error::MissingParam {
                name: format!("{name} (analytic gradient)"),
            })?
            .to_vec();
        analytic.push(g);
    }

    let mut report = CheckReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        worst_param: None,
        worst_coord: 0,
    };
    let rng_root = Rng::new(opts.seed);
    for (pi, name) in names.iter().enumerate() {
        let numel = store.get(name)?.numel();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(cap) if cap < numel => {
                let mut rng = rng_root.fork(pi as u64);
                rng.sample_indices(numel, cap)
            }
            _ => (0..numel).collect(),
        };
        for &c in &coords {
            let original = store.get(name)?.data()[c];
            store.get_mut(name)?.data_mut()[c] = original + opts.eps;
            let fp = f(store)?;
            store.get_mut(name)?.data_mut()[c] = original - opts.eps;
            let fm = f(store)?;
            store.get_mut(name)?.data_mut()[c] = original;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::NonFinite {
                    op: format!("finite_difference_check({name}[{c}])"),
                });
            }
            let fd = (fp - fm) / (2.0 * opts.eps);
            let err = rel_err(fd, analytic[pi][c]);
            report.coords_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = Some(name.clone());
                report.worst_coord = c;
            }
        }
    }
    Ok(report)
}
