//! Shared finite-difference machinery for the gradient test suites.
//!
//! Each primitive is wrapped in a small objective `mean(op(...) * R)` with a
//! fixed random projection `R`, so that gradients are informative (a plain
//! mean of a softmax row, for example, is constant and would vacuously pass).

use plainpose::gradcheck::{finite_difference_check, CheckOpts};
use plainpose::graph::{Graph, Var};
use plainpose::params::ParamStore;
use plainpose::rng::Rng;
use plainpose::tensor::Tensor;
use plainpose::Result;

pub struct OpCase {
    pub name: &'static str,
    pub tolerance: f64,
    /// Shapes of the leaf tensors the op consumes.
    pub inputs: Vec<Vec<usize>>,
    /// Builds the op output from leaves inserted in `inputs` order.
    pub build: fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    /// Keeps leaf values away from non-differentiable kinks (relu at 0).
    pub margin: f64,
}

fn random_store(case: &OpCase, seed: u64) -> ParamStore<f64> {
    let mut rng = Rng::new(seed);
    let mut store = ParamStore::new();
    for (i, shape) in case.inputs.iter().enumerate() {
        let margin = case.margin;
        let t = Tensor::from_fn(shape, |_| {
            let v = rng.normal(0.0, 1.0);
            if margin > 0.0 && v.abs() < margin {
                if v >= 0.0 {
                    v + margin
                } else {
                    v - margin
                }
            } else {
                v
            }
        });
        store.insert(&format!("in{i}"), t).unwrap();
    }
    store
}

fn objective(
    case: &OpCase,
    store: &ParamStore<f64>,
    seed: u64,
) -> Result<(Graph<f64>, Var, Vec<Var>)> {
    let mut g = Graph::new();
    let mut leaves = Vec::new();
    for i in 0..case.inputs.len() {
        leaves.push(g.leaf(store.get(&format!("in{i}"))?)?);
    }
    let out = (case.build)(&mut g, &leaves)?;
    let mut proj_rng = Rng::new(seed ^ 0xabcdef);
    let proj = Tensor::from_fn(&g.shape(out).to_vec(), |_| proj_rng.normal(0.0, 1.0));
    let r = g.constant(&proj)?;
    let weighted = g.mul(out, r)?;
    let loss = g.mean_all(weighted)?;
    Ok((g, loss, leaves))
}

/// Run one op case across `seeds` random draws; returns the worst rel-err.
pub fn check_case(case: &OpCase, seeds: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let mut store = random_store(case, seed * 7919 + 13);
        // analytic pass
        {
            let (mut g, loss, leaves) = objective(case, &store, seed).expect("forward");
            g.backward(loss).expect("backward");
            for (i, leaf) in leaves.iter().enumerate() {
                let grad = g.grad(*leaf).expect("leaf gradient").to_vec();
                store
                    .get_mut(&format!("in{i}"))
                    .unwrap()
                    .set_grad(grad)
                    .unwrap();
            }
        }
        // finer step than the harness default: the catalogue asserts per-op
        // tolerances down to 1e-6, where eps^2 truncation at 1e-4 shows up
        let opts = CheckOpts {
            eps: 3e-5,
            max_coords_per_param: Some(24),
            seed,
        };
        let report = finite_difference_check(
            &mut store,
            |s| objective(case, s, seed).map(|(g, loss, _)| g.scalar_value(loss)),
            &opts,
        )
        .expect("fd check");
        if report.max_rel_err > worst {
            worst = report.max_rel_err;
        }
        assert!(
            report.max_rel_err < case.tolerance,
            "{}: seed {} rel-err {} (worst at {:?}[{}])",
            case.name,
            seed,
            report.max_rel_err,
            report.worst_param,
            report.worst_coord
        );
    }
    worst
}

/// The catalogue of differentiable primitives, each with the tolerance its
/// contract states.
pub fn primitive_cases() -> Vec<OpCase> {
    vec![
        OpCase {
            name: "matmul",
            tolerance: 1e-6,
            inputs: vec![vec![4, 5], vec![5, 2]],
            build: |g, v| g.matmul(v[0], v[1]),
            margin: 0.0,
        },
        OpCase {
            name: "bmm",
            tolerance: 1e-6,
            inputs: vec![vec![2, 3, 4], vec![2, 4, 2]],
            build: |g, v| g.bmm(v[0], v[1]),
            margin: 0.0,
        },
        OpCase {
            name: "softmax",
            tolerance: 1e-6,
            inputs: vec![vec![3, 4]],
            build: |g, v| g.softmax(v[0], 1),
            margin: 0.0,
        },
        OpCase {
            name: "layer_norm",
            tolerance: 1e-6,
            inputs: vec![vec![2, 3], vec![3], vec![3]],
            build: |g, v| g.layer_norm(v[0], v[1], v[2], 1e-6),
            margin: 0.0,
        },
        OpCase {
            name: "relu",
            tolerance: 1e-6,
            inputs: vec![vec![3, 4]],
            build: |g, v| g.relu(v[0]),
            margin: 0.05,
        },
        OpCase {
            name: "gelu",
            tolerance: 1e-5,
            inputs: vec![vec![3, 4]],
            build: |g, v| g.gelu(v[0]),
            margin: 0.0,
        },
        OpCase {
            name: "conv2d",
            tolerance: 1e-5,
            inputs: vec![vec![1, 4, 4, 2], vec![3, 3, 2, 3]],
            build: |g, v| g.conv2d(v[0], v[1], 1, 1),
            margin: 0.0,
        },
        OpCase {
            name: "conv2d_strided",
            tolerance: 1e-5,
            inputs: vec![vec![2, 5, 4, 2], vec![2, 2, 2, 1]],
            build: |g, v| g.conv2d(v[0], v[1], 2, 0),
            margin: 0.0,
        },
        OpCase {
            name: "conv_transpose2d",
            tolerance: 1e-5,
            inputs: vec![vec![1, 3, 3, 2], vec![4, 4, 2, 2]],
            build: |g, v| g.conv_transpose2d(v[0], v[1], 2, 1),
            margin: 0.0,
        },
        OpCase {
            name: "bilinear_resize",
            tolerance: 1e-5,
            inputs: vec![vec![1, 2, 3, 2]],
            build: |g, v| g.bilinear_resize(v[0], 2),
            margin: 0.0,
        },
        OpCase {
            name: "batch_norm_train",
            tolerance: 1e-4,
            inputs: vec![vec![4, 3], vec![3], vec![3]],
            build: |g, v| g.batch_norm_train(v[0], v[1], v[2], 1e-5).map(|(y, _)| y),
            margin: 0.0,
        },
        OpCase {
            name: "batch_norm_eval",
            tolerance: 1e-6,
            inputs: vec![vec![3, 2], vec![2], vec![2]],
            build: |g, v| g.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2], &[0.9, 1.3], 1e-5),
            margin: 0.0,
        },
        OpCase {
            name: "add_bias",
            tolerance: 1e-6,
            inputs: vec![vec![3, 4], vec![4]],
            build: |g, v| g.add_bias(v[0], v[1]),
            margin: 0.0,
        },
        OpCase {
            name: "elementwise_mix",
            tolerance: 1e-6,
            inputs: vec![vec![2, 3], vec![2, 3]],
            build: |g, v| {
                let s = g.add(v[0], v[1])?;
                let d = g.sub(v[0], v[1])?;
                let p = g.mul(s, d)?;
                g.scale(p, 0.5)
            },
            margin: 0.0,
        },
        OpCase {
            name: "shape_ops_chain",
            tolerance: 1e-6,
            inputs: vec![vec![4, 3]],
            build: |g, v| {
                let gathered = g.gather_rows(v[0], &[2, 0, 3, 1])?;
                let a = g.slice(gathered, 0, 0, 2)?;
                let b = g.slice(gathered, 0, 2, 2)?;
                let joined = g.concat(0, &[b, a])?;
                let rep = g.repeat0(joined, 2)?;
                let pooled = g.mean_axis(rep, 1)?;
                let flat = g.reshape(pooled, &[2, 3])?;
                g.permute(flat, &[1, 0])
            },
            margin: 0.0,
        },
        OpCase {
            name: "mse",
            tolerance: 1e-6,
            inputs: vec![vec![3, 3], vec![3, 3]],
            build: |g, v| g.mse(v[0], v[1]),
            margin: 0.0,
        },
    ]
}
