//! Synthetic single-person data: colored Gaussian blobs at sampled joint
//! positions with limb segments, grayscale clutter and pixel noise.
//!
//! Joints are sampled independently and uniformly over the central region,
//! each joint carries a fixed distinct color, and the annotation coordinates
//! are the blob centers by construction.

use crate::heatmap::{Keypoint, KeypointSet, V_UNLABELED, V_VISIBLE};
use crate::rng::Rng;
use crate::schema::Schema;
use crate::tensor::{Elem, Tensor};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub hw: (usize, usize),
    pub schema: Schema,
    /// Gaussian radius of a joint blob, in pixels.
    pub blob_sigma: f64,
    /// Number of grayscale distractor blobs.
    pub clutter: usize,
    /// Uniform pixel-noise amplitude.
    pub noise: f64,
    /// Probability that a joint is dropped to the unlabeled state.
    pub occlusion_prob: f64,
    /// Fraction of each border excluded from joint positions.
    pub margin: f64,
}

impl SynthConfig {
    pub fn for_schema(schema: Schema, hw: (usize, usize)) -> Self {
        SynthConfig {
            hw,
            schema,
            blob_sigma: 2.0,
            clutter: 3,
            noise: 0.05,
            occlusion_prob: 0.0,
            margin: 0.15,
        }
    }
}

pub struct SynthSample<E: Elem> {
    pub image: Tensor<E>,
    pub kps: KeypointSet,
}

/// Fixed saturated palette: joint k gets a distinct hue.
pub fn joint_color(k: usize, n: usize) -> [f64; 3] {
    let h = k as f64 / n.max(1) as f64 * 360.0;
    hsv_to_rgb(h, 0.9, 0.9)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn splat(buf: &mut [f64], hw: (usize, usize), cx: f64, cy: f64, sigma: f64, color: [f64; 3]) {
    let (h, w) = hw;
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let (icx, icy) = (cx.round() as isize, cy.round() as isize);
    for dy in -radius..=radius {
        let y = icy + dy;
        if y < 0 || y >= h as isize {
            continue;
        }
        for dx in -radius..=radius {
            let x = icx + dx;
            if x < 0 || x >= w as isize {
                continue;
            }
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let a = (-d2 / denom).exp();
            let px = (y as usize * w + x as usize) * 3;
            for ch in 0..3 {
                buf[px + ch] = (buf[px + ch] + a * color[ch]).min(1.0);
            }
        }
    }
}

fn draw_limb(buf: &mut [f64], hw: (usize, usize), a: (f64, f64), b: (f64, f64)) {
    let steps = (((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt() * 2.0).ceil() as usize + 1;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = a.0 + t * (b.0 - a.0);
        let y = a.1 + t * (b.1 - a.1);
        splat(buf, hw, x, y, 0.7, [0.18, 0.18, 0.18]);
    }
}

/// One deterministic sample per (seed, index): the generator is stream-per-
/// index, so samples are independent of enumeration order.
pub fn synth_sample<E: Elem>(cfg: &SynthConfig, seed: u64, index: u64) -> SynthSample<E> {
    let mut rng = Rng::new(seed).fork(index);
    let (h, w) = cfg.hw;
    let n_k = cfg.schema.num_keypoints;
    let mut buf = vec![0.0f64; h * w * 3];

    // background clutter: grayscale blobs, distinguishable from joints
    for _ in 0..cfg.clutter {
        let x = rng.uniform(0.0, w as f64);
        let y = rng.uniform(0.0, h as f64);
        let g = rng.uniform(0.15, 0.4);
        splat(&mut buf, cfg.hw, x, y, rng.uniform(1.5, 4.0), [g, g, g]);
    }

    // joints, uniform over the central region
    let mx = cfg.margin * w as f64;
    let my = cfg.margin * h as f64;
    let mut points = Vec::with_capacity(n_k);
    for _ in 0..n_k {
        let x = rng.uniform(mx, w as f64 - mx);
        let y = rng.uniform(my, h as f64 - my);
        let v = if cfg.occlusion_prob > 0.0 && rng.next_f64() < cfg.occlusion_prob {
            V_UNLABELED
        } else {
            V_VISIBLE
        };
        points.push(Keypoint { x, y, v });
    }
    // limbs form a chain so the figure hangs together visually
    for i in 1..n_k {
        draw_limb(
            &mut buf,
            cfg.hw,
            (points[i - 1].x, points[i - 1].y),
            (points[i].x, points[i].y),
        );
    }
    for (k, p) in points.iter().enumerate() {
        splat(&mut buf, cfg.hw, p.x, p.y, cfg.blob_sigma, joint_color(k, n_k));
    }

    if cfg.noise > 0.0 {
        for v in buf.iter_mut() {
            *v = (*v + rng.uniform(-cfg.noise, cfg.noise)).clamp(0.0, 1.0);
        }
    }

    // tight bbox over the labeled joints, padded by the blob extent
    let pad = 3.0 * cfg.blob_sigma;
    let (mut x0, mut y0, mut x1, mut y1) = (w as f64, h as f64, 0.0f64, 0.0f64);
    for p in &points {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let x0 = (x0 - pad).max(0.0);
    let y0 = (y0 - pad).max(0.0);
    let x1 = (x1 + pad).min(w as f64);
    let y1 = (y1 + pad).min(h as f64);

    SynthSample {
        image: Tensor::new(&[h, w, 3], buf.into_iter().map(E::from_f64).collect())
            .expect("buffer sized by construction"),
        kps: KeypointSet {
            points,
            bbox: (x0, y0, x1 - x0, y1 - y0),
            dataset: cfg.schema.name.clone(),
        },
    }
}

pub fn synth_generate<E: Elem>(cfg: &SynthConfig, n: usize, seed: u64) -> Vec<SynthSample<E>> {
    (0..n).map(|i| synth_sample(cfg, seed, i as u64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SynthConfig {
        SynthConfig::for_schema(Schema::by_name("synthetic").unwrap(), (64, 48))
    }

    #[test]
    fn same_seed_same_pixels() {
        let a = synth_sample::<f32>(&cfg(), 5, 3);
        let b = synth_sample::<f32>(&cfg(), 5, 3);
        assert_eq!(a.image.data(), b.image.data());
        assert_eq!(a.kps, b.kps);
        let c = synth_sample::<f32>(&cfg(), 6, 3);
        assert_ne!(a.image.data(), c.image.data());
    }

    /// The annotated joint must sit on a rendered blob of its own color:
    /// the brightest pixel of the dominant channel near the joint is the
    /// joint itself.
    #[test]
    fn joints_coincide_with_blob_centers() {
        let mut c = cfg();
        c.noise = 0.0;
        c.clutter = 0;
        let s = synth_sample::<f64>(&c, 9, 0);
        let (h, w) = c.hw;
        for (k, p) in s.kps.points.iter().enumerate() {
            let color = joint_color(k, c.schema.num_keypoints);
            let dominant = (0..3).max_by(|&a, &b| color[a].total_cmp(&color[b])).unwrap();
            let (px, py) = (p.x.round() as usize, p.y.round() as usize);
            let at = |x: usize, y: usize| s.image.data()[(y * w + x) * 3 + dominant];
            let here = at(px, py);
            // value at the joint within a 7px ring must dominate the ring
            let mut ring_max = 0.0f64;
            for dy in -7i32..=7 {
                for dx in -7i32..=7 {
                    if dx.abs().max(dy.abs()) < 4 {
                        continue;
                    }
                    let (x, y) = (px as i32 + dx, py as i32 + dy);
                    if x >= 0 && (x as usize) < w && y >= 0 && (y as usize) < h {
                        ring_max = ring_max.max(at(x as usize, y as usize));
                    }
                }
            }
            assert!(here > ring_max * 0.99, "joint {k}: {here} vs ring {ring_max}");
        }
    }

    /// Chi-square uniformity of the position marginals over the central
    /// region at the 0.01 level (critical value 21.67 for 9 dof).
    #[test]
    fn joint_positions_are_uniform_over_the_central_region() {
        let c = cfg();
        let n = 10_000;
        let bins = 10;
        let mut counts_x = vec![0usize; bins];
        let mut counts_y = vec![0usize; bins];
        let (h, w) = c.hw;
        let (mx, my) = (c.margin * w as f64, c.margin * h as f64);
        for i in 0..n {
            let s = synth_sample::<f32>(&c, 42, i as u64);
            let p = s.kps.points[0];
            let bx = ((p.x - mx) / (w as f64 - 2.0 * mx) * bins as f64) as usize;
            let by = ((p.y - my) / (h as f64 - 2.0 * my) * bins as f64) as usize;
            counts_x[bx.min(bins - 1)] += 1;
            counts_y[by.min(bins - 1)] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2 = |counts: &[usize]| {
            counts
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum::<f64>()
        };
        let (cx, cy) = (chi2(&counts_x), chi2(&counts_y));
        assert!(cx < 21.67, "x marginal chi2 {cx}");
        assert!(cy < 21.67, "y marginal chi2 {cy}");
    }

    #[test]
    fn occlusion_produces_unlabeled_joints() {
        let mut c = cfg();
        c.occlusion_prob = 0.5;
        let samples = synth_generate::<f32>(&c, 50, 1);
        let unlabeled: usize = samples
            .iter()
            .flat_map(|s| &s.kps.points)
            .filter(|p| p.v == V_UNLABELED)
            .count();
        let total = 50 * c.schema.num_keypoints;
        assert!(unlabeled > total / 4 && unlabeled < 3 * total / 4);
    }

    #[test]
    fn bbox_contains_all_joints() {
        let samples = synth_generate::<f32>(&cfg(), 20, 3);
        for s in samples {
            let (bx, by, bw, bh) = s.kps.bbox;
            for p in &s.kps.points {
                assert!(p.x >= bx && p.x <= bx + bw);
                assert!(p.y >= by && p.y <= by + bh);
            }
        }
    }
}
