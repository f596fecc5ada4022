//! Synthetic saliency scenes: bright Gaussian blobs on a textured noise
//! background, with the normalized blob mixture as ground truth.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::exp;
use crate::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub row: usize,
    pub col: usize,
    pub sigma: f64,
    pub amplitude: f64,
}

/// Appearance parameters of generated scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    pub max_blobs: usize,
    pub sigma: (f64, f64),
    pub amplitude: (f64, f64),
    /// Range of the per-channel background base level.
    pub base: (f64, f64),
    /// Amplitude of the smooth (coarse-grid) texture component.
    pub texture: f64,
    /// Amplitude of the per-pixel noise component.
    pub grain: f64,
    /// Cell size of the coarse texture grid, in pixels.
    pub cell: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            height: 48,
            width: 64,
            max_blobs: 3,
            sigma: (3.0, 5.0),
            amplitude: (0.01, 0.2),
            base: (0.3, 0.6),
            texture: 0.005,
            grain: 0.003,
            cell: 8,
        }
    }
}

impl SceneParams {
    /// Faint single-blob scenes on a nearly flat background, used for
    /// attack pairs: the blob contrast sits near the low end of the
    /// training range so a small perturbation can move the prediction.
    pub fn faint() -> Self {
        SceneParams {
            amplitude: (0.008, 0.016),
            texture: 0.002,
            grain: 0.001,
            ..SceneParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `3×H×W`, values in `[0, 1]`.
    pub image: Tensor,
    /// `1×H×W`, sums to 1.
    pub saliency: Tensor,
    pub blobs: Vec<Blob>,
}

fn gaussian(row: usize, col: usize, b: &Blob) -> f64 {
    let dy = row as f64 - b.row as f64;
    let dx = col as f64 - b.col as f64;
    exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma))
}

/// Smooth value noise: a random coarse grid, bilinearly interpolated.
fn value_noise(rng: &mut ChaCha8Rng, h: usize, w: usize, cell: usize) -> Vec<f64> {
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let grid: Vec<f64> = (0..gh * gw).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = y as f64 / cell as f64;
        let (y0, ty) = (fy as usize, fy - (fy as usize) as f64);
        for x in 0..w {
            let fx = x as f64 / cell as f64;
            let (x0, tx) = (fx as usize, fx - (fx as usize) as f64);
            let g = |yy: usize, xx: usize| grid[yy * gw + xx];
            let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let bot = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Renders the given blobs over a background textured from `texture_seed`.
pub fn render_scene(blobs: &[Blob], params: &SceneParams, texture_seed: u64) -> Sample {
    let (h, w) = (params.height, params.width);
    let mut rng = ChaCha8Rng::seed_from_u64(texture_seed);
    let mut image = Vec::with_capacity(3 * h * w);
    for _ in 0..3 {
        let base = rng.gen_range(params.base.0..=params.base.1);
        let smooth = value_noise(&mut rng, h, w, params.cell.max(1));
        for (i, s) in smooth.into_iter().enumerate() {
            let (y, x) = (i / w, i % w);
            let blob: f64 = blobs.iter().map(|b| b.amplitude * gaussian(y, x, b)).sum();
            let v = base + params.texture * s + params.grain * rng.gen_range(-1.0..1.0) + blob;
            image.push(v.clamp(0.0, 1.0));
        }
    }
    let mut sal: Vec<f64> = (0..h * w)
        .map(|i| blobs.iter().map(|b| gaussian(i / w, i % w, b)).sum())
        .collect();
    let total: f64 = sal.iter().sum();
    if total > 0.0 {
        sal.iter_mut().for_each(|v| *v /= total);
    } else {
        let u = 1.0 / (h * w) as f64;
        sal.iter_mut().for_each(|v| *v = u);
    }
    Sample {
        image: Tensor::chw(3, h, w, image).expect("scene shape"),
        saliency: Tensor::chw(1, h, w, sal).expect("map shape"),
        blobs: blobs.to_vec(),
    }
}

/// Draws one blob whose centre column lies in `cols` (a half-open range).
pub fn random_blob(rng: &mut ChaCha8Rng, params: &SceneParams, cols: (usize, usize)) -> Blob {
    let margin = 6.min(params.height / 4);
    Blob {
        row: rng.gen_range(margin..params.height - margin),
        col: rng.gen_range(cols.0..cols.1),
        sigma: rng.gen_range(params.sigma.0..=params.sigma.1),
        amplitude: rng.gen_range(params.amplitude.0..=params.amplitude.1),
    }
}

/// `count` scenes with 1 to `max_blobs` blobs each; deterministic per seed.
pub fn generate_synthetic_dataset(count: usize, params: &SceneParams, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = 6.min(params.width / 4);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=params.max_blobs.max(1));
            let blobs: Vec<Blob> = (0..n)
                .map(|_| random_blob(&mut rng, params, (margin, params.width - margin)))
                .collect();
            render_scene(&blobs, params, rng.gen())
        })
        .collect()
}

/// An (original, guide) pair over one shared background: a single blob in
/// the left third of the original and a single blob in the right third of
/// the guide.
pub fn left_right_pair(params: &SceneParams, seed: u64) -> (Sample, Sample) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let third = params.width / 3;
    let margin = 6.min(third / 2);
    let left = random_blob(&mut rng, params, (margin, third));
    let right = random_blob(&mut rng, params, (params.width - third, params.width - margin));
    let background = rng.gen();
    let original = render_scene(&[left], params, background);
    let guide = render_scene(&[right], params, background);
    (original, guide)
}
