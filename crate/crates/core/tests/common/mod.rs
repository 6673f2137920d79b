//! Test-only reference implementations in `f64`, written from the definitions
//! and sharing no code with the crate's `f32` kernels.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textsr::imageops::Plane;
use textsr::model::{ModelParams, LAYER_NAMES};
use textsr::tensor::Tensor;

pub mod data;
pub mod gradcheck;

#[derive(Debug, Clone)]
pub struct Arr {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Arr {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Arr {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Arr {
            shape: t.shape(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn idx(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, ch, h, w] = self.shape;
        ((b * ch + c) * h + y) * w + x
    }

    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(b, c, y, x)]
    }
}

/// Same-padded cross-correlation, straight from the definition.
pub fn conv(x: &Arr, w: &Arr, bias: &[f64]) -> Arr {
    let [n, c, h, wd] = x.shape;
    let [oc, ic, k, _] = w.shape;
    assert_eq!(c, ic);
    let p = (k / 2) as isize;
    let mut out = Arr::zeros([n, oc, h, wd]);
    for b in 0..n {
        for o in 0..oc {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = bias[o];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - p;
                                let sx = xx as isize + kx as isize - p;
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < wd {
                                    acc += w.get(o, ci, ky, kx)
                                        * x.get(b, ci, sy as usize, sx as usize);
                                }
                            }
                        }
                    }
                    let i = out.idx(b, o, y, xx);
                    out.data[i] = acc;
                }
            }
        }
    }
    out
}

pub fn relu(x: &Arr) -> Arr {
    Arr {
        shape: x.shape,
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

pub fn concat(parts: &[&Arr]) -> Arr {
    let [n, _, h, w] = parts[0].shape;
    let c: usize = parts.iter().map(|p| p.shape[1]).sum();
    let mut out = Arr::zeros([n, c, h, w]);
    for b in 0..n {
        let mut co = 0;
        for p in parts {
            for ci in 0..p.shape[1] {
                for y in 0..h {
                    for x in 0..w {
                        let i = out.idx(b, co, y, x);
                        out.data[i] = p.get(b, ci, y, x);
                    }
                }
                co += 1;
            }
        }
    }
    out
}

/// Enumerates the depth-to-space index law element by element.
pub fn pixel_shuffle(x: &Arr, s: usize) -> Arr {
    let [n, c, h, w] = x.shape;
    let oc = c / (s * s);
    let mut out = Arr::zeros([n, oc, h * s, w * s]);
    for b in 0..n {
        for co in 0..oc {
            for y in 0..h {
                for xx in 0..w {
                    for dy in 0..s {
                        for dx in 0..s {
                            let i = out.idx(b, co, y * s + dy, xx * s + dx);
                            out.data[i] = x.get(b, co * s * s + dy * s + dx, y, xx);
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn mse(a: &Arr, b: &Arr) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64
}

pub fn dot(a: &Arr, b: &Arr) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Network parameters in f64: `(weights, bias)` per layer in canonical order.
#[derive(Debug, Clone)]
pub struct RefParams {
    pub layers: Vec<(Arr, Vec<f64>)>,
    pub scale: usize,
}

impl RefParams {
    pub fn from_model(p: &ModelParams) -> Self {
        RefParams {
            layers: p
                .kernels
                .iter()
                .map(|k| {
                    (
                        Arr::from_tensor(&k.weights),
                        k.bias.data().iter().map(|&v| v as f64).collect(),
                    )
                })
                .collect(),
            scale: p.config.scale,
        }
    }

    /// Flat parameter slot `t` (2*layer for weights, 2*layer+1 for bias).
    pub fn slot_mut(&mut self, t: usize) -> &mut Vec<f64> {
        let (w, b) = &mut self.layers[t / 2];
        if t % 2 == 0 {
            &mut w.data
        } else {
            b
        }
    }
}

/// The whole network, from its published layer list.
pub fn network(p: &RefParams, y: &Arr, e: &Arr) -> Arr {
    network_trace(p, y, e, None).0
}

/// Network output plus the on/off pattern of every ReLU, so finite
/// differences that straddle a kink can be recognised. With `mask` given,
/// each ReLU gates by the mask instead of its own sign, i.e. the network is
/// evaluated on one fixed linear piece.
pub fn network_trace(p: &RefParams, y: &Arr, e: &Arr, mask: Option<&[bool]>) -> (Arr, Vec<bool>) {
    assert_eq!(LAYER_NAMES.len(), p.layers.len());
    let mut signs = Vec::new();
    let mut layer = |i: usize, x: &Arr| {
        let mut pre = conv(x, &p.layers[i].0, &p.layers[i].1);
        let start = signs.len();
        signs.extend(pre.data.iter().map(|&v| v > 0.0));
        let gate = mask.map_or(&signs[start..], |m| &m[start..start + pre.data.len()]);
        for (v, &on) in pre.data.iter_mut().zip(gate) {
            if !on {
                *v = 0.0;
            }
        }
        pre
    };
    let a1 = layer(0, y);
    let a2 = layer(1, &a1);
    let a3 = layer(2, &a2);
    let a4 = layer(3, &a3);
    let ed = layer(4, e);
    let feat = concat(&[&a1, &a2, &a4, &ed]);
    let u1 = layer(5, &feat);
    let u2 = conv(&u1, &p.layers[6].0, &p.layers[6].1);
    (pixel_shuffle(&u2, p.scale), signs)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: [usize; 4], lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Central difference of `f` around `x[i]`.
pub fn central_diff(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x);
    x[i] = orig - h;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * h)
}

/// Worst relative error between analytic and numeric gradients. Each entry is
/// compared against `max(|numeric|, |analytic|, floor)`, where `floor` is 1% of
/// the largest numeric magnitude in the set, so entries that are tiny next to
/// their siblings (pure cancellation noise in f32) do not dominate.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let peak = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (peak * 1e-2).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(a.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// A deterministic text-like luma plane: dark strokes on a light background
/// with soft edges.
pub fn text_plane(w: usize, h: usize, seed: u64) -> Plane {
    textsr::synthetic::text_like_plane(w, h, seed)
}
