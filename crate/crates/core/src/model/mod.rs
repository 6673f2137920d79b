//! The super-resolution network.
//!
//! Data flow at LR resolution, every convolution 3x3 and same-padded:
//!
//! ```text
//! Y ─ ext1(32) ─ ext2(24) ─ ext3(16) ─ ext4(8)
//!        │          │                    │
//!        └────┬─────┴────────────────────┘
//! edge ─ edge1(16) ─┤ concat(ext1, ext2, ext4, edge1) = 80 channels
//!                   └─ up1(32) ─ up2(s², linear) ─ pixel shuffle ─ residual
//! ```
//!
//! ReLU follows every convolution except `up2`. The residual is added to the
//! bicubic upsampling of the input luma; chroma is bicubic only.

mod io;

pub(crate) use io::{index_records, params_from_records, params_to_bytes};
pub use io::{
    load_params, read_records, save_params, write_records, Record, FORMAT_VERSION, MAGIC,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure, Result};
use crate::imageops::{bicubic_resize, sobel_magnitude, PlanarImage, Plane};
use crate::tensor::{
    concat_channels, conv2d, conv2d_backward, pixel_shuffle, pixel_unshuffle, relu_backward,
    split_channels, ConvKernel, Tensor,
};

pub const LAYER_NAMES: [&str; 7] = ["ext1", "ext2", "ext3", "ext4", "edge1", "up1", "up2"];

/// Index into [`ModelParams::kernels`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Ext1 = 0,
    Ext2,
    Ext3,
    Ext4,
    Edge1,
    Up1,
    Up2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub scale: usize,
    pub extractor_filters: [usize; 4],
    pub edge_filters: usize,
    pub upsampler_filters: [usize; 2],
    pub kernel_size: usize,
}

impl NetworkConfig {
    pub fn new(scale: usize) -> Result<Self> {
        ensure(scale == 2 || scale == 4, || {
            format!("scale must be 2 or 4, got {scale}")
        })?;
        Ok(Self {
            scale,
            extractor_filters: [32, 24, 16, 8],
            edge_filters: 16,
            upsampler_filters: [32, scale * scale],
            kernel_size: 3,
        })
    }

    /// Channels entering `up1`: extractor layers 1, 2 and 4 plus the edge branch.
    pub fn concat_width(&self) -> usize {
        let f = self.extractor_filters;
        f[0] + f[1] + f[3] + self.edge_filters
    }

    /// `(in_channels, out_channels)` for each layer in [`LAYER_NAMES`] order.
    pub fn layer_shapes(&self) -> [(usize, usize); 7] {
        let f = self.extractor_filters;
        let u = self.upsampler_filters;
        [
            (1, f[0]),
            (f[0], f[1]),
            (f[1], f[2]),
            (f[2], f[3]),
            (1, self.edge_filters),
            (self.concat_width(), u[0]),
            (u[0], u[1]),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.kernel_size % 2 == 1, || {
            "kernel size must be odd".into()
        })?;
        ensure(self.upsampler_filters[1] == self.scale * self.scale, || {
            "last upsampler layer must have scale^2 filters".into()
        })
    }
}

/// Learnable parameters: `in * out * k^2 + out` per convolution.
pub fn param_count(config: &NetworkConfig) -> usize {
    let k2 = config.kernel_size * config.kernel_size;
    config
        .layer_shapes()
        .iter()
        .map(|&(i, o)| i * o * k2 + o)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: NetworkConfig,
    pub version: u32,
    /// In [`LAYER_NAMES`] order.
    pub kernels: [ConvKernel; 7],
}

impl ModelParams {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_size;
        let shapes = config.layer_shapes();
        let mut kernels = Vec::with_capacity(7);
        for &(i, o) in &shapes {
            kernels.push(ConvKernel::zeros(o, i, k)?);
        }
        Ok(Self {
            config,
            version: FORMAT_VERSION,
            kernels: kernels.try_into().expect("seven layers"),
        })
    }

    pub fn kernel(&self, layer: Layer) -> &ConvKernel {
        &self.kernels[layer as usize]
    }

    pub fn kernel_mut(&mut self, layer: Layer) -> &mut ConvKernel {
        &mut self.kernels[layer as usize]
    }

    /// Zero the last convolution so the network predicts no residual and
    /// super-resolution reduces to bicubic upsampling.
    pub fn zero_residual(&mut self) {
        let up2 = self.kernel_mut(Layer::Up2);
        up2.weights.data_mut().fill(0.0);
        up2.bias.data_mut().fill(0.0);
    }

    /// `(name, tensor)` in serialisation order: `ext1.weight`, `ext1.bias`, ...
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        LAYER_NAMES
            .iter()
            .zip(&self.kernels)
            .flat_map(|(n, k)| {
                [
                    (format!("{n}.weight"), &k.weights),
                    (format!("{n}.bias"), &k.bias),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.kernels
            .iter_mut()
            .flat_map(|k| [&mut k.weights, &mut k.bias])
            .collect()
    }

    pub fn tensor_lengths(&self) -> Vec<usize> {
        self.named_tensors().iter().map(|(_, t)| t.len()).collect()
    }

    pub fn zero_grads(&mut self) {
        self.tensors_mut().into_iter().for_each(Tensor::zero_grad);
    }

    pub fn is_finite(&self) -> bool {
        self.kernels
            .iter()
            .all(|k| k.weights.is_finite() && k.bias.is_finite())
    }

    pub fn param_count(&self) -> usize {
        self.kernels.iter().map(ConvKernel::param_count).sum()
    }
}

/// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases. Deterministic
/// for a given seed.
pub fn init_params(config: NetworkConfig, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k2 = config.kernel_size * config.kernel_size;
    for (kernel, &(fan_in, _)) in params.kernels.iter_mut().zip(&config.layer_shapes()) {
        let std = (2.0 / (fan_in * k2) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        for w in kernel.weights.data_mut() {
            *w = normal.sample(&mut rng) as f32;
        }
    }
    Ok(params)
}

fn check_inputs(y_lr: &Tensor, edge_lr: &Tensor) -> Result<()> {
    ensure(y_lr.shape() == edge_lr.shape(), || {
        format!(
            "luma {:?} and edge {:?} shapes differ",
            y_lr.shape(),
            edge_lr.shape()
        )
    })?;
    ensure(y_lr.channels() == 1, || {
        format!("expected 1 channel, got {:?}", y_lr.shape())
    })?;
    ensure(y_lr.height() >= 3 && y_lr.width() >= 3, || {
        format!("input must be at least 3x3, got {:?}", y_lr.shape())
    })
}

fn conv_relu(x: &Tensor, k: &ConvKernel) -> Result<Tensor> {
    let mut y = conv2d(x, k)?;
    crate::tensor::relu_in_place(&mut y);
    Ok(y)
}

/// Residual luma at `(h*s, w*s)` for a batch of LR luma/edge inputs. Unclamped.
pub fn forward(params: &ModelParams, y_lr: &Tensor, edge_lr: &Tensor) -> Result<Tensor> {
    Ok(forward_cached(params, y_lr, edge_lr)?.output)
}

/// Every intermediate activation of one forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct Activations {
    pub y_lr: Tensor,
    pub edge_lr: Tensor,
    pub a1: Tensor,
    pub a2: Tensor,
    pub a3: Tensor,
    pub a4: Tensor,
    pub edge: Tensor,
    pub features: Tensor,
    pub u1: Tensor,
    pub output: Tensor,
}

pub fn forward_cached(
    params: &ModelParams,
    y_lr: &Tensor,
    edge_lr: &Tensor,
) -> Result<Activations> {
    check_inputs(y_lr, edge_lr)?;
    let a1 = conv_relu(y_lr, params.kernel(Layer::Ext1))?;
    let a2 = conv_relu(&a1, params.kernel(Layer::Ext2))?;
    let a3 = conv_relu(&a2, params.kernel(Layer::Ext3))?;
    let a4 = conv_relu(&a3, params.kernel(Layer::Ext4))?;
    let edge = conv_relu(edge_lr, params.kernel(Layer::Edge1))?;
    let features = concat_channels(&[&a1, &a2, &a4, &edge])?;
    let u1 = conv_relu(&features, params.kernel(Layer::Up1))?;
    let u2 = conv2d(&u1, params.kernel(Layer::Up2))?;
    let output = pixel_shuffle(&u2, params.config.scale)?;
    Ok(Activations {
        y_lr: y_lr.clone(),
        edge_lr: edge_lr.clone(),
        a1,
        a2,
        a3,
        a4,
        edge,
        features,
        u1,
        output,
    })
}

/// Gradients of one backward pass, in [`LAYER_NAMES`] order, plus the
/// gradients with respect to both network inputs.
#[derive(Debug, Clone)]
pub struct NetworkGrads {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub y_lr: Tensor,
    pub edge_lr: Tensor,
}

/// Backpropagate `grad_output` (shaped like the forward output).
pub fn backward(
    params: &ModelParams,
    acts: &Activations,
    grad_output: &Tensor,
) -> Result<NetworkGrads> {
    ensure(grad_output.shape() == acts.output.shape(), || {
        format!(
            "backward: gradient {:?} vs output {:?}",
            grad_output.shape(),
            acts.output.shape()
        )
    })?;
    let cfg = &params.config;
    let mut weights: Vec<Option<Tensor>> = vec![None; 7];
    let mut biases: Vec<Option<Tensor>> = vec![None; 7];
    let mut record = |layer: Layer, w: Tensor, b: Tensor| {
        weights[layer as usize] = Some(w);
        biases[layer as usize] = Some(b);
    };

    let g_u2 = pixel_unshuffle(grad_output, cfg.scale)?;
    let g = conv2d_backward(&acts.u1, params.kernel(Layer::Up2), &g_u2)?;
    record(Layer::Up2, g.weight, g.bias);

    let g_pre = relu_backward(&acts.u1, &g.input)?;
    let g = conv2d_backward(&acts.features, params.kernel(Layer::Up1), &g_pre)?;
    record(Layer::Up1, g.weight, g.bias);

    let f = cfg.extractor_filters;
    let parts = split_channels(&g.input, &[f[0], f[1], f[3], cfg.edge_filters])?;
    let [g_a1_skip, g_a2_skip, g_a4, g_edge]: [Tensor; 4] = parts.try_into().expect("four parts");

    let g_pre = relu_backward(&acts.edge, &g_edge)?;
    let g = conv2d_backward(&acts.edge_lr, params.kernel(Layer::Edge1), &g_pre)?;
    record(Layer::Edge1, g.weight, g.bias);
    let g_edge_in = g.input;

    let g_pre = relu_backward(&acts.a4, &g_a4)?;
    let g = conv2d_backward(&acts.a3, params.kernel(Layer::Ext4), &g_pre)?;
    record(Layer::Ext4, g.weight, g.bias);

    let g_pre = relu_backward(&acts.a3, &g.input)?;
    let g = conv2d_backward(&acts.a2, params.kernel(Layer::Ext3), &g_pre)?;
    record(Layer::Ext3, g.weight, g.bias);

    let g_a2 = g.input.add(&g_a2_skip)?;
    let g_pre = relu_backward(&acts.a2, &g_a2)?;
    let g = conv2d_backward(&acts.a1, params.kernel(Layer::Ext2), &g_pre)?;
    record(Layer::Ext2, g.weight, g.bias);

    let g_a1 = g.input.add(&g_a1_skip)?;
    let g_pre = relu_backward(&acts.a1, &g_a1)?;
    let g = conv2d_backward(&acts.y_lr, params.kernel(Layer::Ext1), &g_pre)?;
    record(Layer::Ext1, g.weight, g.bias);

    Ok(NetworkGrads {
        weights: weights
            .into_iter()
            .map(|t| t.expect("every layer visited"))
            .collect(),
        biases: biases
            .into_iter()
            .map(|t| t.expect("every layer visited"))
            .collect(),
        y_lr: g.input,
        edge_lr: g_edge_in,
    })
}

impl NetworkGrads {
    /// Store these gradients on the parameter tensors, overwriting old ones.
    pub fn apply_to(self, params: &mut ModelParams) -> Result<()> {
        for ((k, w), b) in params.kernels.iter_mut().zip(self.weights).zip(self.biases) {
            k.weights.set_grad(w.into_data())?;
            k.bias.set_grad(b.into_data())?;
        }
        Ok(())
    }
}

/// Super-resolve a planar image: the network refines luma on top of bicubic
/// upsampling; chroma is bicubic-upsampled. Output is `(w*s, h*s)`, clamped.
pub fn super_resolve(params: &ModelParams, image: &PlanarImage) -> Result<PlanarImage> {
    let s = params.config.scale;
    let (w, h) = (image.width(), image.height());
    ensure(w >= 3 && h >= 3, || {
        format!("image must be at least 3x3, got {w}x{h}")
    })?;
    let edge = sobel_magnitude(&image.y)?;
    let residual = forward(params, &image.y.to_tensor(), &edge.to_tensor())?;
    let base = bicubic_resize(&image.y, w * s, h * s)?;
    let y: Vec<f32> = residual
        .data()
        .iter()
        .zip(base.data())
        .map(|(r, b)| (r + b).clamp(0.0, 1.0))
        .collect();
    let chroma = |p: &Plane| -> Result<Plane> {
        let mut up = bicubic_resize(p, w * s, h * s)?;
        up.clamp01();
        Ok(up)
    };
    PlanarImage::new(
        Plane::new(w * s, h * s, y)?,
        chroma(&image.cb)?,
        chroma(&image.cr)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::bicubic_upscale_image;

    fn textured(w: usize, h: usize, phase: usize) -> Plane {
        Plane::from_fn(w, h, |x, y| (((x + phase) * 13 + y * 7) % 17) as f32 / 16.0)
    }

    #[test]
    fn param_counts_per_layer() {
        let c4 = NetworkConfig::new(4).unwrap();
        let c2 = NetworkConfig::new(2).unwrap();
        let per_layer: Vec<usize> = c4
            .layer_shapes()
            .iter()
            .map(|&(i, o)| i * o * 9 + o)
            .collect();
        assert_eq!(per_layer[0], 320);
        assert_eq!(per_layer[5], 23_072);
        assert_eq!(param_count(&c4), 39_744);
        assert_eq!(param_count(&c2), 36_276);
        assert_eq!(init_params(c2, 0).unwrap().param_count(), 36_276);
        assert_eq!(c4.concat_width(), 80);
        assert!(NetworkConfig::new(3).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let c = NetworkConfig::new(2).unwrap();
        let a = init_params(c, 42).unwrap();
        assert_eq!(a, init_params(c, 42).unwrap());
        assert_ne!(a, init_params(c, 43).unwrap());
        assert!(a
            .kernels
            .iter()
            .all(|k| k.bias.data().iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn ext1_weight_variance_matches_he_scaling() {
        let p = init_params(NetworkConfig::new(2).unwrap(), 5).unwrap();
        let w = p.kernel(Layer::Ext1).weights.data();
        assert_eq!(w.len(), 288);
        let mean = w.iter().map(|&v| v as f64).sum::<f64>() / 288.0;
        let var = w.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 288.0;
        let want = 2.0 / 9.0;
        assert!((var - want).abs() / want < 0.2, "variance {var}");
    }

    #[test]
    fn zero_up2_means_zero_residual() {
        let mut p = init_params(NetworkConfig::new(4).unwrap(), 1).unwrap();
        p.zero_residual();
        let y = textured(16, 16, 0).to_tensor();
        let e = sobel_magnitude(&textured(16, 16, 0)).unwrap().to_tensor();
        let out = forward(&p, &y, &e).unwrap();
        assert_eq!(out.shape(), [1, 1, 64, 64]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_forward_matches_single_calls() {
        let p = init_params(NetworkConfig::new(2).unwrap(), 9).unwrap();
        let planes: Vec<Plane> = (0..20).map(|i| textured(16, 16, i)).collect();
        let ys: Vec<Tensor> = planes.iter().map(Plane::to_tensor).collect();
        let es: Vec<Tensor> = planes
            .iter()
            .map(|p| sobel_magnitude(p).unwrap().to_tensor())
            .collect();
        let batch = forward(
            &p,
            &Tensor::stack(&ys).unwrap(),
            &Tensor::stack(&es).unwrap(),
        )
        .unwrap();
        for i in 0..20 {
            let single = forward(&p, &ys[i], &es[i]).unwrap();
            for (a, b) in batch.item(i).iter().zip(single.data()) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let p = init_params(NetworkConfig::new(2).unwrap(), 0).unwrap();
        assert!(forward(
            &p,
            &Tensor::zeros([1, 1, 8, 8]),
            &Tensor::zeros([1, 1, 8, 9])
        )
        .is_err());
        assert!(forward(
            &p,
            &Tensor::zeros([1, 1, 2, 8]),
            &Tensor::zeros([1, 1, 2, 8])
        )
        .is_err());
    }

    #[test]
    fn super_resolve_shapes_and_residual_identity() {
        let mut p = init_params(NetworkConfig::new(2).unwrap(), 3).unwrap();
        p.zero_residual();
        let img = PlanarImage::from_luma(textured(100, 40, 0)).unwrap();
        let out = super_resolve(&p, &img).unwrap();
        assert_eq!((out.width(), out.height()), (200, 80));
        assert_eq!(out, bicubic_upscale_image(&img, 2).unwrap());
    }

    #[test]
    fn constant_grey_stays_grey_and_in_range() {
        let mut p = init_params(NetworkConfig::new(4).unwrap(), 3).unwrap();
        let img = PlanarImage::from_luma(Plane::filled(10, 7, 0.5)).unwrap();
        let trained_like = super_resolve(&p, &img).unwrap();
        assert!(trained_like
            .y
            .data()
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
        p.zero_residual();
        let out = super_resolve(&p, &img).unwrap();
        assert!(out.y.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn translation_covariance_in_the_interior() {
        let p = init_params(NetworkConfig::new(2).unwrap(), 11).unwrap();
        let s = 2;
        let base = textured(24, 20, 0);
        // Shift right by one pixel.
        let shifted = Plane::from_fn(24, 20, |x, y| base.get(x.saturating_sub(1), y));
        let run = |pl: &Plane| {
            forward(
                &p,
                &pl.to_tensor(),
                &sobel_magnitude(pl).unwrap().to_tensor(),
            )
            .unwrap()
        };
        let (a, b) = (run(&base), run(&shifted));
        // Six stacked 3x3 convs see 6 LR pixels each way, plus the shifted-in column.
        let border = 7 * s;
        for y in border..40 - border {
            for x in border..48 - border - s {
                let (va, vb) = (a.at(0, 0, y, x), b.at(0, 0, y, x + s));
                assert!((va - vb).abs() < 1e-5, "({x},{y}) {va} vs {vb}");
            }
        }
    }
}
