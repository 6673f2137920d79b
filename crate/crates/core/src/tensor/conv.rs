//! Same-padded, stride-1 2-D convolution (cross-correlation, as in every
//! deep-learning framework) with a direct reference path and an im2col + GEMM
//! fast path.

use rayon::prelude::*;

use super::{Shape, Tensor};
use crate::error::{ensure, Result};

/// Output sites per im2col band. Keeps the column buffer around a few MB even
/// for 80-channel inputs while leaving enough work per GEMM call.
const BAND_SITES: usize = 4096;

/// Weights `(out_channels, in_channels, k, k)` and one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub weights: Tensor,
    /// Stored as `(1, out_channels, 1, 1)`.
    pub bias: Tensor,
}

impl ConvKernel {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let [out_c, _, kh, kw] = weights.shape();
        ensure(kh == kw, || format!("kernel must be square, got {kh}x{kw}"))?;
        ensure(kh % 2 == 1, || format!("kernel size must be odd, got {kh}"))?;
        ensure(bias.shape() == [1, out_c, 1, 1], || {
            format!(
                "bias shape {:?} does not match {out_c} output channels",
                bias.shape()
            )
        })?;
        Ok(Self { weights, bias })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, k: usize) -> Result<Self> {
        Self::new(
            Tensor::zeros([out_channels, in_channels, k, k]),
            Tensor::zeros([1, out_channels, 1, 1]),
        )
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvAlgorithm {
    /// Nested loops over every output site. Slow; the numerical reference.
    Direct,
    #[default]
    Im2col,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn check_input(input: &Tensor, kernel: &ConvKernel) -> Result<()> {
    ensure(input.channels() == kernel.in_channels(), || {
        format!(
            "conv2d: input has {} channels, kernel expects {}",
            input.channels(),
            kernel.in_channels()
        )
    })?;
    ensure(input.height() >= 1 && input.width() >= 1, || {
        format!("conv2d: empty spatial dims {:?}", input.shape())
    })
}

/// Convolve with the default (im2col) algorithm.
pub fn conv2d(input: &Tensor, kernel: &ConvKernel) -> Result<Tensor> {
    conv2d_im2col(input, kernel)
}

pub fn conv2d_with(input: &Tensor, kernel: &ConvKernel, algo: ConvAlgorithm) -> Result<Tensor> {
    match algo {
        ConvAlgorithm::Direct => conv2d_direct(input, kernel),
        ConvAlgorithm::Im2col => conv2d_im2col(input, kernel),
    }
}

pub fn conv2d_direct(input: &Tensor, kernel: &ConvKernel) -> Result<Tensor> {
    check_input(input, kernel)?;
    let [n, c, h, w] = input.shape();
    let (oc, k) = (kernel.out_channels(), kernel.size());
    let pad = (k / 2) as isize;
    let wt = kernel.weights.data();
    let bias = kernel.bias.data();
    let mut out = Tensor::zeros([n, oc, h, w]);
    let plane = h * w;
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (b, o) = (idx / oc, idx % oc);
            let src = input.item(b);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias[o];
                    for ci in 0..c {
                        for ky in 0..k {
                            let sy = y as isize + ky as isize - pad;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let sx = x as isize + kx as isize - pad;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc += wt[((o * c + ci) * k + ky) * k + kx]
                                    * src[(ci * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    dst[y * w + x] = acc;
                }
            }
        });
    Ok(out)
}

/// Row bands `[y0, y1)` covering an `h x w` plane.
fn bands(h: usize, w: usize) -> Vec<(usize, usize)> {
    let rows = (BAND_SITES / w.max(1)).clamp(1, h);
    (0..h)
        .step_by(rows)
        .map(|y0| (y0, (y0 + rows).min(h)))
        .collect()
}

/// Column matrix `(c*k*k, (y1-y0)*w)` for rows `[y0, y1)` of one item.
fn im2col(
    src: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    y0: usize,
    y1: usize,
    col: &mut Vec<f32>,
) {
    let pad = (k / 2) as isize;
    let sites = (y1 - y0) * w;
    col.clear();
    col.resize(c * k * k * sites, 0.0);
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * sites..(row + 1) * sites];
                let dx = kx as isize - pad;
                // Valid x range such that 0 <= x + dx < w.
                let x_lo = (-dx).max(0) as usize;
                let x_hi = ((w as isize - dx).min(w as isize)).max(0) as usize;
                for y in y0..y1 {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        continue;
                    }
                    let srow = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let drow = &mut dst[(y - y0) * w..(y - y0 + 1) * w];
                    for x in x_lo..x_hi {
                        drow[x] = srow[(x as isize + dx) as usize];
                    }
                }
            }
        }
    }
}

/// Scatter-add a column-gradient matrix back onto rows `[y0, y1)` of an item.
fn col2im(
    col: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    y0: usize,
    y1: usize,
    dst: &mut [f32],
) {
    let pad = (k / 2) as isize;
    let sites = (y1 - y0) * w;
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * sites..(row + 1) * sites];
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = ((w as isize - dx).min(w as isize)).max(0) as usize;
                for y in y0..y1 {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        continue;
                    }
                    let drow = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let srow = &src[(y - y0) * w..(y - y0 + 1) * w];
                    for x in x_lo..x_hi {
                        drow[(x as isize + dx) as usize] += srow[x];
                    }
                }
            }
        }
    }
}

/// Strided single-precision GEMM: `C = A·B + beta·C`, `A` is `m x k`, `B` is
/// `k x n`. Strides are `(row, col)` in elements.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len());
        assert!(last(k, n, rsb, csb) < b.len());
    }
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

pub fn conv2d_im2col(input: &Tensor, kernel: &ConvKernel) -> Result<Tensor> {
    check_input(input, kernel)?;
    let [n, c, h, w] = input.shape();
    let (oc, k) = (kernel.out_channels(), kernel.size());
    let ckk = c * k * k;
    let wt = kernel.weights.data();
    let bias = kernel.bias.data();
    let band_list = bands(h, w);

    let jobs: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|b| band_list.iter().map(move |&(y0, y1)| (b, y0, y1)))
        .collect();
    let results: Vec<Vec<f32>> = jobs
        .par_iter()
        .map_init(Vec::new, |col, &(b, y0, y1)| {
            let sites = (y1 - y0) * w;
            im2col(input.item(b), c, h, w, k, y0, y1, col);
            let mut out = vec![0.0f32; oc * sites];
            for (o, row) in out.chunks_mut(sites).enumerate() {
                row.iter_mut().for_each(|v| *v = bias[o]);
            }
            gemm(
                oc,
                ckk,
                sites,
                wt,
                (ckk, 1),
                col,
                (sites, 1),
                1.0,
                &mut out,
                (sites, 1),
            );
            out
        })
        .collect();

    let mut out = Tensor::zeros([n, oc, h, w]);
    let dst = out.data_mut();
    for (&(b, y0, y1), band) in jobs.iter().zip(&results) {
        let sites = (y1 - y0) * w;
        for o in 0..oc {
            let base = ((b * oc + o) * h + y0) * w;
            dst[base..base + sites].copy_from_slice(&band[o * sites..(o + 1) * sites]);
        }
    }
    Ok(out)
}

/// Exact gradients of [`conv2d`] with respect to input, weights and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &ConvKernel,
    upstream: &Tensor,
) -> Result<ConvGrads> {
    check_input(input, kernel)?;
    let [n, c, h, w] = input.shape();
    let (oc, k) = (kernel.out_channels(), kernel.size());
    let expected: Shape = [n, oc, h, w];
    ensure(upstream.shape() == expected, || {
        format!(
            "conv2d_backward: upstream shape {:?}, expected {expected:?}",
            upstream.shape()
        )
    })?;
    let ckk = c * k * k;
    let wt = kernel.weights.data();
    let band_list = bands(h, w);
    let item_len = c * h * w;

    let mut input_grad = Tensor::zeros([n, c, h, w]);
    let partials: Vec<(Vec<f32>, Vec<f32>)> = input_grad
        .data_mut()
        .par_chunks_mut(item_len)
        .enumerate()
        .map(|(b, dx)| {
            let g_item = upstream.item(b);
            let mut col = Vec::new();
            let mut dcol = Vec::new();
            let mut g_band = Vec::new();
            let mut dw = vec![0.0f32; oc * ckk];
            let mut db = vec![0.0f32; oc];
            for &(y0, y1) in &band_list {
                let sites = (y1 - y0) * w;
                // Upstream rows for this band, packed (oc x sites).
                g_band.clear();
                for o in 0..oc {
                    let base = (o * h + y0) * w;
                    g_band.extend_from_slice(&g_item[base..base + sites]);
                }
                for (o, row) in g_band.chunks(sites).enumerate() {
                    db[o] += row.iter().sum::<f32>();
                }
                im2col(input.item(b), c, h, w, k, y0, y1, &mut col);
                // dW (oc x ckk) += G (oc x sites) * col^T (sites x ckk)
                gemm(
                    oc,
                    sites,
                    ckk,
                    &g_band,
                    (sites, 1),
                    &col,
                    (1, sites),
                    1.0,
                    &mut dw,
                    (ckk, 1),
                );
                // dcol (ckk x sites) = W^T (ckk x oc) * G (oc x sites)
                dcol.clear();
                dcol.resize(ckk * sites, 0.0);
                gemm(
                    ckk,
                    oc,
                    sites,
                    wt,
                    (1, ckk),
                    &g_band,
                    (sites, 1),
                    0.0,
                    &mut dcol,
                    (sites, 1),
                );
                col2im(&dcol, c, h, w, k, y0, y1, dx);
            }
            (dw, db)
        })
        .collect();

    let mut weight_grad = vec![0.0f32; oc * ckk];
    let mut bias_grad = vec![0.0f32; oc];
    for (dw, db) in &partials {
        weight_grad.iter_mut().zip(dw).for_each(|(a, b)| *a += b);
        bias_grad.iter_mut().zip(db).for_each(|(a, b)| *a += b);
    }
    Ok(ConvGrads {
        input: input_grad,
        weight: Tensor::from_vec(kernel.weights.shape(), weight_grad)?,
        bias: Tensor::from_vec([1, oc, 1, 1], bias_grad)?,
    })
}
