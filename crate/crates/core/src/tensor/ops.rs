use super::Tensor;
use crate::error::{ensure, Result};

/// Concatenate along the channel axis, preserving part order.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    ensure(!parts.is_empty(), || "concat_channels: no parts".into())?;
    let [n, _, h, w] = parts[0].shape();
    for p in parts {
        let [pn, _, ph, pw] = p.shape();
        ensure((pn, ph, pw) == (n, h, w), || {
            format!(
                "concat_channels: part shape {:?} does not match {:?}",
                p.shape(),
                parts[0].shape()
            )
        })?;
    }
    let total: usize = parts.iter().map(|p| p.channels()).sum();
    let mut data = Vec::with_capacity(n * total * h * w);
    for b in 0..n {
        for p in parts {
            data.extend_from_slice(p.item(b));
        }
    }
    Tensor::from_vec([n, total, h, w], data)
}

/// Inverse of [`concat_channels`]: split at the given channel counts.
/// Also the backward pass of the concatenation.
pub fn split_channels(t: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let [n, c, h, w] = t.shape();
    ensure(sizes.iter().sum::<usize>() == c, || {
        format!("split_channels: sizes {sizes:?} do not sum to {c}")
    })?;
    let plane = h * w;
    let mut out: Vec<Vec<f32>> = sizes
        .iter()
        .map(|s| Vec::with_capacity(n * s * plane))
        .collect();
    for b in 0..n {
        let item = t.item(b);
        let mut off = 0;
        for (dst, &s) in out.iter_mut().zip(sizes) {
            dst.extend_from_slice(&item[off * plane..(off + s) * plane]);
            off += s;
        }
    }
    out.into_iter()
        .zip(sizes)
        .map(|(d, &s)| Tensor::from_vec([n, s, h, w], d))
        .collect()
}

/// Depth-to-space: `out[b, c, y*s+dy, x*s+dx] = in[b, c*s*s + dy*s + dx, y, x]`.
pub fn pixel_shuffle(input: &Tensor, scale: usize) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    ensure(scale >= 1, || "pixel_shuffle: scale must be >= 1".into())?;
    let s2 = scale * scale;
    ensure(c % s2 == 0, || {
        format!("pixel_shuffle: {c} channels not divisible by {s2}")
    })?;
    let oc = c / s2;
    let (oh, ow) = (h * scale, w * scale);
    let mut out = Tensor::zeros([n, oc, oh, ow]);
    let src = input.data();
    let dst = out.data_mut();
    for b in 0..n {
        for co in 0..oc {
            for dy in 0..scale {
                for dx in 0..scale {
                    let ci = co * s2 + dy * scale + dx;
                    let sbase = (b * c + ci) * h * w;
                    for y in 0..h {
                        let drow = ((b * oc + co) * oh + y * scale + dy) * ow;
                        for x in 0..w {
                            dst[drow + x * scale + dx] = src[sbase + y * w + x];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Space-to-depth, the exact inverse of [`pixel_shuffle`] and its backward pass.
pub fn pixel_unshuffle(input: &Tensor, scale: usize) -> Result<Tensor> {
    let [n, c, oh, ow] = input.shape();
    ensure(scale >= 1, || "pixel_unshuffle: scale must be >= 1".into())?;
    ensure(oh % scale == 0 && ow % scale == 0, || {
        format!("pixel_unshuffle: {oh}x{ow} not divisible by {scale}")
    })?;
    let s2 = scale * scale;
    let (h, w) = (oh / scale, ow / scale);
    let mut out = Tensor::zeros([n, c * s2, h, w]);
    let src = input.data();
    let dst = out.data_mut();
    for b in 0..n {
        for co in 0..c {
            for dy in 0..scale {
                for dx in 0..scale {
                    let ci = co * s2 + dy * scale + dx;
                    let dbase = (b * c * s2 + ci) * h * w;
                    for y in 0..h {
                        let srow = ((b * c + co) * oh + y * scale + dy) * ow;
                        for x in 0..w {
                            dst[dbase + y * w + x] = src[srow + x * scale + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.clear_grad();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub(crate) fn relu_in_place(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Gradient of [`relu`]: pass `upstream` where the forward *output* was positive.
pub fn relu_backward(output: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    ensure(output.shape() == upstream.shape(), || {
        format!(
            "relu_backward: output {:?} vs upstream {:?}",
            output.shape(),
            upstream.shape()
        )
    })?;
    let data = output
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(output.shape(), data)
}

/// Mean squared error. Accumulated in `f64` in flat element order.
pub fn mse_loss(prediction: &Tensor, target: &Tensor) -> Result<f64> {
    ensure(prediction.shape() == target.shape(), || {
        format!(
            "mse_loss: prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        )
    })?;
    ensure(!prediction.is_empty(), || "mse_loss: empty tensors".into())?;
    let sum: f64 = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = f64::from(p) - f64::from(t);
            d * d
        })
        .sum();
    Ok(sum / prediction.len() as f64)
}

/// `d mse / d prediction = 2 (prediction - target) / N`.
pub fn mse_loss_backward(prediction: &Tensor, target: &Tensor) -> Result<Tensor> {
    ensure(prediction.shape() == target.shape(), || {
        format!(
            "mse_loss_backward: prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        )
    })?;
    let scale = 2.0 / prediction.len() as f32;
    let data = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| scale * (p - t))
        .collect();
    Tensor::from_vec(prediction.shape(), data)
}
