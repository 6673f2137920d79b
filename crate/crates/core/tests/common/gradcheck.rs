//! Analytic gradients from the crate against central differences of the f64
//! reference. Every routine returns its worst relative error so the gradient
//! suite can assert and the acceptance harness can report.

use rand::seq::index::sample;
use rand::Rng;
use textsr::imageops::{bicubic_resize, Plane};
use textsr::model::{backward, forward_cached, init_params, ModelParams, NetworkConfig};
use textsr::tensor::{
    concat_channels, conv2d_backward, mse_loss_backward, pixel_shuffle as shuffle_f32,
    pixel_unshuffle, relu as relu_f32, relu_backward, split_channels, ConvKernel, Tensor,
};

use super::*;

pub const STEP: f64 = 1e-3;
pub const OP_TOLERANCE: f64 = 1e-4;
pub const NETWORK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: String,
    pub worst: f64,
    pub checked: usize,
    /// Coordinates whose finite difference flipped at least one ReLU. They
    /// are still checked; the count is informational.
    pub kink_crossings: usize,
}

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// Numeric gradient of `f` over every coordinate of `x`.
fn numeric(x: &Arr, mut f: impl FnMut(&Arr) -> f64) -> Vec<f64> {
    let mut x = x.clone();
    (0..x.data.len())
        .map(|i| {
            let shape = x.shape;
            central_diff(&mut x.data, i, STEP, |d| {
                f(&Arr {
                    shape,
                    data: d.to_vec(),
                })
            })
        })
        .collect()
}

fn check(name: &str, analytic: &[f64], numeric: &[f64]) -> GradCheck {
    GradCheck {
        name: name.into(),
        worst: max_rel_error(analytic, numeric),
        checked: numeric.len(),
        kink_crossings: 0,
    }
}

pub fn conv_checks(shape: [usize; 4], out_channels: usize, seed: u64) -> Vec<GradCheck> {
    let mut r = rng(seed);
    let [n, c, h, w] = shape;
    let x = random_tensor(shape, -1.0, 1.0, &mut r);
    let kernel = ConvKernel::new(
        random_tensor([out_channels, c, 3, 3], -0.5, 0.5, &mut r),
        random_tensor([1, out_channels, 1, 1], -0.5, 0.5, &mut r),
    )
    .unwrap();
    let up = random_tensor([n, out_channels, h, w], -1.0, 1.0, &mut r);
    let g = conv2d_backward(&x, &kernel, &up).unwrap();

    let (xa, wa, ba, ua) = (
        Arr::from_tensor(&x),
        Arr::from_tensor(&kernel.weights),
        to_f64(&kernel.bias),
        Arr::from_tensor(&up),
    );
    let tag = format!("conv2d {n}x{c}x{h}x{w} {c}->{out_channels}");
    vec![
        check(
            &format!("{tag} d/input"),
            &to_f64(&g.input),
            &numeric(&xa, |x| dot(&ua, &conv(x, &wa, &ba))),
        ),
        check(
            &format!("{tag} d/weight"),
            &to_f64(&g.weight),
            &numeric(&wa, |wt| dot(&ua, &conv(&xa, wt, &ba))),
        ),
        check(&format!("{tag} d/bias"), &to_f64(&g.bias), &{
            let b = Arr {
                shape: [1, out_channels, 1, 1],
                data: ba.clone(),
            };
            numeric(&b, |b| dot(&ua, &conv(&xa, &wa, &b.data)))
        }),
    ]
}

pub fn relu_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let shape = [2, 4, 6, 6];
    // Magnitudes kept well clear of the kink at zero.
    let data: Vec<f32> = (0..shape.iter().product::<usize>())
        .map(|_| {
            let m = r.random_range(0.05f32..1.0);
            if r.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    let x = Tensor::from_vec(shape, data).unwrap();
    let up = random_tensor(shape, -1.0, 1.0, &mut r);
    let analytic = relu_backward(&relu_f32(&x), &up).unwrap();
    let ua = Arr::from_tensor(&up);
    check(
        "relu 2x4x6x6",
        &to_f64(&analytic),
        &numeric(&Arr::from_tensor(&x), |x| dot(&ua, &relu(x))),
    )
}

pub fn concat_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let a = random_tensor([2, 3, 6, 6], -1.0, 1.0, &mut r);
    let b = random_tensor([2, 1, 6, 6], -1.0, 1.0, &mut r);
    let up = random_tensor([2, 4, 6, 6], -1.0, 1.0, &mut r);
    assert_eq!(concat_channels(&[&a, &b]).unwrap().shape(), up.shape());
    let parts = split_channels(&up, &[3, 1]).unwrap();
    let mut analytic = to_f64(&parts[0]);
    analytic.extend(to_f64(&parts[1]));
    let ua = Arr::from_tensor(&up);
    let (aa, ba) = (Arr::from_tensor(&a), Arr::from_tensor(&b));
    let mut num = numeric(&aa, |a| dot(&ua, &concat(&[a, &ba])));
    num.extend(numeric(&ba, |b| dot(&ua, &concat(&[&aa, b]))));
    check("concat 2x(3+1)x6x6", &analytic, &num)
}

pub fn shuffle_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let x = random_tensor([2, 4, 3, 3], -1.0, 1.0, &mut r);
    let out_shape = shuffle_f32(&x, 2).unwrap().shape();
    let up = random_tensor(out_shape, -1.0, 1.0, &mut r);
    let analytic = pixel_unshuffle(&up, 2).unwrap();
    let ua = Arr::from_tensor(&up);
    check(
        "pixel_shuffle 2x4x3x3 s=2",
        &to_f64(&analytic),
        &numeric(&Arr::from_tensor(&x), |x| dot(&ua, &pixel_shuffle(x, 2))),
    )
}

pub fn mse_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let p = random_tensor([2, 4, 6, 6], 0.0, 1.0, &mut r);
    let t = random_tensor([2, 4, 6, 6], 0.0, 1.0, &mut r);
    let analytic = mse_loss_backward(&p, &t).unwrap();
    let ta = Arr::from_tensor(&t);
    check(
        "mse 2x4x6x6",
        &to_f64(&analytic),
        &numeric(&Arr::from_tensor(&p), |p| mse(p, &ta)),
    )
}

pub fn add_check(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let a = random_tensor([2, 1, 6, 6], -1.0, 1.0, &mut r);
    let b = random_tensor([2, 1, 6, 6], -1.0, 1.0, &mut r);
    let up = random_tensor([2, 1, 6, 6], -1.0, 1.0, &mut r);
    assert_eq!(a.add(&b).unwrap().shape(), up.shape());
    let (ua, ba) = (Arr::from_tensor(&up), Arr::from_tensor(&b));
    let num = numeric(&Arr::from_tensor(&a), |a| {
        let sum = Arr {
            shape: a.shape,
            data: a.data.iter().zip(&ba.data).map(|(x, y)| x + y).collect(),
        };
        dot(&ua, &sum)
    });
    // The gradient of a sum passes straight through to each operand.
    check("residual add 2x1x6x6", &to_f64(&up), &num)
}

/// Every op-level check at the shapes the suite uses.
pub fn op_checks() -> Vec<GradCheck> {
    let mut out = conv_checks([2, 4, 6, 6], 3, 1);
    out.extend(conv_checks([1, 2, 4, 4], 3, 2));
    out.push(relu_check(3));
    out.push(concat_check(4));
    out.push(shuffle_check(5));
    out.push(mse_check(6));
    out.push(add_check(7));
    out
}

/// Parameters with He weights and small random biases, so every bias path
/// carries signal.
pub fn network_params(scale: usize, seed: u64) -> ModelParams {
    let mut p = init_params(NetworkConfig::new(scale).unwrap(), seed).unwrap();
    let mut r = rng(seed ^ 0xb1a5);
    for k in p.kernels.iter_mut() {
        for b in k.bias.data_mut() {
            *b = r.random_range(-0.05f32..0.05);
        }
    }
    p
}

/// End-to-end check of the training loss `mse(residual + bicubic, target)` on
/// a `1x1x8x8` input. All input coordinates plus `per_tensor` sampled entries
/// of every parameter tensor are differenced. Where a step of `STEP` flips
/// some ReLU, the plain central difference measures a secant across the kink
/// rather than the derivative; those coordinates are differenced on the linear
/// piece active at the base point (masks frozen), which has the same
/// derivative there.
pub fn network_check(scale: usize, seed: u64, per_tensor: usize) -> GradCheck {
    let mut r = rng(seed);
    let params = network_params(scale, seed);
    let y = random_tensor([1, 1, 8, 8], 0.0, 1.0, &mut r);
    let e = random_tensor([1, 1, 8, 8], 0.0, 1.0, &mut r);
    let target = random_tensor([1, 1, 8 * scale, 8 * scale], 0.0, 1.0, &mut r);
    let base = bicubic_resize(&Plane::from_tensor(&y, 0).unwrap(), 8 * scale, 8 * scale).unwrap();
    let base_t = base.to_tensor();

    let acts = forward_cached(&params, &y, &e).unwrap();
    let pred = acts.output.add(&base_t).unwrap();
    let grads = backward(&params, &acts, &mse_loss_backward(&pred, &target).unwrap()).unwrap();

    let base_a = Arr::from_tensor(&base_t);
    let target_a = Arr::from_tensor(&target);
    let loss = |p: &RefParams, y: &Arr, e: &Arr, mask: Option<&[bool]>| {
        let (out, signs) = network_trace(p, y, e, mask);
        let pred = Arr {
            shape: out.shape,
            data: out
                .data
                .iter()
                .zip(&base_a.data)
                .map(|(a, b)| a + b)
                .collect(),
        };
        (mse(&pred, &target_a), signs)
    };

    let mut rp = RefParams::from_model(&params);
    let mut ya = Arr::from_tensor(&y);
    let mut ea = Arr::from_tensor(&e);
    let mut analytic = Vec::new();
    let mut num = Vec::new();
    let mut crossings = 0usize;
    let (_, base_mask) = network_trace(&rp, &ya, &ea, None);

    // Slot 0..14: parameter tensors; 14: luma input; 15: edge input.
    let mut analytic_slot: Vec<Vec<f64>> = Vec::new();
    for (w, b) in grads.weights.iter().zip(&grads.biases) {
        analytic_slot.push(to_f64(w));
        analytic_slot.push(to_f64(b));
    }
    analytic_slot.push(to_f64(&grads.y_lr));
    analytic_slot.push(to_f64(&grads.edge_lr));

    for (slot, an) in analytic_slot.iter().enumerate() {
        let picks: Vec<usize> = if slot >= 14 {
            (0..an.len()).collect()
        } else {
            sample(&mut r, an.len(), per_tensor.min(an.len())).into_vec()
        };
        for i in picks {
            let mut eval = |delta: f64, mask: Option<&[bool]>| {
                let buf = match slot {
                    14 => &mut ya.data,
                    15 => &mut ea.data,
                    s => rp.slot_mut(s),
                };
                let orig = buf[i];
                buf[i] = orig + delta;
                let res = loss(&rp, &ya, &ea, mask);
                let buf = match slot {
                    14 => &mut ya.data,
                    15 => &mut ea.data,
                    s => rp.slot_mut(s),
                };
                buf[i] = orig;
                res
            };
            let (mut plus, sp) = eval(STEP, None);
            let (mut minus, sm) = eval(-STEP, None);
            if sp != base_mask || sm != base_mask {
                crossings += 1;
                plus = eval(STEP, Some(&base_mask)).0;
                minus = eval(-STEP, Some(&base_mask)).0;
            }
            num.push((plus - minus) / (2.0 * STEP));
            analytic.push(an[i]);
        }
    }

    GradCheck {
        name: format!("network 1x1x8x8 s={scale}"),
        worst: max_rel_error(&analytic, &num),
        checked: num.len(),
        kink_crossings: crossings,
    }
}
