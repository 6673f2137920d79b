//! Sobel gradient magnitude and the Canny edge detector.

use std::collections::VecDeque;

use super::Plane;
use crate::error::{ensure, Result};

/// Scales Sobel magnitudes of `[0, 1]` inputs into `[0, 1]`: the largest
/// possible response of either 3x3 kernel is 4, so the magnitude is at most
/// `4 * sqrt(2)`.
pub const SOBEL_SCALE: f32 = 0.176_776_695; // 1 / (4 * sqrt(2))

const CANNY_SIGMA: f64 = 1.4;
const CANNY_RADIUS: usize = 2;

/// Mirror an out-of-range index without repeating the edge sample
/// (`-1 -> 1`, `n -> n - 2`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let last = n as isize - 1;
    let r = if i < 0 {
        -i
    } else if i > last {
        2 * last - i
    } else {
        i
    };
    r.clamp(0, last) as usize
}

/// Unscaled horizontal and vertical Sobel responses with reflected borders.
/// `gx` is positive where intensity increases to the right, `gy` downward.
pub fn sobel_gradients(plane: &Plane) -> Result<(Plane, Plane)> {
    let (w, h) = (plane.width(), plane.height());
    ensure(w >= 3 && h >= 3, || {
        format!("sobel needs at least 3x3, got {w}x{h}")
    })?;
    let mut gx = Plane::filled(w, h, 0.0);
    let mut gy = Plane::filled(w, h, 0.0);
    for y in 0..h {
        let ym = reflect(y as isize - 1, h);
        let yp = reflect(y as isize + 1, h);
        for x in 0..w {
            let xm = reflect(x as isize - 1, w);
            let xp = reflect(x as isize + 1, w);
            let p = |xx: usize, yy: usize| plane.get(xx, yy);
            let dx =
                (p(xp, ym) + 2.0 * p(xp, y) + p(xp, yp)) - (p(xm, ym) + 2.0 * p(xm, y) + p(xm, yp));
            let dy =
                (p(xm, yp) + 2.0 * p(x, yp) + p(xp, yp)) - (p(xm, ym) + 2.0 * p(x, ym) + p(xp, ym));
            gx.set(x, y, dx);
            gy.set(x, y, dy);
        }
    }
    Ok((gx, gy))
}

/// `sqrt(gx^2 + gy^2) * SOBEL_SCALE`; within `[0, 1]` for inputs in `[0, 1]`.
pub fn sobel_magnitude(plane: &Plane) -> Result<Plane> {
    let (gx, gy) = sobel_gradients(plane)?;
    let data = gx
        .data()
        .iter()
        .zip(gy.data())
        .map(|(a, b)| (a.hypot(*b) * SOBEL_SCALE).min(1.0))
        .collect();
    Plane::new(plane.width(), plane.height(), data)
}

/// Separable normalised Gaussian of the given radius, reflected borders.
pub fn gaussian_blur(plane: &Plane, sigma: f64, radius: usize) -> Result<Plane> {
    let (w, h) = (plane.width(), plane.height());
    ensure(w > radius && h > radius, || {
        format!("gaussian_blur radius {radius} needs a plane larger than {w}x{h}")
    })?;
    let taps: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f32> = taps.iter().map(|t| (t / norm) as f32).collect();
    let r = radius as isize;

    let mut tmp = Plane::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let acc: f32 = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * plane.get(reflect(x as isize + k as isize - r, w), y))
                .sum();
            tmp.set(x, y, acc);
        }
    }
    let mut out = Plane::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let acc: f32 = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp.get(x, reflect(y as isize + k as isize - r, h)))
                .sum();
            out.set(x, y, acc);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyThresholds {
    pub low: f32,
    pub high: f32,
}

impl Default for CannyThresholds {
    fn default() -> Self {
        Self {
            low: 0.1,
            high: 0.2,
        }
    }
}

impl CannyThresholds {
    pub fn validate(&self) -> Result<()> {
        let Self { low, high } = *self;
        ensure(
            low.is_finite() && high.is_finite() && 0.0 <= low && low <= high && high <= 1.0,
            || format!("canny thresholds must satisfy 0 <= low <= high <= 1, got {low}, {high}"),
        )
    }
}

/// Binary edge map (`0.0` / `1.0`): 5x5 Gaussian (sigma 1.4), Sobel gradients,
/// non-maximum suppression over four quantised directions, double threshold,
/// then 8-connected hysteresis. Thresholds apply to the scaled Sobel magnitude.
pub fn canny_edges(plane: &Plane, thresholds: CannyThresholds) -> Result<Plane> {
    thresholds.validate()?;
    let (w, h) = (plane.width(), plane.height());
    ensure(w >= 3 && h >= 3, || {
        format!("canny needs at least 3x3, got {w}x{h}")
    })?;
    let blurred = gaussian_blur(plane, CANNY_SIGMA, CANNY_RADIUS.min(w - 1).min(h - 1))?;
    let (gx, gy) = sobel_gradients(&blurred)?;
    let mag: Vec<f32> = gx
        .data()
        .iter()
        .zip(gy.data())
        .map(|(a, b)| a.hypot(*b) * SOBEL_SCALE)
        .collect();

    // Non-maximum suppression; the one-pixel border is never an edge.
    let mut thin = vec![0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let mut angle = gy.data()[i].atan2(gx.data()[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            // (before, after) neighbours along the gradient direction.
            let (before, after) = if !(22.5..157.5).contains(&angle) {
                (i - 1, i + 1)
            } else if angle < 67.5 {
                (i - w - 1, i + w + 1)
            } else if angle < 112.5 {
                (i - w, i + w)
            } else {
                (i - w + 1, i + w - 1)
            };
            // Strict on one side so symmetric ridges keep a single pixel.
            if m > mag[before] && m >= mag[after] {
                thin[i] = m;
            }
        }
    }

    let mut out = vec![0f32; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= thresholds.high && m > 0.0 {
            out[i] = 1.0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (nx, ny) = (x + dx, y + dy);
                if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0.0 && thin[j] >= thresholds.low && thin[j] > 0.0 {
                    out[j] = 1.0;
                    queue.push_back(j);
                }
            }
        }
    }
    Plane::new(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(w: usize, h: usize, at: usize) -> Plane {
        Plane::from_fn(w, h, |x, _| if x >= at { 1.0 } else { 0.0 })
    }

    #[test]
    fn constant_has_no_gradient() {
        let m = sobel_magnitude(&Plane::filled(6, 5, 0.42)).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_responds_beside_the_edge() {
        // Columns 0..4 are 0, 4..8 are 1. Only columns 3 and 4 see both sides:
        // gx = (1 + 2 + 1) * 1 = 4, gy = 0, so the scaled magnitude is 1/sqrt(2).
        let m = sobel_magnitude(&step(8, 5, 4)).unwrap();
        for y in 0..5 {
            for x in 0..8 {
                let want = if x == 3 || x == 4 {
                    4.0 * SOBEL_SCALE
                } else {
                    0.0
                };
                assert!(
                    (m.get(x, y) - want).abs() < 1e-6,
                    "({x},{y}) = {}",
                    m.get(x, y)
                );
            }
        }
    }

    #[test]
    fn horizontal_ramp_gradient() {
        let c = 0.05f32;
        let p = Plane::from_fn(7, 6, |x, _| c * x as f32);
        let (gx, gy) = sobel_gradients(&p).unwrap();
        for y in 1..5 {
            for x in 1..6 {
                assert!(gy.get(x, y).abs() < 1e-6);
                assert!((gx.get(x, y) - 8.0 * c).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sobel_rejects_tiny_planes() {
        assert!(sobel_magnitude(&Plane::filled(2, 5, 0.0)).is_err());
    }

    #[test]
    fn canny_constant_has_no_edges() {
        let e = canny_edges(&Plane::filled(16, 16, 0.7), CannyThresholds::default()).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn canny_step_gives_one_pixel_line() {
        let e = canny_edges(&step(20, 16, 10), CannyThresholds::default()).unwrap();
        for y in 1..15 {
            let cols: Vec<usize> = (0..20).filter(|&x| e.get(x, y) == 1.0).collect();
            assert_eq!(cols.len(), 1, "row {y}: {cols:?}");
            assert!(cols[0] == 9 || cols[0] == 10);
        }
        assert!(e.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn canny_threshold_validation() {
        let p = Plane::filled(8, 8, 0.0);
        for (low, high) in [(0.3, 0.2), (-0.1, 0.2), (0.1, 1.5), (f32::NAN, 0.2)] {
            assert!(canny_edges(&p, CannyThresholds { low, high }).is_err());
        }
    }

    #[test]
    fn edges_of_edges_stay_near_original_edges() {
        let p = Plane::from_fn(32, 32, |x, y| {
            let inside = (8..24).contains(&x) && (10..20).contains(&y);
            let bar = (26..29).contains(&x);
            if inside || bar {
                0.9
            } else {
                0.1
            }
        });
        let th = CannyThresholds::default();
        let e1 = canny_edges(&p, th).unwrap();
        let e2 = canny_edges(&e1, th).unwrap();
        assert!(e1.data().iter().any(|&v| v == 1.0));
        let r = 3isize;
        for y in 0..32isize {
            for x in 0..32isize {
                if e2.get(x as usize, y as usize) == 0.0 {
                    continue;
                }
                let near = (-r..=r).any(|dy| {
                    (-r..=r).any(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        (0..32).contains(&nx)
                            && (0..32).contains(&ny)
                            && e1.get(nx as usize, ny as usize) == 1.0
                    })
                });
                assert!(near, "edge at ({x},{y}) far from any original edge");
            }
        }
    }
}
