//! Procedural images for tests, demos and benchmarks when no dataset is at hand.
//!
//! Glyphs are random strokes on a 5x7 grid, laid out in lines like printed
//! text, rendered with 4x4 supersampled coverage so edges are soft.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imageops::{Plane, RgbImage};

const GLYPH_COLS: usize = 5;
const GLYPH_ROWS: usize = 7;
const SUPERSAMPLE: usize = 4;

/// Random glyph bitmap: a few horizontal and vertical strokes on the grid.
fn random_glyph(rng: &mut ChaCha8Rng) -> [[bool; GLYPH_COLS]; GLYPH_ROWS] {
    let mut g = [[false; GLYPH_COLS]; GLYPH_ROWS];
    let strokes = rng.random_range(2..5);
    for _ in 0..strokes {
        if rng.random_bool(0.5) {
            let row = rng.random_range(0..GLYPH_ROWS);
            let (a, b) = (
                rng.random_range(0..GLYPH_COLS),
                rng.random_range(0..GLYPH_COLS),
            );
            for c in a.min(b)..=a.max(b) {
                g[row][c] = true;
            }
        } else {
            let col = rng.random_range(0..GLYPH_COLS);
            let (a, b) = (
                rng.random_range(0..GLYPH_ROWS),
                rng.random_range(0..GLYPH_ROWS),
            );
            for r in a.min(b)..=a.max(b) {
                g[r][col] = true;
            }
        }
    }
    g
}

/// Ink coverage in `[0, 1]` on a `width x height` canvas.
fn ink_coverage(width: usize, height: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sw, sh) = (width * SUPERSAMPLE, height * SUPERSAMPLE);
    let mut fine = vec![false; sw * sh];

    // Cell size in supersampled pixels; glyphs span 5..9 output pixels per cell row.
    let cell = rng.random_range(5..9) * SUPERSAMPLE / 4 + 2;
    let glyph_w = cell * GLYPH_COLS;
    let glyph_h = cell * GLYPH_ROWS;
    let gap = cell * 2;
    let margin = cell * 2;

    let mut y0 = margin;
    while y0 + glyph_h + margin <= sh {
        let mut x0 = margin + rng.random_range(0..cell * 3);
        while x0 + glyph_w + margin <= sw {
            if rng.random_bool(0.85) {
                let g = random_glyph(&mut rng);
                for (r, row) in g.iter().enumerate() {
                    for (c, &on) in row.iter().enumerate() {
                        if !on {
                            continue;
                        }
                        for yy in y0 + r * cell..y0 + (r + 1) * cell {
                            let start = yy * sw + x0 + c * cell;
                            fine[start..start + cell].iter_mut().for_each(|v| *v = true);
                        }
                    }
                }
                x0 += glyph_w + cell;
            } else {
                // Word break.
                x0 += glyph_w;
            }
        }
        y0 += glyph_h + gap;
    }

    let norm = (SUPERSAMPLE * SUPERSAMPLE) as f32;
    let mut out = vec![0.0f32; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut n = 0usize;
            for dy in 0..SUPERSAMPLE {
                let row = (y * SUPERSAMPLE + dy) * sw + x * SUPERSAMPLE;
                n += fine[row..row + SUPERSAMPLE].iter().filter(|&&v| v).count();
            }
            out[y * width + x] = n as f32 / norm;
        }
    }
    out
}

/// Dark text on a light, gently shaded background, values in `[0, 1]`.
pub fn text_like_plane(width: usize, height: usize, seed: u64) -> Plane {
    let cov = ink_coverage(width, height, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let page = rng.random_range(0.80f32..0.95);
    let ink = rng.random_range(0.05f32..0.25);
    let tilt = rng.random_range(-0.05f32..0.05);
    Plane::from_fn(width, height, |x, y| {
        let shade = tilt * (x as f32 / width.max(1) as f32 - 0.5);
        let bg = (page + shade).clamp(0.0, 1.0);
        let c = cov[y * width + x];
        bg * (1.0 - c) + ink * c
    })
}

/// Colour variant of [`text_like_plane`]: tinted ink on tinted page.
pub fn text_like_rgb(width: usize, height: usize, seed: u64) -> RgbImage {
    let cov = ink_coverage(width, height, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_7cc1_b727_220a);
    let page: [f32; 3] = [0; 3].map(|_| rng.random_range(200.0f32..250.0));
    let ink: [f32; 3] = [0; 3].map(|_| rng.random_range(10.0f32..90.0));
    let mut data = Vec::with_capacity(width * height * 3);
    for c in cov {
        for k in 0..3 {
            data.push((page[k] * (1.0 - c) + ink[k] * c).round() as u8);
        }
    }
    RgbImage::new(width, height, data).expect("buffer sized to dimensions")
}

/// Uniform noise in `[0, 1)`.
pub fn noise_plane(width: usize, height: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Plane::from_fn(width, height, |_, _| rng.random::<f32>())
}
