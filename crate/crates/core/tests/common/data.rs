//! Toy image folders on disk.

use std::path::Path;

use textsr::imageops::save_rgb_png;
use textsr::synthetic::text_like_rgb;

/// Write `n` text-like RGB PNGs of `w x h` into `dir`, split over two
/// subdirectories so recursion is exercised.
pub fn write_text_images(dir: &Path, n: usize, w: usize, h: usize, seed: u64) {
    for i in 0..n {
        let sub = dir.join(if i % 2 == 0 { "a" } else { "b/c" });
        std::fs::create_dir_all(&sub).unwrap();
        let img = text_like_rgb(w, h, seed + i as u64);
        save_rgb_png(&img, &sub.join(format!("img{i:03}.png"))).unwrap();
    }
}
