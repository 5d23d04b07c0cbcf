#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use imgspam::imaging::ImageBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ham: saturated or dark scenes with soft gradients and a blob or two.
pub fn ham_image(rng: &mut ChaCha8Rng) -> ImageBuffer {
    let (w, h) = (rng.gen_range(40..90), rng.gen_range(40..90));
    let dark = rng.gen_bool(0.5);
    let base: [f64; 3] = if dark {
        [
            rng.gen_range(0.0..70.0),
            rng.gen_range(0.0..70.0),
            rng.gen_range(0.0..70.0),
        ]
    } else {
        let mut c = [
            rng.gen_range(0.0..60.0),
            rng.gen_range(0.0..60.0),
            rng.gen_range(0.0..60.0),
        ];
        c[rng.gen_range(0..3)] = rng.gen_range(170.0..240.0);
        c
    };
    let tilt: [f64; 3] = [
        rng.gen_range(-0.6..0.6),
        rng.gen_range(-0.6..0.6),
        rng.gen_range(-0.6..0.6),
    ];
    let mut img = ImageBuffer::filled(w, h, &[0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel_mut(x, y);
            for c in 0..3 {
                p[c] = (base[c] + tilt[c] * (x as f64 + y as f64)).clamp(0.0, 255.0) as u8;
            }
        }
    }
    for _ in 0..rng.gen_range(1..3) {
        let (cx, cy) = (rng.gen_range(0..w) as f64, rng.gen_range(0..h) as f64);
        let r = rng.gen_range(5.0..15.0);
        let shift: [f64; 3] = [
            rng.gen_range(-40.0..40.0),
            rng.gen_range(-40.0..40.0),
            rng.gen_range(-40.0..40.0),
        ];
        for y in 0..h {
            for x in 0..w {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d < r {
                    let p = img.pixel_mut(x, y);
                    for c in 0..3 {
                        p[c] = (p[c] as f64 + shift[c]).clamp(0.0, 255.0) as u8;
                    }
                }
            }
        }
    }
    img
}

/// Spam: light background with rows of dark blocky glyph strokes.
pub fn spam_image(rng: &mut ChaCha8Rng) -> ImageBuffer {
    let (w, h) = (rng.gen_range(60..120), rng.gen_range(40..90));
    let bg = [
        rng.gen_range(220..=255),
        rng.gen_range(220..=255),
        rng.gen_range(220..=255),
    ];
    let ink = [
        rng.gen_range(0..60),
        rng.gen_range(0..60),
        rng.gen_range(0..60),
    ];
    let mut img = ImageBuffer::filled(w, h, &bg);
    let stroke = rng.gen_range(2..4);
    let glyph_h = rng.gen_range(6..10);
    let mut y = rng.gen_range(2..6);
    while y + glyph_h < h {
        let mut x = rng.gen_range(2..6);
        while x + 6 < w {
            let gw = rng.gen_range(3..7);
            match rng.gen_range(0..3) {
                0 => fill(&mut img, x, y, stroke, glyph_h, ink),
                1 => {
                    fill(&mut img, x, y, gw, stroke, ink);
                    fill(&mut img, x, y, stroke, glyph_h, ink);
                }
                _ => {
                    fill(&mut img, x, y + glyph_h - stroke, gw, stroke, ink);
                    fill(&mut img, x + gw - stroke.min(gw), y, stroke, glyph_h, ink);
                }
            }
            x += gw + rng.gen_range(2..4);
        }
        y += glyph_h + rng.gen_range(4..8);
    }
    img
}

fn fill(img: &mut ImageBuffer, x0: usize, y0: usize, w: usize, h: usize, color: [u8; 3]) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.pixel_mut(x, y).copy_from_slice(&color);
        }
    }
}

/// Writes `per_class` ham and spam images under `root/{ham,spam}`.
pub fn write_corpus(root: &Path, per_class: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for dir in ["ham", "spam"] {
        std::fs::create_dir_all(root.join(dir)).unwrap();
    }
    for i in 0..per_class {
        let ham = ham_image(&mut rng);
        std::fs::write(root.join(format!("ham/h{i:04}.png")), ham.to_png().unwrap()).unwrap();
        let spam = spam_image(&mut rng);
        std::fs::write(
            root.join(format!("spam/s{i:04}.png")),
            spam.to_png().unwrap(),
        )
        .unwrap();
    }
    root.to_path_buf()
}

pub fn imgspam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imgspam"))
        .args(args)
        .output()
        .expect("spawn imgspam")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
