//! Image decoding, resizing, grayscale conversion, Canny edge detection and
//! the raw / Canny / combined feature tensors consumed by the classifiers.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decoded 8-bit pixel grid, row-major, interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "image data has {} samples, expected {}x{}x{} = {}",
                data.len(),
                width,
                height,
                channels,
                width * height * channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, pixel: &[u8]) -> Self {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * pixel.len())
            .collect();
        Self {
            width,
            height,
            channels: pixel.len(),
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Encodes as PNG. Output bytes depend only on the pixel data.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            4 => image::ExtendedColorType::Rgba8,
            c => {
                return Err(Error::InvalidArgument(format!(
                    "cannot encode {c}-channel image"
                )))
            }
        };
        let mut out = Vec::new();
        let encoder = image::codecs::png::PngEncoder::new(&mut out);
        image::ImageEncoder::write_image(
            encoder,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
        )
        .map_err(|e| Error::format("png", e))?;
        Ok(out)
    }
}

/// Decodes a JPEG or PNG stream into an RGB buffer.
pub fn decode(bytes: &[u8]) -> Result<ImageBuffer> {
    decode_with_path(bytes, Path::new("<bytes>"))
}

pub fn decode_file(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_with_path(&bytes, path)
}

fn decode_with_path(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let decoded = image::load_from_memory(bytes).map_err(|e| Error::Decode {
        path: PathBuf::from(path),
        message: e.to_string(),
    })?;
    let rgb = decoded.into_rgb8();
    let (w, h) = rgb.dimensions();
    ImageBuffer::new(w as usize, h as usize, 3, rgb.into_raw())
}

/// Bilinear resampling with pixel-center alignment.
pub fn resize(img: &ImageBuffer, target_w: usize, target_h: usize) -> Result<ImageBuffer> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be at least 1x1, got {target_w}x{target_h}"
        )));
    }
    if img.width == 0 || img.height == 0 {
        return Err(Error::InvalidArgument(
            "cannot resize an empty image".into(),
        ));
    }
    if target_w == img.width && target_h == img.height {
        return Ok(img.clone());
    }

    let taps = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let scale = src_len as f64 / dst_len as f64;
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, pos - lo as f64)
    };

    let c = img.channels;
    let mut data = Vec::with_capacity(target_w * target_h * c);
    for y in 0..target_h {
        let (y0, y1, fy) = taps(y, img.height, target_h);
        for x in 0..target_w {
            let (x0, x1, fx) = taps(x, img.width, target_w);
            for ch in 0..c {
                let p00 = img.pixel(x0, y0)[ch] as f64;
                let p10 = img.pixel(x1, y0)[ch] as f64;
                let p01 = img.pixel(x0, y1)[ch] as f64;
                let p11 = img.pixel(x1, y1)[ch] as f64;
                let top = p00 + (p10 - p00) * fx;
                let bottom = p01 + (p11 - p01) * fx;
                let v = top + (bottom - top) * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer::new(target_w, target_h, c, data)
}

/// BT.601 luma. Single-channel input is returned as is.
pub fn to_grayscale(img: &ImageBuffer) -> Result<ImageBuffer> {
    match img.channels {
        1 => Ok(img.clone()),
        3 | 4 => {
            let data = img
                .data
                .chunks_exact(img.channels)
                .map(|p| {
                    let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                    y.round().clamp(0.0, 255.0) as u8
                })
                .collect();
            ImageBuffer::new(img.width, img.height, 1, data)
        }
        c => Err(Error::InvalidArgument(format!(
            "grayscale conversion needs 3 channels, got {c}"
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub gaussian_sigma: f64,
    pub gaussian_kernel_size: usize,
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            gaussian_sigma: 1.4,
            gaussian_kernel_size: 5,
            low_threshold: 100.0,
            high_threshold: 200.0,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.low_threshold >= 0.0 && self.high_threshold > self.low_threshold) {
            return Err(Error::InvalidArgument(format!(
                "canny thresholds need high > low >= 0, got low={} high={}",
                self.low_threshold, self.high_threshold
            )));
        }
        if self.gaussian_kernel_size < 3 || self.gaussian_kernel_size % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "gaussian kernel size must be odd and >= 3, got {}",
                self.gaussian_kernel_size
            )));
        }
        if !(self.gaussian_sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gaussian sigma must be positive, got {}",
                self.gaussian_sigma
            )));
        }
        Ok(())
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Single-channel float plane with clamp-to-edge sampling.
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Plane {
    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.v[y * self.w + x]
    }

    fn blur(&self, kernel: &[f64]) -> Plane {
        let r = (kernel.len() / 2) as isize;
        let mut tmp = vec![0.0; self.v.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                tmp[y * self.w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, k)| k * self.at(x as isize + i as isize - r, y as isize))
                    .sum();
            }
        }
        let tmp = Plane {
            w: self.w,
            h: self.h,
            v: tmp,
        };
        let mut out = vec![0.0; self.v.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                out[y * self.w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, k)| k * tmp.at(x as isize, y as isize + i as isize - r))
                    .sum();
            }
        }
        Plane {
            w: self.w,
            h: self.h,
            v: out,
        }
    }
}

/// Canny edge map: Gaussian blur, Sobel gradients, non-maximum suppression
/// along four quantized directions, then hysteresis over 8-connectivity.
/// Output samples are 0 or 255.
pub fn canny(img: &ImageBuffer, params: &CannyParams) -> Result<ImageBuffer> {
    params.validate()?;
    if img.channels != 1 {
        return Err(Error::InvalidArgument(format!(
            "canny needs a grayscale image, got {} channels",
            img.channels
        )));
    }
    let k = params.gaussian_kernel_size;
    if img.width < k || img.height < k {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} is smaller than the {k}x{k} gaussian kernel",
            img.width, img.height
        )));
    }

    let (w, h) = (img.width, img.height);
    let plane = Plane {
        w,
        h,
        v: img.data.iter().map(|&b| b as f64).collect(),
    };
    let blurred = plane.blur(&gaussian_kernel(k, params.gaussian_sigma));

    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| blurred.at(x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y as usize * w + x as usize;
            gx[i] = sx;
            gy[i] = sy;
            mag[i] = sx.hypot(sy);
        }
    }

    let mag_at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };

    // Thinned magnitudes; a pixel survives if it is a strict maximum on the
    // negative side and at least as large on the positive side.
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            if m > mag_at(xi - dx, yi - dy) && m >= mag_at(xi + dx, yi + dy) {
                thin[i] = m;
            }
        }
    }

    let mut out = vec![0u8; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= params.high_threshold {
            out[i] = 255;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0 && thin[j] >= params.low_threshold && thin[j] > 0.0 {
                    out[j] = 255;
                    queue.push_back(j);
                }
            }
        }
    }
    ImageBuffer::new(w, h, 1, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// RGB pixels.
    Raw,
    /// Canny edge map.
    Canny,
    /// RGB planes followed by the Canny plane.
    Combined,
    /// Single-channel luma.
    Gray,
}

impl FeatureKind {
    pub fn channels(self) -> usize {
        match self {
            FeatureKind::Raw => 3,
            FeatureKind::Canny | FeatureKind::Gray => 1,
            FeatureKind::Combined => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Raw => "raw",
            FeatureKind::Canny => "canny",
            FeatureKind::Combined => "combined",
            FeatureKind::Gray => "gray",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(FeatureKind::Raw),
            "canny" => Ok(FeatureKind::Canny),
            "combined" => Ok(FeatureKind::Combined),
            "gray" => Ok(FeatureKind::Gray),
            other => Err(Error::Config(format!(
                "unknown feature kind {other:?} (expected raw, canny, combined or gray)"
            ))),
        }
    }
}

/// Normalized H×W×C tensor, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl FeatureTensor {
    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    /// Row-major, channel-minor.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Flat vector for the vector classifiers. Combined tensors become the
    /// flattened RGB planes followed by the flattened edge plane.
    pub fn to_vector(&self) -> Vec<f64> {
        if self.channels != 4 {
            return self.flatten();
        }
        let mut rgb = Vec::with_capacity(self.height * self.width * 3);
        let mut edges = Vec::with_capacity(self.height * self.width);
        for px in self.values.chunks_exact(4) {
            rgb.extend_from_slice(&px[..3]);
            edges.push(px[3]);
        }
        rgb.extend(edges);
        rgb
    }
}

pub fn flatten(t: &FeatureTensor) -> Vec<f64> {
    t.flatten()
}

pub fn make_feature(
    img: &ImageBuffer,
    kind: FeatureKind,
    side: usize,
    params: &CannyParams,
) -> Result<FeatureTensor> {
    let rgb = match img.channels {
        3 => img.clone(),
        1 => ImageBuffer::new(
            img.width,
            img.height,
            3,
            img.data.iter().flat_map(|&v| [v, v, v]).collect(),
        )?,
        4 => ImageBuffer::new(
            img.width,
            img.height,
            3,
            img.data
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
        )?,
        c => {
            return Err(Error::InvalidArgument(format!(
                "unsupported channel count {c}"
            )))
        }
    };
    let small = resize(&rgb, side, side)?;
    let norm = |b: u8| b as f64 / 255.0;
    let values: Vec<f64> = match kind {
        FeatureKind::Raw => small.data.iter().map(|&b| norm(b)).collect(),
        FeatureKind::Gray => to_grayscale(&small)?
            .data
            .iter()
            .map(|&b| norm(b))
            .collect(),
        FeatureKind::Canny => canny(&to_grayscale(&small)?, params)?
            .data
            .iter()
            .map(|&b| norm(b))
            .collect(),
        FeatureKind::Combined => {
            let edges = canny(&to_grayscale(&small)?, params)?;
            small
                .data
                .chunks_exact(3)
                .zip(edges.data.iter())
                .flat_map(|(p, &e)| [norm(p[0]), norm(p[1]), norm(p[2]), norm(e)])
                .collect()
        }
    };
    Ok(FeatureTensor {
        height: side,
        width: side,
        channels: kind.channels(),
        values,
    })
}

/// How images are turned into classifier inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub side: usize,
    pub canny: CannyParams,
}

impl FeatureSpec {
    pub fn extract(&self, img: &ImageBuffer) -> Result<FeatureTensor> {
        make_feature(img, self.kind, self.side, &self.canny)
    }

    /// Length of the flat vector fed to the SVM and MLP.
    pub fn vector_len(&self) -> usize {
        self.side * self.side * self.kind.channels()
    }
}

/// Writes one CSV row per tensor: label, then the flattened values.
pub fn write_feature_csv<W: Write>(
    mut out: W,
    rows: impl IntoIterator<Item = (u8, Vec<f64>)>,
) -> std::io::Result<()> {
    for (label, values) in rows {
        write!(out, "{label}")?;
        for v in values {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
