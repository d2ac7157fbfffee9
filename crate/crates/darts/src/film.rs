//! Image containers and output formats: portable float maps (bit-exact),
//! tonemapped PNG, and CSV temporal histograms.

use crate::DartsError;
use std::io::{BufRead, Read, Write};
use std::path::Path;

/// Linear RGB image, row-major from the top-left.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// width * height * 3 floats.
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Image {
        Image { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// 0.99 quantile over all channels; used for display normalization.
    pub fn quantile(&self, q: f64) -> f32 {
        let mut values = self.data.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if values.is_empty() {
            return 0.0;
        }
        let idx = ((values.len() - 1) as f64 * q).round() as usize;
        values[idx]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Sequence of per-frame linear RGB planes.
#[derive(Debug, Clone)]
pub struct TransientImage {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<Image>,
}

impl TransientImage {
    /// Per-pixel sum across frames.
    pub fn frame_sum(&self) -> Image {
        let mut out = Image::new(self.width, self.height);
        for frame in &self.frames {
            for (o, v) in out.data.iter_mut().zip(&frame.data) {
                *o += v;
            }
        }
        out
    }
}

/// Writes a PFM (color, little-endian, bottom-up row order as the scale sign
/// convention requires).
pub fn write_pfm(image: &Image, path: &Path) -> Result<(), DartsError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "PF\n{} {}\n-1.0\n", image.width, image.height)?;
    for y in (0..image.height).rev() {
        for x in 0..image.width {
            for c in image.pixel(x, y) {
                f.write_all(&c.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Image, DartsError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    for _ in 0..3 {
        let mut line = String::new();
        f.read_line(&mut line)?;
        header.push_str(&line);
    }
    let mut parts = header.split_whitespace();
    let magic = parts.next().unwrap_or("");
    if magic != "PF" {
        return Err(DartsError::Scene(format!("not a color PFM file: magic {magic:?}")));
    }
    let width: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| DartsError::Scene("bad PFM width".into()))?;
    let height: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| DartsError::Scene("bad PFM height".into()))?;
    let scale: f32 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| DartsError::Scene("bad PFM scale".into()))?;
    if scale >= 0.0 {
        return Err(DartsError::Scene("big-endian PFM not supported".into()));
    }
    let mut raw = vec![0u8; width * height * 3 * 4];
    f.read_exact(&mut raw)?;
    let mut image = Image::new(width, height);
    let mut i = 0;
    for y in (0..height).rev() {
        for x in 0..width {
            let mut rgb = [0.0f32; 3];
            for c in &mut rgb {
                *c = f32::from_le_bytes(raw[i..i + 4].try_into().unwrap());
                i += 4;
            }
            image.set_pixel(x, y, rgb);
        }
    }
    Ok(image)
}

fn srgb_encode(v: f32) -> f32 {
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Tonemapped PNG: normalize by the 0.99 quantile, clamp to [0, 1], sRGB
/// encode.
pub fn write_png_tonemapped(image: &Image, path: &Path) -> Result<(), DartsError> {
    let q = image.quantile(0.99);
    let scale = if q > 0.0 { 1.0 / q } else { 1.0 };
    let mut buf = Vec::with_capacity(image.data.len());
    for v in &image.data {
        let n = (v * scale).clamp(0.0, 1.0);
        buf.push((srgb_encode(n) * 255.0).round() as u8);
    }
    image::save_buffer(
        path,
        &buf,
        image.width as u32,
        image.height as u32,
        image::ColorType::Rgb8,
    )
    .map_err(|e| DartsError::Scene(format!("png write failed: {e}")))?;
    Ok(())
}

/// Writes a temporal histogram as CSV: time_bin_center, r, g, b.
pub fn write_histogram_csv(
    bin_centers: &[f64],
    values: &[[f64; 3]],
    path: &Path,
) -> Result<(), DartsError> {
    assert_eq!(bin_centers.len(), values.len());
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "time_bin_center,r,g,b")?;
    for (t, v) in bin_centers.iter().zip(values) {
        writeln!(f, "{t},{},{},{}", v[0], v[1], v[2])?;
    }
    Ok(())
}

/// Mean squared error over all pixels and channels.
pub fn image_mse(a: &Image, b: &Image) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height), "image size mismatch");
    crate::stats::mse(&a.data, &b.data)
}
