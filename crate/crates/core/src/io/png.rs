//! Grayscale PNG import and export.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RealImage;

/// Linear mapping used for a 16-bit preview: `min` maps to 0, `max` to 65535.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreviewScale {
    pub min: f64,
    pub max: f64,
}

impl PreviewScale {
    /// Value represented by a stored 16-bit level.
    pub fn decode(&self, level: u16) -> f64 {
        self.min + (self.max - self.min) * level as f64 / 65535.0
    }
}

fn encode_gray(path: &Path, rows: usize, cols: usize, depth: png::BitDepth, bytes: &[u8]) -> Result<()> {
    let (w, h) = (
        u32::try_from(cols).map_err(|_| Error::size("image too wide for PNG"))?,
        u32::try_from(rows).map_err(|_| Error::size("image too tall for PNG"))?,
    );
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w, h);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let to_format = |e: png::EncodingError| Error::format(path, e.to_string());
    let mut writer = enc.write_header().map_err(to_format)?;
    writer.write_image_data(bytes).map_err(to_format)?;
    writer.finish().map_err(to_format)
}

/// Writes a 16-bit preview scaled linearly between the image's min and max.
pub fn write_png16(path: &Path, img: &RealImage) -> Result<PreviewScale> {
    let scale = PreviewScale { min: img.min(), max: img.max() };
    let span = scale.max - scale.min;
    let mut bytes = Vec::with_capacity(img.data().len() * 2);
    for &v in img.data() {
        let level = if span > 0.0 {
            ((v - scale.min) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        bytes.extend_from_slice(&level.to_be_bytes());
    }
    encode_gray(path, img.rows(), img.cols(), png::BitDepth::Sixteen, &bytes)?;
    Ok(scale)
}

/// Reads an 8- or 16-bit grayscale PNG as raw levels.
pub fn read_gray_png(path: &Path) -> Result<RealImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let to_format = |e: png::DecodingError| Error::format(path, e.to_string());
    let mut reader = dec.read_info().map_err(to_format)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(to_format)?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::format(path, format!("expected grayscale PNG, found {:?}", info.color_type)));
    }
    let (rows, cols) = (info.height as usize, info.width as usize);
    let data: Vec<f64> = match info.bit_depth {
        png::BitDepth::Eight => (0..rows)
            .flat_map(|r| {
                let line = &buf[r * info.line_size..r * info.line_size + cols];
                line.iter().map(|&b| b as f64)
            })
            .collect(),
        png::BitDepth::Sixteen => (0..rows)
            .flat_map(|r| {
                let line = &buf[r * info.line_size..r * info.line_size + 2 * cols];
                line.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64)
            })
            .collect(),
        other => return Err(Error::format(path, format!("unsupported bit depth {other:?}"))),
    };
    RealImage::new(rows, cols, data)
}

/// Writes a mask as 8-bit PNG: 255 where the sample is positive, 0 elsewhere.
pub fn write_mask_png(path: &Path, mask: &RealImage) -> Result<()> {
    let bytes: Vec<u8> = mask.data().iter().map(|&v| if v > 0.0 { 255 } else { 0 }).collect();
    encode_gray(path, mask.rows(), mask.cols(), png::BitDepth::Eight, &bytes)
}

/// Reads a mask PNG; any level above zero is inside (1.0).
pub fn read_mask_png(path: &Path) -> Result<RealImage> {
    read_gray_png(path)?.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
}
