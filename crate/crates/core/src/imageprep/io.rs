//! PNG input/output and the preprocessed-image batch container.
//!
//! Batch layout (little-endian): magic `SGTN`, `u32` version, `u32` count,
//! `u32` height, `u32` width, then `count · height · width` `f32` pixels in
//! row-major order, image after image.

use std::io::{Read, Write};
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};
use crate::wire;

const BATCH_MAGIC: &[u8; 4] = b"SGTN";
const BATCH_VERSION: u32 = 1;

/// Loads a PNG as 8-bit grayscale.
pub fn read_png(path: &Path) -> Result<GrayImage<u8>> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    GrayImage::new(h as usize, w as usize, img.into_raw())
}

pub fn write_png(path: &Path, img: &GrayImage<u8>) -> Result<()> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .ok_or_else(|| Error::shape("pixel buffer does not match dimensions"))?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Writes same-shaped images as one batch.
pub fn write_batch<W: Write>(w: &mut W, images: &[GrayImage<f32>]) -> Result<()> {
    let (h, wd) = images.first().map_or((0, 0), |i| (i.height(), i.width()));
    if let Some(bad) = images.iter().find(|i| (i.height(), i.width()) != (h, wd)) {
        return Err(Error::shape(format!(
            "batch images must share a shape: {h}x{wd} vs {}x{}",
            bad.height(),
            bad.width()
        )));
    }
    wire::write_header(w, BATCH_MAGIC, BATCH_VERSION)?;
    wire::write_usize(w, images.len())?;
    wire::write_usize(w, h)?;
    wire::write_usize(w, wd)?;
    for img in images {
        wire::write_f32s(w, img.pixels().iter().copied())?;
    }
    Ok(())
}

pub fn read_batch<R: Read>(r: &mut R) -> Result<Vec<GrayImage<f32>>> {
    wire::read_header(r, BATCH_MAGIC, BATCH_VERSION)?;
    let count = wire::read_usize(r)?;
    let h = wire::read_usize(r)?;
    let w = wire::read_usize(r)?;
    (0..count)
        .map(|_| GrayImage::new(h, w, wire::read_f32s(r, h * w)?))
        .collect()
}
