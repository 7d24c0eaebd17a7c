//! Signature image normalization.
//!
//! Raw scans are dark ink on a light background. [`preprocess`] turns one
//! into the network's input: background removed with Otsu's threshold,
//! inverted so the background is exactly zero, optionally centered on a
//! fixed canvas by its center of mass, resized to the target shape and
//! divided by the pixel standard deviation of the development set. No mean
//! is subtracted, so background pixels stay zero throughout.

mod geometry;
mod image;
pub mod io;
mod otsu;

pub use self::geometry::{center_of_mass, center_on_canvas, resize_with_crop};
pub use self::image::GrayImage;
pub use self::otsu::{between_class_variance, otsu_threshold};

use crate::error::{Error, Result};

/// How raw images are brought to a common size before resizing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrepMode {
    /// Resize straight to the target, cropping the excess of the longer side.
    ResizeOnly,
    /// Center on a fixed canvas by center of mass first, then resize.
    CanvasThenResize,
}

impl PrepMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrepMode::ResizeOnly => "resize-only",
            PrepMode::CanvasThenResize => "canvas-then-resize",
        }
    }
}

impl std::str::FromStr for PrepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resize-only" => Ok(PrepMode::ResizeOnly),
            "canvas-then-resize" => Ok(PrepMode::CanvasThenResize),
            other => Err(Error::config(format!("unknown preprocessing mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrepConfig {
    pub mode: PrepMode,
    pub canvas_h: usize,
    pub canvas_w: usize,
    pub target_h: usize,
    pub target_w: usize,
    /// Pixel standard deviation of the development set after inversion and
    /// resizing. Filled in once by [`compute_dataset_std`] and then reused
    /// verbatim for every image.
    pub dataset_pixel_std: f64,
}

impl Default for PrepConfig {
    /// Canvas 840×1360, target 155×220, canvas centering enabled.
    fn default() -> Self {
        PrepConfig {
            mode: PrepMode::CanvasThenResize,
            canvas_h: 840,
            canvas_w: 1360,
            target_h: 155,
            target_w: 220,
            dataset_pixel_std: 1.0,
        }
    }
}

impl PrepConfig {
    /// Checks everything except the dataset std, which is unknown until the
    /// development set has been prepared.
    pub fn validate_geometry(&self) -> Result<()> {
        if self.target_h < 1 || self.target_w < 1 {
            return Err(Error::config("target dimensions must be at least 1"));
        }
        if self.mode == PrepMode::CanvasThenResize && (self.canvas_h < 1 || self.canvas_w < 1) {
            return Err(Error::config("canvas dimensions must be at least 1"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        check_std(self.dataset_pixel_std)
    }
}

fn check_std(std: f64) -> Result<()> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::config(format!(
            "dataset pixel std must be positive and finite, got {std}"
        )));
    }
    Ok(())
}

/// Sets every pixel brighter than `threshold` to white (255).
pub fn remove_background(img: &GrayImage<u8>, threshold: u8) -> GrayImage<u8> {
    img.map(|p| if p > threshold { 255 } else { p })
}

/// `255 - p` for every pixel.
pub fn invert(img: &GrayImage<u8>) -> GrayImage<u8> {
    img.map(|p| 255 - p)
}

/// Divides every pixel by the dataset standard deviation.
pub fn normalize_std(img: &GrayImage<f32>, dataset_pixel_std: f64) -> Result<GrayImage<f32>> {
    check_std(dataset_pixel_std)?;
    Ok(img.map(|p| (p as f64 / dataset_pixel_std) as f32))
}

/// Population standard deviation over the union of all pixels.
///
/// Uses Welford's streaming update so large corpora need a single pass.
pub fn compute_dataset_std<'a, I>(images: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a GrayImage<f32>>,
{
    let mut count = 0u64;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for img in images {
        for &p in img.pixels() {
            count += 1;
            let x = p as f64;
            let delta = x - mean;
            mean += delta / count as f64;
            m2 += delta * (x - mean);
        }
    }
    if count == 0 {
        return Err(Error::config("cannot compute pixel std of an empty image collection"));
    }
    Ok((m2 / count as f64).max(0.0).sqrt())
}

/// Every step of [`preprocess`] except the final division by the dataset std.
///
/// The output of this function is what [`compute_dataset_std`] consumes.
pub fn prepare(img: &GrayImage<u8>, cfg: &PrepConfig) -> Result<GrayImage<f32>> {
    cfg.validate_geometry()?;
    let t = otsu_threshold(img)?;
    let inverted = invert(&remove_background(img, t));
    let sized = match cfg.mode {
        PrepMode::ResizeOnly => inverted,
        PrepMode::CanvasThenResize => center_on_canvas(&inverted, cfg.canvas_h, cfg.canvas_w)?,
    };
    resize_with_crop(&sized, cfg.target_h, cfg.target_w)
}

/// Full normalization pipeline: Otsu, background removal, inversion,
/// optional canvas centering, resize with crop, std scaling.
pub fn preprocess(img: &GrayImage<u8>, cfg: &PrepConfig) -> Result<GrayImage<f32>> {
    check_std(cfg.dataset_pixel_std)?;
    let prepared = prepare(img, cfg)?;
    normalize_std(&prepared, cfg.dataset_pixel_std)
}
