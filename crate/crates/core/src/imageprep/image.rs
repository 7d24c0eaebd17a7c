use crate::error::{Error, Result};

/// Row-major grayscale raster.
///
/// `GrayImage<u8>` holds raw scans and intermediate integer stages;
/// `GrayImage<f32>` holds resized and normalized images.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage<P = u8> {
    height: usize,
    width: usize,
    pixels: Vec<P>,
}

impl<P: Copy> GrayImage<P> {
    pub fn new(height: usize, width: usize, pixels: Vec<P>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape(format!("image must be at least 1x1, got {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(GrayImage { height, width, pixels })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(height: usize, width: usize, value: P) -> Self {
        assert!(height > 0 && width > 0, "image must be at least 1x1");
        GrayImage {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[P] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<P> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> P {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: P) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn map<Q: Copy>(&self, f: impl Fn(P) -> Q) -> GrayImage<Q> {
        GrayImage {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }
}
