use super::GrayImage;
use crate::error::{Error, Result};

/// Intensity-weighted center of mass `(row, col)`; `None` for an all-zero image.
pub fn center_of_mass(img: &GrayImage<u8>) -> Option<(f64, f64)> {
    let (mut mass, mut rows, mut cols) = (0u64, 0u64, 0u64);
    for r in 0..img.height() {
        for c in 0..img.width() {
            let v = img.get(r, c) as u64;
            mass += v;
            rows += r as u64 * v;
            cols += c as u64 * v;
        }
    }
    (mass > 0).then(|| (rows as f64 / mass as f64, cols as f64 / mass as f64))
}

/// Pastes an inverted image (ink bright, background 0) onto a zero canvas so
/// that its center of mass lands on pixel `(canvas_h / 2, canvas_w / 2)`,
/// rounded to whole pixels. Ink translated past the canvas border is clipped.
pub fn center_on_canvas(img: &GrayImage<u8>, canvas_h: usize, canvas_w: usize) -> Result<GrayImage<u8>> {
    if img.height() > canvas_h || img.width() > canvas_w {
        return Err(Error::shape(format!(
            "{}x{} image does not fit a {canvas_h}x{canvas_w} canvas",
            img.height(),
            img.width()
        )));
    }
    let (cr, cc) = center_of_mass(img)
        .ok_or_else(|| Error::DegenerateImage("all-zero image has no center of mass".into()))?;
    let dr = ((canvas_h / 2) as f64 - cr).round() as isize;
    let dc = ((canvas_w / 2) as f64 - cc).round() as isize;

    let mut out = GrayImage::filled(canvas_h, canvas_w, 0u8);
    for r in 0..img.height() {
        let rr = r as isize + dr;
        if rr < 0 || rr >= canvas_h as isize {
            continue;
        }
        for c in 0..img.width() {
            let cc = c as isize + dc;
            if cc < 0 || cc >= canvas_w as isize {
                continue;
            }
            out.set(rr as usize, cc as usize, img.get(r, c));
        }
    }
    Ok(out)
}

/// Bilinear resize that preserves aspect ratio.
///
/// The image is scaled by `max(target_h / h, target_w / w)` so it covers the
/// target, and the excess of the longer dimension is cropped symmetrically.
/// Pixel centers sit at half-integer coordinates; samples outside the source
/// are clamped to the border.
pub fn resize_with_crop<P>(img: &GrayImage<P>, target_h: usize, target_w: usize) -> Result<GrayImage<f32>>
where
    P: Copy + Into<f64>,
{
    if target_h < 1 || target_w < 1 {
        return Err(Error::config(format!("resize target must be at least 1x1, got {target_h}x{target_w}")));
    }
    let (h, w) = (img.height() as f64, img.width() as f64);
    let scale = (target_h as f64 / h).max(target_w as f64 / w);
    let off_r = (h * scale - target_h as f64) / 2.0;
    let off_c = (w * scale - target_w as f64) / 2.0;

    let src = |i: usize, off: f64, extent: usize| -> (usize, usize, f64) {
        let x = ((i as f64 + 0.5 + off) / scale - 0.5).clamp(0.0, (extent - 1) as f64);
        let x0 = x.floor() as usize;
        let x1 = (x0 + 1).min(extent - 1);
        (x0, x1, x - x0 as f64)
    };
    let cols: Vec<_> = (0..target_w).map(|j| src(j, off_c, img.width())).collect();

    let mut px = Vec::with_capacity(target_h * target_w);
    for i in 0..target_h {
        let (r0, r1, fr) = src(i, off_r, img.height());
        for &(c0, c1, fc) in &cols {
            let top = img.get(r0, c0).into() * (1.0 - fc) + img.get(r0, c1).into() * fc;
            let bottom = img.get(r1, c0).into() * (1.0 - fc) + img.get(r1, c1).into() * fc;
            px.push((top * (1.0 - fr) + bottom * fr) as f32);
        }
    }
    GrayImage::new(target_h, target_w, px)
}
