use super::GrayImage;
use crate::error::{Error, Result};

fn histogram(img: &GrayImage<u8>) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    hist
}

/// Between-class variance `w0·w1·(μ0 − μ1)²` when splitting the histogram
/// into `≤ t` and `> t`. Zero if either class is empty.
pub fn between_class_variance(img: &GrayImage<u8>, t: u8) -> f64 {
    let hist = histogram(img);
    let n = img.pixels().len() as f64;
    let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
    for (v, &c) in hist.iter().enumerate() {
        if v <= t as usize {
            n0 += c as f64;
            s0 += (v as u64 * c) as f64;
        } else {
            n1 += c as f64;
            s1 += (v as u64 * c) as f64;
        }
    }
    if n0 == 0.0 || n1 == 0.0 {
        return 0.0;
    }
    (n0 / n) * (n1 / n) * (s0 / n0 - s1 / n1).powi(2)
}

/// Returns `a · b` as a 256-bit value `(high, low)`.
fn widening_mul(a: u128, b: u64) -> (u128, u128) {
    let lo = (a as u64 as u128) * b as u128;
    let hi = (a >> 64) * b as u128;
    let (low, carry) = lo.overflowing_add(hi << 64);
    ((hi >> 64) + carry as u128, low)
}

/// Otsu's threshold: the `t` maximizing between-class variance of the
/// partition `{p ≤ t} / {p > t}`. Ties go to the lowest `t`.
///
/// Scaled by `N²`, the variance equals `(N·s0 − S·n0)² / (n0·n1)` with
/// integer counts and sums, so candidates are compared exactly.
pub fn otsu_threshold(img: &GrayImage<u8>) -> Result<u8> {
    let hist = histogram(img);
    let total: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();

    let mut best: Option<(u8, u128, u64)> = None;
    let (mut n0, mut s0) = (0u64, 0u64);
    for t in 0..=255u8 {
        n0 += hist[t as usize];
        s0 += t as u64 * hist[t as usize];
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (total as i128 * s0 as i128 - total_sum as i128 * n0 as i128).unsigned_abs();
        let num = diff * diff;
        let den = n0 * n1;
        let better = match best {
            None => true,
            Some((_, bnum, bden)) => widening_mul(num, bden) > widening_mul(bnum, den),
        };
        if better {
            best = Some((t, num, den));
        }
    }
    match best {
        Some((t, num, _)) if num > 0 => Ok(t),
        _ => Err(Error::DegenerateImage(
            "image has a single intensity; no foreground/background split exists".into(),
        )),
    }
}
