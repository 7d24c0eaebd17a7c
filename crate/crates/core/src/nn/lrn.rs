//! Cross-channel local response normalization.
//!
//! `b_c = a_c / (k + α · Σ_{j ∈ window(c)} a_j²)^β` where the window covers
//! `n` adjacent channels centered on `c` (for even `n` the extra channel is
//! on the high side), truncated at the channel edges. `α` is applied as-is,
//! not divided by `n`.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrnParams {
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub n: usize,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
            n: 5,
        }
    }
}

impl LrnParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::config("LRN window size n must be at least 1"));
        }
        if !(self.k > 0.0) || !(self.alpha >= 0.0) || !self.beta.is_finite() {
            return Err(Error::config(format!("invalid LRN parameters {self:?}")));
        }
        Ok(())
    }

    /// Inclusive channel range of the window centered at `c`.
    #[inline]
    pub(crate) fn window(&self, c: usize, channels: usize) -> (usize, usize) {
        let before = (self.n - 1) / 2;
        let after = self.n - 1 - before;
        (c.saturating_sub(before), (c + after).min(channels - 1))
    }
}

/// Denominator bases `k + α Σ a²` for every element.
fn scales<F: Scalar>(x: &[F], c: usize, plane: usize, p: &LrnParams) -> Vec<F> {
    let (alpha, k) = (F::of(p.alpha), F::of(p.k));
    let mut out = vec![F::zero(); x.len()];
    let mut sq = vec![F::zero(); c];
    for pos in 0..plane {
        for (ch, s) in sq.iter_mut().enumerate() {
            let v = x[ch * plane + pos];
            *s = v * v;
        }
        for ch in 0..c {
            let (lo, hi) = p.window(ch, c);
            let sum: F = sq[lo..=hi].iter().copied().sum();
            out[ch * plane + pos] = k + alpha * sum;
        }
    }
    out
}

pub fn lrn_forward<F: Scalar>(input: &Tensor<F>, params: &LrnParams) -> Result<Tensor<F>> {
    params.validate()?;
    let (c, h, w) = input.chw()?;
    let beta = F::of(params.beta);
    let s = scales(input.data(), c, h * w, params);
    let out = input
        .data()
        .iter()
        .zip(&s)
        .map(|(&a, &d)| a / d.powf(beta))
        .collect();
    Tensor::from_vec(input.shape(), out)
}

/// Input gradient given the upstream gradient and the forward input.
///
/// `∂L/∂a_j = g_j·d_j^{-β} − 2αβ·a_j · Σ_{c : j ∈ window(c)} g_c·a_c·d_c^{-β-1}`
pub fn lrn_backward<F: Scalar>(grad_out: &Tensor<F>, input: &Tensor<F>, params: &LrnParams) -> Result<Tensor<F>> {
    params.validate()?;
    let (c, h, w) = input.chw()?;
    if grad_out.shape() != input.shape() {
        return Err(Error::shape(format!(
            "LRN gradient {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let plane = h * w;
    let x = input.data();
    let g = grad_out.data();
    let beta = F::of(params.beta);
    let coef = F::of(2.0 * params.alpha * params.beta);
    let s = scales(x, c, plane, params);

    let mut out = vec![F::zero(); x.len()];
    let mut t = vec![F::zero(); c];
    for pos in 0..plane {
        for ch in 0..c {
            let i = ch * plane + pos;
            let d = s[i];
            let dpow = d.powf(-beta);
            out[i] = g[i] * dpow;
            t[ch] = g[i] * x[i] * dpow / d;
        }
        // window membership is not symmetric for even n, so scatter from
        // every center rather than gathering around j
        for center in 0..c {
            let (lo, hi) = params.window(center, c);
            for j in lo..=hi {
                let i = j * plane + pos;
                out[i] -= coef * x[i] * t[center];
            }
        }
    }
    Tensor::from_vec(input.shape(), out)
}
