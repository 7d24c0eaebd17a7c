//! 2-D convolution (cross-correlation, no kernel flip) via im2col.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub pad: usize,
}

/// `floor((extent + 2·pad − kernel) / stride) + 1`, or `None` when the
/// kernel does not fit the padded input.
pub fn conv_output_extent(extent: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = extent + 2 * pad;
    (stride > 0 && kernel >= 1 && kernel <= padded).then(|| (padded - kernel) / stride + 1)
}

pub struct ConvGrads<F> {
    pub input: Tensor<F>,
    pub weights: Tensor<F>,
    pub bias: Tensor<F>,
}

struct Dims {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn dims<F: Scalar>(input: &Tensor<F>, weights: &Tensor<F>, bias: &Tensor<F>, g: ConvGeometry) -> Result<Dims> {
    let (c, h, w) = input.chw()?;
    let [o, wc, kh, kw] = *weights.shape() else {
        return Err(Error::shape(format!("conv weights must be rank 4, got {:?}", weights.shape())));
    };
    if wc != c {
        return Err(Error::shape(format!("input has {c} channels, weights expect {wc}")));
    }
    if bias.shape() != [o] {
        return Err(Error::shape(format!("conv bias must be [{o}], got {:?}", bias.shape())));
    }
    let oh = conv_output_extent(h, kh, g.stride, g.pad);
    let ow = conv_output_extent(w, kw, g.stride, g.pad);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(Error::shape(format!(
            "{kh}x{kw} kernel (stride {}, pad {}) does not fit {h}x{w} input",
            g.stride, g.pad
        )));
    };
    Ok(Dims { c, h, w, o, kh, kw, oh, ow })
}

/// Unfolds receptive fields into a `[c·kh·kw, oh·ow]` matrix.
fn im2col<F: Scalar>(x: &[F], d: &Dims, g: ConvGeometry) -> Vec<F> {
    let npos = d.oh * d.ow;
    let mut cols = vec![F::zero(); d.c * d.kh * d.kw * npos];
    for ch in 0..d.c {
        let plane = &x[ch * d.h * d.w..(ch + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = ((ch * d.kh + ki) * d.kw + kj) * npos;
                for oy in 0..d.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    let dst = &mut cols[row + oy * d.ow..row + (oy + 1) * d.ow];
                    for (ox, v) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < d.w as isize {
                            *v = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatters (and sums) a column matrix back onto the input layout.
fn col2im<F: Scalar>(cols: &[F], d: &Dims, g: ConvGeometry) -> Vec<F> {
    let npos = d.oh * d.ow;
    let mut x = vec![F::zero(); d.c * d.h * d.w];
    for ch in 0..d.c {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = ((ch * d.kh + ki) * d.kw + kj) * npos;
                for oy in 0..d.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let base = ch * d.h * d.w + iy as usize * d.w;
                    for ox in 0..d.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < d.w as isize {
                            x[base + ix as usize] += cols[row + oy * d.ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

#[inline]
fn axpy<F: Scalar>(a: F, x: &[F], y: &mut [F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<F: Scalar>(x: &[F], y: &[F]) -> F {
    x.iter().zip(y).fold(F::zero(), |acc, (&a, &b)| acc + a * b)
}

pub fn conv2d_forward<F: Scalar>(
    input: &Tensor<F>,
    weights: &Tensor<F>,
    bias: &Tensor<F>,
    geometry: ConvGeometry,
) -> Result<Tensor<F>> {
    let d = dims(input, weights, bias, geometry)?;
    let cols = im2col(input.data(), &d, geometry);
    let npos = d.oh * d.ow;
    let k = d.c * d.kh * d.kw;
    let mut out = vec![F::zero(); d.o * npos];
    for (o, row) in out.chunks_mut(npos).enumerate() {
        row.fill(bias.data()[o]);
        let w = &weights.data()[o * k..(o + 1) * k];
        for (kk, &wv) in w.iter().enumerate() {
            axpy(wv, &cols[kk * npos..(kk + 1) * npos], row);
        }
    }
    Tensor::from_vec(&[d.o, d.oh, d.ow], out)
}

/// Accumulates weight and bias gradients into `grad_w`/`grad_b` and returns
/// the input gradient when `need_input` is set.
pub(crate) fn conv2d_backward_into<F: Scalar>(
    grad_out: &Tensor<F>,
    input: &Tensor<F>,
    weights: &Tensor<F>,
    bias: &Tensor<F>,
    geometry: ConvGeometry,
    grad_w: &mut [F],
    grad_b: &mut [F],
    need_input: bool,
) -> Result<Option<Tensor<F>>> {
    let d = dims(input, weights, bias, geometry)?;
    if grad_out.shape() != [d.o, d.oh, d.ow] {
        return Err(Error::shape(format!(
            "conv output gradient {:?} does not match forward output [{}, {}, {}]",
            grad_out.shape(),
            d.o,
            d.oh,
            d.ow
        )));
    }
    let npos = d.oh * d.ow;
    let k = d.c * d.kh * d.kw;
    let cols = im2col(input.data(), &d, geometry);
    let g = grad_out.data();
    for o in 0..d.o {
        let go = &g[o * npos..(o + 1) * npos];
        grad_b[o] += go.iter().copied().sum::<F>();
        let gw = &mut grad_w[o * k..(o + 1) * k];
        for (kk, gwv) in gw.iter_mut().enumerate() {
            *gwv += dot(go, &cols[kk * npos..(kk + 1) * npos]);
        }
    }
    if !need_input {
        return Ok(None);
    }
    let mut gcols = vec![F::zero(); k * npos];
    for o in 0..d.o {
        let go = &g[o * npos..(o + 1) * npos];
        let w = &weights.data()[o * k..(o + 1) * k];
        for (kk, &wv) in w.iter().enumerate() {
            axpy(wv, go, &mut gcols[kk * npos..(kk + 1) * npos]);
        }
    }
    Ok(Some(Tensor::from_vec(&[d.c, d.h, d.w], col2im(&gcols, &d, geometry))?))
}

pub fn conv2d_backward<F: Scalar>(
    grad_out: &Tensor<F>,
    input: &Tensor<F>,
    weights: &Tensor<F>,
    bias: &Tensor<F>,
    geometry: ConvGeometry,
) -> Result<ConvGrads<F>> {
    let mut gw = Tensor::zeros(weights.shape());
    let mut gb = Tensor::zeros(bias.shape());
    let gi = conv2d_backward_into(
        grad_out,
        input,
        weights,
        bias,
        geometry,
        gw.data_mut(),
        gb.data_mut(),
        true,
    )?
    .expect("input gradient requested");
    Ok(ConvGrads {
        input: gi,
        weights: gw,
        bias: gb,
    })
}
