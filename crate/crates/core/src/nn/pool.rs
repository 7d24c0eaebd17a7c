use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeometry {
    pub size: usize,
    pub stride: usize,
}

pub fn pool_output_extent(extent: usize, size: usize, stride: usize) -> Option<usize> {
    (stride > 0 && size >= 1 && size <= extent).then(|| (extent - size) / stride + 1)
}

/// Max pooling without padding; incomplete trailing windows are dropped.
///
/// Returns the pooled tensor and, for every output element, the flat input
/// index of the first (row-major) maximum in its window.
pub fn maxpool_forward<F: Scalar>(input: &Tensor<F>, g: PoolGeometry) -> Result<(Tensor<F>, Vec<usize>)> {
    let (c, h, w) = input.chw()?;
    let (Some(oh), Some(ow)) = (pool_output_extent(h, g.size, g.stride), pool_output_extent(w, g.size, g.stride)) else {
        return Err(Error::shape(format!(
            "{0}x{0} pool window (stride {1}) does not fit {h}x{w} input",
            g.size, g.stride
        )));
    };
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = ch * h * w + oy * g.stride * w + ox * g.stride;
                for i in 0..g.size {
                    let row = ch * h * w + (oy * g.stride + i) * w + ox * g.stride;
                    for idx in row..row + g.size {
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_vec(&[c, oh, ow], out)?, argmax))
}

/// Routes each output gradient to the input position recorded in `argmax`.
pub fn maxpool_backward<F: Scalar>(grad_out: &Tensor<F>, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor<F>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape(format!(
            "pool gradient has {} elements, forward recorded {}",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut gi = Tensor::zeros(input_shape);
    let n = gi.len();
    let data = gi.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        if idx >= n {
            return Err(Error::shape("pool argmax index outside input"));
        }
        data[idx] += g;
    }
    Ok(gi)
}
