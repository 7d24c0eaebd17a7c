use rand::Rng;

use super::{Scalar, Tensor};

/// `(fan_in, fan_out)` of a weight tensor: `[out, in]` for fully connected
/// layers, `[out, in, kh, kw]` for convolutions (both fans include the
/// receptive field).
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match *shape {
        [out, inp] => (inp, out),
        [out, inp, kh, kw] => (inp * kh * kw, out * kh * kw),
        _ => {
            let n: usize = shape.iter().product();
            (n, n)
        }
    }
}

/// Glorot/Xavier uniform: `U[−L, L]` with `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<F: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<F> {
    let (fan_in, fan_out) = fans(shape);
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| F::of(rng.gen_range(-limit..=limit))).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
