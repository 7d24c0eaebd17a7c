//! Fully connected layer, ReLU, dropout and the softmax cross-entropy loss.

use rand::Rng;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn fc_dims<F: Scalar>(input: &Tensor<F>, weights: &Tensor<F>, bias: &Tensor<F>) -> Result<(usize, usize)> {
    let [out, inp] = *weights.shape() else {
        return Err(Error::shape(format!("fc weights must be rank 2, got {:?}", weights.shape())));
    };
    if input.len() != inp {
        return Err(Error::shape(format!("fc expects {inp} inputs, got {}", input.len())));
    }
    if bias.shape() != [out] {
        return Err(Error::shape(format!("fc bias must be [{out}], got {:?}", bias.shape())));
    }
    Ok((out, inp))
}

/// `W·x + b`; the input is flattened.
pub fn fc_forward<F: Scalar>(input: &Tensor<F>, weights: &Tensor<F>, bias: &Tensor<F>) -> Result<Tensor<F>> {
    let (out, inp) = fc_dims(input, weights, bias)?;
    let x = input.data();
    let y = weights
        .data()
        .chunks_exact(inp)
        .zip(bias.data())
        .map(|(row, &b)| b + row.iter().zip(x).fold(F::zero(), |acc, (&w, &v)| acc + w * v))
        .collect();
    Tensor::from_vec(&[out], y)
}

pub(crate) fn fc_backward_into<F: Scalar>(
    grad_out: &Tensor<F>,
    input: &Tensor<F>,
    weights: &Tensor<F>,
    bias: &Tensor<F>,
    grad_w: &mut [F],
    grad_b: &mut [F],
    need_input: bool,
) -> Result<Option<Tensor<F>>> {
    let (out, inp) = fc_dims(input, weights, bias)?;
    if grad_out.len() != out {
        return Err(Error::shape(format!("fc output gradient has {} values, want {out}", grad_out.len())));
    }
    let x = input.data();
    let g = grad_out.data();
    for ((gw_row, gb), &go) in grad_w.chunks_exact_mut(inp).zip(grad_b.iter_mut()).zip(g) {
        *gb += go;
        if go != F::zero() {
            for (gw, &xv) in gw_row.iter_mut().zip(x) {
                *gw += go * xv;
            }
        }
    }
    if !need_input {
        return Ok(None);
    }
    let mut gi = vec![F::zero(); inp];
    for (row, &go) in weights.data().chunks_exact(inp).zip(g) {
        if go != F::zero() {
            for (acc, &w) in gi.iter_mut().zip(row) {
                *acc += go * w;
            }
        }
    }
    Ok(Some(Tensor::from_vec(input.shape(), gi)?))
}

pub struct FcGrads<F> {
    pub input: Tensor<F>,
    pub weights: Tensor<F>,
    pub bias: Tensor<F>,
}

pub fn fc_backward<F: Scalar>(
    grad_out: &Tensor<F>,
    input: &Tensor<F>,
    weights: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<FcGrads<F>> {
    let mut gw = Tensor::zeros(weights.shape());
    let mut gb = Tensor::zeros(bias.shape());
    let gi = fc_backward_into(grad_out, input, weights, bias, gw.data_mut(), gb.data_mut(), true)?
        .expect("input gradient requested");
    Ok(FcGrads {
        input: gi,
        weights: gw,
        bias: gb,
    })
}

pub fn relu_forward<F: Scalar>(input: &Tensor<F>) -> Tensor<F> {
    input.map(|x| if x > F::zero() { x } else { F::zero() })
}

/// Passes the gradient where the forward input was strictly positive.
pub fn relu_backward<F: Scalar>(grad_out: &Tensor<F>, input: &Tensor<F>) -> Result<Tensor<F>> {
    if grad_out.shape() != input.shape() {
        return Err(Error::shape("relu gradient does not match input"));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > F::zero() { g } else { F::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Inference,
}

pub fn check_dropout_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(format!("dropout rate must lie in [0, 1), got {p}")));
    }
    Ok(())
}

/// Inverted dropout. In training mode each unit is zeroed with probability
/// `p` and survivors are scaled by `1 / (1 − p)`; the returned mask holds
/// those per-unit multipliers. Inference is the identity and returns no mask.
pub fn dropout<F: Scalar, R: Rng + ?Sized>(
    input: &Tensor<F>,
    p: f64,
    mode: DropoutMode,
    rng: &mut R,
) -> Result<(Tensor<F>, Option<Vec<F>>)> {
    check_dropout_rate(p)?;
    if mode == DropoutMode::Inference || p == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = F::of(1.0 / (1.0 - p));
    let mask: Vec<F> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep })
        .collect();
    let out = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok((Tensor::from_vec(input.shape(), out)?, Some(mask)))
}

pub fn dropout_backward<F: Scalar>(grad_out: &Tensor<F>, mask: Option<&[F]>) -> Tensor<F> {
    match mask {
        None => grad_out.clone(),
        Some(m) => Tensor::from_vec(
            grad_out.shape(),
            grad_out.data().iter().zip(m).map(|(&g, &k)| g * k).collect(),
        )
        .expect("mask length matches gradient"),
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of the softmax distribution against `class`, with its
/// gradient `softmax − one_hot(class)`.
pub fn softmax_xent<F: Scalar>(logits: &[F], class: usize) -> Result<(F, Vec<F>)> {
    if class >= logits.len() {
        return Err(Error::shape(format!("class {class} out of range for {} logits", logits.len())));
    }
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<F>().ln() + max;
    let loss = log_sum - logits[class];
    let mut grad = softmax(logits);
    grad[class] -= F::one();
    Ok((loss, grad))
}
