//! Finite-difference verification of the hand-derived backward passes.
//!
//! Each check builds small random `f64` tensors, projects the layer output
//! onto a random direction `r` to get a scalar loss `L = Σ r ⊙ layer(x)`,
//! and compares the analytic gradient of every input and parameter entry
//! with a central difference `(L(θ+h) − L(θ−h)) / 2h`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use super::dense::{dropout, dropout_backward, fc_backward, fc_forward, relu_backward, relu_forward, softmax_xent, DropoutMode};
use super::lrn::{lrn_backward, lrn_forward, LrnParams};
use super::pool::{maxpool_backward, maxpool_forward, PoolGeometry};
use super::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-3;
pub const MAX_REL_ERROR: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale; central
/// differences cannot resolve them relative to round-off in `L`.
const REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckedLayer {
    Conv,
    Lrn,
    MaxPool,
    Fc,
    Relu,
    Dropout,
    SoftmaxXent,
}

impl CheckedLayer {
    pub const ALL: [CheckedLayer; 7] = [
        CheckedLayer::Conv,
        CheckedLayer::Lrn,
        CheckedLayer::MaxPool,
        CheckedLayer::Fc,
        CheckedLayer::Relu,
        CheckedLayer::Dropout,
        CheckedLayer::SoftmaxXent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckedLayer::Conv => "conv",
            CheckedLayer::Lrn => "lrn",
            CheckedLayer::MaxPool => "maxpool",
            CheckedLayer::Fc => "fc",
            CheckedLayer::Relu => "relu",
            CheckedLayer::Dropout => "dropout",
            CheckedLayer::SoftmaxXent => "softmax-xent",
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub layer: CheckedLayer,
    pub seed: u64,
    pub max_rel_error: f64,
    pub entries: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < MAX_REL_ERROR
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic[k]` with central differences of `loss` over every
/// entry of every argument.
fn compare(
    args: &[Vec<f64>],
    analytic: &[Vec<f64>],
    loss: impl Fn(&[Vec<f64>]) -> Result<f64>,
) -> Result<(f64, usize)> {
    let mut work = args.to_vec();
    let mut worst = 0.0f64;
    let mut entries = 0;
    for (a, grads) in analytic.iter().enumerate() {
        for i in 0..work[a].len() {
            let orig = work[a][i];
            work[a][i] = orig + FD_STEP;
            let plus = loss(&work)?;
            work[a][i] = orig - FD_STEP;
            let minus = loss(&work)?;
            work[a][i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grads[i], numeric));
            entries += 1;
        }
    }
    Ok((worst, entries))
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn tensor(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, data.to_vec()).expect("shape matches data")
}

fn project(y: &Tensor<f64>, r: &[f64]) -> f64 {
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Runs one randomized check of `layer`.
pub fn check_layer(layer: CheckedLayer, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (max_rel_error, entries) = match layer {
        CheckedLayer::Conv => {
            let c = rng.gen_range(1..=3);
            let (h, w) = (rng.gen_range(4..=7), rng.gen_range(4..=7));
            let o = rng.gen_range(1..=3);
            let k = rng.gen_range(1..=3);
            let g = ConvGeometry {
                stride: rng.gen_range(1..=2),
                pad: rng.gen_range(0..=1),
            };
            let (xs, ws, bs) = ([c, h, w], [o, c, k, k], [o]);
            let args = vec![
                uniform(&mut rng, c * h * w, -1.0, 1.0),
                uniform(&mut rng, o * c * k * k, -1.0, 1.0),
                uniform(&mut rng, o, -1.0, 1.0),
            ];
            let fwd = |a: &[Vec<f64>]| conv2d_forward(&tensor(&xs, &a[0]), &tensor(&ws, &a[1]), &tensor(&bs, &a[2]), g);
            let y = fwd(&args)?;
            let r = uniform(&mut rng, y.len(), -1.0, 1.0);
            let gr = conv2d_backward(&tensor(y.shape(), &r), &tensor(&xs, &args[0]), &tensor(&ws, &args[1]), &tensor(&bs, &args[2]), g)?;
            let analytic = vec![gr.input.into_data(), gr.weights.into_data(), gr.bias.into_data()];
            compare(&args, &analytic, |a| Ok(project(&fwd(a)?, &r)))?
        }
        CheckedLayer::Lrn => {
            let c = rng.gen_range(1..=7);
            let (h, w) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
            let p = LrnParams {
                alpha: if rng.gen_bool(0.5) { 1e-4 } else { rng.gen_range(0.05..0.5) },
                beta: 0.75,
                k: 2.0,
                n: *[1usize, 2, 3, 5].choose(&mut rng).unwrap(),
            };
            let shape = [c, h, w];
            let args = vec![uniform(&mut rng, c * h * w, -2.0, 2.0)];
            let r = uniform(&mut rng, c * h * w, -1.0, 1.0);
            let gi = lrn_backward(&tensor(&shape, &r), &tensor(&shape, &args[0]), &p)?;
            compare(&args, &[gi.into_data()], |a| Ok(project(&lrn_forward(&tensor(&shape, &a[0]), &p)?, &r)))?
        }
        CheckedLayer::MaxPool => {
            let c = rng.gen_range(1..=2);
            let (h, w) = (rng.gen_range(3..=7), rng.gen_range(3..=7));
            let g = PoolGeometry {
                size: rng.gen_range(2..=3),
                stride: rng.gen_range(1..=2),
            };
            // distinct values spaced well beyond the step keep every window's
            // argmax fixed under perturbation
            let mut vals: Vec<f64> = (0..c * h * w).map(|i| i as f64 * 0.05).collect();
            vals.shuffle(&mut rng);
            let shape = [c, h, w];
            let args = vec![vals];
            let (y, arg) = maxpool_forward(&tensor(&shape, &args[0]), g)?;
            let r = uniform(&mut rng, y.len(), -1.0, 1.0);
            let gi = maxpool_backward(&tensor(y.shape(), &r), &arg, &shape)?;
            compare(&args, &[gi.into_data()], |a| Ok(project(&maxpool_forward(&tensor(&shape, &a[0]), g)?.0, &r)))?
        }
        CheckedLayer::Fc => {
            let (o, i) = (rng.gen_range(1..=6), rng.gen_range(1..=8));
            let args = vec![
                uniform(&mut rng, i, -1.0, 1.0),
                uniform(&mut rng, o * i, -1.0, 1.0),
                uniform(&mut rng, o, -1.0, 1.0),
            ];
            let fwd = |a: &[Vec<f64>]| fc_forward(&tensor(&[i], &a[0]), &tensor(&[o, i], &a[1]), &tensor(&[o], &a[2]));
            let r = uniform(&mut rng, o, -1.0, 1.0);
            let gr = fc_backward(&tensor(&[o], &r), &tensor(&[i], &args[0]), &tensor(&[o, i], &args[1]), &tensor(&[o], &args[2]))?;
            let analytic = vec![gr.input.into_data(), gr.weights.into_data(), gr.bias.into_data()];
            compare(&args, &analytic, |a| Ok(project(&fwd(a)?, &r)))?
        }
        CheckedLayer::Relu => {
            let n = rng.gen_range(1..=20);
            // keep clear of the kink at zero
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    let m = rng.gen_range(0.05..1.0);
                    if rng.gen_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
            let r = uniform(&mut rng, n, -1.0, 1.0);
            let gi = relu_backward(&tensor(&[n], &r), &tensor(&[n], &x))?;
            compare(&[x], &[gi.into_data()], |a| Ok(project(&relu_forward(&tensor(&[n], &a[0])), &r)))?
        }
        CheckedLayer::Dropout => {
            let n = rng.gen_range(1..=30);
            let mask_seed: u64 = rng.gen();
            let x = uniform(&mut rng, n, -1.0, 1.0);
            let r = uniform(&mut rng, n, -1.0, 1.0);
            let fwd = |a: &[f64]| {
                let mut m = ChaCha8Rng::seed_from_u64(mask_seed);
                dropout(&tensor(&[n], a), 0.5, DropoutMode::Train, &mut m)
            };
            let (_, mask) = fwd(&x)?;
            let gi = dropout_backward(&tensor(&[n], &r), mask.as_deref());
            compare(&[x], &[gi.into_data()], |a| Ok(project(&fwd(&a[0])?.0, &r)))?
        }
        CheckedLayer::SoftmaxXent => {
            let n = rng.gen_range(2..=10);
            let class = rng.gen_range(0..n);
            let z = uniform(&mut rng, n, -3.0, 3.0);
            let (_, grad) = softmax_xent(&z, class)?;
            compare(&[z], &[grad], |a| Ok(softmax_xent(&a[0], class)?.0))?
        }
    };
    Ok(GradCheck {
        layer,
        seed,
        max_rel_error,
        entries,
    })
}

/// Runs `seeds` randomized checks of every layer.
pub fn check_all(seeds: std::ops::Range<u64>) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    for layer in CheckedLayer::ALL {
        for seed in seeds.clone() {
            out.push(check_layer(layer, seed)?);
        }
    }
    Ok(out)
}
