//! Writer-dependent SVM classifiers on CNN features.
//!
//! Features are scaled per dimension to unit standard deviation on the
//! training set, class imbalance is handled by a larger box bound on the
//! (few) genuine samples, and the dual is solved by SMO. A positive
//! decision value means genuine.

mod grid;
mod smo;

use std::io::{Read, Write};

pub use grid::{default_grid, grid_search, DevProblem, GridPoint, GridSearchResult};
pub use smo::{solve, Solution};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::wire;

pub const SVM_MAGIC: [u8; 4] = *b"SGSV";
pub const SVM_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    Linear,
    /// `exp(−γ‖a − b‖²)`
    Rbf { gamma: f64 },
}

impl Kernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmConfig {
    pub kernel: Kernel,
    pub c: f64,
    /// Stopping threshold on the maximal violating-pair gap.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmConfig {
    /// RBF with γ = 2⁻¹², C = 1, stopping gap 1e-5.
    fn default() -> Self {
        SvmConfig {
            kernel: Kernel::Rbf { gamma: 2f64.powi(-12) },
            c: 1.0,
            tolerance: 1e-5,
            max_iterations: 10_000_000,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        let gamma_ok = match self.kernel {
            Kernel::Linear => true,
            Kernel::Rbf { gamma } => gamma > 0.0 && gamma.is_finite(),
        };
        if !gamma_ok || !(self.c > 0.0) || !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::config(format!("invalid SVM configuration {self:?}")));
        }
        Ok(())
    }
}

/// Training data of one enrolled user: genuine signatures and negatives
/// (genuine signatures of development users).
#[derive(Clone, Debug)]
pub struct WdTrainSet<'a> {
    pub positives: Vec<&'a [f64]>,
    pub negatives: Vec<&'a [f64]>,
}

/// Per-dimension divisor applied before the kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScale(pub Vec<f64>);

/// Population standard deviation of each dimension; constant dimensions
/// get scale 1.
pub fn standardize_fit(samples: &[&[f64]]) -> Result<FeatureScale> {
    let Some(first) = samples.first() else {
        return Err(Error::config("cannot fit feature scaling on an empty set"));
    };
    let dim = first.len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::shape("feature vectors differ in length"));
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(*s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for s in samples {
        for ((acc, v), m) in var.iter_mut().zip(*s).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    Ok(FeatureScale(
        var.into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect(),
    ))
}

pub fn standardize_apply(v: &[f64], scale: &FeatureScale) -> Result<Vec<f64>> {
    if v.len() != scale.0.len() {
        return Err(Error::shape(format!("feature of length {} against a scale of {}", v.len(), scale.0.len())));
    }
    Ok(v.iter().zip(&scale.0).map(|(x, s)| x / s).collect())
}

/// Box bounds `(C·n_neg/n_pos, C)`: the positive class weighted as if each
/// positive were repeated `n_neg/n_pos` times.
pub fn balance_classes(n_pos: usize, n_neg: usize, c: f64) -> (f64, f64) {
    (c * n_neg as f64 / n_pos as f64, c)
}

/// Solver diagnostics for one trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub gap: f64,
    /// Largest KKT violation over the training samples, measured on `y·f(x)`.
    pub kkt_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c_pos: f64,
    pub c_neg: f64,
    /// Standardized support vectors.
    pub support: Vec<Vec<f64>>,
    /// `α_i·y_i` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub scale: FeatureScale,
}

/// Max violation of `α=0 ⇒ yf ≥ 1`, `0<α<C ⇒ yf = 1`, `α=C ⇒ yf ≤ 1`.
pub fn kkt_violation(alpha: &[f64], positive: &[bool], c_pos: f64, c_neg: f64, decisions: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(positive)
        .zip(decisions)
        .map(|((&a, &p), &f)| {
            let (cap, yf) = if p { (c_pos, f) } else { (c_neg, -f) };
            if a <= 0.0 {
                (1.0 - yf).max(0.0)
            } else if a >= cap {
                (yf - 1.0).max(0.0)
            } else {
                (yf - 1.0).abs()
            }
        })
        .fold(0.0, f64::max)
}

impl SvmModel {
    /// Standardizes, balances and solves.
    pub fn fit(set: &WdTrainSet<'_>, cfg: &SvmConfig, exec: Execution) -> Result<(SvmModel, FitReport)> {
        cfg.validate()?;
        if set.positives.is_empty() || set.negatives.is_empty() {
            return Err(Error::config("a WD training set needs positives and negatives"));
        }
        let all: Vec<&[f64]> = set.positives.iter().chain(&set.negatives).copied().collect();
        let scale = standardize_fit(&all)?;
        let scaled = all
            .iter()
            .map(|v| standardize_apply(v, &scale))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = scaled.iter().map(|v| v.as_slice()).collect();
        let positive: Vec<bool> = (0..all.len()).map(|i| i < set.positives.len()).collect();
        let (c_pos, c_neg) = balance_classes(set.positives.len(), set.negatives.len(), cfg.c);
        let sol = solve(&refs, &positive, c_pos, c_neg, cfg.kernel, cfg.tolerance, cfg.max_iterations, exec)?;

        let mut support = Vec::new();
        let mut coef = Vec::new();
        for ((v, &a), &p) in scaled.iter().zip(&sol.alpha).zip(&positive) {
            if a > 0.0 {
                support.push(v.clone());
                coef.push(if p { a } else { -a });
            }
        }
        let model = SvmModel {
            kernel: cfg.kernel,
            c_pos,
            c_neg,
            support,
            coef,
            bias: sol.bias,
            scale,
        };
        let decisions = exec.map(&refs, |v| model.decide(v).expect("dimensions checked above"));
        let report = FitReport {
            iterations: sol.iterations,
            gap: sol.gap,
            kkt_violation: kkt_violation(&sol.alpha, &positive, c_pos, c_neg, &decisions),
        };
        Ok((model, report))
    }

    pub fn dim(&self) -> usize {
        self.scale.0.len()
    }

    /// Decision value of an already standardized feature.
    pub fn decide(&self, feature: &[f64]) -> Result<f64> {
        if feature.len() != self.dim() {
            return Err(Error::shape(format!("feature of length {} for a {}-d model", feature.len(), self.dim())));
        }
        Ok(self
            .support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, feature))
            .sum::<f64>()
            + self.bias)
    }

    /// Standardizes a raw feature with the stored scale, then decides.
    pub fn score(&self, raw: &[f64]) -> Result<f64> {
        self.decide(&standardize_apply(raw, &self.scale)?)
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        wire::write_header(&mut w, &SVM_MAGIC, SVM_VERSION)?;
        match self.kernel {
            Kernel::Linear => {
                wire::write_u8(&mut w, 0)?;
                wire::write_f64(&mut w, 0.0)?;
            }
            Kernel::Rbf { gamma } => {
                wire::write_u8(&mut w, 1)?;
                wire::write_f64(&mut w, gamma)?;
            }
        }
        for v in [self.c_pos, self.c_neg, self.bias] {
            wire::write_f64(&mut w, v)?;
        }
        wire::write_usize(&mut w, self.dim())?;
        wire::write_f64s(&mut w, &self.scale.0)?;
        wire::write_usize(&mut w, self.support.len())?;
        wire::write_f64s(&mut w, &self.coef)?;
        for sv in &self.support {
            wire::write_f64s(&mut w, sv)?;
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<SvmModel> {
        wire::read_header(&mut r, &SVM_MAGIC, SVM_VERSION)?;
        let tag = wire::read_u8(&mut r)?;
        let gamma = wire::read_f64(&mut r)?;
        let kernel = match tag {
            0 => Kernel::Linear,
            1 => Kernel::Rbf { gamma },
            t => return Err(Error::Format(format!("unknown kernel tag {t}"))),
        };
        let c_pos = wire::read_f64(&mut r)?;
        let c_neg = wire::read_f64(&mut r)?;
        let bias = wire::read_f64(&mut r)?;
        let dim = wire::read_usize(&mut r)?;
        let scale = FeatureScale(wire::read_f64s(&mut r, dim)?);
        let n = wire::read_usize(&mut r)?;
        let coef = wire::read_f64s(&mut r, n)?;
        let support = (0..n).map(|_| wire::read_f64s(&mut r, dim)).collect::<Result<Vec<_>>>()?;
        Ok(SvmModel {
            kernel,
            c_pos,
            c_neg,
            support,
            coef,
            bias,
            scale,
        })
    }
}
