//! Hyperparameter selection on development users: each grid point trains
//! every dev user's classifier and is scored by its error on genuine
//! signatures and skilled forgeries at threshold 0.

use super::{Kernel, SvmConfig, SvmModel, WdTrainSet};
use crate::error::{Error, Result};
use crate::par::Execution;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub c: f64,
    /// Ignored for the linear kernel.
    pub gamma: f64,
}

/// C ∈ {2⁻², 2⁰, …, 2⁶} and γ ∈ {2⁻¹⁶, 2⁻¹⁴, …, 2⁻⁴}.
pub fn default_grid() -> Vec<GridPoint> {
    let mut grid = Vec::new();
    for ce in (-2..=6).step_by(2) {
        for ge in (-16..=-4).step_by(2) {
            grid.push(GridPoint {
                c: 2f64.powi(ce),
                gamma: 2f64.powi(ge),
            });
        }
    }
    grid
}

#[derive(Clone, Debug)]
pub struct DevProblem<'a> {
    pub train: WdTrainSet<'a>,
    pub genuine: Vec<&'a [f64]>,
    pub skilled: Vec<&'a [f64]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchResult {
    pub best: GridPoint,
    pub best_error: f64,
    /// Mean error of every evaluated point, in evaluation order.
    pub table: Vec<(GridPoint, f64)>,
}

fn user_error(model: &SvmModel, dev: &DevProblem<'_>) -> Result<f64> {
    let mut wrong = 0usize;
    for g in &dev.genuine {
        if model.score(g)? < 0.0 {
            wrong += 1;
        }
    }
    for s in &dev.skilled {
        if model.score(s)? >= 0.0 {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / (dev.genuine.len() + dev.skilled.len()) as f64)
}

/// Returns the point with the lowest mean error, breaking ties by smaller C
/// and then smaller γ. For a linear `base` kernel γ is not searched.
pub fn grid_search(
    problems: &[DevProblem<'_>],
    grid: &[GridPoint],
    base: &SvmConfig,
    exec: Execution,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::config("hyperparameter grid is empty"));
    }
    if problems.is_empty() {
        return Err(Error::config("grid search needs at least one development user"));
    }
    if problems.iter().any(|p| p.genuine.len() + p.skilled.len() == 0) {
        return Err(Error::config("every development user needs test signatures"));
    }
    let linear = base.kernel == Kernel::Linear;
    let mut points: Vec<GridPoint> = grid
        .iter()
        .map(|p| GridPoint {
            c: p.c,
            gamma: if linear { 0.0 } else { p.gamma },
        })
        .collect();
    points.sort_by(|a, b| a.c.total_cmp(&b.c).then(a.gamma.total_cmp(&b.gamma)));
    points.dedup();

    let n_users = problems.len();
    let errors = exec.map_range(points.len() * n_users, |k| {
        let (point, dev) = (points[k / n_users], &problems[k % n_users]);
        let cfg = SvmConfig {
            kernel: if linear { Kernel::Linear } else { Kernel::Rbf { gamma: point.gamma } },
            c: point.c,
            ..base.clone()
        };
        let (model, _) = SvmModel::fit(&dev.train, &cfg, Execution::Sequential)?;
        user_error(&model, dev)
    });
    let errors = errors.into_iter().collect::<Result<Vec<f64>>>()?;

    let table: Vec<(GridPoint, f64)> = points
        .iter()
        .zip(errors.chunks(n_users))
        .map(|(&p, e)| (p, e.iter().sum::<f64>() / n_users as f64))
        .collect();
    let (best, best_error) = table
        .iter()
        .copied()
        .fold(None, |acc: Option<(GridPoint, f64)>, (p, e)| match acc {
            Some((_, be)) if be <= e => acc,
            _ => Some((p, e)),
        })
        .expect("grid is nonempty");
    for (p, e) in &table {
        log::debug!("grid C={} gamma={} error={:.4}", p.c, p.gamma, e);
    }
    Ok(GridSearchResult {
        best,
        best_error,
        table,
    })
}
