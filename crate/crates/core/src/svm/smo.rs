//! SMO solver for the soft-margin SVM dual with per-class box constraints:
//!
//! `min ½ αᵀQα − Σα  s.t.  0 ≤ α_t ≤ C_t,  yᵀα = 0,  Q_st = y_s y_t K(x_s, x_t)`
//!
//! Working pairs are chosen by maximal KKT violation; the bias follows the
//! libsvm convention (mean over free vectors, else the midpoint of the
//! feasible interval).

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use super::Kernel;
use crate::error::{Error, Result};
use crate::par::Execution;

const TAU: f64 = 1e-12;
/// Kernel cache budget.
const CACHE_BYTES: usize = 512 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Final maximal violating-pair gap.
    pub gap: f64,
}

struct KernelRows<'a> {
    x: &'a [&'a [f64]],
    kernel: Kernel,
    exec: Execution,
    capacity: usize,
    rows: HashMap<usize, Rc<Vec<f64>>>,
    recency: VecDeque<usize>,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [&'a [f64]], kernel: Kernel, exec: Execution) -> Self {
        let n = x.len().max(1);
        KernelRows {
            x,
            kernel,
            exec,
            capacity: (CACHE_BYTES / (8 * n)).clamp(2, n),
            rows: HashMap::new(),
            recency: VecDeque::new(),
        }
    }

    fn row(&mut self, i: usize) -> Rc<Vec<f64>> {
        if let Some(r) = self.rows.get(&i) {
            let r = Rc::clone(r);
            if let Some(pos) = self.recency.iter().position(|&k| k == i) {
                self.recency.remove(pos);
            }
            self.recency.push_back(i);
            return r;
        }
        if self.rows.len() >= self.capacity {
            if let Some(old) = self.recency.pop_front() {
                self.rows.remove(&old);
            }
        }
        let (x, kernel) = (self.x, self.kernel);
        let r = Rc::new(self.exec.map_range(x.len(), |t| kernel.eval(x[i], x[t])));
        self.rows.insert(i, Rc::clone(&r));
        self.recency.push_back(i);
        r
    }
}

/// Solves the dual. `positive[t]` marks class +1; `c_pos`/`c_neg` are the
/// per-class box bounds.
#[allow(clippy::too_many_arguments)]
pub fn solve(
    x: &[&[f64]],
    positive: &[bool],
    c_pos: f64,
    c_neg: f64,
    kernel: Kernel,
    tolerance: f64,
    max_iterations: usize,
    exec: Execution,
) -> Result<Solution> {
    let n = x.len();
    if n == 0 || positive.len() != n {
        return Err(Error::config("SVM training needs one label per sample and at least one sample"));
    }
    if !positive.iter().any(|&p| p) || positive.iter().all(|&p| p) {
        return Err(Error::config("SVM training needs both positive and negative samples"));
    }
    if !(c_pos > 0.0 && c_neg > 0.0) || !(tolerance > 0.0) {
        return Err(Error::config(format!("invalid SVM bounds C+={c_pos} C-={c_neg} tol={tolerance}")));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::shape("SVM samples differ in dimension"));
    }

    let y: Vec<f64> = positive.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
    let c: Vec<f64> = positive.iter().map(|&p| if p { c_pos } else { c_neg }).collect();
    let diag: Vec<f64> = exec.map(x, |r| kernel.eval(r, r));
    let mut rows = KernelRows::new(x, kernel, exec);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];

    let in_up = |a: f64, t: usize| (y[t] > 0.0 && a < c[t]) || (y[t] < 0.0 && a > 0.0);
    let in_low = |a: f64, t: usize| (y[t] > 0.0 && a > 0.0) || (y[t] < 0.0 && a < c[t]);

    let mut iterations = 0;
    let gap = loop {
        let (mut gmax, mut i) = (f64::NEG_INFINITY, usize::MAX);
        let (mut gmin, mut j) = (f64::INFINITY, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], t) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], t) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        let gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap < tolerance {
            break gap.max(0.0);
        }
        if iterations >= max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                gap,
                tolerance,
            });
        }
        iterations += 1;

        let (ki, kj) = (rows.row(i), rows.row(j));
        let (yi, yj) = (y[i], y[j]);
        let (ci, cj) = (c[i], c[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = yi * yj * ki[j];
        let (mut a_i, mut a_j) = (old_i, old_j);
        if yi != yj {
            let quad = (diag[i] + diag[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = a_i - a_j;
            a_i += delta;
            a_j += delta;
            if diff > 0.0 {
                if a_j < 0.0 {
                    a_j = 0.0;
                    a_i = diff;
                }
            } else if a_i < 0.0 {
                a_i = 0.0;
                a_j = -diff;
            }
            if diff > ci - cj {
                if a_i > ci {
                    a_i = ci;
                    a_j = ci - diff;
                }
            } else if a_j > cj {
                a_j = cj;
                a_i = cj + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = a_i + a_j;
            a_i -= delta;
            a_j += delta;
            if sum > ci {
                if a_i > ci {
                    a_i = ci;
                    a_j = sum - ci;
                }
            } else if a_j < 0.0 {
                a_j = 0.0;
                a_i = sum;
            }
            if sum > cj {
                if a_j > cj {
                    a_j = cj;
                    a_i = sum - cj;
                }
            } else if a_i < 0.0 {
                a_i = 0.0;
                a_j = sum;
            }
        }
        alpha[i] = a_i;
        alpha[j] = a_j;
        let (di, dj) = ((a_i - old_i) * yi, (a_j - old_j) * yj);
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * di + kj[t] * dj);
        }
    };

    let (mut ub, mut lb, mut sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum += yg;
            free += 1;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    Ok(Solution {
        alpha,
        bias: -rho,
        iterations,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-5;

    /// Euclidean projection onto `{0 ≤ a ≤ c, yᵀa = 0}` by bisection on the
    /// multiplier of the equality constraint.
    fn project(z: &[f64], y: &[f64], c: &[f64]) -> Vec<f64> {
        let at = |nu: f64| -> Vec<f64> { z.iter().zip(y).zip(c).map(|((z, y), c)| (z - nu * y).clamp(0.0, *c)).collect() };
        let h = |a: &[f64]| a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>();
        let span = z.iter().map(|v| v.abs()).fold(0.0, f64::max) + c.iter().fold(0.0, |m: f64, v| m.max(*v)) + 1.0;
        let (mut lo, mut hi) = (-span, span);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(&at(mid)) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    }

    /// Accelerated projected gradient on the dual, then the same bias rule
    /// applied to its gradient.
    fn qp_oracle(k: &[Vec<f64>], y: &[f64], c: &[f64]) -> (Vec<f64>, f64) {
        let n = y.len();
        let q = |s: usize, t: usize| y[s] * y[t] * k[s][t];
        let lip: f64 = (0..n).map(|s| (0..n).map(|t| q(s, t).abs()).sum::<f64>()).fold(0.0, f64::max);
        let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|s| (0..n).map(|t| q(s, t) * a[t]).sum::<f64>() - 1.0).collect() };
        let mut a = vec![0.0; n];
        let mut v = a.clone();
        let mut theta = 1.0f64;
        for _ in 0..60_000 {
            let g = grad(&v);
            let z: Vec<f64> = v.iter().zip(&g).map(|(v, g)| v - g / lip).collect();
            let next = project(&z, y, c);
            let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
            v = next.iter().zip(&a).map(|(n, o)| n + (theta - 1.0) / theta_next * (n - o)).collect();
            a = next;
            theta = theta_next;
        }
        let g = grad(&a);
        let (mut ub, mut lb, mut sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0);
        for t in 0..n {
            let yg = y[t] * g[t];
            let at_upper = a[t] >= c[t] - 1e-9;
            let at_lower = a[t] <= 1e-9;
            if !at_upper && !at_lower {
                sum += yg;
                free += 1;
            } else if (at_upper && y[t] < 0.0) || (at_lower && y[t] > 0.0) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
        let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
        (a, -rho)
    }

    fn decision(x: &[Vec<f64>], y: &[f64], alpha: &[f64], bias: f64, kernel: Kernel, p: &[f64]) -> f64 {
        x.iter().zip(y).zip(alpha).map(|((x, y), a)| a * y * kernel.eval(x, p)).sum::<f64>() + bias
    }

    fn random_problem(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<bool>, f64, f64, Kernel) {
        let n = rng.gen_range(2..=8);
        let mut positive: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        positive[0] = true;
        positive[1] = false;
        let x: Vec<Vec<f64>> = positive
            .iter()
            .map(|&p| {
                let shift = if p { 0.6 } else { -0.6 };
                vec![rng.gen_range(-1.0..1.0) + shift, rng.gen_range(-1.0..1.0)]
            })
            .collect();
        let kernel = if rng.gen_bool(0.5) {
            Kernel::Linear
        } else {
            Kernel::Rbf {
                gamma: rng.gen_range(0.2..2.0),
            }
        };
        (x, positive, rng.gen_range(0.2..5.0), rng.gen_range(0.2..5.0), kernel)
    }

    #[test]
    fn matches_qp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for case in 0..30 {
            let (x, positive, cp, cn, kernel) = random_problem(&mut rng);
            let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
            let sol = solve(&refs, &positive, cp, cn, kernel, TOL, 100_000, Execution::Sequential).unwrap();
            let y: Vec<f64> = positive.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
            let c: Vec<f64> = positive.iter().map(|&p| if p { cp } else { cn }).collect();
            let k: Vec<Vec<f64>> = x.iter().map(|a| x.iter().map(|b| kernel.eval(a, b)).collect()).collect();
            let (oa, ob) = qp_oracle(&k, &y, &c);
            for _ in 0..20 {
                let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let got = decision(&x, &y, &sol.alpha, sol.bias, kernel, &p);
                let want = decision(&x, &y, &oa, ob, kernel, &p);
                assert!((got - want).abs() < 1e-3, "case {case}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn weighted_bound_equals_duplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for case in 0..10 {
            let (x, positive, _, c, kernel) = random_problem(&mut rng);
            let k = rng.gen_range(2..5);
            let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
            let weighted = solve(&refs, &positive, k as f64 * c, c, kernel, TOL, 1_000_000, Execution::Sequential).unwrap();
            let mut dup_x = Vec::new();
            let mut dup_pos = Vec::new();
            for (r, &p) in refs.iter().zip(&positive) {
                for _ in 0..if p { k } else { 1 } {
                    dup_x.push(*r);
                    dup_pos.push(p);
                }
            }
            let dup = solve(&dup_x, &dup_pos, c, c, kernel, TOL, 1_000_000, Execution::Sequential).unwrap();
            let ys = |pos: &[bool]| -> Vec<f64> { pos.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect() };
            let dup_owned: Vec<Vec<f64>> = dup_x.iter().map(|r| r.to_vec()).collect();
            for _ in 0..20 {
                let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let a = decision(&x, &ys(&positive), &weighted.alpha, weighted.bias, kernel, &p);
                let b = decision(&dup_owned, &ys(&dup_pos), &dup.alpha, dup.bias, kernel, &p);
                assert!((a - b).abs() < 1e-3, "case {case}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn two_point_analytic_case() {
        let (a, b) = ([-1.0], [1.0]);
        let x: Vec<&[f64]> = vec![&a, &b];
        let sol = solve(&x, &[false, true], 1e3, 1e3, Kernel::Linear, 1e-6, 1000, Execution::Sequential).unwrap();
        assert!((sol.alpha[0] - 0.5).abs() < 1e-9 && (sol.alpha[1] - 0.5).abs() < 1e-9);
        let f = |p: f64| -sol.alpha[0] * (-p) + sol.alpha[1] * p + sol.bias;
        assert!(f(0.0).abs() < 1e-9);
        assert!((f(1.0) - 1.0).abs() < 1e-9 && (f(-1.0) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_box_constraints_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let (x, positive, cp, cn, kernel) = random_problem(&mut rng);
            let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
            let sol = solve(&refs, &positive, cp, cn, kernel, TOL, 100_000, Execution::Sequential).unwrap();
            let mut balance = 0.0;
            for (&a, &p) in sol.alpha.iter().zip(&positive) {
                let cap = if p { cp } else { cn };
                assert!((0.0..=cap).contains(&a));
                balance += if p { a } else { -a };
            }
            assert!(balance.abs() < 1e-9);
        }
    }

    #[test]
    fn tiny_cache_gives_same_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let positive: Vec<bool> = x.iter().map(|r| r[0] + 0.3 * r[1] > 0.0).collect();
        let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let kernel = Kernel::Rbf { gamma: 0.5 };
        let full = solve(&refs, &positive, 2.0, 1.0, kernel, 1e-3, 100_000, Execution::Sequential).unwrap();
        let mut rows = KernelRows::new(&refs, kernel, Execution::Sequential);
        rows.capacity = 2;
        for i in [0, 5, 0, 7, 9, 5] {
            let r = rows.row(i);
            assert_eq!(r[i], 1.0);
            assert!(rows.rows.len() <= 2);
        }
        let par = solve(&refs, &positive, 2.0, 1.0, kernel, 1e-3, 100_000, Execution::Parallel).unwrap();
        assert_eq!(full, par);
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let positive: Vec<bool> = x.iter().map(|r| r[0] > 0.0).collect();
        let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let err = solve(&refs, &positive, 1.0, 1.0, Kernel::Linear, 1e-3, 1, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 1, .. }));
    }

    #[test]
    fn rejects_single_class() {
        let a = [0.0];
        let x: Vec<&[f64]> = vec![&a, &a];
        assert!(solve(&x, &[true, true], 1.0, 1.0, Kernel::Linear, 1e-3, 10, Execution::Sequential).is_err());
    }
}
