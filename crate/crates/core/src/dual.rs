//! Newton solver for the cluster-weight fixed point at fixed locations.
//!
//! For one group of points (all points, or the points of one type) the
//! weights `u = log η` that make the soft masses equal `λ` minimize the
//! convex function
//!
//! `G(u) = Σ_i p(x_i) log Σ_j e^{u_j − β d_ij} − Σ_j λ_j u_j`,
//!
//! whose gradient is `p(y_j) − λ_j`. Its minimizers are exactly the fixed
//! points of the multiplicative weight update, which converges slowly once
//! associations are nearly hard; damped Newton reaches them in a handful of
//! steps.

use ndarray::{Array1, Array2};

const MAX_NEWTON_STEPS: usize = 200;
const ARMIJO: f64 = 1e-4;
const LINE_SEARCH_HALVINGS: usize = 12;
const MIN_RIDGE: f64 = 1e-12;
const MAX_RIDGE: f64 = 1e8;
const RIDGE_UP: f64 = 100.0;
const RIDGE_DOWN: f64 = 10.0;
const STALL_STEPS: usize = 20;
/// Largest change of any `log η` in one step.
const MAX_STEP: f64 = 16.0;
/// Mass accuracy targeted by [`Group::solve_warm`].
pub(crate) const MASS_TOL: f64 = 1e-14;
const STALL_TOL: f64 = 1e-10;
const STAGE_MASS_TOL: f64 = 1e-10;
const STAGE_GROWTH: f64 = 4.0;

pub(crate) struct Group {
    /// `−β d_ij` for the group's points (rows) and active clusters (columns).
    pub scores: Array2<f64>,
    pub weights: Array1<f64>,
    pub lambda: Array1<f64>,
}

impl Group {
    fn eval(&self, u: &Array1<f64>, probs: Option<&mut Array2<f64>>) -> f64 {
        let mut total = 0.0;
        let mut probs = probs;
        for (i, row) in self.scores.outer_iter().enumerate() {
            let max = row
                .iter()
                .zip(u.iter())
                .map(|(s, v)| s + v)
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().zip(u.iter()).map(|(s, v)| (s + v - max).exp()).sum();
            let lse = max + sum.ln();
            total += self.weights[i] * lse;
            if let Some(p) = probs.as_deref_mut() {
                ndarray::Zip::from(p.row_mut(i))
                    .and(row)
                    .and(u)
                    .for_each(|p, s, v| *p = (s + v - lse).exp());
            }
        }
        total - self.lambda.dot(u)
    }

    /// Gradient of `G` and, when `hess` is given, its Hessian, from the
    /// association matrix of the current iterate.
    fn derivatives(&self, probs: &Array2<f64>, hess: Option<&mut Array2<f64>>) -> Array1<f64> {
        let mut grad = -&self.lambda;
        let mut hess = hess;
        if let Some(h) = hess.as_deref_mut() {
            h.fill(0.0);
        }
        for (row, &w) in probs.outer_iter().zip(self.weights.iter()) {
            grad.scaled_add(w, &row);
            if let Some(h) = hess.as_deref_mut() {
                for (a, mut h_row) in h.outer_iter_mut().enumerate() {
                    let pa = w * row[a];
                    if pa != 0.0 {
                        h_row[a] += pa;
                        h_row.scaled_add(-pa, &row);
                    }
                }
            }
        }
        grad
    }

    /// Minimizes `G` starting from `u`; returns the final iterate and the
    /// largest mass error.
    ///
    /// Newton steps are regularized by a ridge that grows when a step is
    /// rejected and shrinks when one is accepted, and no coordinate moves
    /// by more than [`MAX_STEP`] at once. `mass_tol` is raised to the
    /// rounding floor of the group's mass sums.
    pub(crate) fn solve(&self, mut u: Array1<f64>, mass_tol: f64) -> (Array1<f64>, f64) {
        let (n, k) = self.scores.dim();
        let mut probs = Array2::zeros((n, k));
        let mut trial_probs = Array2::zeros((n, k));
        let mut hess = Array2::<f64>::zeros((k, k));
        let mut g_val = self.eval(&u, Some(&mut probs));
        let mut grad = self.derivatives(&probs, Some(&mut hess));
        let mut err = max_abs(&grad);
        let mass_tol = mass_tol.max(4.0 * n as f64 * f64::EPSILON);
        let mut mu = MIN_RIDGE;
        let mut best = err;
        let mut since_best = 0;
        for _ in 0..MAX_NEWTON_STEPS {
            if err <= mass_tol || mu > MAX_RIDGE || since_best > STALL_STEPS {
                break;
            }
            let scale = (0..k).map(|a| hess[[a, a]]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let mut h = hess.clone();
            for a in 0..k {
                h[[a, a]] += mu * scale;
            }
            let Some(mut step) = solve_dense(h, -&grad) else {
                mu *= RIDGE_UP;
                continue;
            };
            let longest = max_abs(&step);
            if longest > MAX_STEP {
                step *= MAX_STEP / longest;
            }
            let slope = grad.dot(&step);
            if !(slope < 0.0) {
                mu *= RIDGE_UP;
                continue;
            }
            // Near the optimum `G` is flat to rounding, so a step is also
            // accepted when it shrinks the mass error.
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..LINE_SEARCH_HALVINGS {
                let trial = &u + &(&step * t);
                let v = self.eval(&trial, Some(&mut trial_probs));
                let trial_err = max_abs(&self.derivatives(&trial_probs, None));
                if v <= g_val + ARMIJO * t * slope || trial_err < (1.0 - ARMIJO * t) * err {
                    u = trial;
                    g_val = v;
                    std::mem::swap(&mut probs, &mut trial_probs);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                mu = (mu / RIDGE_DOWN).max(MIN_RIDGE);
                grad = self.derivatives(&probs, Some(&mut hess));
                err = max_abs(&grad);
            } else {
                mu *= RIDGE_UP;
            }
            if err < 0.5 * best {
                best = err;
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        (u, err)
    }
}

impl Group {
    /// Newton from `u0` to [`MASS_TOL`], falling back to
    /// [`Group::solve_continued`] when that stalls above [`STALL_TOL`].
    pub(crate) fn solve_warm(&self, u0: Array1<f64>) -> (Array1<f64>, f64) {
        let warm = self.solve(u0, MASS_TOL);
        if warm.1 <= STALL_TOL {
            return warm;
        }
        let cold = self.solve_continued(MASS_TOL);
        if cold.1 < warm.1 {
            cold
        } else {
            warm
        }
    }

    /// Follows the scores `t · scores` from a nearly flat `t` up to `t = 1`,
    /// warm-starting each stage from the previous one. Used when a warm
    /// start lands where associations are already hard and `G` has almost
    /// no curvature.
    pub(crate) fn solve_continued(&self, mass_tol: f64) -> (Array1<f64>, f64) {
        let (lo, hi) = self
            .scores
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let range = hi - lo;
        let mut t = if range > 1.0 { 1.0 / range } else { 1.0 };
        let mut u = self.lambda.mapv(f64::ln);
        loop {
            if t >= 1.0 {
                return self.solve(u, mass_tol);
            }
            let stage = Group {
                scores: &self.scores * t,
                weights: self.weights.clone(),
                lambda: self.lambda.clone(),
            };
            u = stage.solve(u, STAGE_MASS_TOL).0;
            let next = (t * STAGE_GROWTH).min(1.0);
            u *= next / t;
            t = next;
        }
    }
}

fn max_abs(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[[r, col]].abs().total_cmp(&a[[s, col]].abs()))?;
        if a[[piv, col]] == 0.0 || !a[[piv, col]].is_finite() {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap([piv, c], [col, c]);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[[r, c]] -= f * a[[col, c]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[[r, c]] * x[c]).sum();
        x[r] = (b[r] - s) / a[[r, r]];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
