//! Bounded Levenberg-Marquardt least squares with finite-difference Jacobians.
//!
//! Minimizes `Σ wᵢ (yᵢ − model(p, xᵢ))²` subject to box bounds on `p`.
//! Bounds are handled by an active set: a parameter sitting on a bound whose
//! proposed step points outward is frozen for that iteration, and the
//! remaining step is projected back into the box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::stats;

/// Relative finite-difference step for Jacobian columns.
pub const FD_REL_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const FREE: Bound = Bound { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A bounded nonlinear least-squares problem.
pub struct FitProblem<'a, F>
where
    F: Fn(&[f64], f64) -> f64,
{
    pub model: F,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub weights: Option<&'a [f64]>,
    pub bounds: Vec<Bound>,
    pub init: Vec<f64>,
    pub max_iter: usize,
    pub tol: f64,
    square: bool,
}

impl<'a, F> FitProblem<'a, F>
where
    F: Fn(&[f64], f64) -> f64,
{
    pub fn new(model: F, x: &'a [f64], y: &'a [f64], init: Vec<f64>) -> Self {
        let bounds = vec![Bound::FREE; init.len()];
        Self { model, x, y, weights: None, bounds, init, max_iter: 200, tol: 1e-12, square: false }
    }

    pub fn with_bounds(mut self, bounds: Vec<Bound>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_weights(mut self, weights: &'a [f64]) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Accept as many points as parameters (root finding rather than regression).
    pub(crate) fn square_system(mut self) -> Self {
        self.square = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let p = self.init.len();
        if p == 0 {
            return Err(Error::InvalidProblem("no parameters".into()));
        }
        if self.x.len() != self.y.len() {
            return Err(Error::InvalidProblem(format!("x has {} points, y has {}", self.x.len(), self.y.len())));
        }
        if self.x.len() < p + usize::from(!self.square) {
            return Err(Error::InvalidProblem(format!("{} points cannot constrain {} parameters", self.x.len(), p)));
        }
        if self.bounds.len() != p {
            return Err(Error::InvalidProblem("one bound per parameter required".into()));
        }
        for (i, (b, v)) in self.bounds.iter().zip(&self.init).enumerate() {
            if !(b.lo <= b.hi) {
                return Err(Error::InvalidProblem(format!("bound {i} is empty")));
            }
            if !v.is_finite() || !b.contains(*v) {
                return Err(Error::InvalidProblem(format!("initial parameter {i} = {v} outside [{}, {}]", b.lo, b.hi)));
            }
        }
        if let Some(w) = self.weights {
            if w.len() != self.y.len() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidProblem("weights must be finite, non-negative, one per point".into()));
            }
        }
        if self.y.iter().chain(self.x).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite data".into()));
        }
        Ok(())
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (i, r) in out.iter_mut().enumerate() {
            let w = self.weights.map_or(1.0, |w| w[i].sqrt());
            *r = w * (self.y[i] - (self.model)(p, self.x[i]));
        }
    }

    fn jacobian(&self, p: &[f64], r0: &[f64]) -> DMatrix<f64> {
        let n = self.x.len();
        let mut jac = DMatrix::zeros(n, p.len());
        let mut pp = p.to_vec();
        let mut r1 = vec![0.0; n];
        for j in 0..p.len() {
            let b = self.bounds[j];
            let scale = if p[j] != 0.0 {
                p[j].abs()
            } else if b.width().is_finite() && b.width() > 0.0 {
                b.width()
            } else {
                1.0
            };
            let mut h = FD_REL_STEP * scale;
            if p[j] + h > b.hi {
                h = -h;
            }
            pp[j] = p[j] + h;
            self.residuals(&pp, &mut r1);
            pp[j] = p[j];
            // J is the model derivative; residual = y − model.
            for i in 0..n {
                jac[(i, j)] = -(r1[i] - r0[i]) / h;
            }
        }
        jac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// One-sigma errors from the linearized covariance; `None` when the
    /// normal matrix is singular.
    pub param_errors: Option<Vec<f64>>,
    /// Unweighted residual sum of squares.
    pub ss_res: f64,
    /// Adjusted R² with k = number of parameters; `None` for constant data.
    pub adj_r2: Option<f64>,
    pub converged: bool,
    pub n_iter: usize,
    /// Objective value after every accepted step, starting with the initial point.
    pub cost_history: Vec<f64>,
    /// Parameters that finished on a bound.
    pub at_bound: Vec<bool>,
}

impl FitResult {
    pub fn any_at_bound(&self) -> bool {
        self.at_bound.iter().any(|b| *b)
    }
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub fn nlls_fit<F>(problem: &FitProblem<'_, F>) -> Result<FitResult>
where
    F: Fn(&[f64], f64) -> f64,
{
    problem.validate()?;
    let n = problem.x.len();
    let np = problem.init.len();
    let bounds = &problem.bounds;

    let mut p = problem.init.clone();
    let mut r = vec![0.0; n];
    problem.residuals(&p, &mut r);
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return Err(Error::InvalidProblem("model is not finite at the initial point".into()));
    }
    let y_scale: f64 = problem.y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);

    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut n_iter = 0;
    let mut trial = vec![0.0; np];
    let mut r_trial = vec![0.0; n];

    'outer: while n_iter < problem.max_iter {
        n_iter += 1;
        if cost <= f64::EPSILON * f64::EPSILON * y_scale {
            converged = true;
            break;
        }
        let jac = problem.jacobian(&p, &r);
        let jtj = jac.transpose() * &jac;
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv; // descent direction for minimizing Σr²

        // Projected-gradient stationarity.
        let pg = (0..np)
            .map(|j| {
                let at_lo = p[j] <= bounds[j].lo && grad[j] < 0.0;
                let at_hi = p[j] >= bounds[j].hi && grad[j] > 0.0;
                if at_lo || at_hi {
                    0.0
                } else {
                    grad[j].abs()
                }
            })
            .fold(0.0, f64::max);
        let gscale = jtj.diagonal().iter().fold(0.0f64, |a, v| a.max(*v)).sqrt() * cost.sqrt();
        if pg <= 1e-14 * gscale.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }

        loop {
            let step = match damped_step(&jtj, &grad, lambda, &p, bounds) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break 'outer;
                    }
                    continue;
                }
            };
            for j in 0..np {
                trial[j] = bounds[j].clamp(p[j] + step[j]);
            }
            let moved = (0..np).any(|j| trial[j] != p[j]);
            if !moved {
                converged = true;
                break 'outer;
            }
            problem.residuals(&trial, &mut r_trial);
            let c_trial = cost_of(&r_trial);
            if c_trial.is_finite() && c_trial < cost {
                let rel = (cost - c_trial) / cost;
                let small_step = (0..np).all(|j| (trial[j] - p[j]).abs() <= 1e-14 * (p[j].abs() + 1e-300));
                p.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut r_trial);
                cost = c_trial;
                history.push(cost);
                lambda = (lambda / 3.0).max(1e-12);
                if rel < problem.tol || small_step {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                // No downhill step exists at working precision.
                converged = pg <= 1e-8 * gscale.max(f64::MIN_POSITIVE);
                break 'outer;
            }
        }
    }

    let jac = problem.jacobian(&p, &r);
    let param_errors = covariance_errors(&jac, cost, n, np);
    let y_hat: Vec<f64> = problem.x.iter().map(|&x| (problem.model)(&p, x)).collect();
    let ss_res = problem.y.iter().zip(&y_hat).map(|(y, f)| (y - f) * (y - f)).sum::<f64>();
    let adj_r2 = stats::adjusted_r_squared(problem.y, &y_hat, np).ok();
    let at_bound = p
        .iter()
        .zip(bounds)
        .map(|(v, b)| {
            let tol = 1e-9 * (if b.width().is_finite() { b.width() } else { 1.0 } + v.abs());
            (*v - b.lo).abs() <= tol || (b.hi - *v).abs() <= tol
        })
        .collect();

    Ok(FitResult { params: p, param_errors, ss_res, adj_r2, converged, n_iter, cost_history: history, at_bound })
}

/// Solve the damped normal equations over the free (non-active) parameters.
fn damped_step(jtj: &DMatrix<f64>, grad: &DVector<f64>, lambda: f64, p: &[f64], bounds: &[Bound]) -> Option<Vec<f64>> {
    let np = p.len();
    let dmax = jtj.diagonal().iter().fold(0.0f64, |acc, v| acc.max(*v));
    let mut active = vec![false; np];
    loop {
        let free: Vec<usize> = (0..np).filter(|&j| !active[j]).collect();
        let mut step = vec![0.0; np];
        if !free.is_empty() {
            let m = free.len();
            let mut a = DMatrix::zeros(m, m);
            let mut g = DVector::zeros(m);
            for (ii, &i) in free.iter().enumerate() {
                g[ii] = grad[i];
                for (jj, &j) in free.iter().enumerate() {
                    a[(ii, jj)] = jtj[(i, j)];
                }
                let d = jtj[(i, i)].max(1e-12 * dmax).max(f64::MIN_POSITIVE);
                a[(ii, ii)] += lambda * d;
            }
            let sol = a.cholesky()?.solve(&g);
            for (ii, &i) in free.iter().enumerate() {
                step[i] = sol[ii];
            }
        }
        // Freeze parameters pinned on a bound and pushed outward, then re-solve.
        let mut changed = false;
        for j in free {
            if (p[j] <= bounds[j].lo && step[j] < 0.0) || (p[j] >= bounds[j].hi && step[j] > 0.0) {
                active[j] = true;
                changed = true;
            }
        }
        if !changed {
            return Some(step);
        }
    }
}

fn covariance_errors(jac: &DMatrix<f64>, cost: f64, n: usize, np: usize) -> Option<Vec<f64>> {
    let jtj = jac.transpose() * jac;
    let eig = jtj.clone().symmetric_eigenvalues();
    let emax = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let emin = eig.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if !(emax > 0.0) || emin <= 1e-12 * emax {
        return None;
    }
    let inv = jtj.cholesky()?.inverse();
    let dof = n.saturating_sub(np).max(1) as f64;
    let s2 = cost / dof;
    let errs: Vec<f64> = (0..np).map(|j| (inv[(j, j)] * s2).max(0.0).sqrt()).collect();
    errs.iter().all(|e| e.is_finite()).then_some(errs)
}

/// Unscaled covariance `(JᵀWJ)⁻¹` of a model at `p`, for callers that know
/// their absolute measurement errors.
pub fn absolute_covariance<F>(problem: &FitProblem<'_, F>, p: &[f64]) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64], f64) -> f64,
{
    let mut r = vec![0.0; problem.x.len()];
    problem.residuals(p, &mut r);
    let jac = problem.jacobian(p, &r);
    (jac.transpose() * jac).cholesky().map(|c| c.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(p: &[f64], x: f64) -> f64 {
        p[3] + p[2] * (-(x - p[0]).powi(2) / (2.0 * p[1] * p[1])).exp()
    }

    #[test]
    fn linear_model_exact() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|x| 3.25 * x).collect();
        let res = nlls_fit(&FitProblem::new(|p: &[f64], x| p[0] * x, &x, &y, vec![1.0])).unwrap();
        assert!(res.converged);
        assert!((res.params[0] - 3.25).abs() < 1e-12);
        assert!(res.ss_res <= 1e-20, "ss_res = {}", res.ss_res);
    }

    #[test]
    fn gaussian_round_trip_from_perturbed_start() {
        let truth = [914.7, 3.8, 0.12, -0.4];
        let x: Vec<f64> = (0..141).map(|i| 880.0 + 0.5 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| gaussian(&truth, x)).collect();
        let init = truth.iter().map(|v| v * 1.1).collect::<Vec<_>>();
        // 10% on the center is 90 MHz; keep the perturbation within the window.
        let init = vec![truth[0] + 3.0, init[1], init[2], init[3]];
        let res = nlls_fit(&FitProblem::new(gaussian, &x, &y, init)).unwrap();
        assert!(res.converged);
        for (got, want) in res.params.iter().zip(truth) {
            assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn active_bound_stops_on_bound() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 5.0 * x).collect();
        let res = nlls_fit(
            &FitProblem::new(|p: &[f64], x| p[0] * x, &x, &y, vec![1.0]).with_bounds(vec![Bound::new(0.0, 2.0)]),
        )
        .unwrap();
        assert!(res.converged);
        assert_eq!(res.params[0], 2.0);
        assert!(res.at_bound[0]);
    }

    #[test]
    fn cost_history_is_non_increasing() {
        let truth = [0.3, 1.7];
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &x)| (-(x * truth[0])).exp() * (truth[1] * x).cos() + 0.01 * ((i * 7919) % 13) as f64 / 13.0)
            .collect();
        let model = |p: &[f64], x: f64| (-(x * p[0])).exp() * (p[1] * x).cos();
        let res = nlls_fit(&FitProblem::new(model, &x, &y, vec![0.5, 1.5])).unwrap();
        assert!(res.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_init_outside_bounds() {
        let x = [0.0, 1.0, 2.0];
        let y = [0.0, 1.0, 2.0];
        let p = FitProblem::new(|p: &[f64], x| p[0] * x, &x, &y, vec![5.0]).with_bounds(vec![Bound::new(0.0, 1.0)]);
        assert!(matches!(nlls_fit(&p), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn singular_covariance_reports_no_errors() {
        // Two parameters that only enter as a product.
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.0 * x).collect();
        let res = nlls_fit(&FitProblem::new(|p: &[f64], x| p[0] * p[1] * x, &x, &y, vec![1.0, 1.0])).unwrap();
        assert!((res.params[0] * res.params[1] - 2.0).abs() < 1e-8);
        assert!(res.param_errors.is_none());
    }
}
