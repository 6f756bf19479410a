//! NV ground-state Hamiltonian, ODMR transition frequencies and the inverse
//! problem from a measured transition pair to (B₀, θ).

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::constants::PhysicalConstants;
use crate::error::{domain, Error, Result};
use crate::fitting::lm::{absolute_covariance, nlls_fit, Bound, FitProblem};
use crate::spin::{CMatrix3, SpinOperatorsS1, PLUS_ONE, ZERO};

/// Static field magnitude (mT) and tilt from the NV axis (rad), with one-sigma errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldEstimate {
    pub b0: f64,
    pub theta: f64,
    pub b0_err: f64,
    pub theta_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NvHamiltonian {
    /// Hamiltonian matrix in MHz, basis {|+1⟩, |0⟩, |−1⟩}.
    pub matrix: CMatrix3,
    pub b0: f64,
    pub theta: f64,
}

/// ODMR transition pair in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionPair {
    /// |0⟩-like ↔ |−1⟩-like.
    pub f_minus: f64,
    /// |0⟩-like ↔ |+1⟩-like.
    pub f_plus: f64,
}

impl TransitionPair {
    pub fn new(f_minus: f64, f_plus: f64) -> Result<Self> {
        let pair = Self { f_minus, f_plus };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_minus.is_finite() && self.f_plus.is_finite()) {
            return domain("transition frequencies must be finite");
        }
        if !(0.0 < self.f_minus && self.f_minus < self.f_plus) {
            return Err(Error::Degenerate(format!(
                "transition pair ({}, {}) MHz violates 0 < f_minus < f_plus",
                self.f_minus, self.f_plus
            )));
        }
        Ok(())
    }
}

fn check_field(b0: f64, theta: f64) -> Result<()> {
    if !(b0.is_finite() && b0 >= 0.0) {
        return domain(format!("field magnitude must be non-negative, got {b0}"));
    }
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return domain(format!("tilt angle must lie in [0, π/2], got {theta}"));
    }
    Ok(())
}

/// H = γ_NV·B₀·(sinθ·Sx + cosθ·Sz) + D·Sz².
pub fn build_hamiltonian(b0: f64, theta: f64, consts: &PhysicalConstants) -> Result<NvHamiltonian> {
    check_field(b0, theta)?;
    let ops = SpinOperatorsS1::new();
    let zeeman = consts.gamma_nv * b0;
    let c = |v: f64| Complex64::new(v, 0.0);
    let matrix =
        (ops.sx * c(theta.sin()) + ops.sz * c(theta.cos())) * c(zeeman) + ops.sz * ops.sz * c(consts.zero_field_d);
    Ok(NvHamiltonian { matrix, b0, theta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigen3 {
    /// Eigenvalues in ascending order.
    pub values: [f64; 3],
    /// Column `i` is the eigenvector of `values[i]`.
    pub vectors: CMatrix3,
}

/// Eigen-decomposition of a 3×3 Hermitian matrix with a residual check.
pub fn eigen_hermitian_3(h: &CMatrix3) -> Result<Eigen3> {
    let norm = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let eig = SymmetricEigen::try_new(*h, f64::EPSILON, 10_000)
        .ok_or(Error::EigenConvergence { residual: f64::INFINITY, tolerance: 1e-9 * norm })?;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.map(|i| eig.eigenvalues[i]);
    let vectors = Matrix3::from_fn(|r, c| eig.eigenvectors[(r, order[c])]);

    let tolerance = 1e-9 * norm.max(f64::MIN_POSITIVE);
    let mut residual: f64 = 0.0;
    for (i, value) in values.iter().enumerate() {
        let v = vectors.column(i);
        let r = h * v - v * Complex64::new(*value, 0.0);
        residual = residual.max(r.norm());
    }
    if residual > tolerance && norm > 0.0 {
        return Err(Error::EigenConvergence { residual, tolerance });
    }
    Ok(Eigen3 { values, vectors })
}

/// Transition frequencies with eigenstates labeled by maximum overlap with
/// the zero-field basis states.
pub fn transition_frequencies(b0: f64, theta: f64, consts: &PhysicalConstants) -> Result<TransitionPair> {
    let h = build_hamiltonian(b0, theta, consts)?;
    let eig = eigen_hermitian_3(&h.matrix)?;
    let overlap = |basis: usize, col: usize| eig.vectors[(basis, col)].norm_sqr();

    let zero_overlaps: Vec<f64> = (0..3).map(|c| overlap(ZERO, c)).collect();
    let i0 = argmax(&zero_overlaps);
    for c in (0..3).filter(|&c| c != i0) {
        if (zero_overlaps[c] - zero_overlaps[i0]).abs() <= 1e-9 {
            return Err(Error::AmbiguousLabel(format!(
                "two eigenstates tie in |0⟩ overlap ({:.6})",
                zero_overlaps[i0]
            )));
        }
    }
    let rest: Vec<usize> = (0..3).filter(|&c| c != i0).collect();
    let (ip, im) =
        if overlap(PLUS_ONE, rest[0]) >= overlap(PLUS_ONE, rest[1]) { (rest[0], rest[1]) } else { (rest[1], rest[0]) };
    let e0 = eig.values[i0];
    TransitionPair::new(eig.values[im] - e0, eig.values[ip] - e0)
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
}

/// Starting tilts for the multi-start inversion, degrees.
const THETA_STARTS_DEG: [f64; 4] = [0.0, 5.0, 10.0, 20.0];

/// Invert a measured transition pair into (B₀, θ).
///
/// `freq_errors` are the one-sigma errors of (f_minus, f_plus) in MHz and are
/// used both as fit weights and for linearized error propagation.
pub fn invert_field(
    pair: TransitionPair,
    freq_errors: (f64, f64),
    consts: &PhysicalConstants,
) -> Result<FieldEstimate> {
    pair.validate()?;
    let (e_minus, e_plus) = freq_errors;
    if !(e_minus > 0.0 && e_plus > 0.0 && e_minus.is_finite() && e_plus.is_finite()) {
        return domain("frequency errors must be positive");
    }
    let d = consts.zero_field_d;
    let b_max = d / consts.gamma_nv;
    let excess = pair.f_minus + pair.f_plus - 2.0 * d;
    if excess.abs() > consts.gamma_nv * b_max {
        return Err(Error::OutOfModel(format!("f_minus + f_plus deviates from 2D by {excess:.3} MHz")));
    }

    let x = [0.0, 1.0];
    let y = [pair.f_minus, pair.f_plus];
    let w = [1.0 / (e_minus * e_minus), 1.0 / (e_plus * e_plus)];
    let model = |p: &[f64], which: f64| -> f64 {
        match transition_frequencies(p[0], p[1], consts) {
            Ok(tp) if which < 0.5 => tp.f_minus,
            Ok(tp) => tp.f_plus,
            Err(_) => f64::NAN,
        }
    };
    let bounds = vec![Bound::new(1e-6, b_max * (1.0 - 1e-9)), Bound::new(0.0, FRAC_PI_2)];
    let b_init = ((pair.f_plus - pair.f_minus) / (2.0 * consts.gamma_nv)).clamp(bounds[0].lo, bounds[0].hi);

    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for theta_deg in THETA_STARTS_DEG {
        let init = vec![b_init, theta_deg.to_radians()];
        let problem = FitProblem::new(model, &x, &y, init)
            .with_bounds(bounds.clone())
            .with_weights(&w)
            .with_max_iter(200)
            .with_tol(1e-15)
            .square_system();
        // Two equations, two unknowns: check the raw residual instead of ss statistics.
        let fit = match nlls_fit(&problem) {
            Ok(f) => f,
            Err(Error::InvalidProblem(_)) => continue,
            Err(e) => return Err(e),
        };
        let ss = fit.ss_res;
        if best.as_ref().is_none_or(|(b, _, _)| ss < *b) {
            best = Some((ss, fit.params, fit.converged));
        }
    }
    let (_, p, converged) = best.ok_or_else(|| Error::NoConvergence("no start produced a fit".into()))?;
    if !converged {
        return Err(Error::NoConvergence(format!("best start stopped at B0 = {:.4} mT", p[0])));
    }

    let problem = FitProblem::new(model, &x, &y, p.clone()).with_bounds(bounds).with_weights(&w).square_system();
    let (b0_err, theta_err) = match absolute_covariance(&problem, &p) {
        Some(cov) if cov[(1, 1)].is_finite() && cov[(1, 1)] > 0.0 && cov[(1, 1)].sqrt() < FRAC_PI_2 => {
            (cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt())
        }
        _ => tilt_degenerate_errors(p[0], p[1], (e_minus, e_plus), consts)?,
    };
    Ok(FieldEstimate { b0: p[0], theta: p[1], b0_err, theta_err })
}

/// Near θ = 0 the transitions are even in θ and the linear Jacobian loses the
/// θ column; fall back to the field-only error and a curvature bound on θ.
fn tilt_degenerate_errors(
    b0: f64,
    theta: f64,
    (e_minus, e_plus): (f64, f64),
    consts: &PhysicalConstants,
) -> Result<(f64, f64)> {
    let hb = 1e-4 * b0.max(1.0);
    let f = |b: f64, t: f64| transition_frequencies(b, t, consts);
    let lo = f((b0 - hb).max(0.0), theta)?;
    let hi = f(b0 + hb, theta)?;
    let dm = (hi.f_minus - lo.f_minus) / (2.0 * hb);
    let dp = (hi.f_plus - lo.f_plus) / (2.0 * hb);
    let info = dm * dm / (e_minus * e_minus) + dp * dp / (e_plus * e_plus);
    let b0_err = 1.0 / info.sqrt();

    let ht = 1e-2;
    let c0 = f(b0, theta)?;
    let c1 = f(b0, theta + ht)?;
    let c2 = f(b0, (theta - ht).abs())?;
    let curv_m = ((c1.f_minus - 2.0 * c0.f_minus + c2.f_minus) / (ht * ht)).abs();
    let curv_p = ((c1.f_plus - 2.0 * c0.f_plus + c2.f_plus) / (ht * ht)).abs();
    let bound = |e: f64, c: f64| if c > 0.0 { (2.0 * e / c).sqrt() } else { f64::INFINITY };
    let theta_err = bound(e_minus, curv_m).min(bound(e_plus, curv_p)).min(FRAC_PI_2);
    Ok((b0_err, theta_err))
}

/// g = f_res / (μ_B/h · B₀).
pub fn g_value(f_res: f64, b0: f64, consts: &PhysicalConstants) -> Result<f64> {
    if !(b0 > 0.0 && b0.is_finite()) {
        return domain(format!("g-value needs a positive field, got {b0} mT"));
    }
    if !(f_res > 0.0 && f_res.is_finite()) {
        return domain(format!("resonance frequency must be positive, got {f_res} MHz"));
    }
    Ok(f_res / (consts.mu_b_over_h * b0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    /// Eigenvalues of a Hermitian 3×3 from the trigonometric cubic formula.
    fn cubic_eigenvalues(h: &CMatrix3) -> [f64; 3] {
        let a = |r: usize, c: usize| h[(r, c)];
        let tr = (a(0, 0) + a(1, 1) + a(2, 2)).re;
        let m = h - CMatrix3::identity() * Complex64::new(tr / 3.0, 0.0);
        let p = ((m * m).trace().re / 6.0).sqrt();
        if p == 0.0 {
            return [tr / 3.0; 3];
        }
        let bm = m / Complex64::new(p, 0.0);
        let r = (bm.determinant().re / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let tau = 2.0 * std::f64::consts::PI / 3.0;
        let mut e = [
            tr / 3.0 + 2.0 * p * phi.cos(),
            tr / 3.0 + 2.0 * p * (phi + tau).cos(),
            tr / 3.0 + 2.0 * p * (phi + 2.0 * tau).cos(),
        ];
        e.sort_by(|x, y| x.total_cmp(y));
        e
    }

    #[test]
    fn zero_tilt_is_diagonal() {
        let h = build_hamiltonian(32.59, 0.0, &consts()).unwrap();
        // γB = 28.024 × 32.59 = 913.30216
        let want = [2870.0 + 913.30216, 0.0, 2870.0 - 913.30216];
        for (r, w) in want.iter().enumerate() {
            for c in 0..3 {
                let v = h.matrix[(r, c)];
                if r == c {
                    assert!((v.re - w).abs() < 1e-9 && v.im == 0.0);
                } else {
                    assert_eq!(v.norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_field_is_d_d_zero() {
        let h = build_hamiltonian(0.0, 0.3, &consts()).unwrap();
        assert_eq!(h.matrix[(0, 0)].re, 2870.0);
        assert_eq!(h.matrix[(1, 1)].re, 0.0);
        assert_eq!(h.matrix[(2, 2)].re, 2870.0);
    }

    #[test]
    fn tilted_off_diagonal_structure() {
        let theta = 3.5f64.to_radians();
        let h = build_hamiltonian(32.59, theta, &consts()).unwrap();
        let off = 28.024 * 32.59 * theta.sin() / 2f64.sqrt();
        assert!((h.matrix[(0, 1)].re - off).abs() < 1e-9);
        assert!((h.matrix[(1, 2)].re - off).abs() < 1e-9);
        assert_eq!(h.matrix[(0, 2)].norm(), 0.0);
        assert!((h.matrix - h.matrix.adjoint()).iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn rejects_out_of_domain_field() {
        assert!(build_hamiltonian(-1.0, 0.0, &consts()).is_err());
        assert!(build_hamiltonian(1.0, 2.0, &consts()).is_err());
    }

    #[test]
    fn eigen_of_diagonal_and_identity() {
        let d = CMatrix3::from_diagonal(&nalgebra::Vector3::new(
            Complex64::new(3.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(2.0, 0.0),
        ));
        let e = eigen_hermitian_3(&d).unwrap();
        assert_eq!(e.values, [-1.0, 2.0, 3.0]);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-12);
        let id = eigen_hermitian_3(&CMatrix3::identity()).unwrap();
        assert_eq!(id.values, [1.0, 1.0, 1.0]);
        let gram = id.vectors.adjoint() * id.vectors;
        assert!((gram - CMatrix3::identity()).iter().all(|c| c.norm() < 1e-10));
    }

    #[test]
    fn eigen_matches_cubic_formula() {
        let h = build_hamiltonian(32.59, 3.5f64.to_radians(), &consts()).unwrap();
        let e = eigen_hermitian_3(&h.matrix).unwrap();
        let oracle = cubic_eigenvalues(&h.matrix);
        for (a, b) in e.values.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn eigen_residual_property_over_random_fields() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let b0 = rng.random_range(0.0..100.0);
            let theta = rng.random_range(0.0..FRAC_PI_2);
            let h = build_hamiltonian(b0, theta, &consts()).unwrap();
            let e = eigen_hermitian_3(&h.matrix).unwrap();
            let norm = h.matrix.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for i in 0..3 {
                let v = e.vectors.column(i);
                let r = h.matrix * v - v * Complex64::new(e.values[i], 0.0);
                assert!(r.norm() <= 1e-9 * norm);
            }
            let gram = e.vectors.adjoint() * e.vectors;
            assert!((gram - CMatrix3::identity()).iter().all(|c| c.norm() < 1e-10));
        }
    }

    #[test]
    fn zero_tilt_transitions() {
        let tp = transition_frequencies(32.59, 0.0, &consts()).unwrap();
        assert!((tp.f_minus - 1956.69784).abs() < 1e-9);
        assert!((tp.f_plus - 3783.30216).abs() < 1e-9);
    }

    #[test]
    fn zero_field_is_degenerate() {
        assert!(matches!(
            transition_frequencies(0.0, 0.0, &consts()),
            Err(Error::Degenerate(_)) | Err(Error::AmbiguousLabel(_))
        ));
    }

    #[test]
    fn reference_field_lands_inside_quoted_peak_errors() {
        let tp = transition_frequencies(32.59, 3.5f64.to_radians(), &consts()).unwrap();
        assert!((tp.f_minus - 1960.00).abs() <= 6.78, "{}", tp.f_minus);
        assert!((tp.f_plus - 3783.39).abs() <= 3.39, "{}", tp.f_plus);
    }

    #[test]
    fn invert_reference_pair() {
        let est = invert_field(TransitionPair::new(1960.00, 3783.39).unwrap(), (6.78, 3.39), &consts()).unwrap();
        assert!((est.b0 - 32.59).abs() < 0.05, "{est:?}");
        assert!((est.theta.to_degrees() - 3.5).abs() < 1.0, "{est:?}");
        assert!(est.b0_err > 0.0 && est.theta_err > 0.0);
    }

    #[test]
    fn invert_zero_tilt_round_trip() {
        let tp = transition_frequencies(30.0, 0.0, &consts()).unwrap();
        let est = invert_field(tp, (1.0, 1.0), &consts()).unwrap();
        assert!((est.b0 - 30.0).abs() / 30.0 < 1e-6);
        assert!(est.theta.to_degrees() < 0.05, "{}", est.theta.to_degrees());
        assert!(est.theta_err.is_finite());
    }

    #[test]
    fn tilt_grows_with_sum_excess() {
        let mut last = -1.0;
        for delta in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let tp = TransitionPair::new(1956.7 + delta, 3783.3).unwrap();
            let est = invert_field(tp, (1.0, 1.0), &consts()).unwrap();
            assert!(est.theta > last, "δ = {delta}: {} ≤ {last}", est.theta);
            last = est.theta;
        }
    }

    #[test]
    fn invert_round_trip_grid() {
        let c = consts();
        for b0 in [5.0, 20.0, 45.0, 70.0, 100.0] {
            for deg in [2.0, 7.0, 13.0, 20.0] {
                let tp = transition_frequencies(b0, f64::to_radians(deg), &c).unwrap();
                let est = invert_field(tp, (1.0, 1.0), &c).unwrap();
                assert!((est.b0 - b0).abs() / b0 < 1e-4, "b0 {b0} deg {deg}: {est:?}");
                assert!((est.theta.to_degrees() - deg).abs() / deg < 1e-4, "b0 {b0} deg {deg}: {est:?}");
            }
        }
    }

    #[test]
    fn out_of_model_pair() {
        let tp = TransitionPair::new(100.0, 200.0).unwrap();
        assert!(matches!(invert_field(tp, (1.0, 1.0), &consts()), Err(Error::OutOfModel(_))));
    }

    #[test]
    fn g_values() {
        let c = consts();
        let g = g_value(914.7, 32.59, &c).unwrap();
        assert!((g - 2.0054).abs() < 5e-4, "{g}");
        assert_eq!(g_value(c.mu_b_over_h * 32.59, 32.59, &c).unwrap(), 1.0);
        assert!((g_value(2.0 * c.mu_b_over_h * 20.0, 20.0, &c).unwrap() - 2.0).abs() < 1e-15);
        assert!(g_value(914.7, 0.0, &c).is_err());
    }
}
