//! S = 1 spin operators in the fixed basis {|+1⟩, |0⟩, |−1⟩}.

use nalgebra::Matrix3;
use num_complex::Complex64;

pub type CMatrix3 = Matrix3<Complex64>;

#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperatorsS1 {
    pub sx: CMatrix3,
    pub sy: CMatrix3,
    pub sz: CMatrix3,
}

impl SpinOperatorsS1 {
    pub fn new() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = |v: f64| Complex64::new(v, 0.0);
        let i = |v: f64| Complex64::new(0.0, v);
        let z = Complex64::new(0.0, 0.0);
        #[rustfmt::skip]
        let sx = CMatrix3::new(
            z,    r(s), z,
            r(s), z,    r(s),
            z,    r(s), z,
        );
        #[rustfmt::skip]
        let sy = CMatrix3::new(
            z,     i(-s), z,
            i(s),  z,     i(-s),
            z,     i(s),  z,
        );
        let sz = CMatrix3::from_diagonal(&nalgebra::Vector3::new(r(1.0), z, r(-1.0)));
        Self { sx, sy, sz }
    }
}

impl Default for SpinOperatorsS1 {
    fn default() -> Self {
        Self::new()
    }
}

/// Basis index of |+1⟩, |0⟩ and |−1⟩.
pub const PLUS_ONE: usize = 0;
pub const ZERO: usize = 1;
pub const MINUS_ONE: usize = 2;

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &CMatrix3) -> f64 {
        m.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn operators_are_hermitian() {
        let ops = SpinOperatorsS1::new();
        for m in [&ops.sx, &ops.sy, &ops.sz] {
            assert!(max_abs(&(m - m.adjoint())) < 1e-15);
        }
    }

    #[test]
    fn commutation_relations() {
        let SpinOperatorsS1 { sx, sy, sz } = SpinOperatorsS1::new();
        let i = Complex64::new(0.0, 1.0);
        let comm = |a: &CMatrix3, b: &CMatrix3| a * b - b * a;
        assert!(max_abs(&(comm(&sx, &sy) - sz * i)) < 1e-14);
        assert!(max_abs(&(comm(&sy, &sz) - sx * i)) < 1e-14);
        assert!(max_abs(&(comm(&sz, &sx) - sy * i)) < 1e-14);
    }

    #[test]
    fn total_spin_squared_is_two() {
        let SpinOperatorsS1 { sx, sy, sz } = SpinOperatorsS1::new();
        let s2 = sx * sx + sy * sy + sz * sz;
        assert!(max_abs(&(s2 - CMatrix3::identity() * Complex64::new(2.0, 0.0))) < 1e-14);
    }

    #[test]
    fn sz_diagonal() {
        let sz = SpinOperatorsS1::new().sz;
        assert_eq!(sz[(0, 0)].re, 1.0);
        assert_eq!(sz[(1, 1)].re, 0.0);
        assert_eq!(sz[(2, 2)].re, -1.0);
    }
}
