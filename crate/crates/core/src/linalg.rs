//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Ratio of extreme eigenvalue magnitudes of a Hermitian matrix; `inf` when
/// the smallest one vanishes.
pub fn hermitian_condition(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &e in eig.eigenvalues.iter() {
        lo = lo.min(e.abs());
        hi = hi.max(e.abs());
    }
    if !(hi.is_finite()) {
        return f64::INFINITY;
    }
    if lo == 0.0 {
        return f64::INFINITY;
    }
    hi / lo
}

/// Condition number of a row-major `k×k` Hermitian block.
pub fn hermitian_condition_slice(data: &[C64], k: usize) -> f64 {
    hermitian_condition(&CMat::from_row_slice(k, k, data))
}

/// Angle between two complex vectors in degrees, `acos(|⟨a,b⟩| / (‖a‖‖b‖))`.
pub fn angle_deg(a: &CVec, b: &CVec) -> f64 {
    let c = a.dotc(b).norm() / (a.norm() * b.norm());
    c.min(1.0).acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_of_diagonal() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![C64::new(4.0, 0.0), C64::new(0.5, 0.0)]));
        assert!((hermitian_condition(&m) - 8.0).abs() < 1e-12);
        let s = CMat::from_element(2, 2, C64::new(1.0, 0.0));
        assert!(hermitian_condition(&s) > 1e15);
    }

    #[test]
    fn angle_ignores_common_phase() {
        let a = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let b = a.map(|z| z * C64::from_polar(2.0, 0.7));
        assert!(angle_deg(&a, &b) < 1e-5);
    }
}
