//! Small dense complex algebra shared by every module.

use nalgebra::{Matrix3, Matrix6, Vector3};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Vec3 = Vector3<C64>;
pub type Mat3 = Matrix3<C64>;
pub type Mat6 = Matrix6<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Spectral (operator 2-) norm.
pub fn op_norm3(m: &Mat3) -> f64 {
    m.singular_values().max()
}

pub fn op_norm6(m: &Mat6) -> f64 {
    m.singular_values().max()
}

pub fn max_abs3(m: &Mat3) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Assemble a 6×6 matrix from four 3×3 blocks.
pub fn blocks(a: &Mat3, b: &Mat3, cc: &Mat3, d: &Mat3) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(a);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(b);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(cc);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(d);
    m
}

/// ⟨a, b⟩ = Σ a_i conj(b_i).
#[inline]
pub fn inner(a: &Vec3, b: &Vec3) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}
