//! Shared matrix aliases and small helpers.

use nalgebra::{Matrix3, Matrix4};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat4 = Matrix4<Complex64>;

/// A spacetime point `(x0, x1, x2, x3)`.
pub type Point4 = [f64; 4];

/// Minkowski metric `diag(1, -1, -1, -1)`.
pub fn eta() -> Matrix4<f64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, -1.0, -1.0, -1.0))
}

pub const ETA_DIAG: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

pub fn max_abs4(m: &Matrix4<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn max_abs3(m: &Matrix3<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn cmax_abs(m: &CMat4) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

pub fn complexify(m: &Matrix4<f64>) -> CMat4 {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Block matrix `diag(1, r)`.
pub fn spatial_block(r: &Matrix3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(1, 1).copy_from(r);
    m
}

/// Rotation by `angle` about coordinate axis `axis` (1, 2 or 3), acting on the
/// spatial components of a 4-vector.
pub fn rotation4(axis: usize, angle: f64) -> Matrix4<f64> {
    let (i, j) = match axis {
        1 => (2, 3),
        2 => (3, 1),
        3 => (1, 2),
        _ => panic!("rotation axis must be 1, 2 or 3"),
    };
    let (s, c) = angle.sin_cos();
    let mut m = Matrix4::identity();
    m[(i, i)] = c;
    m[(j, j)] = c;
    m[(i, j)] = -s;
    m[(j, i)] = s;
    m
}

/// Pure boost of rapidity `rapidity` along spatial axis `axis`.
pub fn boost4(axis: usize, rapidity: f64) -> Matrix4<f64> {
    assert!((1..=3).contains(&axis), "boost axis must be 1, 2 or 3");
    let mut m = Matrix4::identity();
    let (ch, sh) = (rapidity.cosh(), rapidity.sinh());
    m[(0, 0)] = ch;
    m[(axis, axis)] = ch;
    m[(0, axis)] = sh;
    m[(axis, 0)] = sh;
    m
}
