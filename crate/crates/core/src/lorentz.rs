//! η-Cholesky factorization and Lorentz-group numerics.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{eta, max_abs3, max_abs4, ETA_DIAG};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LorentzError {
    #[error("metric not admissible: pivot {index} is {value:e}")]
    NotAdmissible { index: usize, value: f64 },
    #[error("b is not an η-square root of G: residual {residual:e}")]
    NotASquareRoot { residual: f64 },
    #[error("matrix is not a proper orthochronous Lorentz matrix (residual {residual:e}, det {det}, L00 {l00})")]
    NotProperOrthochronous { residual: f64, det: f64, l00: f64 },
    #[error("logarithm branch failure: det(L + 1) = {det:e} (rotation by π)")]
    BranchFailure { det: f64 },
    #[error("matrix is not positive definite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("singular matrix: det = {det:e}")]
    Singular { det: f64 },
    #[error("iteration did not converge in {0}")]
    NoConvergence(&'static str),
}

/// `C` lower triangular with positive diagonal and `CᵀηC = G`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaCholesky {
    pub c: Matrix4<f64>,
    pub g: Matrix4<f64>,
}

impl EtaCholesky {
    /// `‖CᵀηC − G‖_max`.
    pub fn residual(&self) -> f64 {
        max_abs4(&(self.c.transpose() * eta() * self.c - self.g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzCheck {
    pub ok: bool,
    pub proper: bool,
    pub orthochronous: bool,
    /// `‖LᵀηL − η‖_max`.
    pub residual: f64,
}

/// A Lorentz matrix together with its component flags.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzMatrix {
    pub l: Matrix4<f64>,
    pub is_proper: bool,
    pub is_orthochronous: bool,
}

impl LorentzMatrix {
    pub fn new(l: Matrix4<f64>) -> Self {
        LorentzMatrix {
            is_proper: l.determinant() > 0.0,
            is_orthochronous: l[(0, 0)] >= 1.0 - 1e-12,
            l,
        }
    }
}

/// Direct elimination from the bottom-right corner. Each diagonal pivot
/// `η_μ (g_μμ − Σ_{α>μ} η_α (C^α_μ)²)` must be positive.
pub fn eta_cholesky(g: &Matrix4<f64>) -> Result<EtaCholesky, LorentzError> {
    let scale = max_abs4(g).max(f64::MIN_POSITIVE);
    if g[(0, 0)] <= 0.0 {
        return Err(LorentzError::NotAdmissible {
            index: 0,
            value: g[(0, 0)],
        });
    }
    let mut c = Matrix4::zeros();
    for mu in (0..4).rev() {
        let mut s = g[(mu, mu)];
        for alpha in mu + 1..4 {
            s -= ETA_DIAG[alpha] * c[(alpha, mu)] * c[(alpha, mu)];
        }
        let pivot = ETA_DIAG[mu] * s;
        if pivot <= 1e-14 * scale {
            return Err(LorentzError::NotAdmissible { index: mu, value: pivot });
        }
        let d = pivot.sqrt();
        c[(mu, mu)] = d;
        for nu in 0..mu {
            let mut s = g[(mu, nu)];
            for alpha in mu + 1..4 {
                s -= ETA_DIAG[alpha] * c[(alpha, mu)] * c[(alpha, nu)];
            }
            c[(mu, nu)] = ETA_DIAG[mu] * s / d;
        }
    }
    Ok(EtaCholesky { c, g: *g })
}

pub fn is_lorentz(l: &Matrix4<f64>, tol: f64) -> LorentzCheck {
    let residual = max_abs4(&(l.transpose() * eta() * l - eta()));
    LorentzCheck {
        ok: residual <= tol,
        proper: l.determinant() > 0.0,
        orthochronous: l[(0, 0)] >= 1.0 - tol.max(1e-12),
        residual,
    }
}

/// `L = b C⁻¹` for an η-square root `b` of `G`.
pub fn square_root_coset(b: &Matrix4<f64>, g: &Matrix4<f64>) -> Result<LorentzMatrix, LorentzError> {
    let scale = max_abs4(g).max(1.0);
    let residual = max_abs4(&(b.transpose() * eta() * b - g));
    if residual > 1e-10 * scale {
        return Err(LorentzError::NotASquareRoot { residual });
    }
    let ch = eta_cholesky(g)?;
    let cinv = lower_triangular_inverse(&ch.c);
    Ok(LorentzMatrix::new(b * cinv))
}

/// Inverse of a lower-triangular matrix with nonzero diagonal.
pub fn lower_triangular_inverse(c: &Matrix4<f64>) -> Matrix4<f64> {
    let mut inv = Matrix4::zeros();
    for j in 0..4 {
        inv[(j, j)] = 1.0 / c[(j, j)];
        for i in j + 1..4 {
            let mut s = 0.0;
            for k in j..i {
                s += c[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / c[(i, i)];
        }
    }
    inv
}

/// Element of so(1,3): `ω^i_j = −ε_ijk θ_k` for the rotation part and
/// `ω^0_i = ω^i_0 = φ_i` for the boost part.
pub fn so13_generator(rotation: [f64; 3], boost: [f64; 3]) -> Matrix4<f64> {
    let [t1, t2, t3] = rotation;
    let mut w = Matrix4::zeros();
    w[(1, 2)] = -t3;
    w[(2, 1)] = t3;
    w[(2, 3)] = -t1;
    w[(3, 2)] = t1;
    w[(3, 1)] = -t2;
    w[(1, 3)] = t2;
    for i in 0..3 {
        w[(0, i + 1)] = boost[i];
        w[(i + 1, 0)] = boost[i];
    }
    w
}

/// Projects a real 4×4 matrix onto so(1,3) (`ηω` antisymmetric).
pub fn project_so13(w: &Matrix4<f64>) -> Matrix4<f64> {
    let low = eta() * w;
    eta() * (low - low.transpose()) * 0.5
}

pub fn lorentz_exp(w: &Matrix4<f64>) -> Matrix4<f64> {
    w.exp()
}

fn denman_beavers(x: &Matrix4<f64>) -> Result<Matrix4<f64>, LorentzError> {
    let mut y = *x;
    let mut z = Matrix4::identity();
    for _ in 0..100 {
        let yi = y.try_inverse().ok_or(LorentzError::Singular { det: y.determinant() })?;
        let zi = z.try_inverse().ok_or(LorentzError::Singular { det: z.determinant() })?;
        let ny = (y + zi) * 0.5;
        let nz = (z + yi) * 0.5;
        let delta = max_abs4(&(ny - y));
        y = ny;
        z = nz;
        if delta <= 1e-15 * max_abs4(&y).max(1.0) {
            return Ok(y);
        }
    }
    Err(LorentzError::NoConvergence("matrix square root"))
}

/// Principal logarithm of a proper orthochronous Lorentz matrix, by inverse
/// scaling and squaring.
pub fn lorentz_log(l: &Matrix4<f64>) -> Result<Matrix4<f64>, LorentzError> {
    let check = is_lorentz(l, 1e-8 * max_abs4(l).max(1.0));
    if !(check.ok && check.proper && check.orthochronous) {
        return Err(LorentzError::NotProperOrthochronous {
            residual: check.residual,
            det: l.determinant(),
            l00: l[(0, 0)],
        });
    }
    let id = Matrix4::identity();
    let det = (l + id).determinant();
    if det <= 1e-10 * (1.0 + max_abs4(l)).powi(2) {
        return Err(LorentzError::BranchFailure { det });
    }
    let mut x = *l;
    let mut k = 0;
    while max_abs4(&(x - id)) > 0.05 {
        x = denman_beavers(&x)?;
        k += 1;
        if k > 60 {
            return Err(LorentzError::NoConvergence("inverse scaling"));
        }
    }
    // log X = 2 atanh((X − 1)(X + 1)⁻¹)
    let t = (x - id) * (x + id).try_inverse().ok_or(LorentzError::Singular { det: 0.0 })?;
    let t2 = t * t;
    let mut term = t;
    let mut sum = t;
    for j in 1..40 {
        term *= t2;
        sum += term / (2 * j + 1) as f64;
        if max_abs4(&term) < 1e-20 {
            break;
        }
    }
    let w = sum * 2.0 * 2f64.powi(k);
    Ok(project_so13(&w))
}

pub fn sym_sqrt3(h: &Matrix3<f64>) -> Result<Matrix3<f64>, LorentzError> {
    let hs = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(hs);
    let min = eig.eigenvalues.min();
    if min <= 1e-14 * max_abs3(&hs) || !min.is_finite() {
        return Err(LorentzError::NotPositiveDefinite { min_eigenvalue: min });
    }
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let r = eig.eigenvectors * d * eig.eigenvectors.transpose();
    Ok((r + r.transpose()) * 0.5)
}

/// Right polar decomposition `Q = U R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polar3 {
    pub u: Matrix3<f64>,
    pub r: Matrix3<f64>,
}

pub fn polar_decompose3(q: &Matrix3<f64>) -> Result<Polar3, LorentzError> {
    let det = q.determinant();
    if det.abs() <= 1e-14 * max_abs3(q).powi(3) || !det.is_finite() {
        return Err(LorentzError::Singular { det });
    }
    let u = sym_sqrt3(&(q * q.transpose()))?;
    let uinv = u.try_inverse().ok_or(LorentzError::Singular { det })?;
    Ok(Polar3 { u, r: uinv * q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{boost4, rotation4};
    use nalgebra::Vector4;

    fn diag4(a: f64, b: f64, c: f64, d: f64) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(a, b, c, d))
    }

    fn sample_g() -> Matrix4<f64> {
        let mut g = eta();
        let noise = [
            [0.10, 0.05, -0.03, 0.02],
            [0.05, -0.20, 0.04, 0.01],
            [-0.03, 0.04, 0.15, -0.06],
            [0.02, 0.01, -0.06, 0.07],
        ];
        for i in 0..4 {
            for j in 0..4 {
                g[(i, j)] += noise[i][j];
            }
        }
        g
    }

    #[test]
    fn cholesky_examples() {
        let ch = eta_cholesky(&eta()).unwrap();
        assert_eq!(ch.c, Matrix4::identity());
        let ch = eta_cholesky(&diag4(4.0, -9.0, -9.0, -9.0)).unwrap();
        assert_eq!(ch.c, diag4(2.0, 3.0, 3.0, 3.0));
        let g = sample_g();
        let ch = eta_cholesky(&g).unwrap();
        assert!(ch.residual() < 1e-12);
        for i in 0..4 {
            assert!(ch.c[(i, i)] > 0.0);
            for j in i + 1..4 {
                assert_eq!(ch.c[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn cholesky_rejects_inadmissible() {
        assert!(matches!(
            eta_cholesky(&diag4(-1.0, -1.0, -1.0, -1.0)),
            Err(LorentzError::NotAdmissible { index: 0, .. })
        ));
        assert!(matches!(
            eta_cholesky(&diag4(1.0, -1.0, 1.0, -1.0)),
            Err(LorentzError::NotAdmissible { index: 2, .. })
        ));
    }

    #[test]
    fn coset_examples() {
        let g = sample_g();
        let c = eta_cholesky(&g).unwrap().c;
        let l = square_root_coset(&c, &g).unwrap();
        assert!(max_abs4(&(l.l - Matrix4::identity())) < 1e-12);

        let boost = boost4(1, 0.3);
        let l = square_root_coset(&(boost * c), &g).unwrap();
        assert!(max_abs4(&(l.l - boost)) < 1e-12);
        assert!(l.is_proper && l.is_orthochronous);

        let parity = diag4(1.0, -1.0, 1.0, 1.0);
        let l = square_root_coset(&(parity * c), &g).unwrap();
        assert!(!l.is_proper);

        assert!(matches!(
            square_root_coset(&Matrix4::identity(), &g),
            Err(LorentzError::NotASquareRoot { .. })
        ));
    }

    #[test]
    fn is_lorentz_examples() {
        let r = is_lorentz(&Matrix4::identity(), 1e-12);
        assert!(r.ok && r.proper && r.orthochronous);
        let r = is_lorentz(&rotation4(2, 1.1), 1e-12);
        assert!(r.ok && r.proper && r.orthochronous);
        let r = is_lorentz(&diag4(-1.0, 1.0, 1.0, 1.0), 1e-12);
        assert!(r.ok && !r.orthochronous && !r.proper);
        assert!(!is_lorentz(&diag4(2.0, 1.0, 1.0, 1.0), 1e-12).ok);
    }

    #[test]
    fn log_examples() {
        assert_eq!(lorentz_log(&Matrix4::identity()).unwrap(), Matrix4::zeros());

        let w = lorentz_log(&rotation4(3, 0.5)).unwrap();
        let mut want = Matrix4::zeros();
        want[(1, 2)] = -0.5;
        want[(2, 1)] = 0.5;
        assert!(max_abs4(&(w - want)) < 1e-12);

        let w = lorentz_log(&boost4(1, 0.3)).unwrap();
        let mut want = Matrix4::zeros();
        want[(0, 1)] = 0.3;
        want[(1, 0)] = 0.3;
        assert!(max_abs4(&(w - want)) < 1e-12);

        let gen = so13_generator([0.4, -1.2, 2.0], [0.5, 0.1, -0.8]);
        let l = lorentz_exp(&gen);
        let w = lorentz_log(&l).unwrap();
        assert!(max_abs4(&(lorentz_exp(&w) - l)) < 1e-10);
        assert!(max_abs4(&(w - gen)) < 1e-9);
    }

    #[test]
    fn log_branch_and_domain_errors() {
        assert!(matches!(
            lorentz_log(&rotation4(1, std::f64::consts::PI)),
            Err(LorentzError::BranchFailure { .. })
        ));
        assert!(matches!(
            lorentz_log(&diag4(-1.0, 1.0, 1.0, 1.0)),
            Err(LorentzError::NotProperOrthochronous { .. })
        ));
    }

    #[test]
    fn sym_sqrt_examples() {
        assert_eq!(sym_sqrt3(&Matrix3::identity()).unwrap(), Matrix3::identity());
        let r = sym_sqrt3(&Matrix3::from_diagonal(&nalgebra::Vector3::new(4.0, 9.0, 16.0))).unwrap();
        assert!(max_abs3(&(r - Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0, 3.0, 4.0)))) < 1e-14);
        let m = Matrix3::new(1.0, 0.3, -0.2, 0.1, 2.0, 0.5, 0.4, -0.7, 1.5);
        let h = m.transpose() * m;
        let r = sym_sqrt3(&h).unwrap();
        assert!(max_abs3(&(r * r - h)) < 1e-12);
        assert!(matches!(
            sym_sqrt3(&Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, -1.0, 1.0))),
            Err(LorentzError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn polar_examples() {
        let rot = rotation4(1, 0.7).fixed_view::<3, 3>(1, 1).into_owned();
        let p = polar_decompose3(&rot).unwrap();
        assert!(max_abs3(&(p.u - Matrix3::identity())) < 1e-12);
        assert!(max_abs3(&(p.r - rot)) < 1e-12);

        let p = polar_decompose3(&(Matrix3::identity() * 2.0)).unwrap();
        assert!(max_abs3(&(p.u - Matrix3::identity() * 2.0)) < 1e-14);

        let u = Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0, 3.0, 1.0));
        let r0 = rotation4(3, 0.4).fixed_view::<3, 3>(1, 1).into_owned();
        let p = polar_decompose3(&(u * r0)).unwrap();
        assert!(max_abs3(&(p.u - u)) < 1e-10);
        assert!(max_abs3(&(p.r - r0)) < 1e-10);

        assert!(matches!(polar_decompose3(&Matrix3::zeros()), Err(LorentzError::Singular { .. })));
    }

    #[test]
    fn lower_triangular_inverse_matches() {
        let c = eta_cholesky(&sample_g()).unwrap().c;
        let inv = lower_triangular_inverse(&c);
        assert!(max_abs4(&(inv * c - Matrix4::identity())) < 1e-14);
    }
}
