//! Flat and curved Dirac matrices, the hermitizing matrix, similarity
//! transformations and the spin lift of Lorentz matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cmax_abs, eta, CMat4, ETA_DIAG, C64};
use crate::lorentz::{lorentz_log, LorentzError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliffordError {
    #[error("unknown gamma-matrix representation `{0}`")]
    UnknownRepresentation(String),
    #[error("gamma matrices violate the anticommutation relation: residual {residual:e}")]
    NotClifford { residual: f64 },
    #[error("metric matrix is singular")]
    SingularMetric,
    #[error("no hermitizing matrix: {0}")]
    NoHermitizer(String),
    #[error("similarity matrix is singular")]
    SingularS,
    #[error("spin lift failed verification: residual {residual:e}")]
    LiftVerificationFailed { residual: f64 },
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Dirac,
    Chiral,
    Custom,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Dirac => "dirac",
            Representation::Chiral => "chiral",
            Representation::Custom => "custom",
        })
    }
}

impl FromStr for Representation {
    type Err = CliffordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dirac" => Ok(Representation::Dirac),
            "chiral" | "weyl" => Ok(Representation::Chiral),
            other => Err(CliffordError::UnknownRepresentation(other.to_string())),
        }
    }
}

/// Four constant matrices `γ♮^α` with `{γ♮^α, γ♮^β} = 2η^{αβ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatGammaSet {
    pub rep: Representation,
    pub gamma: [CMat4; 4],
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn pauli() -> [[[C64; 2]; 2]; 3] {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        [[z, one], [one, z]],
        [[z, -i], [i, z]],
        [[one, z], [z, -one]],
    ]
}

/// Block matrix `[[p, q], [r, s]]` of 2×2 blocks.
fn blocks(p: [[C64; 2]; 2], q: [[C64; 2]; 2], r: [[C64; 2]; 2], s: [[C64; 2]; 2]) -> CMat4 {
    let mut m = CMat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            m[(i, j)] = p[i][j];
            m[(i, j + 2)] = q[i][j];
            m[(i + 2, j)] = r[i][j];
            m[(i + 2, j + 2)] = s[i][j];
        }
    }
    m
}

fn neg2(m: [[C64; 2]; 2]) -> [[C64; 2]; 2] {
    [[-m[0][0], -m[0][1]], [-m[1][0], -m[1][1]]]
}

pub fn flat_gammas(rep: Representation) -> Result<FlatGammaSet, CliffordError> {
    let z = [[c(0.0, 0.0); 2]; 2];
    let one = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
    let s = pauli();
    let spatial = |k: usize| blocks(z, s[k], neg2(s[k]), z);
    let g0 = match rep {
        Representation::Dirac => blocks(one, z, z, neg2(one)),
        Representation::Chiral => blocks(z, one, one, z),
        Representation::Custom => {
            return Err(CliffordError::UnknownRepresentation("custom".into()));
        }
    };
    Ok(FlatGammaSet {
        rep,
        gamma: [g0, spatial(0), spatial(1), spatial(2)],
    })
}

impl FlatGammaSet {
    pub fn dirac() -> Self {
        flat_gammas(Representation::Dirac).unwrap()
    }

    pub fn chiral() -> Self {
        flat_gammas(Representation::Chiral).unwrap()
    }

    /// Accepts user matrices after checking the flat anticommutation relation.
    pub fn custom(gamma: [CMat4; 4]) -> Result<Self, CliffordError> {
        let residual = anticommutation_residual_inv(&gamma, &eta());
        if residual > 1e-14 * 16.0 {
            return Err(CliffordError::NotClifford { residual });
        }
        Ok(FlatGammaSet {
            rep: Representation::Custom,
            gamma,
        })
    }

    /// `γ♮_α = η_αβ γ♮^β`.
    pub fn lowered(&self, alpha: usize) -> CMat4 {
        self.gamma[alpha] * c(ETA_DIAG[alpha], 0.0)
    }
}

/// Residual of `{γ^μ, γ^ν} = 2 g^{μν}` with the inverse metric supplied.
pub fn anticommutation_residual_inv(gamma: &[CMat4; 4], g_inv: &Matrix4<f64>) -> f64 {
    let id = CMat4::identity();
    let mut r: f64 = 0.0;
    for mu in 0..4 {
        for nu in mu..4 {
            let ac = gamma[mu] * gamma[nu] + gamma[nu] * gamma[mu] - id * c(2.0 * g_inv[(mu, nu)], 0.0);
            r = r.max(cmax_abs(&ac));
        }
    }
    r
}

/// `max_{μν} ‖γ^μγ^ν + γ^νγ^μ − 2g^{μν}‖_max` for the covariant metric `g`.
pub fn check_anticommutation(gamma: &[CMat4; 4], g: &Matrix4<f64>) -> Result<f64, CliffordError> {
    let inv = g.try_inverse().ok_or(CliffordError::SingularMetric)?;
    Ok(anticommutation_residual_inv(gamma, &inv))
}

/// `γ^μ = a^μ_α γ♮^α`.
pub fn gammas_from_tetrad(a: &Matrix4<f64>, flat: &FlatGammaSet) -> [CMat4; 4] {
    let mut out = [CMat4::zeros(); 4];
    for (mu, g) in out.iter_mut().enumerate() {
        for alpha in 0..4 {
            *g += flat.gamma[alpha] * c(a[(mu, alpha)], 0.0);
        }
    }
    out
}

fn hermitian_basis() -> Vec<CMat4> {
    let mut basis = Vec::with_capacity(16);
    for i in 0..4 {
        let mut e = CMat4::zeros();
        e[(i, i)] = c(1.0, 0.0);
        basis.push(e);
    }
    for i in 0..4 {
        for j in i + 1..4 {
            let mut e = CMat4::zeros();
            e[(i, j)] = c(1.0, 0.0);
            e[(j, i)] = c(1.0, 0.0);
            basis.push(e);
            let mut e = CMat4::zeros();
            e[(i, j)] = c(0.0, 1.0);
            e[(j, i)] = c(0.0, -1.0);
            basis.push(e);
        }
    }
    basis
}

/// Hermitian `A` with every `Aγ^μ` hermitian, normalized so that `Aγ^0` is
/// positive definite and `|det A| = 1`.
pub fn hermitizing_matrix(gamma: &[CMat4; 4], g: &Matrix4<f64>) -> Result<CMat4, CliffordError> {
    let residual = check_anticommutation(gamma, g)?;
    let scale = g.try_inverse().map(|i| crate::linalg::max_abs4(&i)).unwrap_or(1.0).max(1.0);
    if residual > 1e-10 * scale {
        return Err(CliffordError::NotClifford { residual });
    }
    let basis = hermitian_basis();
    let mut sys = DMatrix::<f64>::zeros(128, 16);
    for (k, e) in basis.iter().enumerate() {
        for (mu, gm) in gamma.iter().enumerate() {
            let r = e * gm - gm.adjoint() * e;
            for (idx, v) in r.iter().enumerate() {
                sys[(mu * 32 + idx, k)] = v.re;
                sys[(mu * 32 + 16 + idx, k)] = v.im;
            }
        }
    }
    let svd = sys.svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V");
    let sv = &svd.singular_values;
    let (imin, smin) = sv
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let smax = sv.max();
    if smin > 1e-9 * smax {
        return Err(CliffordError::NoHermitizer(format!(
            "linear system has no null vector (smallest singular value {smin:e})"
        )));
    }
    let mut a = CMat4::zeros();
    for (k, e) in basis.iter().enumerate() {
        a += e * c(vt[(imin, k)], 0.0);
    }
    a = (a + a.adjoint()) * c(0.5, 0.0);

    let b0 = a * gamma[0];
    let b0h = (b0 + b0.adjoint()) * c(0.5, 0.0);
    let ev = b0h.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    if lo < 0.0 && hi > 0.0 {
        return Err(CliffordError::NoHermitizer("A γ^0 is indefinite".into()));
    }
    if hi <= 0.0 {
        a = -a;
    }
    let det = a.determinant().re.abs();
    if !(det > 0.0) {
        return Err(CliffordError::NoHermitizer("A is singular".into()));
    }
    Ok(a * c(det.powf(-0.25), 0.0))
}

/// `γ̃^μ = S⁻¹γ^μS`, `Ã = S†AS`.
pub fn apply_similarity(gamma: &[CMat4; 4], a: &CMat4, s: &CMat4) -> Result<([CMat4; 4], CMat4), CliffordError> {
    let sinv = s.try_inverse().ok_or(CliffordError::SingularS)?;
    let out = [
        sinv * gamma[0] * s,
        sinv * gamma[1] * s,
        sinv * gamma[2] * s,
        sinv * gamma[3] * s,
    ];
    Ok((out, s.adjoint() * a * s))
}

/// A local similarity `S` with its Lorentz image when known.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinTransform {
    pub s: CMat4,
    pub l: Option<Matrix4<f64>>,
}

/// `exp(¼ ω_{αβ} γ♮^α γ♮^β)` with `ω_{αβ} = η_{αγ} ω^γ_β`.
pub fn spin_from_generator(w: &Matrix4<f64>, flat: &FlatGammaSet) -> CMat4 {
    let low = eta() * w;
    let mut gen = CMat4::zeros();
    for alpha in 0..4 {
        for beta in 0..4 {
            if low[(alpha, beta)] != 0.0 {
                gen += flat.gamma[alpha] * flat.gamma[beta] * c(0.25 * low[(alpha, beta)], 0.0);
            }
        }
    }
    gen.exp()
}

/// `Λ(S)^α_β = ¼ η_ββ tr(S⁻¹γ♮^α S γ♮^β)`.
pub fn lorentz_of_spin(s: &CMat4, flat: &FlatGammaSet) -> Result<Matrix4<f64>, CliffordError> {
    let sinv = s.try_inverse().ok_or(CliffordError::SingularS)?;
    let mut l = Matrix4::zeros();
    for alpha in 0..4 {
        let t = sinv * flat.gamma[alpha] * s;
        for beta in 0..4 {
            l[(alpha, beta)] = 0.25 * ETA_DIAG[beta] * (t * flat.gamma[beta]).trace().re;
        }
    }
    Ok(l)
}

/// `max_α ‖S⁻¹γ♮^αS − L^α_β γ♮^β‖_max`.
pub fn lift_residual(s: &CMat4, l: &Matrix4<f64>, flat: &FlatGammaSet) -> Result<f64, CliffordError> {
    let sinv = s.try_inverse().ok_or(CliffordError::SingularS)?;
    let mut r: f64 = 0.0;
    for alpha in 0..4 {
        let mut rhs = CMat4::zeros();
        for beta in 0..4 {
            rhs += flat.gamma[beta] * c(l[(alpha, beta)], 0.0);
        }
        r = r.max(cmax_abs(&(sinv * flat.gamma[alpha] * s - rhs)));
    }
    Ok(r)
}

/// Lift of a proper orthochronous `L` along the exponential path from the
/// identity, so that `S(1) = +1`. Rotations by π are rejected; split the path
/// and use [`lift_path`].
pub fn spin_lift(l: &Matrix4<f64>, flat: &FlatGammaSet) -> Result<SpinTransform, CliffordError> {
    let w = lorentz_log(l)?;
    let s = spin_from_generator(&w, flat);
    let residual = lift_residual(&s, l, flat)?;
    if residual > 1e-10 * crate::linalg::max_abs4(l).max(1.0) {
        return Err(CliffordError::LiftVerificationFailed { residual });
    }
    Ok(SpinTransform { s, l: Some(*l) })
}

/// Lift of the endpoint of a path `L_0 = 1, L_1, ..., L_n`, composing the
/// lifts of the increments `L_k L_{k-1}⁻¹` so that the sign follows the path.
pub fn lift_path(path: &[Matrix4<f64>], flat: &FlatGammaSet) -> Result<SpinTransform, CliffordError> {
    let mut s = CMat4::identity();
    let mut prev = Matrix4::identity();
    for l in path {
        let prev_inv = eta() * prev.transpose() * eta();
        let step = l * prev_inv;
        s = spin_lift(&step, flat)?.s * s;
        prev = *l;
    }
    Ok(SpinTransform { s, l: Some(prev) })
}

/// `M^s = ½(M + M†)`, `M^a = ½(M − M†)`.
pub fn herm_antiherm_parts(m: &CMat4) -> (CMat4, CMat4) {
    let adj = m.adjoint();
    ((m + adj) * c(0.5, 0.0), (m - adj) * c(0.5, 0.0))
}

pub fn antihermitian_part(m: &CMat4) -> CMat4 {
    (m - m.adjoint()) * c(0.5, 0.0)
}
