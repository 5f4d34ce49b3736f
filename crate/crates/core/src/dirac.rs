//! Discrete Dirac Hamiltonian and energy operators on a periodic spatial grid,
//! the gauge-equivalence condition checks, the canonical stress tensor and
//! gauge experiments.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{antihermitian_part, spin_lift, CliffordError, FlatGammaSet};
use crate::linalg::{cmax_abs, eta, CMat4, Point4, C64};
use crate::lorentz::LorentzError;
use crate::metric::{MetricError, MetricField, SpatialMap};
use crate::tetrad::{
    gamma_from_tetrad, inter_chart_l, time_dependence_of_l, GammaPoint, Prescription, TetradError, TetradField,
    TriadRotation,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiracError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("spin connection fails metric compatibility: residual {residual:e}")]
    CompatibilityResidualExceeded { residual: f64 },
    #[error("γ^0 is not invertible at site {site}")]
    NonInvertibleGamma0 { site: usize },
    #[error("Gram matrix is not positive definite at site {site}")]
    GramNotPD { site: usize },
    #[error("operator dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("eigenvalue solver did not converge")]
    EigenFailure,
    #[error("zero-momentum subspace is not invariant: residual {residual:e}")]
    NotInvariant { residual: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Tetrad(#[from] TetradError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "DFW", alias = "dfw")]
    Dfw,
    #[serde(rename = "QRD0", alias = "qrd0")]
    Qrd0,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Dfw => "DFW",
            Variant::Qrd0 => "QRD0",
        })
    }
}

/// Spatial derivative stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Second-order central differences.
    #[default]
    Central,
    /// Fourier (periodic sinc) differentiation; requires even `n`.
    Spectral,
}

/// Periodic box grid at a fixed time slice. With `axes = 1` fields are sampled
/// along `x1` only and spinors are taken constant in `x2`, `x3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub axes: usize,
    pub n: usize,
    /// Box length along each grid axis.
    pub length: f64,
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default)]
    pub x0: f64,
}

impl Grid {
    pub fn new(axes: usize, n: usize, length: f64) -> Result<Self, DiracError> {
        let g = Grid {
            axes,
            n,
            length,
            origin: [0.0; 3],
            x0: 0.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn validate(&self) -> Result<(), DiracError> {
        if self.axes != 1 && self.axes != 3 {
            return Err(DiracError::InvalidGrid(format!("axes must be 1 or 3, got {}", self.axes)));
        }
        if self.n < 4 {
            return Err(DiracError::InvalidGrid(format!("n must be at least 4, got {}", self.n)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(DiracError::InvalidGrid(format!("length must be positive, got {}", self.length)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn sites(&self) -> usize {
        self.n.pow(self.axes as u32)
    }

    pub fn dim(&self) -> usize {
        4 * self.sites()
    }

    /// Cell volume `Δ^axes`.
    pub fn volume_element(&self) -> f64 {
        self.spacing().powi(self.axes as i32)
    }

    fn indices(&self, site: usize) -> [usize; 3] {
        let n = self.n;
        match self.axes {
            1 => [site, 0, 0],
            _ => [site % n, (site / n) % n, site / (n * n)],
        }
    }

    fn site_of(&self, idx: [usize; 3]) -> usize {
        match self.axes {
            1 => idx[0],
            _ => idx[0] + self.n * (idx[1] + self.n * idx[2]),
        }
    }

    pub fn point(&self, site: usize) -> Point4 {
        let idx = self.indices(site);
        let d = self.spacing();
        let mut p = [self.x0, self.origin[0], self.origin[1], self.origin[2]];
        for axis in 0..self.axes {
            p[axis + 1] += idx[axis] as f64 * d;
        }
        p
    }

    pub fn points(&self) -> Vec<Point4> {
        (0..self.sites()).map(|s| self.point(s)).collect()
    }

    /// Site reached from `site` by `offset` steps along grid axis `axis`.
    pub fn neighbor(&self, site: usize, axis: usize, offset: isize) -> usize {
        let mut idx = self.indices(site);
        let n = self.n as isize;
        idx[axis] = (((idx[axis] as isize + offset) % n + n) % n) as usize;
        self.site_of(idx)
    }

    /// Derivative stencil as `(offset, coefficient)` pairs.
    pub fn stencil(&self, scheme: Scheme) -> Result<Vec<(isize, f64)>, DiracError> {
        let d = self.spacing();
        match scheme {
            Scheme::Central => Ok(vec![(1, 0.5 / d), (-1, -0.5 / d)]),
            Scheme::Spectral => {
                if self.n % 2 != 0 {
                    return Err(DiracError::InvalidGrid("spectral scheme needs even n".into()));
                }
                let n = self.n as f64;
                let base = std::f64::consts::PI / self.length;
                Ok((1..self.n)
                    .map(|k| {
                        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
                        let cot = 1.0 / (k as f64 * std::f64::consts::PI / n).tan();
                        (k as isize, base * sign * cot)
                    })
                    .collect())
            }
        }
    }
}

/// Four connection matrices `Γ_μ` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinConnection {
    pub gamma: [CMat4; 4],
    /// `max_{μν} ‖∂_μγ^ν + Γ^ν_{μλ}γ^λ + [Γ_μ, γ^ν]‖_max`.
    pub compatibility_residual: f64,
}

impl SpinConnection {
    pub fn trivial() -> Self {
        SpinConnection {
            gamma: [CMat4::zeros(); 4],
            compatibility_residual: 0.0,
        }
    }
}

fn shifted(x: &Point4, mu: usize, h: f64) -> Point4 {
    let mut y = *x;
    y[mu] += h;
    y
}

fn cr(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// DFW spin connection `Γ_μ = ¼ ω_{αβμ} γ♮^α γ♮^β` with
/// `ω^α_{βμ} = b^α_ν (∂_μ a^ν_β + Γ^ν_{μλ} a^λ_β)`, by central differences.
pub fn dfw_spin_connection(
    field: &TetradField,
    flat: &FlatGammaSet,
    x: &Point4,
    step: f64,
    tol: f64,
) -> Result<SpinConnection, DiracError> {
    let tp = field.at(x)?;
    let chris = field.metric.christoffel(x, Some(step))?;
    let mut da = [Matrix4::zeros(); 4];
    for (mu, d) in da.iter_mut().enumerate() {
        let ap = field.a(&shifted(x, mu, step))?;
        let am = field.a(&shifted(x, mu, -step))?;
        *d = (ap - am) / (2.0 * step);
    }
    let mut gamma = [CMat4::zeros(); 4];
    for mu in 0..4 {
        let mut nabla = da[mu];
        for nu in 0..4 {
            for beta in 0..4 {
                let mut s = 0.0;
                for lambda in 0..4 {
                    s += chris.get(nu, mu, lambda) * tp.a[(lambda, beta)];
                }
                nabla[(nu, beta)] += s;
            }
        }
        let w_up = tp.b * nabla;
        let w_low = eta() * w_up;
        let w = (w_low - w_low.transpose()) * 0.5;
        for alpha in 0..4 {
            for beta in 0..4 {
                if w[(alpha, beta)] != 0.0 {
                    gamma[mu] += flat.gamma[alpha] * flat.gamma[beta] * cr(0.25 * w[(alpha, beta)]);
                }
            }
        }
    }

    // compatibility: ∂_μγ^ν + Γ^ν_{μλ}γ^λ + Γ_μγ^ν − γ^νΓ_μ
    let gam = crate::clifford::gammas_from_tetrad(&tp.a, flat);
    let mut residual: f64 = 0.0;
    for mu in 0..4 {
        let dg = crate::clifford::gammas_from_tetrad(&da[mu], flat);
        for nu in 0..4 {
            let mut r = dg[nu] + gamma[mu] * gam[nu] - gam[nu] * gamma[mu];
            for lambda in 0..4 {
                r += gam[lambda] * cr(chris.get(nu, mu, lambda));
            }
            residual = residual.max(cmax_abs(&r));
        }
    }
    if residual > tol {
        return Err(DiracError::CompatibilityResidualExceeded { residual });
    }
    Ok(SpinConnection {
        gamma,
        compatibility_residual: residual,
    })
}

/// Finite-difference steps used when sampling fields on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Steps {
    /// Step for derivatives of the tetrad and metric in the connection.
    pub connection: f64,
    /// Step for `x0` derivatives of field data.
    pub time: f64,
    /// Tolerance on the connection's metric-compatibility residual.
    pub compatibility_tol: f64,
}

impl Default for Steps {
    fn default() -> Self {
        Steps {
            connection: 1e-4,
            time: 1e-4,
            compatibility_tol: 1e-6,
        }
    }
}

/// Field data needed for assembly at one site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteData {
    pub point: Point4,
    pub gamma: GammaPoint,
    pub connection: SpinConnection,
    pub sqrt_neg_g: f64,
    /// Sum of field-level divergence terms `∂_μ(√−g B^μ)` not covered by the
    /// grid stencil (`μ = 0` and any non-grid spatial axis); QRD0 only.
    pub extra_divergence: CMat4,
}

impl SiteData {
    /// `W^μ = √−g A γ^μ`.
    pub fn w(&self, mu: usize) -> CMat4 {
        self.gamma.b(mu) * cr(self.sqrt_neg_g)
    }
}

/// A gamma field sampled on a grid together with its connection.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOnGrid {
    pub grid: Grid,
    pub variant: Variant,
    pub sites: Vec<SiteData>,
}

fn sqrt_neg_det(g: &Matrix4<f64>) -> f64 {
    (-g.determinant()).max(0.0).sqrt()
}

fn weighted_b(field: &TetradField, flat: &FlatGammaSet, x: &Point4, mu: usize) -> Result<CMat4, DiracError> {
    let gp = gamma_from_tetrad(field, flat, x)?;
    Ok(gp.b(mu) * cr(sqrt_neg_det(&gp.g)))
}

impl FieldOnGrid {
    pub fn build(
        field: &TetradField,
        flat: &FlatGammaSet,
        grid: &Grid,
        variant: Variant,
        steps: &Steps,
    ) -> Result<Self, DiracError> {
        grid.validate()?;
        let mut sites = Vec::with_capacity(grid.sites());
        for x in grid.points() {
            let gamma = gamma_from_tetrad(field, flat, &x)?;
            let sqrt_neg_g = sqrt_neg_det(&gamma.g);
            let (connection, extra_divergence) = match variant {
                Variant::Dfw => (
                    dfw_spin_connection(field, flat, &x, steps.connection, steps.compatibility_tol)?,
                    CMat4::zeros(),
                ),
                Variant::Qrd0 => {
                    let mut div = CMat4::zeros();
                    let mut axes = vec![(0usize, steps.time)];
                    for j in grid.axes + 1..4 {
                        axes.push((j, steps.connection));
                    }
                    for (mu, h) in axes {
                        let wp = weighted_b(field, flat, &shifted(&x, mu, h), mu)?;
                        let wm = weighted_b(field, flat, &shifted(&x, mu, -h), mu)?;
                        div += (wp - wm) * cr(0.5 / h);
                    }
                    (SpinConnection::trivial(), div)
                }
            };
            sites.push(SiteData {
                point: x,
                gamma,
                connection,
                sqrt_neg_g,
                extra_divergence,
            });
        }
        Ok(FieldOnGrid {
            grid: *grid,
            variant,
            sites,
        })
    }

    pub fn max_compatibility_residual(&self) -> f64 {
        self.sites
            .iter()
            .map(|s| s.connection.compatibility_residual)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorTag {
    #[serde(rename = "H_DFW")]
    HDfw,
    #[serde(rename = "H_QRD0")]
    HQrd0,
    E,
}

/// Dense operator on spinor fields with the block-diagonal Gram matrix of
/// the scalar product `(Ψ|Φ) = Σ Ψ† A γ^0 Φ √−g Δ^axes`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    pub tag: OperatorTag,
    pub matrix: DMatrix<C64>,
    /// One 4×4 Gram block per site.
    pub gram: Vec<CMat4>,
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn gram_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (s, b) in self.gram.iter().enumerate() {
            m.view_mut((4 * s, 4 * s), (4, 4)).copy_from(b);
        }
        m
    }

    /// `M X` for the block-diagonal Gram matrix.
    pub fn gram_mul(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        block_mul(&self.gram, x)
    }

    /// `(Ψ|Φ)`.
    pub fn inner(&self, psi: &DVector<C64>, phi: &DVector<C64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (s, b) in self.gram.iter().enumerate() {
            let p = psi.rows(4 * s, 4);
            let q = phi.rows(4 * s, 4);
            acc += (p.adjoint() * b * q)[(0, 0)];
        }
        acc
    }

    /// Conjugation `S⁻¹ O S` by a site-independent similarity, with `M → S†MS`.
    pub fn conjugate(&self, s: &CMat4) -> Result<DiscreteOperator, DiracError> {
        let sinv = s.try_inverse().ok_or(CliffordError::SingularS)?;
        let sites = self.gram.len();
        let big_inv: Vec<CMat4> = vec![sinv; sites];
        let big: Vec<CMat4> = vec![*s; sites];
        let left = block_mul(&big_inv, &self.matrix);
        let matrix = block_mul_right(&left, &big);
        Ok(DiscreteOperator {
            tag: self.tag,
            matrix,
            gram: self.gram.iter().map(|m| s.adjoint() * m * s).collect(),
        })
    }
}

fn block_mul(blocks: &[CMat4], x: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for (s, b) in blocks.iter().enumerate() {
        let rows = b * x.rows(4 * s, 4);
        out.rows_mut(4 * s, 4).copy_from(&rows);
    }
    out
}

fn block_mul_right(x: &DMatrix<C64>, blocks: &[CMat4]) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for (s, b) in blocks.iter().enumerate() {
        let cols = x.columns(4 * s, 4) * b;
        out.columns_mut(4 * s, 4).copy_from(&cols);
    }
    out
}

fn add_block(m: &mut DMatrix<C64>, r: usize, c: usize, b: &CMat4) {
    let mut v = m.view_mut((4 * r, 4 * c), (4, 4));
    v += b;
}

/// Assembles `H = M⁻¹K` where `K = M_site · H_cont` is written with the
/// symmetrized spatial derivative `−(i/2)(W^j ∂_j + ∂_j W^j)`.
pub fn assemble_hamiltonian(field: &FieldOnGrid, mass: f64, scheme: Scheme) -> Result<DiscreteOperator, DiracError> {
    let grid = &field.grid;
    let stencil = grid.stencil(scheme)?;
    let vol = grid.volume_element();
    let dim = grid.dim();
    let mut k = DMatrix::<C64>::zeros(dim, dim);
    let i = C64::new(0.0, 1.0);
    let half_i = C64::new(0.0, 0.5);

    for (s, site) in field.sites.iter().enumerate() {
        // spatial derivative terms along grid axes
        for axis in 0..grid.axes {
            let ws = site.w(axis + 1);
            let mut div = CMat4::zeros();
            for &(off, c) in &stencil {
                let t = grid.neighbor(s, axis, off);
                let wt = field.sites[t].w(axis + 1);
                add_block(&mut k, s, t, &((ws + wt) * (-half_i * c * vol)));
                div += wt * cr(c);
            }
            if field.variant == Variant::Dfw {
                add_block(&mut k, s, s, &(div * (half_i * vol)));
            }
        }
        let a = site.gamma.hermitizer;
        let mut diag = a * cr(mass * site.sqrt_neg_g);
        match field.variant {
            Variant::Dfw => {
                for j in 1..4 {
                    diag -= site.w(j) * site.connection.gamma[j] * i;
                }
                diag -= site.w(0) * site.connection.gamma[0] * i;
            }
            Variant::Qrd0 => {
                diag -= site.extra_divergence * half_i;
            }
        }
        add_block(&mut k, s, s, &(diag * cr(vol)));
    }

    let mut gram = Vec::with_capacity(grid.sites());
    let mut inv = Vec::with_capacity(grid.sites());
    for (s, site) in field.sites.iter().enumerate() {
        if site.gamma.gamma[0].try_inverse().is_none() {
            return Err(DiracError::NonInvertibleGamma0 { site: s });
        }
        let m = site.w(0) * cr(vol);
        let m = (m + m.adjoint()) * cr(0.5);
        let mi = m.try_inverse().ok_or(DiracError::GramNotPD { site: s })?;
        gram.push(m);
        inv.push(mi);
    }
    Ok(DiscreteOperator {
        tag: match field.variant {
            Variant::Dfw => OperatorTag::HDfw,
            Variant::Qrd0 => OperatorTag::HQrd0,
        },
        matrix: block_mul(&inv, &k),
        gram,
    })
}

fn check_gram(gram: &[CMat4]) -> Result<(), DiracError> {
    for (s, m) in gram.iter().enumerate() {
        let herm = cmax_abs(&(m - m.adjoint())) <= 1e-12 * cmax_abs(m);
        if !herm || m.cholesky().is_none() {
            return Err(DiracError::GramNotPD { site: s });
        }
    }
    Ok(())
}

/// `E = ½(H + H‡)` with `H‡ = M⁻¹H†M`.
pub fn energy_operator(h: &DiscreteOperator) -> Result<DiscreteOperator, DiracError> {
    check_gram(&h.gram)?;
    let inv: Vec<CMat4> = h.gram.iter().map(|m| m.try_inverse().unwrap()).collect();
    let hd_m = block_mul_right(&h.matrix.adjoint(), &h.gram);
    let h_dagger = block_mul(&inv, &hd_m);
    let e = (&h.matrix + h_dagger) * cr(0.5);
    Ok(DiscreteOperator {
        tag: OperatorTag::E,
        matrix: e,
        gram: h.gram.clone(),
    })
}

/// `‖M E − (M E)†‖_max / ‖M E‖_max`.
pub fn self_adjointness_residual(op: &DiscreteOperator) -> f64 {
    let me = op.gram_mul(&op.matrix);
    let scale = me.iter().fold(0.0f64, |a, v| a.max(v.norm())).max(f64::MIN_POSITIVE);
    (&me - me.adjoint()).iter().fold(0.0f64, |a, v| a.max(v.norm())) / scale
}

pub const DEFAULT_DIMENSION_CAP: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Eigenvalues sorted by real part, then imaginary part.
    pub values: Vec<C64>,
    pub max_abs_imag: f64,
}

impl Spectrum {
    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }
}

pub fn sort_eigenvalues(values: &mut [C64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Eigenvalues of a dense complex matrix (Hessenberg QR with deflation).
pub fn dense_eigenvalues(m: &DMatrix<C64>) -> Result<Vec<C64>, DiracError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let fm = faer::Mat::<C64>::from_fn(n, n, |i, j| m[(i, j)]);
    let mut v = fm.eigenvalues().map_err(|_| DiracError::EigenFailure)?;
    sort_eigenvalues(&mut v);
    Ok(v)
}

/// Full spectrum of an operator by a dense solve; no hermitian shortcut is
/// taken so imaginary parts of `E` are a genuine diagnostic.
pub fn spectrum(op: &DiscreteOperator, cap: usize) -> Result<Spectrum, DiracError> {
    if op.dim() > cap {
        return Err(DiracError::DimensionCap { dim: op.dim(), cap });
    }
    spectrum_of(&op.matrix)
}

pub fn spectrum_of(m: &DMatrix<C64>) -> Result<Spectrum, DiracError> {
    let values = dense_eigenvalues(m)?;
    let max_abs_imag = values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    Ok(Spectrum { values, max_abs_imag })
}

/// `max_k |λ_k − μ_k|` over sorted spectra.
pub fn spectral_distance(a: &[C64], b: &[C64]) -> Result<f64, DiracError> {
    if a.len() != b.len() {
        return Err(DiracError::ShapeMismatch(format!("spectra of length {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
}

/// Restriction of an operator to spinor fields constant over the grid.
pub fn zero_momentum_block(op: &DiscreteOperator) -> Result<DMatrix<C64>, DiracError> {
    let dim = op.dim();
    let sites = dim / 4;
    let w = cr(1.0 / (sites as f64).sqrt());
    let mut p = DMatrix::<C64>::zeros(dim, 4);
    for s in 0..sites {
        for a in 0..4 {
            p[(4 * s + a, a)] = w;
        }
    }
    let hp = &op.matrix * &p;
    let block = p.adjoint() * &hp;
    let resid = &hp - &p * &block;
    let scale = hp.iter().fold(1.0f64, |a, v| a.max(v.norm()));
    let residual = resid.iter().fold(0.0f64, |a, v| a.max(v.norm())) / scale;
    if residual > 1e-10 {
        return Err(DiracError::NotInvariant { residual });
    }
    Ok(block)
}

/// Eigenpairs of an operator self-adjoint for its Gram matrix, computed
/// through the hermitian matrix `Lᴴ E L⁻ᴴ` with `M = L Lᴴ`. Eigenvectors are
/// normalized in the scalar product. Ascending eigenvalues.
pub fn self_adjoint_eigenpairs(op: &DiscreteOperator) -> Result<Vec<(f64, DVector<C64>)>, DiracError> {
    check_gram(&op.gram)?;
    let mut l_blocks = Vec::with_capacity(op.gram.len());
    let mut l_inv_h = Vec::with_capacity(op.gram.len());
    for (s, m) in op.gram.iter().enumerate() {
        let l = m.cholesky().ok_or(DiracError::GramNotPD { site: s })?.l();
        let li = l.try_inverse().ok_or(DiracError::GramNotPD { site: s })?;
        l_inv_h.push(li.adjoint());
        l_blocks.push(l);
    }
    let lh: Vec<CMat4> = l_blocks.iter().map(|l| l.adjoint()).collect();
    let hat = block_mul_right(&block_mul(&lh, &op.matrix), &l_inv_h);
    let hat = (&hat + hat.adjoint()) * cr(0.5);
    let eig = SymmetricEigen::new(hat);
    let mut pairs: Vec<(f64, DVector<C64>)> = (0..op.dim())
        .map(|k| {
            let phi = eig.eigenvectors.column(k).into_owned();
            let psi = block_mul(&l_inv_h, &DMatrix::from_column_slice(phi.len(), 1, phi.as_slice()));
            (eig.eigenvalues[k], DVector::from_column_slice(psi.as_slice()))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs)
}

/// Residuals of the gauge-equivalence conditions for a similarity field `S`.
/// All norms are max-abs entries, maximized over the sample points.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `‖∂₀S‖` (DFW Hamiltonian condition).
    pub dfw_d0_s: f64,
    /// `‖B⁰(∂₀S)S⁻¹ − [B^μ(D_μS)S⁻¹]^a‖` as printed (QRD0 Hamiltonian condition).
    pub qrd0_lhs_minus_rhs: f64,
    /// `‖[B⁰(∂₀S)S⁻¹]^a − [B^μ(D_μS)S⁻¹]^a‖`.
    pub qrd0_lhs_a_minus_rhs: f64,
    /// `‖[B⁰(∂₀S)S⁻¹]^a‖` (DFW energy condition).
    pub e_dfw: f64,
    /// `‖[B^μ(D_μS)S⁻¹ − B⁰(∂₀S)S⁻¹]^a‖` (QRD0 energy condition).
    pub e_modified: f64,
}

impl ConditionReport {
    /// The Hamiltonian condition relevant to `variant`.
    pub fn hamiltonian(&self, variant: Variant) -> f64 {
        match variant {
            Variant::Dfw => self.dfw_d0_s,
            Variant::Qrd0 => self.qrd0_lhs_minus_rhs,
        }
    }

    /// The energy-operator condition relevant to `variant`.
    pub fn energy(&self, variant: Variant) -> f64 {
        match variant {
            Variant::Dfw => self.e_dfw,
            Variant::Qrd0 => self.e_modified,
        }
    }

    pub fn max_all(&self) -> f64 {
        [
            self.dfw_d0_s,
            self.qrd0_lhs_minus_rhs,
            self.qrd0_lhs_a_minus_rhs,
            self.e_dfw,
            self.e_modified,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Evaluates the equivalence conditions at `points` with `B^μ = Aγ^μ` given
/// per point. `D_μS = ∂_μS + Γ_μS − SΓ_μ` uses `connection` (trivial for QRD0).
pub fn check_h_equivalence_condition(
    s_field: &dyn Fn(&Point4) -> Result<CMat4, DiracError>,
    b: &[[CMat4; 4]],
    connection: &[[CMat4; 4]],
    points: &[Point4],
    step: f64,
) -> Result<ConditionReport, DiracError> {
    if b.len() != points.len() || connection.len() != points.len() {
        return Err(DiracError::ShapeMismatch("field data and points differ in length".into()));
    }
    let mut rep = ConditionReport::default();
    for (k, x) in points.iter().enumerate() {
        let s = s_field(x)?;
        let sinv = s.try_inverse().ok_or(CliffordError::SingularS)?;
        let mut ds = [CMat4::zeros(); 4];
        for (mu, d) in ds.iter_mut().enumerate() {
            let sp = s_field(&shifted(x, mu, step))?;
            let sm = s_field(&shifted(x, mu, -step))?;
            *d = (sp - sm) * cr(0.5 / step);
        }
        let g = &connection[k];
        let lhs = b[k][0] * ds[0] * sinv;
        let mut full = CMat4::zeros();
        for mu in 0..4 {
            let dmu = ds[mu] + g[mu] * s - s * g[mu];
            full += b[k][mu] * dmu * sinv;
        }
        let rhs = antihermitian_part(&full);
        let lhs_a = antihermitian_part(&lhs);
        rep.dfw_d0_s = rep.dfw_d0_s.max(cmax_abs(&ds[0]));
        rep.qrd0_lhs_minus_rhs = rep.qrd0_lhs_minus_rhs.max(cmax_abs(&(lhs - rhs)));
        rep.qrd0_lhs_a_minus_rhs = rep.qrd0_lhs_a_minus_rhs.max(cmax_abs(&(lhs_a - rhs)));
        rep.e_dfw = rep.e_dfw.max(cmax_abs(&lhs_a));
        rep.e_modified = rep.e_modified.max(cmax_abs(&antihermitian_part(&(full - lhs))));
    }
    Ok(rep)
}

/// Canonical stress tensor and Lagrangian on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StressEnergy {
    /// `t^μ_ν` per site.
    pub t: Vec<Matrix4<f64>>,
    /// Lagrangian per site.
    pub lagrangian: Vec<f64>,
    /// `Σ t^0_0 √−g Δ^axes`.
    pub field_energy: f64,
}

fn spinor_at(psi: &DVector<C64>, s: usize) -> nalgebra::Vector4<C64> {
    nalgebra::Vector4::new(psi[4 * s], psi[4 * s + 1], psi[4 * s + 2], psi[4 * s + 3])
}

/// `t^μ_ν = (i/2)[Ψ†Aγ^μ ∂_νΨ − (∂_νΨ)†Aγ^μ Ψ] − δ^μ_ν L` with
/// `L = (i/2)[Ψ†Aγ^μ D_μΨ − (D_μΨ)†Aγ^μ Ψ + 2im Ψ†AΨ]`. Spatial derivatives
/// use the grid stencil of `scheme`; `dpsi_dt` supplies `∂₀Ψ`.
pub fn stress_energy(
    field: &FieldOnGrid,
    psi: &DVector<C64>,
    dpsi_dt: &DVector<C64>,
    mass: f64,
    scheme: Scheme,
) -> Result<StressEnergy, DiracError> {
    let grid = &field.grid;
    if psi.len() != grid.dim() || dpsi_dt.len() != grid.dim() {
        return Err(DiracError::ShapeMismatch("spinor length does not match the grid".into()));
    }
    let stencil = grid.stencil(scheme)?;
    let vol = grid.volume_element();
    let half_i = C64::new(0.0, 0.5);
    let mut t_all = Vec::with_capacity(grid.sites());
    let mut lag = Vec::with_capacity(grid.sites());
    let mut energy = 0.0;
    for (s, site) in field.sites.iter().enumerate() {
        let p = spinor_at(psi, s);
        let mut d = [nalgebra::Vector4::<C64>::zeros(); 4];
        d[0] = spinor_at(dpsi_dt, s);
        for axis in 0..grid.axes {
            for &(off, c) in &stencil {
                d[axis + 1] += spinor_at(psi, grid.neighbor(s, axis, off)) * cr(c);
            }
        }
        let b: [CMat4; 4] = [site.gamma.b(0), site.gamma.b(1), site.gamma.b(2), site.gamma.b(3)];
        let a = site.gamma.hermitizer;
        let mut l = C64::new(0.0, 0.0);
        for mu in 0..4 {
            let dm = d[mu] + site.connection.gamma[mu] * p;
            l += (p.adjoint() * b[mu] * dm)[(0, 0)] - (dm.adjoint() * b[mu] * p)[(0, 0)];
        }
        l += C64::new(0.0, 2.0 * mass) * (p.adjoint() * a * p)[(0, 0)];
        let l = (half_i * l).re;
        let mut t = Matrix4::zeros();
        for mu in 0..4 {
            for nu in 0..4 {
                let v = (p.adjoint() * b[mu] * d[nu])[(0, 0)] - (d[nu].adjoint() * b[mu] * p)[(0, 0)];
                t[(mu, nu)] = (half_i * v).re - if mu == nu { l } else { 0.0 };
            }
        }
        energy += t[(0, 0)] * site.sqrt_neg_g * vol;
        t_all.push(t);
        lag.push(l);
    }
    Ok(StressEnergy {
        t: t_all,
        lagrangian: lag,
        field_energy: energy,
    })
}

/// One of the two gauges compared by a gauge experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub map: Option<SpatialMap>,
    pub prescription: Prescription,
    pub rotation: Option<TriadRotation>,
}

impl ChartSpec {
    pub fn tetrad(&self, metric: &MetricField) -> TetradField {
        TetradField {
            metric: metric.clone(),
            prescription: self.prescription,
            map: self.map.clone(),
            rotation: self.rotation,
            step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    #[default]
    Full,
    ZeroMomentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentTolerances {
    /// Bound on `max ‖∂₀L‖` for a time-independent transform.
    pub dl_dt: f64,
    /// Bound on the Hamiltonian and energy condition residuals.
    pub condition: f64,
    /// Bound on the spectral distance between the two energy operators.
    pub spectral: f64,
}

impl Default for ExperimentTolerances {
    fn default() -> Self {
        ExperimentTolerances {
            dl_dt: 1e-8,
            condition: 1e-8,
            spectral: 1e-7,
        }
    }
}

impl ExperimentTolerances {
    pub fn scaled(&self, factor: f64) -> Self {
        ExperimentTolerances {
            dl_dt: self.dl_dt * factor,
            condition: self.condition * factor,
            spectral: self.spectral * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub metric: MetricField,
    pub charts: [ChartSpec; 2],
    pub flat: FlatGammaSet,
    pub variant: Variant,
    pub grid: Grid,
    pub mass: f64,
    pub scheme: Scheme,
    pub sector: Sector,
    pub steps: Steps,
    pub tolerances: ExperimentTolerances,
    pub dimension_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Equivalent,
    Inequivalent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub variant: Variant,
    pub sector: Sector,
    pub dimension: usize,
    pub max_dl_dt: f64,
    pub max_lorentz_residual: f64,
    /// `max_X ‖S(X) − S(X_first)‖` over grid sites.
    pub lift_spatial_variation: f64,
    pub conditions: ConditionReport,
    pub compatibility_residual: f64,
    /// Sorted spectra as `[re, im]` pairs, one per gauge.
    pub h_spectra: [Vec<[f64; 2]>; 2],
    pub e_spectra: [Vec<[f64; 2]>; 2],
    pub h_distance: f64,
    pub e_distance: f64,
    pub max_abs_imag_e: f64,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
}

fn pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

/// Builds both gauges on the grid in the base chart, assembles `H` and `E`
/// for each, evaluates the conditions on the connecting lift
/// `S = S(L)`, `L = b₁a₂`, and compares spectra.
pub fn gauge_experiment(exp: &Experiment) -> Result<ExperimentReport, DiracError> {
    exp.grid.validate()?;
    if exp.grid.dim() > exp.dimension_cap {
        return Err(DiracError::DimensionCap {
            dim: exp.grid.dim(),
            cap: exp.dimension_cap,
        });
    }
    let t1 = exp.charts[0].tetrad(&exp.metric);
    let t2 = exp.charts[1].tetrad(&exp.metric);
    let points = exp.grid.points();

    let td = time_dependence_of_l(&t1, &t2, &points, exp.steps.time)?;
    let flat = &exp.flat;
    let s_field = |x: &Point4| -> Result<CMat4, DiracError> {
        let l = inter_chart_l(&t1, &t2, x)?;
        Ok(spin_lift(&l.l, flat)?.s)
    };
    let s_first = s_field(&points[0])?;
    let mut lift_var: f64 = 0.0;
    for x in &points {
        lift_var = lift_var.max(cmax_abs(&(s_field(x)? - s_first)));
    }

    let f1 = FieldOnGrid::build(&t1, flat, &exp.grid, exp.variant, &exp.steps)?;
    let f2 = FieldOnGrid::build(&t2, flat, &exp.grid, exp.variant, &exp.steps)?;
    let b: Vec<[CMat4; 4]> = f1
        .sites
        .iter()
        .map(|s| [s.gamma.b(0), s.gamma.b(1), s.gamma.b(2), s.gamma.b(3)])
        .collect();
    // The QRD0-form conditions are stated for the trivial connection.
    let conn = vec![[CMat4::zeros(); 4]; points.len()];
    let conditions = check_h_equivalence_condition(&s_field, &b, &conn, &points, exp.steps.time)?;

    let mut h_spec = Vec::with_capacity(2);
    let mut e_spec = Vec::with_capacity(2);
    let mut max_imag: f64 = 0.0;
    for f in [&f1, &f2] {
        let h = assemble_hamiltonian(f, exp.mass, exp.scheme)?;
        let e = energy_operator(&h)?;
        let (hs, es) = match exp.sector {
            Sector::Full => (spectrum(&h, exp.dimension_cap)?, spectrum(&e, exp.dimension_cap)?),
            Sector::ZeroMomentum => (
                spectrum_of(&zero_momentum_block(&h)?)?,
                spectrum_of(&zero_momentum_block(&e)?)?,
            ),
        };
        max_imag = max_imag.max(es.max_abs_imag);
        h_spec.push(hs.values);
        e_spec.push(es.values);
    }
    let h_distance = spectral_distance(&h_spec[0], &h_spec[1])?;
    let e_distance = spectral_distance(&e_spec[0], &e_spec[1])?;

    let tol = &exp.tolerances;
    let mut reasons = Vec::new();
    if td.max_norm_dl_dt > tol.dl_dt {
        reasons.push(format!("L depends on x0: max |dL/dx0| = {:e}", td.max_norm_dl_dt));
    }
    let hc = conditions.hamiltonian(exp.variant);
    if hc > tol.condition {
        reasons.push(format!("{} Hamiltonian condition residual {:e}", exp.variant, hc));
    }
    let ec = conditions.energy(exp.variant);
    if ec > tol.condition {
        reasons.push(format!("{} energy condition residual {:e}", exp.variant, ec));
    }
    if e_distance > tol.spectral {
        reasons.push(format!("energy spectra differ by {:e}", e_distance));
    }
    let verdict = if reasons.is_empty() {
        Verdict::Equivalent
    } else {
        Verdict::Inequivalent
    };

    Ok(ExperimentReport {
        variant: exp.variant,
        sector: exp.sector,
        dimension: exp.grid.dim(),
        max_dl_dt: td.max_norm_dl_dt,
        max_lorentz_residual: td.max_lorentz_residual,
        lift_spatial_variation: lift_var,
        conditions,
        compatibility_residual: f1.max_compatibility_residual().max(f2.max_compatibility_residual()),
        h_spectra: [pairs(&h_spec[0]), pairs(&h_spec[1])],
        e_spectra: [pairs(&e_spec[0]), pairs(&e_spec[1])],
        h_distance,
        e_distance,
        max_abs_imag_e: max_imag,
        verdict,
        reasons,
    })
}
