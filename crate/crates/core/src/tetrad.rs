//! Tetrad prescriptions, inter-chart Lorentz transforms and the curved gamma
//! matrices built from a tetrad.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{check_anticommutation, gammas_from_tetrad, hermitizing_matrix, CliffordError, FlatGammaSet};
use crate::linalg::{eta, max_abs4, rotation4, spatial_block, CMat4, Point4, C64};
use crate::lorentz::{eta_cholesky, is_lorentz, lower_triangular_inverse, sym_sqrt3, LorentzError, LorentzMatrix};
use crate::metric::{admissibility, pushforward_at_base, MetricError, MetricField, SpatialMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TetradError {
    #[error("metric is not diagonal: largest off-diagonal entry {max_offdiag:e}")]
    NotDiagonal { max_offdiag: f64 },
    #[error("metric not admissible: g00 = {g00}, spatial eigenvalues {spatial_eigenvalues:?}")]
    NotAdmissible { g00: f64, spatial_eigenvalues: [f64; 3] },
    #[error("tetrad is not orthonormal: residual {residual:e}")]
    NotOrthonormal { residual: f64 },
    #[error("singular Jacobian in gamma transport")]
    SingularJacobian,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prescription {
    Diagonal,
    Cholesky,
    TimeGauge,
}

impl Prescription {
    pub const ALL: [Prescription; 3] = [Prescription::Diagonal, Prescription::Cholesky, Prescription::TimeGauge];
}

fn require_admissible(g: &Matrix4<f64>) -> Result<(), TetradError> {
    let rep = admissibility(g);
    if rep.ok {
        Ok(())
    } else {
        Err(TetradError::NotAdmissible {
            g00: rep.g00,
            spatial_eigenvalues: rep.spatial_eigenvalues,
        })
    }
}

/// `‖aᵀGa − η‖_max`.
pub fn orthonormality_residual(a: &Matrix4<f64>, g: &Matrix4<f64>) -> f64 {
    max_abs4(&(a.transpose() * g * a - eta()))
}

/// `a = diag(1/√|d_μ|)`.
pub fn diagonal_tetrad(g: &Matrix4<f64>) -> Result<Matrix4<f64>, TetradError> {
    let mut off: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                off = off.max(g[(i, j)].abs());
            }
        }
    }
    if off > 1e-12 * max_abs4(g).max(1.0) {
        return Err(TetradError::NotDiagonal { max_offdiag: off });
    }
    require_admissible(g)?;
    Ok(Matrix4::from_fn(|i, j| if i == j { 1.0 / g[(i, i)].abs().sqrt() } else { 0.0 }))
}

/// `a = C⁻¹` with `C` the η-Cholesky factor of `G`.
pub fn cholesky_tetrad(g: &Matrix4<f64>) -> Result<Matrix4<f64>, TetradError> {
    require_admissible(g)?;
    let ch = eta_cholesky(g)?;
    Ok(lower_triangular_inverse(&ch.c))
}

/// `a^0_p = 0` and a symmetric spatial block `(√h)⁻¹`, `h = (−g_jk)`.
pub fn time_gauge_tetrad(g: &Matrix4<f64>) -> Result<Matrix4<f64>, TetradError> {
    require_admissible(g)?;
    let h: Matrix3<f64> = -g.fixed_view::<3, 3>(1, 1).into_owned();
    let root = sym_sqrt3(&h)?;
    let spatial = root.try_inverse().ok_or(LorentzError::Singular { det: root.determinant() })?;
    let hinv = h.try_inverse().ok_or(LorentzError::Singular { det: h.determinant() })?;
    let g0 = Vector3::new(g[(0, 1)], g[(0, 2)], g[(0, 3)]);
    let v = hinv * g0;
    let a00 = 1.0 / (g[(0, 0)] + g0.dot(&v)).sqrt();
    let mut a = spatial_block(&((spatial + spatial.transpose()) * 0.5));
    a[(0, 0)] = a00;
    for j in 0..3 {
        a[(j + 1, 0)] = a00 * v[j];
    }
    Ok(a)
}

pub fn tetrad_for(prescription: Prescription, g: &Matrix4<f64>) -> Result<Matrix4<f64>, TetradError> {
    match prescription {
        Prescription::Diagonal => diagonal_tetrad(g),
        Prescription::Cholesky => cholesky_tetrad(g),
        Prescription::TimeGauge => time_gauge_tetrad(g),
    }
}

/// Tetrad rotating about a spatial axis at a constant rate in `x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriadRotation {
    pub axis: usize,
    pub rate: f64,
}

/// A tetrad prescription applied in some chart and expressed in the base chart.
///
/// Without a map the prescription is applied to the base-chart metric. With a
/// map `x' = φ(x)` it is applied to the pushed-forward metric in the primed
/// chart and transported back with `P`. An optional triad rotation multiplies
/// the result on the right by a rotation of angle `rate * x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TetradField {
    pub metric: MetricField,
    pub prescription: Prescription,
    pub map: Option<SpatialMap>,
    pub rotation: Option<TriadRotation>,
    /// Finite-difference step for the map Jacobian.
    pub step: Option<f64>,
}

/// A tetrad evaluated at a base-chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct TetradPoint {
    /// Base-chart components `a^μ_α`.
    pub a: Matrix4<f64>,
    pub b: Matrix4<f64>,
    /// Base-chart metric.
    pub g: Matrix4<f64>,
    /// Point and metric in the chart where the prescription was applied.
    pub chart_point: Point4,
    pub chart_metric: Matrix4<f64>,
    /// Tetrad matrix in that chart (before transport to the base chart).
    pub chart_a: Matrix4<f64>,
    pub p: Matrix4<f64>,
}

impl TetradField {
    pub fn new(metric: MetricField, prescription: Prescription) -> Self {
        TetradField {
            metric,
            prescription,
            map: None,
            rotation: None,
            step: None,
        }
    }

    pub fn with_map(mut self, map: SpatialMap) -> Self {
        self.map = Some(map);
        self
    }

    pub fn with_rotation(mut self, rotation: TriadRotation) -> Self {
        self.rotation = Some(rotation);
        self
    }

    pub fn at(&self, x: &Point4) -> Result<TetradPoint, TetradError> {
        let g = self.metric.matrix(x)?;
        let (chart_point, chart_metric, p) = match &self.map {
            Some(map) => {
                let (xp, gp, jac) = pushforward_at_base(&self.metric, map, x, self.step)?;
                (xp, gp, jac.p)
            }
            None => (*x, g, Matrix4::identity()),
        };
        let chart_a = tetrad_for(self.prescription, &chart_metric)?;
        let mut a = p * chart_a;
        if let Some(rot) = self.rotation {
            a *= rotation4(rot.axis, rot.rate * x[0]);
        }
        let b = a
            .try_inverse()
            .ok_or(LorentzError::Singular { det: a.determinant() })?;
        let residual = orthonormality_residual(&a, &g);
        if residual > 1e-10 * max_abs4(&g).max(1.0) {
            return Err(TetradError::NotOrthonormal { residual });
        }
        Ok(TetradPoint {
            a,
            b,
            g,
            chart_point,
            chart_metric,
            chart_a,
            p,
        })
    }

    pub fn a(&self, x: &Point4) -> Result<Matrix4<f64>, TetradError> {
        Ok(self.at(x)?.a)
    }
}

/// `L = b₁ a₂` with both tetrads expressed in the base chart; for a second
/// tetrad built in a primed chart this is `b P a′`.
pub fn inter_chart_l(t1: &TetradField, t2: &TetradField, x: &Point4) -> Result<LorentzMatrix, TetradError> {
    let p1 = t1.at(x)?;
    let p2 = t2.at(x)?;
    Ok(LorentzMatrix::new(p1.b * p2.a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDependence {
    pub max_norm_dl_dt: f64,
    /// `‖∂₀L‖_max` at each sample.
    pub per_point: Vec<f64>,
    /// Largest deviation of `L` from a Lorentz matrix over the samples.
    pub max_lorentz_residual: f64,
}

/// `∂₀L` by central differences in `x0` at each sample.
pub fn time_dependence_of_l(
    t1: &TetradField,
    t2: &TetradField,
    samples: &[Point4],
    time_step: f64,
) -> Result<TimeDependence, TetradError> {
    let mut per_point = Vec::with_capacity(samples.len());
    let mut max_res: f64 = 0.0;
    for x in samples {
        let mut xp = *x;
        let mut xm = *x;
        xp[0] += time_step;
        xm[0] -= time_step;
        let l0 = inter_chart_l(t1, t2, x)?;
        max_res = max_res.max(is_lorentz(&l0.l, 0.0).residual);
        let lp = inter_chart_l(t1, t2, &xp)?.l;
        let lm = inter_chart_l(t1, t2, &xm)?.l;
        per_point.push(max_abs4(&((lp - lm) / (2.0 * time_step))));
    }
    Ok(TimeDependence {
        max_norm_dl_dt: per_point.iter().cloned().fold(0.0, f64::max),
        per_point,
        max_lorentz_residual: max_res,
    })
}

/// Gamma matrices and hermitizer at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPoint {
    pub gamma: [CMat4; 4],
    /// Hermitizing matrix `A`.
    pub hermitizer: CMat4,
    pub g: Matrix4<f64>,
    pub tetrad: TetradPoint,
}

impl GammaPoint {
    /// `B^μ = A γ^μ`.
    pub fn b(&self, mu: usize) -> CMat4 {
        self.hermitizer * self.gamma[mu]
    }
}

/// `γ^μ(X) = a^μ_α(X) γ♮^α` with its hermitizer.
pub fn gamma_from_tetrad(field: &TetradField, flat: &FlatGammaSet, x: &Point4) -> Result<GammaPoint, TetradError> {
    let tp = field.at(x)?;
    let gamma = gammas_from_tetrad(&tp.a, flat);
    let residual = check_anticommutation(&gamma, &tp.g)?;
    let inv_scale = tp.g.try_inverse().map(|i| max_abs4(&i)).unwrap_or(1.0).max(1.0);
    if residual > 1e-10 * inv_scale {
        return Err(CliffordError::NotClifford { residual }.into());
    }
    let hermitizer = hermitizing_matrix(&gamma, &tp.g)?;
    Ok(GammaPoint {
        gamma,
        hermitizer,
        g: tp.g,
        tetrad: tp,
    })
}

/// `ζ^μ = (∂y^μ/∂x^ν) γ^ν` under the chart change `y = (x0, φ(x))`.
pub fn transport_gamma(
    gamma: &[CMat4; 4],
    map: &SpatialMap,
    x: &Point4,
    step: Option<f64>,
) -> Result<[CMat4; 4], TetradError> {
    let xs = [x[1], x[2], x[3]];
    let f = map.jacobian(&xs, step)?;
    if f.determinant().abs() < 1e-300 {
        return Err(TetradError::SingularJacobian);
    }
    let dy = spatial_block(&f);
    let mut out = [CMat4::zeros(); 4];
    for (mu, z) in out.iter_mut().enumerate() {
        for nu in 0..4 {
            if dy[(mu, nu)] != 0.0 {
                *z += gamma[nu] * C64::new(dy[(mu, nu)], 0.0);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::check_anticommutation;
    use crate::exprlang::Params;
    use crate::linalg::cmax_abs;
    use crate::metric::{catalog_metric, CatalogArgs, Domain};
    use nalgebra::Vector4;

    fn diag4(a: f64, b: f64, c: f64, d: f64) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(a, b, c, d))
    }

    fn rotating(omega: f64) -> MetricField {
        let args = CatalogArgs {
            params: [("omega".to_string(), omega)].into_iter().collect(),
            ..Default::default()
        };
        catalog_metric("rotating_frame_minkowski", &args).unwrap()
    }

    fn flrw() -> MetricField {
        let args = CatalogArgs {
            exprs: [("a".to_string(), "1 + 0.1*x0".to_string())].into_iter().collect(),
            ..Default::default()
        };
        catalog_metric("flrw_flat", &args).unwrap()
    }

    fn rotation_map(theta: f64, shift: [f64; 3]) -> SpatialMap {
        let (s, c) = theta.sin_cos();
        SpatialMap::new(
            &[
                format!("{c:?}*x1 - {s:?}*x2 + {:?}", shift[0]),
                format!("{s:?}*x1 + {c:?}*x2 + {:?}", shift[1]),
                format!("x3 + {:?}", shift[2]),
            ],
            Params::new(),
            Domain::AllSpace,
        )
        .unwrap()
    }

    #[test]
    fn diagonal_examples() {
        assert_eq!(diagonal_tetrad(&eta()).unwrap(), Matrix4::identity());
        let a = diagonal_tetrad(&diag4(4.0, -9.0, -9.0, -9.0)).unwrap();
        assert!(max_abs4(&(a - diag4(0.5, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0))) < 1e-15);
        let mut g = eta();
        g[(0, 1)] = 0.1;
        g[(1, 0)] = 0.1;
        assert!(matches!(diagonal_tetrad(&g), Err(TetradError::NotDiagonal { .. })));
        assert!(matches!(
            diagonal_tetrad(&diag4(-1.0, -1.0, -1.0, -1.0)),
            Err(TetradError::NotAdmissible { .. })
        ));
    }

    #[test]
    fn cholesky_examples() {
        let g = diag4(4.0, -9.0, -1.0, -2.0);
        assert!(max_abs4(&(cholesky_tetrad(&g).unwrap() - diagonal_tetrad(&g).unwrap())) < 1e-15);
        assert_eq!(cholesky_tetrad(&eta()).unwrap(), Matrix4::identity());

        let g = rotating(0.2).matrix(&[0.0, 1.0, 0.5, 0.0]).unwrap();
        let a = cholesky_tetrad(&g).unwrap();
        assert!(orthonormality_residual(&a, &g) < 1e-12);
        assert!(a[(1, 0)].abs() > 1e-3 && a[(2, 0)].abs() > 1e-3);
        for i in 0..4 {
            assert!(a[(i, i)] > 0.0);
            for j in i + 1..4 {
                assert_eq!(a[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn time_gauge_examples() {
        let g = diag4(4.0, -9.0, -9.0, -9.0);
        assert!(max_abs4(&(time_gauge_tetrad(&g).unwrap() - diagonal_tetrad(&g).unwrap())) < 1e-15);
        assert!(max_abs4(&(time_gauge_tetrad(&eta()).unwrap() - Matrix4::identity())) < 1e-15);

        let mut g = rotating(0.2).matrix(&[0.0, 1.0, 0.5, 0.0]).unwrap();
        g[(1, 2)] = 0.2;
        g[(2, 1)] = 0.2;
        let a = time_gauge_tetrad(&g).unwrap();
        assert!(orthonormality_residual(&a, &g) < 1e-12);
        for p in 1..4 {
            assert_eq!(a[(0, p)], 0.0);
        }
        let s = a.fixed_view::<3, 3>(1, 1);
        assert!((s - s.transpose()).amax() < 1e-15);
    }

    #[test]
    fn inter_chart_same_tetrad_is_identity() {
        let t = TetradField::new(rotating(0.2), Prescription::Cholesky);
        let l = inter_chart_l(&t, &t, &[0.3, 1.0, 0.5, -0.2]).unwrap();
        assert!(max_abs4(&(l.l - Matrix4::identity())) < 1e-14);
    }

    #[test]
    fn inter_chart_rotation_isotropic() {
        let theta = 0.7;
        let t1 = TetradField::new(flrw(), Prescription::Diagonal);
        let t2 = TetradField::new(flrw(), Prescription::Diagonal).with_map(rotation_map(theta, [0.5, -1.0, 2.0]));
        let x = [1.3, 0.4, -0.8, 0.6];
        let l = inter_chart_l(&t1, &t2, &x).unwrap();
        let want = rotation4(3, -theta);
        assert!(max_abs4(&(l.l - want)) < 1e-9);
        assert!(is_lorentz(&l.l, 1e-10).ok);

        let td = time_dependence_of_l(&t1, &t2, &[x, [0.2, 1.0, 1.0, 1.0]], 1e-3).unwrap();
        assert!(td.max_norm_dl_dt < 1e-9);
    }

    fn counterexample() -> (MetricField, SpatialMap) {
        let m = MetricField::diagonal("aniso", &["1", "-1", "-1", "-(1 + 0.3*sin(x0))"], Params::new()).unwrap();
        let (s, c) = (30f64).to_radians().sin_cos();
        let map = SpatialMap::new(
            &["x1".to_string(), format!("{c:?}*x2 - {s:?}*x3"), format!("{s:?}*x2 + {c:?}*x3")],
            Params::new(),
            Domain::AllSpace,
        )
        .unwrap();
        (m, map)
    }

    #[test]
    fn anisotropic_l_matches_column_formula() {
        let (m, map) = counterexample();
        let t1 = TetradField::new(m.clone(), Prescription::Cholesky);
        let t2 = TetradField::new(m.clone(), Prescription::Cholesky).with_map(map.clone());
        let x = [0.9, 0.3, -0.4, 0.7];
        let l = inter_chart_l(&t1, &t2, &x).unwrap().l;

        // independent column formula L^p_3 = Σ_{k≤p} C^p_k P^k_3 / √(−P^j_3 P^k_3 g_jk)
        let g = m.matrix(&x).unwrap();
        let c = eta_cholesky(&g).unwrap().c;
        let p = map.jacobian_p(&[x[1], x[2], x[3]], None).unwrap().p;
        let mut norm = 0.0;
        for j in 1..4 {
            for k in 1..4 {
                norm -= p[(j, 3)] * p[(k, 3)] * g[(j, k)];
            }
        }
        for row in 0..4 {
            let mut s = 0.0;
            for k in 0..=row {
                s += c[(row, k)] * p[(k, 3)];
            }
            assert!((l[(row, 3)] - s / norm.sqrt()).abs() < 1e-10);
        }
        assert!((l[(0, 0)] - 1.0).abs() < 1e-11);
        for q in 1..4 {
            assert!(l[(0, q)].abs() < 1e-11 && l[(q, 0)].abs() < 1e-11);
        }

        let td = time_dependence_of_l(&t1, &t2, &[x], 1e-4).unwrap();
        assert!(td.max_norm_dl_dt > 0.01);
    }

    #[test]
    fn gamma_examples() {
        let d = FlatGammaSet::dirac();
        let mink = catalog_metric("minkowski", &CatalogArgs::default()).unwrap();
        let gp = gamma_from_tetrad(&TetradField::new(mink, Prescription::Diagonal), &d, &[0.0; 4]).unwrap();
        assert_eq!(gp.gamma, d.gamma);

        let m = MetricField::diagonal("d", &["4", "-9", "-9", "-9"], Params::new()).unwrap();
        let gp = gamma_from_tetrad(&TetradField::new(m, Prescription::Diagonal), &d, &[0.0; 4]).unwrap();
        assert!(cmax_abs(&(gp.gamma[0] - d.gamma[0] * C64::new(0.5, 0.0))) < 1e-15);
        assert!(cmax_abs(&(gp.gamma[2] - d.gamma[2] * C64::new(1.0 / 3.0, 0.0))) < 1e-15);
        assert!(cmax_abs(&(gp.hermitizer - d.gamma[0])) < 1e-12);

        let x = [0.0, 1.0, 0.5, 0.0];
        let gp = gamma_from_tetrad(&TetradField::new(rotating(0.2), Prescription::Cholesky), &d, &x).unwrap();
        assert!(check_anticommutation(&gp.gamma, &gp.g).unwrap() < 1e-11);
    }

    #[test]
    fn transport_examples() {
        let d = FlatGammaSet::dirac();
        let x = [0.0, 1.0, 2.0, 3.0];
        let z = transport_gamma(&d.gamma, &SpatialMap::identity(), &x, None).unwrap();
        for mu in 0..4 {
            assert!(cmax_abs(&(z[mu] - d.gamma[mu])) < 1e-9);
        }
        let scale = SpatialMap::new(&["2*x1", "2*x2", "2*x3"], Params::new(), Domain::AllSpace).unwrap();
        let z = transport_gamma(&d.gamma, &scale, &x, None).unwrap();
        assert!(cmax_abs(&(z[0] - d.gamma[0])) < 1e-12);
        assert!(cmax_abs(&(z[1] - d.gamma[1] * C64::new(2.0, 0.0))) < 1e-9);

        let m = flrw();
        let rot = rotation_map(0.4, [0.0; 3]);
        let gp = gamma_from_tetrad(&TetradField::new(m.clone(), Prescription::Diagonal), &d, &x).unwrap();
        let z = transport_gamma(&gp.gamma, &rot, &x, None).unwrap();
        let (_, gprime, _) = pushforward_at_base(&m, &rot, &x, None).unwrap();
        assert!(check_anticommutation(&z, &gprime).unwrap() < 1e-10);
    }

    #[test]
    fn triad_rotation_changes_l_in_time() {
        let mink = catalog_metric("minkowski", &CatalogArgs::default()).unwrap();
        let t1 = TetradField::new(mink.clone(), Prescription::Diagonal);
        let t2 = TetradField::new(mink, Prescription::Diagonal).with_rotation(TriadRotation { axis: 3, rate: 0.3 });
        let l = inter_chart_l(&t1, &t2, &[2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(max_abs4(&(l.l - rotation4(3, 0.6))) < 1e-14);
        let td = time_dependence_of_l(&t1, &t2, &[[1.0, 0.0, 0.0, 0.0]], 1e-4).unwrap();
        assert!((td.max_norm_dl_dt - 0.3 * 0.3f64.cos()).abs() < 1e-6);
    }
}
