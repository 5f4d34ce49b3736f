//! Metric fields in a chart, admissibility, Christoffel symbols, purely
//! spatial coordinate changes and the Cauchy-Green classification of the
//! changes that preserve a space-isotropic diagonal metric.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang::{default_step, EvalError, Expr, Params, SyntaxError};
use crate::linalg::{max_abs4, spatial_block, Point4};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("singular metric: det = {det:e}")]
    SingularMetric { det: f64 },
    #[error("chart not admissible at {point:?}: g00 = {g00}, spatial eigenvalues {spatial_eigenvalues:?}")]
    NotAdmissible {
        point: Point4,
        g00: f64,
        spatial_eigenvalues: [f64; 3],
    },
    #[error("unknown catalog metric `{0}`")]
    UnknownCatalog(String),
    #[error("catalog metric `{metric}` requires argument `{arg}`")]
    MissingArgument { metric: String, arg: String },
    #[error("spatial map component {0} depends on x0")]
    TimeDependentMap(usize),
    #[error("singular Jacobian: det F = {det:e}")]
    SingularJacobian { det: f64 },
    #[error("point {0:?} lies outside the map's declared domain")]
    OutsideDomain([f64; 3]),
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("could not invert spatial map at {0:?}")]
    InversionFailed([f64; 3]),
}

/// Storage order of the ten independent metric components.
pub const COMPONENT_INDEX: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// A metric field `g_{μν}(X)` with signature `(+,-,-,-)`, symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub name: String,
    components: [Expr; 10],
    params: Params,
}

/// The metric and derived quantities at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    pub g: Matrix4<f64>,
    pub inverse: Matrix4<f64>,
    pub det: f64,
    /// `sqrt(-det g)`.
    pub sqrt_neg_det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub ok: bool,
    pub g00: f64,
    /// Ascending eigenvalues of the spatial block `(g_jk)`.
    pub spatial_eigenvalues: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub ok: bool,
    pub f_values: Vec<f64>,
    pub h_values: Vec<f64>,
}

/// `Γ^λ_{μν}` indexed as `[λ][μ][ν]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffel(pub [[[f64; 4]; 4]; 4]);

impl Christoffel {
    pub fn get(&self, lambda: usize, mu: usize, nu: usize) -> f64 {
        self.0[lambda][mu][nu]
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .flatten()
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

impl MetricField {
    /// Builds a metric from the ten upper-triangle components in
    /// [`COMPONENT_INDEX`] order.
    pub fn from_components<S: AsRef<str>>(
        name: &str,
        sources: &[S; 10],
        params: Params,
    ) -> Result<Self, MetricError> {
        let parsed: Vec<Expr> = sources
            .iter()
            .map(|s| Expr::parse(s.as_ref()))
            .collect::<Result<_, _>>()?;
        let components: [Expr; 10] = parsed.try_into().expect("ten components");
        Ok(MetricField {
            name: name.to_string(),
            components,
            params,
        })
    }

    /// Builds a diagonal metric `diag(d0, d1, d2, d3)`.
    pub fn diagonal<S: AsRef<str>>(name: &str, diag: &[S; 4], params: Params) -> Result<Self, MetricError> {
        let mut src: [String; 10] = Default::default();
        for (k, (i, j)) in COMPONENT_INDEX.iter().enumerate() {
            src[k] = if i == j { diag[*i].as_ref().to_string() } else { "0".to_string() };
        }
        Self::from_components(name, &src, params)
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn component(&self, mu: usize, nu: usize) -> &Expr {
        let (a, b) = if mu <= nu { (mu, nu) } else { (nu, mu) };
        let k = COMPONENT_INDEX.iter().position(|&p| p == (a, b)).unwrap();
        &self.components[k]
    }

    pub fn components(&self) -> &[Expr; 10] {
        &self.components
    }

    /// Returns true when no component depends on `x0`.
    pub fn is_static(&self) -> bool {
        self.components.iter().all(|e| !e.uses_coord(0))
    }

    pub fn matrix(&self, x: &Point4) -> Result<Matrix4<f64>, MetricError> {
        let mut g = Matrix4::zeros();
        for (k, &(i, j)) in COMPONENT_INDEX.iter().enumerate() {
            let v = self.components[k].eval(x, &self.params)?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        Ok(g)
    }

    pub fn metric_at(&self, x: &Point4) -> Result<MetricPoint, MetricError> {
        let g = self.matrix(x)?;
        metric_point(g)
    }

    /// `∂_ρ g_{μν}` for ρ = 0..3 by central differences.
    pub fn derivatives(&self, x: &Point4, step: Option<f64>) -> Result<[Matrix4<f64>; 4], MetricError> {
        let mut d = [Matrix4::zeros(); 4];
        for (k, &(i, j)) in COMPONENT_INDEX.iter().enumerate() {
            let grad = match step {
                Some(h) => self.components[k].eval_grad(x, &self.params, h)?,
                None => self.components[k].eval_grad_default(x, &self.params)?,
            };
            for rho in 0..4 {
                d[rho][(i, j)] = grad[rho];
                d[rho][(j, i)] = grad[rho];
            }
        }
        Ok(d)
    }

    pub fn check_admissible(&self, x: &Point4) -> Result<AdmissibilityReport, MetricError> {
        let g = self.metric_at(x)?.g;
        Ok(admissibility(&g))
    }

    /// Checks the admissibility report and turns a failure into an error.
    pub fn require_admissible(&self, x: &Point4) -> Result<MetricPoint, MetricError> {
        let mp = self.metric_at(x)?;
        let rep = admissibility(&mp.g);
        if !rep.ok {
            return Err(MetricError::NotAdmissible {
                point: *x,
                g00: rep.g00,
                spatial_eigenvalues: rep.spatial_eigenvalues,
            });
        }
        Ok(mp)
    }

    pub fn is_space_isotropic_diagonal(&self, samples: &[Point4]) -> Result<IsotropyReport, MetricError> {
        let mut ok = true;
        let mut f_values = Vec::with_capacity(samples.len());
        let mut h_values = Vec::with_capacity(samples.len());
        for x in samples {
            let g = self.matrix(x)?;
            f_values.push(g[(0, 0)]);
            h_values.push(-g[(1, 1)]);
            ok &= is_isotropic_diagonal_matrix(&g);
        }
        Ok(IsotropyReport { ok, f_values, h_values })
    }

    /// Christoffel symbols of the second kind by central differences.
    pub fn christoffel(&self, x: &Point4, step: Option<f64>) -> Result<Christoffel, MetricError> {
        let mp = self.metric_at(x)?;
        let dg = self.derivatives(x, step)?;
        Ok(christoffel_from(&mp.inverse, &dg))
    }
}

/// `Γ^λ_{μν} = ½ g^{λρ}(∂_μ g_{ρν} + ∂_ν g_{ρμ} − ∂_ρ g_{μν})`.
pub fn christoffel_from(inverse: &Matrix4<f64>, dg: &[Matrix4<f64>; 4]) -> Christoffel {
    let mut out = [[[0.0; 4]; 4]; 4];
    for lambda in 0..4 {
        for mu in 0..4 {
            for nu in mu..4 {
                let mut s = 0.0;
                for rho in 0..4 {
                    s += inverse[(lambda, rho)]
                        * (dg[mu][(rho, nu)] + dg[nu][(rho, mu)] - dg[rho][(mu, nu)]);
                }
                out[lambda][mu][nu] = 0.5 * s;
                out[lambda][nu][mu] = 0.5 * s;
            }
        }
    }
    Christoffel(out)
}

pub fn metric_point(g: Matrix4<f64>) -> Result<MetricPoint, MetricError> {
    let det = g.determinant();
    let scale = max_abs4(&g).powi(4).max(f64::MIN_POSITIVE);
    if det.abs() < 1e-14 * scale {
        return Err(MetricError::SingularMetric { det });
    }
    let inverse = g.try_inverse().ok_or(MetricError::SingularMetric { det })?;
    let inverse = 0.5 * (inverse + inverse.transpose());
    Ok(MetricPoint {
        g,
        inverse,
        det,
        sqrt_neg_det: (-det).max(0.0).sqrt(),
    })
}

pub fn admissibility(g: &Matrix4<f64>) -> AdmissibilityReport {
    let spatial: Matrix3<f64> = g.fixed_view::<3, 3>(1, 1).into_owned();
    let mut ev: Vec<f64> = SymmetricEigen::new(spatial).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let spatial_eigenvalues = [ev[0], ev[1], ev[2]];
    AdmissibilityReport {
        ok: g[(0, 0)] > 0.0 && spatial_eigenvalues.iter().all(|&e| e < -1e-12),
        g00: g[(0, 0)],
        spatial_eigenvalues,
    }
}

pub fn is_isotropic_diagonal_matrix(g: &Matrix4<f64>) -> bool {
    for i in 0..4 {
        for j in 0..4 {
            if i != j && g[(i, j)].abs() > 1e-12 {
                return false;
            }
        }
    }
    let (g11, g22, g33) = (g[(1, 1)], g[(2, 2)], g[(3, 3)]);
    let scale = g11.abs().max(g22.abs()).max(g33.abs());
    g[(0, 0)] > 0.0
        && g11 < 0.0
        && (g11 - g22).abs() <= 1e-12 * scale
        && (g11 - g33).abs() <= 1e-12 * scale
}

/// Description of a built-in metric.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    /// Numeric parameters.
    pub params: &'static [&'static str],
    /// Expression-valued arguments (functions of the coordinates).
    pub exprs: &'static [&'static str],
    pub coordinates: &'static str,
    pub admissible_domain: &'static str,
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "minkowski",
        params: &[],
        exprs: &[],
        coordinates: "Cartesian (t, x, y, z)",
        admissible_domain: "everywhere",
    },
    CatalogEntry {
        name: "flrw_flat",
        params: &[],
        exprs: &["a"],
        coordinates: "comoving Cartesian (t, x, y, z); g = diag(1, -a^2, -a^2, -a^2)",
        admissible_domain: "wherever a(x0) != 0",
    },
    CatalogEntry {
        name: "schwarzschild_isotropic",
        params: &["m"],
        exprs: &[],
        coordinates: "isotropic Cartesian (t, x, y, z), r = |x|",
        admissible_domain: "r > m/2",
    },
    CatalogEntry {
        name: "schwarzschild_standard",
        params: &["m"],
        exprs: &[],
        coordinates: "Schwarzschild (t, r, theta, phi)",
        admissible_domain: "r > 2m and sin(theta) != 0",
    },
    CatalogEntry {
        name: "rotating_frame_minkowski",
        params: &["omega"],
        exprs: &[],
        coordinates: "rotating Cartesian (t, x, y, z), rotation about z at rate omega",
        admissible_domain: "omega^2 (x^2 + y^2) < 1",
    },
    CatalogEntry {
        name: "diagonal",
        params: &[],
        exprs: &["g00", "g11", "g22", "g33"],
        coordinates: "user chart",
        admissible_domain: "g00 > 0 and g11, g22, g33 < 0",
    },
];

/// Arguments for a catalog metric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalogArgs {
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub exprs: BTreeMap<String, String>,
}

impl CatalogArgs {
    fn expr(&self, metric: &str, key: &str) -> Result<String, MetricError> {
        let s = self.exprs.get(key).ok_or_else(|| MetricError::MissingArgument {
            metric: metric.into(),
            arg: key.into(),
        })?;
        Expr::parse(s)?;
        Ok(s.clone())
    }

    fn param(&self, metric: &str, key: &str) -> Result<(), MetricError> {
        if self.params.contains_key(key) {
            Ok(())
        } else {
            Err(MetricError::MissingArgument {
                metric: metric.into(),
                arg: key.into(),
            })
        }
    }
}

/// Builds a catalog metric by name.
pub fn catalog_metric(name: &str, args: &CatalogArgs) -> Result<MetricField, MetricError> {
    let params = args.params.clone();
    match name {
        "minkowski" => MetricField::diagonal(name, &["1", "-1", "-1", "-1"], params),
        "flrw_flat" => {
            let a = args.expr(name, "a")?;
            let h = format!("-({a})^2");
            MetricField::diagonal(name, &["1", h.as_str(), h.as_str(), h.as_str()], params)
        }
        "schwarzschild_isotropic" => {
            args.param(name, "m")?;
            let r = "sqrt(x1^2 + x2^2 + x3^2)";
            let f = format!("((1 - m/(2*{r}))/(1 + m/(2*{r})))^2");
            let h = format!("-(1 + m/(2*{r}))^4");
            MetricField::diagonal(name, &[f.as_str(), h.as_str(), h.as_str(), h.as_str()], params)
        }
        "schwarzschild_standard" => {
            args.param(name, "m")?;
            MetricField::diagonal(
                name,
                &["1 - 2*m/x1", "-1/(1 - 2*m/x1)", "-x1^2", "-x1^2*sin(x2)^2"],
                params,
            )
        }
        "rotating_frame_minkowski" => {
            args.param(name, "omega")?;
            MetricField::from_components(
                name,
                &[
                    "1 - omega^2*(x1^2 + x2^2)",
                    "omega*x2",
                    "-omega*x1",
                    "0",
                    "-1",
                    "0",
                    "0",
                    "-1",
                    "0",
                    "-1",
                ],
                params,
            )
        }
        "diagonal" => {
            let d: Vec<String> = ["g00", "g11", "g22", "g33"]
                .iter()
                .map(|k| args.expr(name, k))
                .collect::<Result<_, _>>()?;
            MetricField::diagonal(name, &[&d[0], &d[1], &d[2], &d[3]], params)
        }
        other => Err(MetricError::UnknownCatalog(other.to_string())),
    }
}

/// Spatial domain of a chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// The chart covers all of R^3; caller-asserted.
    AllSpace,
    Box { lo: [f64; 3], hi: [f64; 3] },
}

impl Domain {
    pub fn contains(&self, x: &[f64; 3]) -> bool {
        match self {
            Domain::AllSpace => true,
            Domain::Box { lo, hi } => (0..3).all(|i| x[i] >= lo[i] && x[i] <= hi[i]),
        }
    }
}

/// A purely spatial coordinate change `x'^j = φ^j(x^k)`, `x'^0 = x^0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMap {
    exprs: [Expr; 3],
    params: Params,
    pub domain: Domain,
}

/// Jacobian blocks of a spatial map at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianP {
    /// `P^μ_ν = ∂x^μ/∂x'^ν`, block form `[[1, 0], [0, Q]]`.
    pub p: Matrix4<f64>,
    /// `F^j_k = ∂x'^j/∂x^k`.
    pub f: Matrix3<f64>,
}

/// Right Cauchy-Green tensor `FᵀF` of a spatial map at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyGreen {
    pub c: Matrix3<f64>,
    pub f: Matrix3<f64>,
}

impl CauchyGreen {
    /// `max|C − (tr C/3) I| / (tr C/3)`.
    pub fn sphericity_residual(&self) -> f64 {
        let s = self.c.trace() / 3.0;
        let dev = self.c - Matrix3::identity() * s;
        dev.iter().fold(0.0f64, |a, v| a.max(v.abs())) / s.abs()
    }
}

impl SpatialMap {
    pub fn new<S: AsRef<str>>(sources: &[S; 3], params: Params, domain: Domain) -> Result<Self, MetricError> {
        let mut parsed = Vec::with_capacity(3);
        for (j, src) in sources.iter().enumerate() {
            let e = Expr::parse(src.as_ref())?;
            if e.uses_coord(0) {
                return Err(MetricError::TimeDependentMap(j + 1));
            }
            parsed.push(e);
        }
        let exprs: [Expr; 3] = parsed.try_into().expect("three components");
        Ok(SpatialMap { exprs, params, domain })
    }

    pub fn identity() -> Self {
        Self::new(&["x1", "x2", "x3"], Params::new(), Domain::AllSpace).unwrap()
    }

    pub fn exprs(&self) -> &[Expr; 3] {
        &self.exprs
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn apply(&self, x: &[f64; 3]) -> Result<[f64; 3], MetricError> {
        let p = [0.0, x[0], x[1], x[2]];
        let mut out = [0.0; 3];
        for (o, e) in out.iter_mut().zip(&self.exprs) {
            *o = e.eval(&p, &self.params)?;
        }
        Ok(out)
    }

    /// `F^j_k = ∂φ^j/∂x^k`. With an explicit step this is a plain central
    /// difference; by default a Richardson-extrapolated one with base step
    /// `1e-3·max(1, |x|)`.
    pub fn jacobian(&self, x: &[f64; 3], step: Option<f64>) -> Result<Matrix3<f64>, MetricError> {
        let h = match step {
            Some(h) => h,
            None => {
                let scale = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                return self.jacobian_richardson(x, 1e-3 * scale);
            }
        };
        let p = [0.0, x[0], x[1], x[2]];
        let mut f = Matrix3::zeros();
        for (j, e) in self.exprs.iter().enumerate() {
            let g = e.eval_grad(&p, &self.params, h)?;
            for k in 0..3 {
                f[(j, k)] = g[k + 1];
            }
        }
        Ok(f)
    }

    /// Jacobian with one Richardson step: `(4 D(h/2) − D(h)) / 3`.
    pub fn jacobian_richardson(&self, x: &[f64; 3], step: f64) -> Result<Matrix3<f64>, MetricError> {
        let coarse = self.jacobian(x, Some(step))?;
        let fine = self.jacobian(x, Some(0.5 * step))?;
        Ok((fine * 4.0 - coarse) / 3.0)
    }

    pub fn jacobian_p(&self, x: &[f64; 3], step: Option<f64>) -> Result<JacobianP, MetricError> {
        let f = self.jacobian(x, step)?;
        let det = f.determinant();
        let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs())).powi(3);
        if det.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(MetricError::SingularJacobian { det });
        }
        let q = f.try_inverse().ok_or(MetricError::SingularJacobian { det })?;
        Ok(JacobianP { p: spatial_block(&q), f })
    }

    pub fn cauchy_green(&self, x: &[f64; 3], step: Option<f64>) -> Result<CauchyGreen, MetricError> {
        let f = self.jacobian(x, step)?;
        let c = f.transpose() * f;
        Ok(CauchyGreen {
            c: 0.5 * (c + c.transpose()),
            f,
        })
    }

    /// Solves `φ(x) = target` by Newton iteration from `guess`.
    pub fn invert(&self, target: &[f64; 3], guess: &[f64; 3]) -> Result<[f64; 3], MetricError> {
        let t = Vector3::from(*target);
        let mut x = Vector3::from(*guess);
        let scale = t.amax().max(1.0);
        for _ in 0..100 {
            let xa = [x[0], x[1], x[2]];
            let r = Vector3::from(self.apply(&xa)?) - t;
            if r.amax() <= 1e-13 * scale {
                return Ok(xa);
            }
            let f = self.jacobian(&xa, None)?;
            let dx = f
                .lu()
                .solve(&r)
                .ok_or(MetricError::InversionFailed(*target))?;
            x -= dx;
        }
        Err(MetricError::InversionFailed(*target))
    }
}

/// `G'(X') = Pᵀ G(X) P` evaluated at the base point `X` with `X' = (x0, φ(x))`.
/// Returns `(X', G', P)`.
pub fn pushforward_at_base(
    metric: &MetricField,
    map: &SpatialMap,
    x: &Point4,
    step: Option<f64>,
) -> Result<(Point4, Matrix4<f64>, JacobianP), MetricError> {
    let xs = [x[1], x[2], x[3]];
    let y = map.apply(&xs)?;
    let jac = map.jacobian_p(&xs, step)?;
    let g = metric.matrix(x)?;
    let gp = jac.p.transpose() * g * jac.p;
    Ok(([x[0], y[0], y[1], y[2]], 0.5 * (gp + gp.transpose()), jac))
}

/// `G'(X') = P(X')ᵀ G(X(X')) P(X')`, inverting the map by Newton iteration
/// started at `guess` (defaults to `x'` itself).
pub fn pushforward_metric(
    metric: &MetricField,
    map: &SpatialMap,
    x_prime: &Point4,
    guess: Option<[f64; 3]>,
) -> Result<Matrix4<f64>, MetricError> {
    let target = [x_prime[1], x_prime[2], x_prime[3]];
    let base = map.invert(&target, &guess.unwrap_or(target))?;
    let (_, gp, _) = pushforward_at_base(metric, map, &[x_prime[0], base[0], base[1], base[2]], None)?;
    Ok(gp)
}

/// Outcome of [`classify_conformal_map`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum ConformalClass {
    NotSpherical,
    /// `φ(x) = c + α₀ R x`.
    Type1 {
        alpha0: f64,
        r: [[f64; 3]; 3],
        c: [f64; 3],
    },
    /// `φ(x) = c + b R (x − a)/|x − a|²`.
    Type2 {
        b: f64,
        a: [f64; 3],
        r: [[f64; 3]; 3],
        c: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalClassification {
    pub class: ConformalClass,
    /// Max over samples of the relative deviation of `FᵀF` from a multiple of the identity.
    pub sphericity_residual: f64,
    /// Relative spread of `α` (constant-α model).
    pub type1_residual: f64,
    /// Relative misfit of `α = b/|x − a|²` (infinite when that model is degenerate).
    pub type2_residual: f64,
    /// Max relative misfit of the reconstructed map over the samples
    /// (zero for `NotSpherical`).
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub tol: f64,
    /// Base step of the Richardson-extrapolated Jacobian.
    pub step: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { tol: 1e-8, step: 1e-3 }
    }
}

pub const MIN_CLASSIFY_SAMPLES: usize = 8;

fn mat3_to_array(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

/// Decides whether a spatial map has a spherical Cauchy-Green tensor and, if
/// so, which of the two possible families it belongs to.
pub fn classify_conformal_map(
    map: &SpatialMap,
    samples: &[[f64; 3]],
    opts: ClassifyOptions,
) -> Result<ConformalClassification, MetricError> {
    if samples.len() < MIN_CLASSIFY_SAMPLES {
        return Err(MetricError::InsufficientSamples {
            got: samples.len(),
            need: MIN_CLASSIFY_SAMPLES,
        });
    }
    let tol = opts.tol;
    let mut jacobians = Vec::with_capacity(samples.len());
    let mut images = Vec::with_capacity(samples.len());
    let mut alphas = Vec::with_capacity(samples.len());
    let mut sphericity: f64 = 0.0;
    for x in samples {
        if !map.domain.contains(x) {
            return Err(MetricError::OutsideDomain(*x));
        }
        let h = opts.step * x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let f = map.jacobian_richardson(x, h)?;
        let cg = CauchyGreen { c: f.transpose() * f, f };
        sphericity = sphericity.max(cg.sphericity_residual());
        let lmax = SymmetricEigen::new(cg.c).eigenvalues.max();
        alphas.push(lmax.sqrt());
        jacobians.push(f);
        images.push(Vector3::from(map.apply(x)?));
    }

    let nan_report = |class, t1, t2, residual| ConformalClassification {
        class,
        sphericity_residual: sphericity,
        type1_residual: t1,
        type2_residual: t2,
        residual,
        tolerance: tol,
    };
    if sphericity > tol {
        return Ok(nan_report(ConformalClass::NotSpherical, f64::INFINITY, f64::INFINITY, 0.0));
    }

    let n = samples.len() as f64;
    let mean_alpha = alphas.iter().sum::<f64>() / n;
    let type1_residual = alphas
        .iter()
        .fold(0.0f64, |a, v| a.max((v - mean_alpha).abs()))
        / mean_alpha;

    // 1/α = p|x|² + q·x + r for the inversion family.
    let design = DMatrix::from_fn(samples.len(), 5, |i, k| {
        let x = &samples[i];
        match k {
            0 => x[0] * x[0] + x[1] * x[1] + x[2] * x[2],
            1..=3 => x[k - 1],
            _ => 1.0,
        }
    });
    let rhs = DVector::from_iterator(samples.len(), alphas.iter().map(|a| 1.0 / a));
    let spread = alphas.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - alphas.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut type2_fit = None;
    let mut type2_residual = f64::INFINITY;
    if spread / mean_alpha > 10.0 * tol {
        if let Ok(sol) = design.clone().svd(true, true).solve(&rhs, 1e-14) {
            let p = sol[0];
            if p > 0.0 {
                let b = 1.0 / p;
                let a = Vector3::new(sol[1], sol[2], sol[3]) / (-2.0 * p);
                let res = samples
                    .iter()
                    .zip(&alphas)
                    .map(|(x, al)| {
                        let y = Vector3::from(*x) - a;
                        ((b / y.norm_squared()) - al).abs() / al
                    })
                    .fold(0.0f64, f64::max);
                type2_residual = res;
                type2_fit = Some((b, a));
            }
        }
    }

    let map_scale = images.iter().fold(1.0f64, |a, v| a.max(v.amax()));
    if type1_residual <= tol && type1_residual * 10.0 <= type2_residual {
        let r = jacobians[0] / mean_alpha;
        let c = samples
            .iter()
            .zip(&images)
            .map(|(x, y)| y - r * Vector3::from(*x) * mean_alpha)
            .sum::<Vector3<f64>>()
            / n;
        let residual = samples
            .iter()
            .zip(&images)
            .map(|(x, y)| (c + r * Vector3::from(*x) * mean_alpha - y).amax())
            .fold(0.0f64, f64::max)
            / map_scale;
        return Ok(nan_report(
            ConformalClass::Type1 {
                alpha0: mean_alpha,
                r: mat3_to_array(&r),
                c: c.into(),
            },
            type1_residual,
            type2_residual,
            residual,
        ));
    }
    if let Some((b, a)) = type2_fit {
        if type2_residual <= tol && type2_residual * 10.0 <= type1_residual {
            let y0 = Vector3::from(samples[0]) - a;
            let yhat = y0.normalize();
            let householder = Matrix3::identity() - yhat * yhat.transpose() * 2.0;
            let r = jacobians[0] * householder * (y0.norm_squared() / b);
            let model = |x: &[f64; 3]| {
                let y = Vector3::from(*x) - a;
                r * y * (b / y.norm_squared())
            };
            let c = samples
                .iter()
                .zip(&images)
                .map(|(x, y)| y - model(x))
                .sum::<Vector3<f64>>()
                / n;
            let residual = samples
                .iter()
                .zip(&images)
                .map(|(x, y)| (c + model(x) - y).amax())
                .fold(0.0f64, f64::max)
                / map_scale;
            return Ok(nan_report(
                ConformalClass::Type2 {
                    b,
                    a: a.into(),
                    r: mat3_to_array(&r),
                    c: c.into(),
                },
                type1_residual,
                type2_residual,
                residual,
            ));
        }
    }
    Ok(nan_report(
        ConformalClass::NotSpherical,
        type1_residual,
        type2_residual,
        0.0,
    ))
}

/// Default finite-difference step used by derivative-based diagnostics at `x`.
pub fn point_step(x: &Point4) -> f64 {
    x.iter().map(|v| default_step(*v)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eta;

    fn args(params: &[(&str, f64)], exprs: &[(&str, &str)]) -> CatalogArgs {
        CatalogArgs {
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            exprs: exprs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    fn flrw(a: &str) -> MetricField {
        catalog_metric("flrw_flat", &args(&[], &[("a", a)])).unwrap()
    }

    fn rot_z(theta: f64) -> Matrix3<f64> {
        let (s, c) = theta.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    fn rotation_map(theta: f64) -> SpatialMap {
        let (s, c) = theta.sin_cos();
        SpatialMap::new(
            &[format!("{c:?}*x1 - {s:?}*x2"), format!("{s:?}*x1 + {c:?}*x2"), "x3".into()],
            Params::new(),
            Domain::AllSpace,
        )
        .unwrap()
    }

    #[test]
    fn metric_at_examples() {
        let m = catalog_metric("minkowski", &CatalogArgs::default()).unwrap();
        let mp = m.metric_at(&[3.0, -1.0, 2.0, 7.0]).unwrap();
        assert_eq!(mp.g, eta());
        assert_eq!(mp.sqrt_neg_det, 1.0);

        let g = flrw("x0").metric_at(&[2.0, 0.3, 0.1, 0.0]).unwrap().g;
        assert_eq!(g, Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, -4.0, -4.0, -4.0)));

        let s = catalog_metric("schwarzschild_standard", &args(&[("m", 1.0)], &[])).unwrap();
        let g = s.matrix(&[0.0, 4.0, 1.0, 0.0]).unwrap();
        assert_eq!(g[(0, 0)], 0.5);
    }

    #[test]
    fn singular_metric_rejected() {
        let m = MetricField::diagonal("flat-collapse", &["1", "0", "-1", "-1"], Params::new()).unwrap();
        assert!(matches!(m.metric_at(&[0.0; 4]), Err(MetricError::SingularMetric { .. })));
    }

    #[test]
    fn admissibility_examples() {
        let m = catalog_metric("minkowski", &CatalogArgs::default()).unwrap();
        let rep = m.check_admissible(&[0.0; 4]).unwrap();
        assert!(rep.ok);
        assert_eq!(rep.spatial_eigenvalues, [-1.0, -1.0, -1.0]);

        let bad = MetricField::diagonal("euclid", &["-1", "-1", "-1", "-1"], Params::new()).unwrap();
        assert!(!bad.check_admissible(&[0.0; 4]).unwrap().ok);

        let s = catalog_metric("schwarzschild_standard", &args(&[("m", 1.0)], &[])).unwrap();
        let rep = s.check_admissible(&[0.0, 1.5, 1.0, 0.0]).unwrap();
        assert!(!rep.ok);
        assert!(rep.g00 < 0.0);
        assert!(matches!(
            s.require_admissible(&[0.0, 1.5, 1.0, 0.0]),
            Err(MetricError::NotAdmissible { .. })
        ));
    }

    #[test]
    fn isotropy_examples() {
        let pts = [[0.5, 0.1, 0.2, 0.3], [1.5, -1.0, 0.0, 2.0]];
        assert!(flrw("1 + 0.1*x0").is_space_isotropic_diagonal(&pts).unwrap().ok);
        let s = catalog_metric("schwarzschild_standard", &args(&[("m", 1.0)], &[])).unwrap();
        let spts = [[0.0, 4.0, 1.0, 0.0], [0.0, 6.0, 0.7, 1.0]];
        assert!(!s.is_space_isotropic_diagonal(&spts).unwrap().ok);
        let r = catalog_metric("rotating_frame_minkowski", &args(&[("omega", 0.1)], &[])).unwrap();
        assert!(!r.is_space_isotropic_diagonal(&pts).unwrap().ok);
        let iso = catalog_metric("schwarzschild_isotropic", &args(&[("m", 1.0)], &[])).unwrap();
        let ipts = [[0.0, 3.0, 1.0, 0.5], [0.0, -2.0, 4.0, 1.0]];
        assert!(iso.is_space_isotropic_diagonal(&ipts).unwrap().ok);
    }

    #[test]
    fn christoffel_examples() {
        let m = catalog_metric("minkowski", &CatalogArgs::default()).unwrap();
        assert!(m.christoffel(&[1.0, 2.0, 3.0, 4.0], None).unwrap().max_abs() <= 1e-12);

        let f = flrw("x0");
        let gam = f.christoffel(&[2.0, 0.0, 0.0, 0.0], Some(1e-5)).unwrap();
        assert!((gam.get(1, 0, 1) - 0.5).abs() < 1e-6);
        assert!((gam.get(0, 1, 1) - 2.0).abs() < 1e-6); // a ȧ
        for l in 0..4 {
            for mu in 0..4 {
                for nu in 0..4 {
                    assert_eq!(gam.get(l, mu, nu), gam.get(l, nu, mu));
                }
            }
        }
    }

    #[test]
    fn jacobian_p_examples() {
        let id = SpatialMap::identity();
        let j = id.jacobian_p(&[0.3, 1.0, -2.0], None).unwrap();
        assert!((j.p - Matrix4::identity()).amax() < 1e-9);

        let theta = 0.7;
        let j = rotation_map(theta).jacobian_p(&[0.3, 1.0, -2.0], None).unwrap();
        let q = j.p.fixed_view::<3, 3>(1, 1).into_owned();
        assert!((q - rot_z(theta).transpose()).amax() < 1e-9);
        assert_eq!(j.p[(0, 0)], 1.0);

        let s = SpatialMap::new(&["2*x1", "2*x2", "2*x3"], Params::new(), Domain::AllSpace).unwrap();
        let q = s.jacobian_p(&[1.0, 1.0, 1.0], None).unwrap().p;
        assert!((q - spatial_block(&(Matrix3::identity() * 0.5))).amax() < 1e-9);

        let sing = SpatialMap::new(&["x1", "x1", "x3"], Params::new(), Domain::AllSpace).unwrap();
        assert!(matches!(
            sing.jacobian_p(&[1.0, 1.0, 1.0], None),
            Err(MetricError::SingularJacobian { .. })
        ));
    }

    #[test]
    fn time_dependent_map_rejected() {
        let r = SpatialMap::new(&["x1 + x0", "x2", "x3"], Params::new(), Domain::AllSpace);
        assert_eq!(r.unwrap_err(), MetricError::TimeDependentMap(1));
    }

    #[test]
    fn cauchy_green_examples() {
        let cg = rotation_map(0.4).cauchy_green(&[1.0, 2.0, 3.0], None).unwrap();
        assert!((cg.c - Matrix3::identity()).amax() < 1e-9);

        let (s, c) = 0.4f64.sin_cos();
        let homothecy = SpatialMap::new(
            &[format!("2*({c:?}*x1 - {s:?}*x2)"), format!("2*({s:?}*x1 + {c:?}*x2)"), "2*x3".into()],
            Params::new(),
            Domain::AllSpace,
        )
        .unwrap();
        let cg = homothecy.cauchy_green(&[1.0, 2.0, 3.0], None).unwrap();
        assert!((cg.c - Matrix3::identity() * 4.0).amax() < 1e-8);

        let inversion = SpatialMap::new(
            &["x1/(x1^2+x2^2+x3^2)", "x2/(x1^2+x2^2+x3^2)", "x3/(x1^2+x2^2+x3^2)"],
            Params::new(),
            Domain::AllSpace,
        )
        .unwrap();
        let cg = inversion.cauchy_green(&[2.0, 0.0, 0.0], Some(1e-5)).unwrap();
        assert!((cg.c - Matrix3::identity() / 16.0).amax() < 1e-9);
    }

    fn classify_samples() -> Vec<[f64; 3]> {
        vec![
            [1.0, 0.5, -0.3],
            [-0.7, 1.2, 0.4],
            [0.3, -1.1, 0.9],
            [2.0, 0.1, 0.2],
            [-1.5, -0.4, -1.0],
            [0.6, 1.7, -1.3],
            [1.1, -0.9, 1.6],
            [-0.2, 0.8, 2.1],
            [0.9, 0.9, 0.9],
        ]
    }

    #[test]
    fn classify_type1() {
        let theta: f64 = 0.9;
        let (s, c) = theta.sin_cos();
        let map = SpatialMap::new(
            &[
                format!("{c:?}*x1 - {s:?}*x2 + 0.5"),
                format!("{s:?}*x1 + {c:?}*x2 - 1.25"),
                "x3 + 2".into(),
            ],
            Params::new(),
            Domain::AllSpace,
        )
        .unwrap();
        let rep = classify_conformal_map(&map, &classify_samples(), ClassifyOptions::default()).unwrap();
        match rep.class {
            ConformalClass::Type1 { alpha0, r, c } => {
                assert!((alpha0 - 1.0).abs() < 1e-10);
                let rr = rot_z(theta);
                for i in 0..3 {
                    for j in 0..3 {
                        assert!((r[i][j] - rr[(i, j)]).abs() < 1e-10);
                    }
                }
                let want = [0.5, -1.25, 2.0];
                for i in 0..3 {
                    assert!((c[i] - want[i]).abs() < 1e-10);
                }
            }
            other => panic!("expected Type1, got {other:?}"),
        }
        assert!(rep.residual < 1e-8);
    }

    #[test]
    fn classify_type2() {
        let map = SpatialMap::new(
            &[
                "1.5*(x1-3)/((x1-3)^2+(x2+4)^2+(x3-5)^2) + 0.25",
                "1.5*(x2+4)/((x1-3)^2+(x2+4)^2+(x3-5)^2)",
                "1.5*(x3-5)/((x1-3)^2+(x2+4)^2+(x3-5)^2) - 1",
            ],
            Params::new(),
            Domain::AllSpace,
        )
        .unwrap();
        let rep = classify_conformal_map(&map, &classify_samples(), ClassifyOptions::default()).unwrap();
        match rep.class {
            ConformalClass::Type2 { b, a, r, c } => {
                assert!((b - 1.5).abs() < 1e-8, "b = {b}");
                let want = [3.0, -4.0, 5.0];
                for i in 0..3 {
                    assert!((a[i] - want[i]).abs() < 1e-8);
                    assert!((r[i][i] - 1.0).abs() < 1e-8);
                }
                assert!((c[0] - 0.25).abs() < 1e-8 && (c[2] + 1.0).abs() < 1e-8);
            }
            other => panic!("expected Type2, got {other:?}"),
        }
        assert!(rep.residual < 1e-8);
    }

    #[test]
    fn classify_shear() {
        let map = SpatialMap::new(&["x1 + x2", "x2", "x3"], Params::new(), Domain::AllSpace).unwrap();
        let rep = classify_conformal_map(&map, &classify_samples(), ClassifyOptions::default()).unwrap();
        assert_eq!(rep.class, ConformalClass::NotSpherical);
        assert!(rep.sphericity_residual >= 10.0 * rep.tolerance);
    }

    #[test]
    fn classify_needs_samples() {
        let map = SpatialMap::identity();
        let r = classify_conformal_map(&map, &classify_samples()[..5], ClassifyOptions::default());
        assert!(matches!(r, Err(MetricError::InsufficientSamples { got: 5, need: 8 })));
    }

    #[test]
    fn pushforward_examples() {
        let f = flrw("1 + 0.1*x0");
        let x = [0.5, 0.2, -0.3, 1.0];
        let g = f.matrix(&x).unwrap();
        let gp = pushforward_metric(&f, &SpatialMap::identity(), &x, None).unwrap();
        assert!((gp - g).amax() < 1e-9);

        let gp = pushforward_metric(&f, &rotation_map(0.6), &x, None).unwrap();
        assert!((gp - g).amax() < 1e-9);

        let m = catalog_metric("minkowski", &CatalogArgs::default()).unwrap();
        let s = SpatialMap::new(&["2*x1", "2*x2", "2*x3"], Params::new(), Domain::AllSpace).unwrap();
        let gp = pushforward_metric(&m, &s, &[0.0, 2.0, 4.0, -2.0], None).unwrap();
        let want = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, -0.25, -0.25, -0.25));
        assert!((gp - want).amax() < 1e-9);
    }

    #[test]
    fn catalog_errors() {
        assert!(matches!(
            catalog_metric("kerr", &CatalogArgs::default()),
            Err(MetricError::UnknownCatalog(_))
        ));
        assert!(matches!(
            catalog_metric("schwarzschild_standard", &CatalogArgs::default()),
            Err(MetricError::MissingArgument { .. })
        ));
        assert!(matches!(
            catalog_metric("flrw_flat", &CatalogArgs::default()),
            Err(MetricError::MissingArgument { .. })
        ));
        for entry in CATALOG {
            assert!(CATALOG.iter().filter(|e| e.name == entry.name).count() == 1);
        }
    }
}
