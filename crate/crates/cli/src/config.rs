//! Run configuration. Every table rejects unknown keys; sections a command
//! does not need may be omitted.

use std::collections::BTreeMap;

use dirac_gauge::clifford::{FlatGammaSet, Representation};
use dirac_gauge::dirac::{ExperimentTolerances, Grid, Scheme, Sector, Steps, Variant, DEFAULT_DIMENSION_CAP};
use dirac_gauge::metric::{catalog_metric, CatalogArgs, Domain, MetricField, SpatialMap};
use dirac_gauge::tetrad::{Prescription, TriadRotation};
use dirac_gauge::{Params, Point4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub metric: Option<MetricConfig>,
    /// Explicit sample points `[x0, x1, x2, x3]`.
    #[serde(default)]
    pub samples: Vec<Point4>,
    /// Seeded random samples appended to `samples`.
    pub random_samples: Option<RandomSamples>,
    #[serde(default)]
    pub charts: Vec<ChartConfig>,
    pub classify: Option<ClassifyConfig>,
    pub lift: Option<LiftConfig>,
    #[serde(default)]
    pub representation: Option<String>,
    pub variant: Option<Variant>,
    pub grid: Option<Grid>,
    pub mass: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub sector: Sector,
    #[serde(default)]
    pub steps: Steps,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub dimension_cap: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    /// Catalog name; exclusive with `components`.
    pub catalog: Option<String>,
    #[serde(default)]
    pub params: Params,
    /// Expression arguments of catalog metrics, e.g. `a` for `flrw_flat`.
    #[serde(default)]
    pub exprs: BTreeMap<String, String>,
    /// Upper triangle `g00 g01 g02 g03 g11 g12 g13 g22 g23 g33`.
    pub components: Option<[String; 10]>,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSamples {
    pub count: usize,
    pub lo: Point4,
    pub hi: Point4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    /// Spatial map `x' = φ(x)` as three expressions in `x1 x2 x3`.
    pub map: Option<[String; 3]>,
    #[serde(default)]
    pub map_params: Params,
    pub prescription: Prescription,
    pub rotation: Option<TriadRotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub map: [String; 3],
    #[serde(default)]
    pub params: Params,
    pub samples: Vec<[f64; 3]>,
    pub domain: Option<Domain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftConfig {
    /// Rotation vector (axis times angle).
    #[serde(default)]
    pub rotation: [f64; 3],
    /// Rapidity vector.
    #[serde(default)]
    pub boost: [f64; 3],
    /// Lift along a path of this many equal steps from the identity; allows
    /// rotation angles of π and beyond.
    pub path_steps: Option<usize>,
}

/// Central tolerance defaults; `--tol-scale` multiplies all of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative factorization residual `‖CᵀηC − G‖/‖G‖`.
    pub factorization: f64,
    /// Anticommutation and orthonormality residuals.
    pub clifford: f64,
    pub lift: f64,
    pub classify: f64,
    pub dl_dt: f64,
    pub condition: f64,
    pub spectral: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let e = ExperimentTolerances::default();
        Tolerances {
            factorization: 1e-11,
            clifford: 1e-11,
            lift: 1e-9,
            classify: 1e-8,
            dl_dt: e.dl_dt,
            condition: e.condition,
            spectral: e.spectral,
        }
    }
}

impl Tolerances {
    pub fn scaled(&self, k: f64) -> Self {
        Tolerances {
            factorization: self.factorization * k,
            clifford: self.clifford * k,
            lift: self.lift * k,
            classify: self.classify * k,
            dl_dt: self.dl_dt * k,
            condition: self.condition * k,
            spectral: self.spectral * k,
        }
    }

    pub fn experiment(&self) -> ExperimentTolerances {
        ExperimentTolerances {
            dl_dt: self.dl_dt,
            condition: self.condition,
            spectral: self.spectral,
        }
    }
}

fn missing(what: &str) -> CliError {
    CliError::Config(format!("missing `{what}`"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(m) = &self.metric {
            if m.catalog.is_some() == m.components.is_some() {
                return Err(CliError::Config("metric needs exactly one of `catalog` or `components`".into()));
            }
        }
        if let Some(r) = &self.random_samples {
            if (0..4).any(|i| r.lo[i] > r.hi[i]) {
                return Err(CliError::Config("random_samples: lo must not exceed hi".into()));
            }
        }
        if let Some(g) = &self.grid {
            g.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(l) = &self.lift {
            if l.path_steps == Some(0) {
                return Err(CliError::Config("lift.path_steps must be positive".into()));
            }
        }
        if let Some(m) = self.mass {
            if !m.is_finite() {
                return Err(CliError::Config("mass must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn metric(&self) -> Result<MetricField, CliError> {
        let m = self.metric.as_ref().ok_or_else(|| missing("metric"))?;
        let field = match (&m.catalog, &m.components) {
            (Some(name), None) => catalog_metric(
                name,
                &CatalogArgs {
                    params: m.params.clone(),
                    exprs: m.exprs.clone(),
                },
            )?,
            (None, Some(c)) => MetricField::from_components(m.name.as_deref().unwrap_or("custom"), c, m.params.clone())?,
            _ => unreachable!("validated"),
        };
        Ok(field)
    }

    /// Explicit samples followed by the seeded random ones.
    pub fn samples(&self, seed: u64) -> Result<Vec<Point4>, CliError> {
        let mut out = self.samples.clone();
        if let Some(r) = &self.random_samples {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..r.count {
                let mut p = [0.0; 4];
                for (i, v) in p.iter_mut().enumerate() {
                    *v = if r.lo[i] == r.hi[i] { r.lo[i] } else { rng.gen_range(r.lo[i]..r.hi[i]) };
                }
                out.push(p);
            }
        }
        if out.is_empty() {
            return Err(missing("samples or random_samples"));
        }
        Ok(out)
    }

    pub fn flat(&self) -> Result<FlatGammaSet, CliError> {
        let rep: Representation = match &self.representation {
            Some(s) => s.parse()?,
            None => Representation::Dirac,
        };
        Ok(dirac_gauge::clifford::flat_gammas(rep)?)
    }

    pub fn chart(&self, k: usize) -> Result<&ChartConfig, CliError> {
        self.charts
            .get(k)
            .ok_or_else(|| CliError::Config(format!("need at least {} [[charts]] entries", k + 1)))
    }

    pub fn variant(&self) -> Result<Variant, CliError> {
        self.variant.ok_or_else(|| missing("variant"))
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        self.grid.ok_or_else(|| missing("grid"))
    }

    pub fn mass(&self) -> Result<f64, CliError> {
        self.mass.ok_or_else(|| missing("mass"))
    }

    pub fn dimension_cap(&self) -> usize {
        self.dimension_cap.unwrap_or(DEFAULT_DIMENSION_CAP)
    }
}

impl ChartConfig {
    pub fn spatial_map(&self) -> Result<Option<SpatialMap>, CliError> {
        match &self.map {
            Some(m) => Ok(Some(SpatialMap::new(m, self.map_params.clone(), Domain::AllSpace)?)),
            None => Ok(None),
        }
    }
}
