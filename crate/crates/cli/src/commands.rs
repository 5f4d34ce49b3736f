use dirac_gauge::clifford::{check_anticommutation, lift_path, lift_residual, spin_lift, FlatGammaSet};
use dirac_gauge::dirac::{
    assemble_hamiltonian, check_h_equivalence_condition, energy_operator, gauge_experiment, self_adjointness_residual,
    spectrum, spectrum_of, zero_momentum_block, ChartSpec, ConditionReport, DiracError, Experiment, FieldOnGrid, Sector,
    Spectrum, Variant,
};
use dirac_gauge::linalg::{max_abs4, CMat4};
use dirac_gauge::lorentz::{eta_cholesky, lorentz_exp, so13_generator};
use dirac_gauge::metric::{classify_conformal_map, ClassifyOptions, ConformalClass, Domain, MetricField, SpatialMap};
use dirac_gauge::tetrad::{gamma_from_tetrad, inter_chart_l, orthonormality_residual, time_dependence_of_l, TetradField};
use dirac_gauge::Point4;
use nalgebra::Matrix4;
use serde_json::{json, Value};

use crate::config::{RunConfig, Tolerances};
use crate::error::CliError;

/// Resolved inputs shared by all commands.
pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub tol: Tolerances,
    pub seed: u64,
}

/// A command result. `failure` carries a non-zero outcome discovered after the
/// report was assembled (the report is still written).
pub struct Outcome {
    pub result: Value,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(result: Value) -> Self {
        Outcome { result, failure: None }
    }
}

fn rows(m: &Matrix4<f64>) -> Vec<[f64; 4]> {
    (0..4).map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)], m[(i, 3)]]).collect()
}

fn crows(m: &CMat4) -> Vec<Vec<[f64; 2]>> {
    (0..4).map(|i| (0..4).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

fn spectrum_json(s: &Spectrum) -> Value {
    json!({
        "values": s.values.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "max_abs_imag": s.max_abs_imag,
    })
}

fn tetrad_field(metric: &MetricField, cfg: &RunConfig, k: usize) -> Result<TetradField, CliError> {
    Ok(chart_spec(cfg, k)?.tetrad(metric))
}

fn chart_spec(cfg: &RunConfig, k: usize) -> Result<ChartSpec, CliError> {
    let c = cfg.chart(k)?;
    Ok(ChartSpec {
        map: c.spatial_map()?,
        prescription: c.prescription,
        rotation: c.rotation,
    })
}

pub fn factorize(ctx: &Context) -> Result<Outcome, CliError> {
    let metric = ctx.config.metric()?;
    let samples = ctx.config.samples(ctx.seed)?;
    let mut points = Vec::new();
    let mut first_bad = None;
    let mut worst: f64 = 0.0;
    for x in &samples {
        let g = metric.matrix(x)?;
        let adm = metric.check_admissible(x)?;
        if !adm.ok {
            first_bad.get_or_insert_with(|| {
                CliError::Admissibility(format!(
                    "metric `{}` not admissible at {x:?}: g00 = {}, spatial eigenvalues {:?}",
                    metric.name, adm.g00, adm.spatial_eigenvalues
                ))
            });
            points.push(json!({ "point": x, "admissibility": adm, "g": rows(&g) }));
            continue;
        }
        let ch = eta_cholesky(&g)?;
        let rel = ch.residual() / max_abs4(&g).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        points.push(json!({
            "point": x,
            "admissibility": adm,
            "g": rows(&g),
            "c": rows(&ch.c),
            "residual": ch.residual(),
            "relative_residual": rel,
        }));
    }
    let failure = first_bad.or_else(|| {
        (worst > ctx.tol.factorization)
            .then(|| CliError::Numerical(format!("factorization residual {worst:e} exceeds tolerance")))
    });
    Ok(Outcome {
        result: json!({ "metric": metric.name, "points": points, "max_relative_residual": worst }),
        failure,
    })
}

pub fn tetrad(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.config;
    let metric = cfg.metric()?;
    let samples = cfg.samples(ctx.seed)?;
    let flat = cfg.flat()?;
    if cfg.charts.is_empty() {
        return Err(CliError::Config("need at least 1 [[charts]] entry".into()));
    }
    let mut charts = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..cfg.charts.len() {
        let field = tetrad_field(&metric, cfg, k)?;
        let mut points = Vec::new();
        for x in &samples {
            let gp = gamma_from_tetrad(&field, &flat, x)?;
            let ortho = orthonormality_residual(&gp.tetrad.a, &gp.g);
            let anti = check_anticommutation(&gp.gamma, &gp.g)?;
            worst = worst.max(ortho).max(anti);
            points.push(json!({
                "point": x,
                "a": rows(&gp.tetrad.a),
                "chart_point": gp.tetrad.chart_point,
                "chart_a": rows(&gp.tetrad.chart_a),
                "orthonormality_residual": ortho,
                "anticommutation_residual": anti,
                "hermitizer": crows(&gp.hermitizer),
            }));
        }
        charts.push(json!({ "prescription": field.prescription, "points": points }));
    }
    let failure = (worst > ctx.tol.clifford)
        .then(|| CliError::Numerical(format!("tetrad residual {worst:e} exceeds tolerance")));
    Ok(Outcome {
        result: json!({ "metric": metric.name, "representation": flat.rep, "charts": charts, "max_residual": worst }),
        failure,
    })
}

pub fn classify_map(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config.classify.as_ref().ok_or_else(|| CliError::Config("missing `classify`".into()))?;
    let map = SpatialMap::new(&c.map, c.params.clone(), c.domain.unwrap_or(Domain::AllSpace))?;
    let opts = ClassifyOptions {
        tol: ctx.tol.classify,
        ..Default::default()
    };
    let cls = classify_conformal_map(&map, &c.samples, opts)?;
    let mut result = json!({ "classification": cls });
    if let ConformalClass::Type2 { a, .. } = &cls.class {
        // the inversion centre cannot belong to the chart's spatial range
        result["excluded_point"] = json!(a);
        result["note"] = json!("map is singular at excluded_point, which is excluded from the domain");
    }
    Ok(Outcome::ok(result))
}

pub fn lift(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.config;
    let flat = cfg.flat()?;
    if let Some(l) = &cfg.lift {
        let w = so13_generator(l.rotation, l.boost);
        let target = lorentz_exp(&w);
        let s = match l.path_steps {
            Some(n) => {
                let path: Vec<Matrix4<f64>> = (1..=n).map(|k| lorentz_exp(&(w * (k as f64 / n as f64)))).collect();
                lift_path(&path, &flat)?.s
            }
            None => spin_lift(&target, &flat)?.s,
        };
        let residual = lift_residual(&s, &target, &flat)?;
        let failure = (residual > ctx.tol.lift)
            .then(|| CliError::Numerical(format!("lift residual {residual:e} exceeds tolerance")));
        return Ok(Outcome {
            result: json!({ "l": rows(&target), "s": crows(&s), "residual": residual }),
            failure,
        });
    }
    let metric = cfg.metric()?;
    let t1 = tetrad_field(&metric, cfg, 0)?;
    let t2 = tetrad_field(&metric, cfg, 1)?;
    let mut points = Vec::new();
    let mut worst: f64 = 0.0;
    for x in cfg.samples(ctx.seed)? {
        let l = inter_chart_l(&t1, &t2, &x)?;
        let s = spin_lift(&l.l, &flat)?;
        let r = lift_residual(&s.s, &l.l, &flat)?;
        worst = worst.max(r);
        points.push(json!({
            "point": x,
            "l": rows(&l.l),
            "proper": l.is_proper,
            "orthochronous": l.is_orthochronous,
            "s": crows(&s.s),
            "residual": r,
        }));
    }
    let failure =
        (worst > ctx.tol.lift).then(|| CliError::Numerical(format!("lift residual {worst:e} exceeds tolerance")));
    Ok(Outcome {
        result: json!({ "points": points, "max_residual": worst }),
        failure,
    })
}

fn conditions_between(
    t1: &TetradField,
    t2: &TetradField,
    flat: &FlatGammaSet,
    samples: &[Point4],
    step: f64,
) -> Result<ConditionReport, CliError> {
    let mut b = Vec::with_capacity(samples.len());
    for x in samples {
        let gp = gamma_from_tetrad(t1, flat, x)?;
        b.push([gp.b(0), gp.b(1), gp.b(2), gp.b(3)]);
    }
    let zero = vec![[CMat4::zeros(); 4]; samples.len()];
    let s_field = |x: &Point4| -> Result<CMat4, DiracError> {
        let l = inter_chart_l(t1, t2, x)?;
        Ok(spin_lift(&l.l, flat)?.s)
    };
    Ok(check_h_equivalence_condition(&s_field, &b, &zero, samples, step)?)
}

pub fn check_conditions(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.config;
    let metric = cfg.metric()?;
    let flat = cfg.flat()?;
    let samples = cfg.samples(ctx.seed)?;
    let t1 = tetrad_field(&metric, cfg, 0)?;
    let t2 = tetrad_field(&metric, cfg, 1)?;
    let td = time_dependence_of_l(&t1, &t2, &samples, cfg.steps.time)?;
    let rep = conditions_between(&t1, &t2, &flat, &samples, cfg.steps.time)?;
    let variants: Vec<Variant> = match cfg.variant {
        Some(v) => vec![v],
        None => vec![Variant::Dfw, Variant::Qrd0],
    };
    let verdicts: Vec<Value> = variants
        .iter()
        .map(|v| {
            json!({
                "variant": v,
                "hamiltonian_residual": rep.hamiltonian(*v),
                "energy_residual": rep.energy(*v),
                "hamiltonian_ok": rep.hamiltonian(*v) <= ctx.tol.condition,
                "energy_ok": rep.energy(*v) <= ctx.tol.condition,
            })
        })
        .collect();
    Ok(Outcome::ok(json!({
        "samples": samples,
        "time_dependence": td,
        "conditions": rep,
        "verdicts": verdicts,
    })))
}

pub fn gauge_experiment_cmd(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.config;
    let exp = Experiment {
        metric: cfg.metric()?,
        charts: [chart_spec(cfg, 0)?, chart_spec(cfg, 1)?],
        flat: cfg.flat()?,
        variant: cfg.variant()?,
        grid: cfg.grid()?,
        mass: cfg.mass()?,
        scheme: cfg.scheme,
        sector: cfg.sector,
        steps: cfg.steps,
        tolerances: ctx.tol.experiment(),
        dimension_cap: cfg.dimension_cap(),
    };
    match gauge_experiment(&exp) {
        Ok(rep) => Ok(Outcome::ok(json!({ "experiment": rep }))),
        Err(e) => {
            let err = CliError::from(e);
            if !matches!(err, CliError::Numerical(_)) {
                return Err(err);
            }
            // keep what the earlier stages established
            let t1 = exp.charts[0].tetrad(&exp.metric);
            let t2 = exp.charts[1].tetrad(&exp.metric);
            let points = exp.grid.points();
            let td = time_dependence_of_l(&t1, &t2, &points, exp.steps.time).ok();
            let cond = conditions_between(&t1, &t2, &exp.flat, &points, exp.steps.time).ok();
            Ok(Outcome {
                result: json!({ "partial": { "time_dependence": td, "conditions": cond } }),
                failure: Some(err),
            })
        }
    }
}

pub fn spectrum_cmd(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.config;
    let metric = cfg.metric()?;
    let field = tetrad_field(&metric, cfg, 0)?;
    let flat = cfg.flat()?;
    let grid = cfg.grid()?;
    let variant = cfg.variant()?;
    let cap = cfg.dimension_cap();
    if grid.dim() > cap {
        return Err(CliError::Config(format!("operator dimension {} exceeds the cap {cap}", grid.dim())));
    }
    let f = FieldOnGrid::build(&field, &flat, &grid, variant, &cfg.steps)?;
    let h = assemble_hamiltonian(&f, cfg.mass()?, cfg.scheme)?;
    let e = energy_operator(&h)?;
    let (hs, es) = match cfg.sector {
        Sector::Full => (spectrum(&h, cap)?, spectrum(&e, cap)?),
        Sector::ZeroMomentum => (
            spectrum_of(&zero_momentum_block(&h)?)?,
            spectrum_of(&zero_momentum_block(&e)?)?,
        ),
    };
    Ok(Outcome::ok(json!({
        "variant": variant,
        "sector": cfg.sector,
        "dimension": grid.dim(),
        "compatibility_residual": f.max_compatibility_residual(),
        "energy_self_adjointness_residual": self_adjointness_residual(&e),
        "h": spectrum_json(&hs),
        "e": spectrum_json(&es),
    })))
}
