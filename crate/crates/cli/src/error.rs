use dirac_gauge::clifford::CliffordError;
use dirac_gauge::dirac::DiracError;
use dirac_gauge::lorentz::LorentzError;
use dirac_gauge::metric::MetricError;
use dirac_gauge::tetrad::TetradError;

/// Failure classes, one per non-zero exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Admissibility(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Admissibility(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Admissibility(_) => "admissibility",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Admissibility(m) | CliError::Numerical(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

fn classify_metric(e: &MetricError) -> fn(String) -> CliError {
    match e {
        MetricError::Syntax(_)
        | MetricError::UnknownCatalog(_)
        | MetricError::MissingArgument { .. }
        | MetricError::TimeDependentMap(_)
        | MetricError::OutsideDomain(_)
        | MetricError::InsufficientSamples { .. } => CliError::Config,
        MetricError::NotAdmissible { .. } | MetricError::SingularMetric { .. } => CliError::Admissibility,
        MetricError::Eval(dirac_gauge::exprlang::EvalError::UnboundParameter(_)) => CliError::Config,
        _ => CliError::Numerical,
    }
}

fn classify_lorentz(e: &LorentzError) -> fn(String) -> CliError {
    match e {
        LorentzError::NotAdmissible { .. } => CliError::Admissibility,
        _ => CliError::Numerical,
    }
}

fn classify_clifford(e: &CliffordError) -> fn(String) -> CliError {
    match e {
        CliffordError::UnknownRepresentation(_) => CliError::Config,
        CliffordError::Lorentz(l) => classify_lorentz(l),
        _ => CliError::Numerical,
    }
}

fn classify_tetrad(e: &TetradError) -> fn(String) -> CliError {
    match e {
        // the chosen prescription does not apply to this metric
        TetradError::NotDiagonal { .. } => CliError::Config,
        TetradError::NotAdmissible { .. } => CliError::Admissibility,
        TetradError::Metric(m) => classify_metric(m),
        TetradError::Lorentz(l) => classify_lorentz(l),
        TetradError::Clifford(c) => classify_clifford(c),
        _ => CliError::Numerical,
    }
}

fn classify_dirac(e: &DiracError) -> fn(String) -> CliError {
    match e {
        DiracError::InvalidGrid(_) | DiracError::DimensionCap { .. } => CliError::Config,
        DiracError::Tetrad(t) => classify_tetrad(t),
        DiracError::Metric(m) => classify_metric(m),
        DiracError::Clifford(c) => classify_clifford(c),
        DiracError::Lorentz(l) => classify_lorentz(l),
        _ => CliError::Numerical,
    }
}

macro_rules! from_core {
    ($t:ty, $f:ident) => {
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                $f(&e)(e.to_string())
            }
        }
    };
}

from_core!(MetricError, classify_metric);
from_core!(LorentzError, classify_lorentz);
from_core!(CliffordError, classify_clifford);
from_core!(TetradError, classify_tetrad);
from_core!(DiracError, classify_dirac);
