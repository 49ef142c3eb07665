//! Experiment configuration: a TOML file with nested sections, checked
//! against the solver preconditions at load time.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use multifrac::fractional::TimeGrid;
use multifrac::operator::{assemble, Coefficient, DiscreteProblem, Grid1D, OrderSet, ProblemSpec};
use serde::Deserialize;

use crate::error::CliError;
use crate::expr::Expr;

/// A number or a constant expression such as "pi/2".
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

/// A coefficient given as a constant, an expression in x, or node values
/// interpolated linearly.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CoefficientSource {
    Number(f64),
    Expr(String),
    Table { x: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Picard,
    L1,
    Laplace,
    Spectral,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Picard => "picard",
            SolverKind::L1 => "l1",
            SolverKind::Laplace => "laplace",
            SolverKind::Spectral => "spectral",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub domain: [Scalar; 2],
    #[serde(default = "one")]
    pub diffusion: CoefficientSource,
    #[serde(default = "zero")]
    pub potential: CoefficientSource,
    #[serde(default = "zero")]
    pub convection: CoefficientSource,
    pub initial: CoefficientSource,
    pub orders: Vec<f64>,
    pub weights: Vec<CoefficientSource>,
}

fn one() -> CoefficientSource {
    CoefficientSource::Number(1.0)
}

fn zero() -> CoefficientSource {
    CoefficientSource::Number(0.0)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationSection {
    /// Interior space nodes.
    pub n: usize,
    /// Time steps.
    pub steps: usize,
    /// Grading exponent r of t_k = T(k/K)^r; 1 gives a uniform grid.
    pub grading: f64,
    pub t_end: f64,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        Self { n: 256, steps: 128, grading: 1.0, t_end: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub kind: SolverKind,
    /// Second solver for `crosscheck`.
    pub reference: SolverKind,
    /// Picard weighted tolerance.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Picard weight exponent γ.
    pub gamma: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { kind: SolverKind::Picard, reference: SolverKind::L1, tolerance: 1e-6, max_iter: 60, gamma: 0.5 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ContourSection {
    pub theta: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymptoticsSection {
    pub t_min: f64,
    pub t_max: f64,
    /// Geometrically spaced sample times.
    pub samples: usize,
}

impl Default for AsymptoticsSection {
    fn default() -> Self {
        Self { t_min: 1e2, t_max: 1e4, samples: 25 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InverseSection {
    /// CSV with columns t,u; synthesised from the problem's orders if absent.
    pub observation: Option<PathBuf>,
    /// Observation point, snapped to the nearest interior node.
    pub x0: Scalar,
    /// Starting orders; empty means the problem's orders lowered by 0.1.
    pub initial_orders: Vec<f64>,
    /// Synthetic observation: `samples` uniform times on (0, t_end].
    pub t_end: f64,
    pub samples: usize,
    pub misfit_tol: f64,
    pub max_iter: usize,
}

impl Default for InverseSection {
    fn default() -> Self {
        Self {
            observation: None,
            x0: Scalar::Expr("pi/2".into()),
            initial_orders: Vec::new(),
            t_end: 10.0,
            samples: 40,
            misfit_tol: 1e-6,
            max_iter: 60,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlSection {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for MlSection {
    fn default() -> Self {
        Self { alphas: vec![0.5, 0.8, 1.0], betas: vec![1.0], x_min: -30.0, x_max: 30.0, points: 61 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub problem: ProblemSection,
    #[serde(default)]
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub contour: Option<ContourSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub asymptotics: AsymptoticsSection,
    #[serde(default)]
    pub inverse: InverseSection,
    #[serde(default)]
    pub ml: MlSection,
}

/// A loaded and validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub raw: RawConfig,
    pub spec: ProblemSpec,
    pub grid: Grid1D,
    /// Directory of the config file, against which relative paths resolve.
    pub base: PathBuf,
}

fn invalid(field: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {why}"))
}

pub fn scalar(field: &str, s: &Scalar) -> Result<f64, CliError> {
    let v = match s {
        Scalar::Number(v) => *v,
        Scalar::Expr(src) => {
            let e = Expr::parse(src).map_err(|e| invalid(field, e))?;
            if e.uses_x() {
                return Err(invalid(field, "a constant cannot depend on x"));
            }
            e.eval(0.0)
        }
    };
    if !v.is_finite() {
        return Err(invalid(field, "not finite"));
    }
    Ok(v)
}

pub fn coefficient(field: &str, src: &CoefficientSource, domain: (f64, f64)) -> Result<Coefficient, CliError> {
    match src {
        CoefficientSource::Number(v) if v.is_finite() => Ok(Coefficient::constant(*v)),
        CoefficientSource::Number(_) => Err(invalid(field, "not finite")),
        CoefficientSource::Expr(s) => {
            let e = Expr::parse(s).map_err(|e| invalid(field, e))?;
            if !e.uses_x() {
                return Ok(Coefficient::constant(e.eval(0.0)));
            }
            Ok(Coefficient::function(move |x| e.eval(x)))
        }
        CoefficientSource::Table { x, values } => {
            if x.len() != values.len() || x.len() < 2 {
                return Err(invalid(field, "table needs matching x and values with at least two entries"));
            }
            if x.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
                return Err(invalid(field, "table x must be strictly increasing and values finite"));
            }
            if x[0] > domain.0 || x[x.len() - 1] < domain.1 {
                return Err(invalid(field, format!("table must cover the domain [{}, {}]", domain.0, domain.1)));
            }
            let (x, values) = (x.clone(), values.clone());
            Ok(Coefficient::function(move |t| {
                let k = x.partition_point(|&xi| xi <= t).clamp(1, x.len() - 1);
                let w = (t - x[k - 1]) / (x[k] - x[k - 1]);
                values[k - 1] + w * (values[k] - values[k - 1])
            }))
        }
    }
}

fn check_samples(field: &str, c: &Coefficient, grid: &Grid1D) -> Result<(), CliError> {
    let (lo, hi) = grid.bounds();
    let mut pts = vec![lo, hi];
    pts.extend_from_slice(grid.nodes());
    if let Some(x) = pts.iter().find(|&&x| !c.eval(x).is_finite()) {
        return Err(invalid(field, format!("not finite at x = {x}")));
    }
    Ok(())
}

impl Config {
    pub fn from_str(text: &str, base: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(format!("malformed config: {}", e.message())))?;
        Self::from_raw(raw, base)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, &base)
    }

    pub fn from_raw(raw: RawConfig, base: &Path) -> Result<Self, CliError> {
        let p = &raw.problem;
        let x_lo = scalar("problem.domain[0]", &p.domain[0])?;
        let x_hi = scalar("problem.domain[1]", &p.domain[1])?;
        if !(x_lo < x_hi) {
            return Err(invalid("problem.domain", format!("needs x_lo < x_hi, got [{x_lo}, {x_hi}]")));
        }
        let dom = (x_lo, x_hi);
        let orders = OrderSet::new(p.orders.clone()).map_err(|e| invalid("problem.orders", e))?;
        if p.weights.len() != orders.len() {
            return Err(invalid("problem.weights", format!("{} weights for {} orders", p.weights.len(), orders.len())));
        }
        let weights = p
            .weights
            .iter()
            .enumerate()
            .map(|(j, w)| coefficient(&format!("problem.weights[{j}]"), w, dom))
            .collect::<Result<Vec<_>, _>>()?;
        let spec = ProblemSpec {
            x_lo,
            x_hi,
            diffusion: coefficient("problem.diffusion", &p.diffusion, dom)?,
            potential: coefficient("problem.potential", &p.potential, dom)?,
            convection: coefficient("problem.convection", &p.convection, dom)?,
            weights,
            orders,
            initial: coefficient("problem.initial", &p.initial, dom)?,
        };

        let d = &raw.discretization;
        if d.n < 3 {
            return Err(invalid("discretization.n", format!("need at least 3 interior nodes, got {}", d.n)));
        }
        if d.steps < 2 {
            return Err(invalid("discretization.steps", format!("need at least 2 time steps, got {}", d.steps)));
        }
        if !(d.grading >= 1.0) || !d.grading.is_finite() {
            return Err(invalid("discretization.grading", format!("must be >= 1, got {}", d.grading)));
        }
        if !(d.t_end > 0.0) || !d.t_end.is_finite() {
            return Err(invalid("discretization.t_end", format!("must be positive, got {}", d.t_end)));
        }
        let grid = Grid1D::new(x_lo, x_hi, d.n).map_err(|e| invalid("discretization.n", e))?;
        spec.validate_on(&grid).map_err(|e| invalid("problem", e))?;
        check_samples("problem.diffusion", &spec.diffusion, &grid)?;
        check_samples("problem.potential", &spec.potential, &grid)?;
        check_samples("problem.convection", &spec.convection, &grid)?;
        check_samples("problem.initial", &spec.initial, &grid)?;
        for (j, w) in spec.weights.iter().enumerate() {
            check_samples(&format!("problem.weights[{j}]"), w, &grid)?;
        }

        let s = &raw.solver;
        if !(s.tolerance > 0.0) {
            return Err(invalid("solver.tolerance", "must be positive"));
        }
        if s.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be positive"));
        }
        if !(s.gamma >= 0.5 && s.gamma < 1.0) {
            return Err(invalid("solver.gamma", format!("must lie in [0.5, 1), got {}", s.gamma)));
        }
        if let Some(c) = &raw.contour {
            multifrac::forward::ContourSpec::new(c.theta, c.r_min, c.r_max, c.step).map_err(|e| invalid("contour", e))?;
        }

        let a = &raw.asymptotics;
        if !(a.t_min > 0.0 && a.t_min < a.t_max && a.t_max.is_finite()) || a.samples < 8 {
            return Err(invalid("asymptotics", "needs 0 < t_min < t_max and at least 8 samples"));
        }

        let inv = &raw.inverse;
        let x0 = scalar("inverse.x0", &inv.x0)?;
        if !(x0 > x_lo && x0 < x_hi) {
            return Err(invalid("inverse.x0", format!("must lie inside the domain, got {x0}")));
        }
        if !inv.initial_orders.is_empty() {
            OrderSet::new(inv.initial_orders.clone()).map_err(|e| invalid("inverse.initial_orders", e))?;
            if inv.initial_orders.len() != spec.orders.len() {
                return Err(invalid("inverse.initial_orders", format!("need {} orders", spec.orders.len())));
            }
        }
        if !(inv.t_end > 0.0) || inv.samples < 2 || !(inv.misfit_tol > 0.0) || inv.max_iter == 0 {
            return Err(invalid("inverse", "needs t_end > 0, samples >= 2, misfit_tol > 0 and max_iter > 0"));
        }
        if let Some(path) = &inv.observation {
            let full = base.join(path);
            if !full.is_file() {
                return Err(invalid("inverse.observation", format!("file {} does not exist", full.display())));
            }
        }

        let m = &raw.ml;
        if m.alphas.is_empty() || m.betas.is_empty() || m.points < 2 || !(m.x_min < m.x_max) {
            return Err(invalid("ml", "needs alphas, betas, x_min < x_max and at least 2 points"));
        }
        for &al in &m.alphas {
            for &be in &m.betas {
                multifrac::special::MLParams::new(al, be).map_err(|e| invalid("ml", e))?;
            }
        }

        Ok(Self { raw, spec, grid, base: base.to_path_buf() })
    }

    pub fn problem(&self) -> Result<DiscreteProblem, CliError> {
        Ok(assemble(&self.spec, &self.grid)?)
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        let d = &self.raw.discretization;
        Ok(if d.grading == 1.0 { TimeGrid::uniform(d.t_end, d.steps)? } else { TimeGrid::graded(d.t_end, d.steps, d.grading)? })
    }

    pub fn contour(&self, orders: &OrderSet, t_min: f64) -> Result<multifrac::forward::ContourSpec, CliError> {
        Ok(match &self.raw.contour {
            Some(c) => multifrac::forward::ContourSpec::new(c.theta, c.r_min, c.r_max, c.step)?,
            None => multifrac::forward::ContourSpec::default_for(orders, t_min)?,
        })
    }

    pub fn seed(&self, overridden: Option<u64>) -> u64 {
        overridden.or(self.raw.seed).unwrap_or(0)
    }

    pub fn x0(&self) -> f64 {
        scalar("inverse.x0", &self.raw.inverse.x0).unwrap_or(0.5 * PI)
    }

    pub fn initial_orders(&self) -> Result<OrderSet, CliError> {
        let v = &self.raw.inverse.initial_orders;
        if !v.is_empty() {
            return Ok(OrderSet::new(v.clone())?);
        }
        // keep the shifted orders strictly decreasing and positive
        let n = self.spec.orders.len();
        let lowered = self.spec.orders.alphas().iter().enumerate().map(|(j, a)| (a - 0.1).max(0.05 * (n - j) as f64 / n as f64)).collect();
        OrderSet::new(lowered).map_err(|e| invalid("inverse.initial_orders", e))
    }

    pub fn observation_path(&self) -> Option<PathBuf> {
        self.raw.inverse.observation.as_ref().map(|p| self.base.join(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BENCH: &str = r#"
seed = 5
[problem]
domain = [0, "pi"]
initial = "sin(x)"
orders = [0.8, 0.4]
weights = [1, "1 + x*(pi - x)/4"]
[discretization]
n = 32
"#;

    fn load(text: &str) -> Result<Config, CliError> {
        Config::from_str(text, Path::new("."))
    }

    #[test]
    fn loads_benchmark_with_defaults() {
        let c = load(BENCH).unwrap();
        assert_eq!(c.grid.n(), 32);
        assert_eq!(c.spec.x_hi, PI);
        assert_eq!(c.raw.discretization.steps, 128);
        assert_eq!(c.seed(None), 5);
        assert_eq!(c.seed(Some(9)), 9);
        assert!((c.spec.weights[1].eval(PI / 2.0) - (1.0 + PI * PI / 16.0)).abs() < 1e-15);
        assert!((c.x0() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_coefficient_interpolates() {
        let c = coefficient("t", &CoefficientSource::Table { x: vec![0.0, 1.0, 3.0], values: vec![0.0, 2.0, 0.0] }, (0.0, 3.0)).unwrap();
        assert_eq!(c.eval(0.5), 1.0);
        assert_eq!(c.eval(2.0), 1.0);
        assert_eq!(c.eval(3.0), 0.0);
        assert!(coefficient("t", &CoefficientSource::Table { x: vec![0.5, 1.0], values: vec![0.0, 1.0] }, (0.0, 1.0)).is_err());
    }

    fn expect_config_error(text: &str, needle: &str) {
        match load(text) {
            Err(CliError::Config(m)) => assert!(m.contains(needle), "{m}"),
            other => panic!("expected a config error naming {needle}, got {other:?}"),
        }
    }

    #[test]
    fn violations_are_named() {
        expect_config_error("[problem\n", "malformed");
        expect_config_error(&BENCH.replace("orders = [0.8, 0.4]", "orders = [0.4, 0.8]"), "problem.orders");
        expect_config_error(&BENCH.replace("weights = [1,", "weights = [2,"), "problem");
        expect_config_error(&BENCH.replace("\"sin(x)\"", "\"sin(y)\""), "problem.initial");
        expect_config_error(&BENCH.replace("n = 32", "n = 32\ngrading = 0.5"), "discretization.grading");
        expect_config_error(&BENCH.replace("n = 32", "n = 32\nbogus = 1"), "malformed");
        expect_config_error(&format!("{BENCH}\n[inverse]\nobservation = \"missing.csv\"\n"), "inverse.observation");
        expect_config_error(&format!("{BENCH}\n[inverse]\nx0 = 4.0\n"), "inverse.x0");
        expect_config_error(&format!("{BENCH}\n[solver]\ngamma = 1.2\n"), "solver.gamma");
        expect_config_error(&BENCH.replace("[0, \"pi\"]", "[1, 0]"), "problem.domain");
        expect_config_error(&BENCH.replace("initial = \"sin(x)\"", "initial = \"1/(x - x)\""), "problem.initial");
    }
}
