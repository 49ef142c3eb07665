//! Recovering the orders from one interior observation: Laplace transforms
//! of sampled data, the weight Q₁(x; s), the discriminator
//! w(s) = s(û − ũ̂)/Σ|s^{α_j} − s^{α̃_j}| and its limit w₀ = (𝒜 − b)⁻¹(q_{j₀}a),
//! plus a least-squares order estimator on top of the contour solver.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::forward::{laplace_solve_at, laplace_transform, ContourSpec, Field};
use crate::operator::{DiscreteProblem, Grid1D, OrderSet};
use crate::quadrature::integrate;

/// Samples u(x₀, t_k) at one interior node.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    node: usize,
    x0: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Observation {
    pub fn new(grid: &Grid1D, node: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if node >= grid.n() {
            return Err(Error::Domain(format!("node {node} is not one of the {} interior nodes", grid.n())));
        }
        check_len(times.len(), values.len())?;
        if times.len() < 2 {
            return Err(Error::Domain("an observation needs at least two samples".into()));
        }
        if !(times[0] >= 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) || !times[times.len() - 1].is_finite() {
            return Err(Error::Domain("observation times must be nonnegative, finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("observation values must be finite".into()));
        }
        Ok(Self { node, x0: grid.nodes()[node], times, values })
    }

    pub fn from_field(field: &Field, node: usize) -> Result<Self> {
        if node >= field.grid().n() {
            return Err(Error::Domain(format!("node {node} is not one of the {} interior nodes", field.grid().n())));
        }
        Self::new(field.grid(), node, field.times().to_vec(), field.node_series(node))
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// u(t) ≈ coefficient · t^{−exponent} fitted on the last samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTail {
    pub coefficient: f64,
    pub exponent: f64,
    /// RMS deviation of the log-log fit.
    pub residual: f64,
}

impl PowerTail {
    /// ∫_T^∞ c t^{−p} e^{−st} dt by adaptive quadrature in ln(t/T).
    pub fn integral(&self, t_end: f64, s: f64) -> f64 {
        let (c, p) = (self.coefficient, self.exponent);
        let st = s * t_end;
        let upper = (60.0 / st).ln().max(0.0) + 2.0;
        let f = |u: f64| c * t_end.powf(1.0 - p) * ((1.0 - p) * u - st * u.exp()).exp();
        let rough = integrate(f, 0.0, upper, 1e-6 * c.abs() * t_end).value;
        integrate(f, 0.0, upper, 1e-14 * rough.abs().max(f64::MIN_POSITIVE)).value
    }
}

/// ∫₀^∞ u e^{−st} dt split into its pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceEstimate {
    pub value: f64,
    /// Exact integral of the piecewise-linear interpolant over the samples,
    /// with u held at its first value on [0, t₀].
    pub body: f64,
    pub tail: f64,
    /// None when the tail beyond T is negligible at this s.
    pub tail_model: Option<PowerTail>,
}

const TAIL_FIT_RESIDUAL: f64 = 0.05;
const TAIL_NEGLIGIBLE: f64 = 1e-12;

/// (1 − e^{−x})/x and (1 − (1 + x)e^{−x})/x², the moments ∫₀¹ σ^m e^{−xσ} dσ.
fn exp_moments(x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (1.0, 0.5);
    }
    let phi1 = -(-x).exp_m1() / x;
    let phi2 = if x < 1.0 {
        let mut term = 1.0;
        let mut sum = 0.5;
        for k in 1..24 {
            term *= -x / k as f64;
            sum += term / (k + 2) as f64;
        }
        sum
    } else {
        (1.0 - (1.0 + x) * (-x).exp()) / (x * x)
    };
    (phi1, phi2)
}

fn fit_power_tail(times: &[f64], values: &[f64]) -> Option<PowerTail> {
    let t_end = *times.last()?;
    let mut idx: Vec<usize> = (0..times.len()).filter(|&k| times[k] > 0.0 && times[k] >= 0.5 * t_end).collect();
    if idx.len() < 4 {
        let positive: Vec<usize> = (0..times.len()).filter(|&k| times[k] > 0.0).collect();
        idx = positive[positive.len().saturating_sub(4)..].to_vec();
    }
    if idx.len() < 4 {
        return None;
    }
    let sign = values[idx[0]].signum();
    if sign == 0.0 || idx.iter().any(|&k| values[k].signum() != sign || values[k] == 0.0) {
        return None;
    }
    let xs: Vec<f64> = idx.iter().map(|&k| times[k].ln()).collect();
    let ys: Vec<f64> = idx.iter().map(|&k| values[k].abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    Some(PowerTail { coefficient: sign * intercept.exp(), exponent: -slope, residual })
}

/// Laplace transform of the sampled series at real s > 0: exact
/// integration of the piecewise-linear interpolant, plus a power-law tail
/// fitted to the samples in [T/2, T] when e^{−sT} does not already make
/// the remainder negligible.
pub fn observation_laplace(obs: &Observation, s: f64) -> Result<LaplaceEstimate> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("Laplace variable must be positive, got {s}")));
    }
    let (ts, us) = (&obs.times, &obs.values);
    let mut body = us[0] * (-(-s * ts[0]).exp_m1()) / s;
    for k in 0..ts.len() - 1 {
        let dt = ts[k + 1] - ts[k];
        let (phi1, phi2) = exp_moments(s * dt);
        body += (-s * ts[k]).exp() * dt * (us[k] * phi1 + (us[k + 1] - us[k]) * phi2);
    }
    let t_end = ts[ts.len() - 1];
    let crude = us[us.len() - 1].abs() * (-s * t_end).exp() / s;
    if crude <= TAIL_NEGLIGIBLE * body.abs().max(f64::MIN_POSITIVE) {
        return Ok(LaplaceEstimate { value: body, body, tail: 0.0, tail_model: None });
    }
    let model =
        fit_power_tail(ts, us).ok_or_else(|| Error::Tail("the last samples change sign or are too few for a power-law tail".into()))?;
    if model.residual > TAIL_FIT_RESIDUAL {
        return Err(Error::Tail(format!("power-law tail fit residual {:.3e} exceeds {TAIL_FIT_RESIDUAL}", model.residual)));
    }
    let tail = model.integral(t_end, s);
    Ok(LaplaceEstimate { value: body + tail, body, tail, tail_model: Some(model) })
}

/// Two order sets of equal length, ordered so that α_{j₀} < α̃_{j₀} at the
/// largest index j₀ where they differ.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderPair {
    pub first: OrderSet,
    pub second: OrderSet,
    /// Zero-based index j₀.
    pub j0: usize,
    /// True when the inputs were exchanged to reach α_{j₀} < α̃_{j₀}.
    pub swapped: bool,
}

impl OrderPair {
    pub fn new(a: &OrderSet, b: &OrderSet) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Spec(format!("order sets have different lengths {} and {}", a.len(), b.len())));
        }
        let j0 =
            (0..a.len()).rev().find(|&j| a.alphas()[j] != b.alphas()[j]).ok_or_else(|| Error::Degenerate("identical order sets".into()))?;
        let swapped = a.alphas()[j0] > b.alphas()[j0];
        let (first, second) = if swapped { (b.clone(), a.clone()) } else { (a.clone(), b.clone()) };
        Ok(Self { first, second, j0, swapped })
    }

    /// Σ_j |s^{α_j} − s^{α̃_j}|.
    pub fn denominator(&self, s: f64) -> f64 {
        self.first.alphas().iter().zip(self.second.alphas()).map(|(a, b)| (s.powf(*a) - s.powf(*b)).abs()).sum()
    }

    /// A_j(s) = (s^{α_j} − s^{α̃_j})/(s^{α_{j₀}} − s^{α̃_{j₀}}) for j < j₀.
    pub fn ratios(&self, s: f64) -> Vec<f64> {
        let (a, b) = (self.first.alphas(), self.second.alphas());
        let pivot = s.powf(a[self.j0]) - s.powf(b[self.j0]);
        (0..self.j0).map(|j| (s.powf(a[j]) - s.powf(b[j])) / pivot).collect()
    }
}

fn check_unit_interval(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s must lie in (0, 1), got {s}")));
    }
    Ok(())
}

/// Q₁(x; s) = Σ q_j(x)(s^{α_j} − s^{α̃_j}) / Σ|s^{α_j} − s^{α̃_j}| with the
/// pair oriented as in [`OrderPair`], so the limit s → 0+ is q_{j₀}(x).
/// `q` holds q_j(x) at one point.
pub fn q1_weight(orders_a: &OrderSet, orders_b: &OrderSet, q: &[f64], s: f64) -> Result<f64> {
    let pair = OrderPair::new(orders_a, orders_b)?;
    check_len(pair.first.len(), q.len())?;
    check_unit_interval(s)?;
    Ok(q1_of(&pair, q, s))
}

fn q1_of(pair: &OrderPair, q: &[f64], s: f64) -> f64 {
    let num: f64 = pair.first.alphas().iter().zip(pair.second.alphas()).zip(q).map(|((a, b), qj)| qj * (s.powf(*a) - s.powf(*b))).sum();
    num / pair.denominator(s)
}

/// w(x₀; s) and Q₁(x₀; s) along a decreasing sequence of s.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorTrace {
    pub node: usize,
    pub j0: usize,
    pub swapped: bool,
    pub s_values: Vec<f64>,
    pub w_values: Vec<f64>,
    pub q1_values: Vec<f64>,
}

impl DiscriminatorTrace {
    /// w at the smallest s.
    pub fn limit(&self) -> f64 {
        self.w_values[self.w_values.len() - 1]
    }
}

fn check_s_grid(s_grid: &[f64]) -> Result<()> {
    if s_grid.is_empty() {
        return Err(Error::Domain("empty s grid".into()));
    }
    for &s in s_grid {
        check_unit_interval(s)?;
    }
    if s_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("s grid must be strictly decreasing".into()));
    }
    Ok(())
}

fn with_orders(problem: &DiscreteProblem, orders: &OrderSet) -> Result<DiscreteProblem> {
    check_len(problem.weights.len(), orders.len())?;
    let mut p = problem.clone();
    p.orders = orders.clone();
    Ok(p)
}

/// s(û − ũ̂)(x₀)/Σ|s^{α_j} − s^{α̃_j}| from exact Laplace-domain solves at
/// real s, û belonging to the set with the smaller α_{j₀}.
pub fn discriminator(
    problem: &DiscreteProblem,
    orders_a: &OrderSet,
    orders_b: &OrderSet,
    node: usize,
    s_grid: &[f64],
) -> Result<DiscriminatorTrace> {
    let pair = OrderPair::new(orders_a, orders_b)?;
    check_s_grid(s_grid)?;
    if node >= problem.n() {
        return Err(Error::Domain(format!("node {node} is not one of the {} interior nodes", problem.n())));
    }
    problem.check_sign_hypotheses()?;
    let pa = with_orders(problem, &pair.first)?;
    let pb = with_orders(problem, &pair.second)?;
    let q: Vec<f64> = problem.weights.iter().map(|w| w[node]).collect();
    let mut w_values = Vec::with_capacity(s_grid.len());
    let mut q1_values = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let z = Complex64::new(s, 0.0);
        let ua = laplace_transform(&pa, z)?[node].re;
        let ub = laplace_transform(&pb, z)?[node].re;
        w_values.push(s * (ua - ub) / pair.denominator(s));
        q1_values.push(q1_of(&pair, &q, s));
    }
    Ok(DiscriminatorTrace { node, j0: pair.j0, swapped: pair.swapped, s_values: s_grid.to_vec(), w_values, q1_values })
}

/// The same quotient built from time-domain observations through
/// [`observation_laplace`]; `q` holds q_j(x₀).
pub fn discriminator_from_observations(
    obs_a: &Observation,
    obs_b: &Observation,
    orders_a: &OrderSet,
    orders_b: &OrderSet,
    q: &[f64],
    s_grid: &[f64],
) -> Result<DiscriminatorTrace> {
    let pair = OrderPair::new(orders_a, orders_b)?;
    check_len(pair.first.len(), q.len())?;
    check_s_grid(s_grid)?;
    if obs_a.node != obs_b.node {
        return Err(Error::Spec(format!("observations at different nodes {} and {}", obs_a.node, obs_b.node)));
    }
    let (oa, ob) = if pair.swapped { (obs_b, obs_a) } else { (obs_a, obs_b) };
    let mut w_values = Vec::with_capacity(s_grid.len());
    let mut q1_values = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let ua = observation_laplace(oa, s)?.value;
        let ub = observation_laplace(ob, s)?.value;
        w_values.push(s * (ua - ub) / pair.denominator(s));
        q1_values.push(q1_of(&pair, q, s));
    }
    Ok(DiscriminatorTrace { node: obs_a.node, j0: pair.j0, swapped: pair.swapped, s_values: s_grid.to_vec(), w_values, q1_values })
}

/// w₀ solving (𝒜_h − b) w₀ = a·q_{j₀} with Dirichlet data; `j0` is zero-based.
pub fn reference_w0(problem: &DiscreteProblem, j0: usize) -> Result<Vec<f64>> {
    let q = problem.weights.get(j0).ok_or_else(|| Error::Domain(format!("index {j0} outside the {} weights", problem.weights.len())))?;
    if let Some(b) = problem.potential.iter().find(|&&b| b > 0.0) {
        return Err(Error::Spec(format!("potential must be nonpositive, found {b}")));
    }
    let rhs: Vec<f64> = problem.initial.iter().zip(q).map(|(a, q)| a * q).collect();
    problem.solve_elliptic(&rhs)
}

/// s = 10^{−k} for k = first..=last.
pub fn decade_grid(first: i32, last: i32) -> Vec<f64> {
    (first..=last).map(|k| 10f64.powi(-k)).collect()
}

/// Order pairs of length two with orders in [0.2, 0.95], gaps α₁ − α₂ ≥ 0.35
/// within each set, and every differing order moved by at least 0.1. Each
/// pair changes α₂ only, α₁ only, or both.
pub fn random_order_pairs<R: Rng>(rng: &mut R, count: usize) -> Vec<(OrderSet, OrderSet)> {
    const LO: f64 = 0.2;
    const HI: f64 = 0.95;
    const GAP: f64 = 0.35;
    let admissible = |a1: f64, a2: f64| a2 >= LO && a1 <= HI && a1 - a2 >= GAP;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a2 = rng.gen_range(LO..HI - GAP);
        let a1 = rng.gen_range(a2 + GAP..HI);
        let shift = |r: &mut R| {
            let d = r.gen_range(0.1..0.3);
            if r.gen_bool(0.5) {
                d
            } else {
                -d
            }
        };
        let (b1, b2) = match rng.gen_range(0..3) {
            0 => (a1, a2 + shift(rng)),
            1 => (a1 + shift(rng), a2),
            _ => (a1 + shift(rng), a2 + shift(rng)),
        };
        if admissible(b1, b2) {
            if let (Ok(a), Ok(b)) = (OrderSet::new(vec![a1, a2]), OrderSet::new(vec![b1, b2])) {
                out.push((a, b));
            }
        }
    }
    out
}

/// Settings of [`estimate_orders`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub max_iter: usize,
    /// Relative RMS misfit below which the orders count as identified.
    pub misfit_tol: f64,
    /// Central-difference step in the unconstrained parameters.
    pub fd_step: f64,
    /// Contour for the forward model; by default chosen per candidate.
    pub contour: Option<ContourSpec>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { max_iter: 60, misfit_tol: 1e-6, fd_step: 1e-5, contour: None }
    }
}

/// Fitted orders with diagnostics.
#[derive(Debug, Clone)]
pub struct OrderEstimate {
    pub orders: OrderSet,
    /// Relative RMS misfit ‖u_model − obs‖/‖obs‖ over the samples used.
    pub misfit: f64,
    pub iterations: usize,
    pub identified: bool,
    /// The initial data change sign, outside the uniqueness hypotheses.
    pub sign_changing_initial: bool,
    pub warnings: Vec<String>,
    /// Discriminator between the fitted and the initial orders, if they differ.
    pub trace: Option<DiscriminatorTrace>,
    pub history: Vec<f64>,
}

fn logistic(p: f64) -> f64 {
    1.0 / (1.0 + (-p).exp())
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

/// α₁ = σ(p₁), α_j = α_{j−1}σ(p_j): every parameter vector is a strictly
/// decreasing order set in (0, 1).
fn orders_from(params: &[f64]) -> Result<OrderSet> {
    let mut alphas = Vec::with_capacity(params.len());
    let mut prev = 1.0;
    for &p in params {
        prev *= logistic(p);
        alphas.push(prev);
    }
    OrderSet::new(alphas)
}

fn params_from(orders: &OrderSet) -> Vec<f64> {
    let mut prev = 1.0;
    orders
        .alphas()
        .iter()
        .map(|&a| {
            let p = logit(a / prev);
            prev = a;
            p
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c] == 0.0 {
            return None;
        }
        m.swap(c, piv);
        b.swap(c, piv);
        let (top, rest) = m.split_at_mut(c + 1);
        let pivot = &top[c];
        for (i, row) in rest.iter_mut().enumerate() {
            let r = c + 1 + i;
            let f = row[c] / pivot[c];
            for (x, p) in row[c..].iter_mut().zip(&pivot[c..]) {
                *x -= f * p;
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

struct Misfit<'a> {
    problem: &'a DiscreteProblem,
    node: usize,
    times: Vec<f64>,
    data: Vec<f64>,
    contour: Option<ContourSpec>,
}

impl Misfit<'_> {
    fn model(&self, orders: &OrderSet) -> Result<Vec<f64>> {
        let p = with_orders(self.problem, orders)?;
        let contour = match &self.contour {
            Some(c) => c.clone(),
            None => ContourSpec::default_for(orders, self.times[0])?,
        };
        laplace_solve_at(&p, &contour, &self.times, self.node)
    }

    fn residual(&self, params: &[f64]) -> Result<Vec<f64>> {
        let m = self.model(&orders_from(params)?)?;
        Ok(m.iter().zip(&self.data).map(|(a, b)| a - b).collect())
    }

    fn cost(r: &[f64]) -> f64 {
        r.iter().map(|v| v * v).sum()
    }
}

/// Relative RMS misfit of the contour model with the given orders against
/// the observation (samples at t = 0 are skipped).
pub fn order_misfit(obs: &Observation, problem: &DiscreteProblem, orders: &OrderSet, contour: Option<&ContourSpec>) -> Result<f64> {
    let m = misfit_setup(obs, problem, contour)?;
    let r = m.residual(&params_from(orders))?;
    Ok((Misfit::cost(&r) / Misfit::cost(&m.data)).sqrt())
}

fn misfit_setup<'a>(obs: &Observation, problem: &'a DiscreteProblem, contour: Option<&ContourSpec>) -> Result<Misfit<'a>> {
    if obs.node >= problem.n() {
        return Err(Error::Domain(format!("node {} is not one of the {} interior nodes", obs.node, problem.n())));
    }
    let keep: Vec<usize> = (0..obs.times.len()).filter(|&k| obs.times[k] > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::Domain("no observation samples at positive times".into()));
    }
    let times: Vec<f64> = keep.iter().map(|&k| obs.times[k]).collect();
    let data: Vec<f64> = keep.iter().map(|&k| obs.values[k]).collect();
    if Misfit::cost(&data) == 0.0 {
        return Err(Error::Degenerate("observation vanishes identically".into()));
    }
    Ok(Misfit { problem, node: obs.node, times, data, contour: contour.cloned() })
}

/// Least-squares fit of ℓ = init.len() orders to the observation by
/// Levenberg-Marquardt with a central-difference Jacobian. The forward
/// model is the contour inversion at the observed node, using the known
/// coefficients of `problem` (its own orders are ignored). Stagnation above
/// the misfit tolerance is reported through `identified` and `warnings`.
pub fn estimate_orders(obs: &Observation, problem: &DiscreteProblem, init: &OrderSet, opts: &EstimateOptions) -> Result<OrderEstimate> {
    let ell = init.len();
    check_len(problem.weights.len(), ell)?;
    let setup = misfit_setup(obs, problem, opts.contour.as_ref())?;
    let scale = Misfit::cost(&setup.data);
    let mut warnings = Vec::new();
    let sign_changing_initial = problem.initial.iter().any(|&a| a > 0.0) && problem.initial.iter().any(|&a| a < 0.0);
    if sign_changing_initial {
        warnings.push("initial data change sign: the observation is outside the class where the orders are known to be unique".into());
    }

    let mut params = params_from(init);
    let mut r = setup.residual(&params)?;
    let mut cost = Misfit::cost(&r);
    let mut history = vec![(cost / scale).sqrt()];
    let mut mu = 1e-3;
    let mut iterations = 0;
    let h = opts.fd_step;
    while iterations < opts.max_iter && (cost / scale).sqrt() > 1e-3 * opts.misfit_tol {
        iterations += 1;
        let mut jac = vec![vec![0.0; r.len()]; ell];
        let mut failed = None;
        for j in 0..ell {
            let mut up = params.clone();
            let mut down = params.clone();
            up[j] += h;
            down[j] -= h;
            match (setup.residual(&up), setup.residual(&down)) {
                (Ok(ru), Ok(rd)) => {
                    for k in 0..r.len() {
                        jac[j][k] = (ru[k] - rd[k]) / (2.0 * h);
                    }
                }
                (Err(e), _) | (_, Err(e)) => failed = Some(e),
            }
        }
        if let Some(e) = failed {
            warnings.push(format!("forward model failed next to the current iterate ({e}); optimisation stopped"));
            break;
        }
        let jtj: Vec<Vec<f64>> =
            (0..ell).map(|a| (0..ell).map(|b| jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum()).collect()).collect();
        let jtr: Vec<f64> = (0..ell).map(|a| jac[a].iter().zip(&r).map(|(x, y)| x * y).sum()).collect();
        let mut accepted = false;
        for _ in 0..12 {
            let mut m = jtj.clone();
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += mu * jtj[a][a].max(f64::MIN_POSITIVE);
            }
            let Some(step) = solve_dense(m, jtr.iter().map(|v| -v).collect()) else {
                mu *= 4.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(&step).map(|(p, d)| p + d).collect();
            let trial_r = match setup.residual(&trial) {
                Ok(v) => v,
                Err(_) => {
                    mu *= 4.0;
                    continue;
                }
            };
            let trial_cost = Misfit::cost(&trial_r);
            if trial_cost < cost {
                let small = step.iter().all(|d| d.abs() < 1e-12);
                let gain = (cost - trial_cost) / cost;
                params = trial;
                r = trial_r;
                cost = trial_cost;
                mu = (mu / 3.0).max(1e-12);
                accepted = !(small || gain < 1e-12);
                break;
            }
            mu *= 4.0;
        }
        history.push((cost / scale).sqrt());
        if !accepted {
            break;
        }
    }

    let orders = orders_from(&params)?;
    let misfit = (cost / scale).sqrt();
    let identified = misfit <= opts.misfit_tol;
    if !identified {
        warnings.push(format!(
            "optimizer stagnated at relative misfit {misfit:.3e} above the tolerance {:.1e}: orders not identified",
            opts.misfit_tol
        ));
    }
    let trace = match OrderPair::new(&orders, init) {
        Ok(_) if !sign_changing_initial && problem.initial.iter().any(|&a| a != 0.0) => {
            discriminator(problem, &orders, init, obs.node, &decade_grid(2, 8)).ok()
        }
        _ => None,
    };
    Ok(OrderEstimate { orders, misfit, iterations, identified, sign_changing_initial, warnings, trace, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{assemble, Coefficient, ProblemSpec};
    use crate::special::upper_incomplete_gamma;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn q2(x: f64) -> f64 {
        1.0 + x * (PI - x) / 4.0
    }

    fn problem(orders: Vec<f64>, weights: Vec<Coefficient>, a: Coefficient, n: usize) -> DiscreteProblem {
        let s = ProblemSpec::new(0.0, PI, OrderSet::new(orders).unwrap(), weights, a).unwrap();
        assemble(&s, &Grid1D::for_spec(&s, n).unwrap()).unwrap()
    }

    fn benchmark(n: usize, a: Coefficient) -> DiscreteProblem {
        problem(vec![0.8, 0.4], vec![1.0.into(), Coefficient::function(q2)], a, n)
    }

    fn set(v: &[f64]) -> OrderSet {
        OrderSet::new(v.to_vec()).unwrap()
    }

    fn uniform_times(t_end: f64, k: usize) -> Vec<f64> {
        (1..=k).map(|i| t_end * i as f64 / k as f64).collect()
    }

    #[test]
    fn laplace_of_exponential() {
        let grid = Grid1D::new(0.0, 1.0, 3).unwrap();
        let ts: Vec<f64> = (0..=20000).map(|i| 40.0 * i as f64 / 20000.0).collect();
        let us: Vec<f64> = ts.iter().map(|t| (-t).exp()).collect();
        let obs = Observation::new(&grid, 1, ts, us).unwrap();
        for s in [0.5, 1.0, 3.0] {
            let e = observation_laplace(&obs, s).unwrap();
            assert!(e.tail_model.is_none());
            assert!((e.value - 1.0 / (1.0 + s)).abs() < 1e-6, "s = {s}: {}", e.value);
        }
        assert!(matches!(observation_laplace(&obs, 0.0), Err(Error::Domain(_))));
        assert!(matches!(observation_laplace(&obs, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn exp_moments_are_continuous_across_the_switch() {
        let (a1, a2) = exp_moments(1.0 - 1e-12);
        let (b1, b2) = exp_moments(1.0);
        assert!((a1 - b1).abs() < 1e-12 && (a2 - b2).abs() < 1e-12);
        let (c1, c2) = exp_moments(1e-9);
        assert!((c1 - 1.0).abs() < 1e-8 && (c2 - 0.5).abs() < 1e-8);
    }

    #[test]
    fn power_tail_matches_incomplete_gamma() {
        let grid = Grid1D::new(0.0, 1.0, 3).unwrap();
        let ts: Vec<f64> = (0..=900).map(|i| 1.0 + 0.01 * i as f64).collect();
        let us: Vec<f64> = ts.iter().map(|t| t.powf(-0.4)).collect();
        let obs = Observation::new(&grid, 1, ts, us).unwrap();
        for s in [1e-3, 1e-2, 0.1, 1.0] {
            let e = observation_laplace(&obs, s).unwrap();
            let m = e.tail_model.unwrap();
            assert!((m.exponent - 0.4).abs() < 1e-12 && (m.coefficient - 1.0).abs() < 1e-12);
            // ∫_T^∞ t^{−p} e^{−st} dt = s^{p−1} Γ(1−p, sT)
            let exact = s.powf(-0.6) * upper_incomplete_gamma(0.6, 10.0 * s).unwrap();
            assert!((e.tail - exact).abs() <= 1e-6 * exact, "s = {s}: {} vs {exact}", e.tail);
        }
    }

    #[test]
    fn power_tail_with_exponent_above_one() {
        let m = PowerTail { coefficient: 2.0, exponent: 1.7, residual: 0.0 };
        // Γ(−0.7, x) = (Γ(0.3, x) − x^{−0.7}e^{−x})/(−0.7)
        for s in [1e-2, 0.3] {
            let x = 5.0 * s;
            let g = (upper_incomplete_gamma(0.3, x).unwrap() - x.powf(-0.7) * (-x).exp()) / -0.7;
            let exact = 2.0 * s.powf(0.7) * g;
            assert!((m.integral(5.0, s) - exact).abs() <= 1e-9 * exact.abs());
        }
    }

    #[test]
    fn tail_errors_when_fit_fails() {
        let grid = Grid1D::new(0.0, 1.0, 3).unwrap();
        let ts: Vec<f64> = (0..=100).map(|i| 0.1 * i as f64).collect();
        let us: Vec<f64> = ts.iter().map(|t| (3.0 * t).cos()).collect();
        let obs = Observation::new(&grid, 1, ts, us).unwrap();
        assert!(matches!(observation_laplace(&obs, 0.01), Err(Error::Tail(_))));
        // negligible tail needs no model
        assert!(observation_laplace(&obs, 20.0).is_ok());
    }

    #[test]
    fn observation_validation() {
        let grid = Grid1D::new(0.0, 1.0, 3).unwrap();
        assert!(Observation::new(&grid, 3, vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Observation::new(&grid, 0, vec![1.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(Observation::new(&grid, 0, vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
        assert!(Observation::new(&grid, 0, vec![0.0, 1.0], vec![1.0]).is_err());
        let o = Observation::new(&grid, 1, vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(o.x0(), grid.nodes()[1]);
    }

    #[test]
    fn q1_single_term_is_one() {
        for s in [0.9, 0.5, 1e-3, 1e-8] {
            assert_eq!(q1_weight(&set(&[0.5]), &set(&[0.7]), &[1.0], s).unwrap(), 1.0);
            // orientation makes the limit +q regardless of argument order
            assert_eq!(q1_weight(&set(&[0.7]), &set(&[0.5]), &[1.0], s).unwrap(), 1.0);
        }
    }

    #[test]
    fn q1_errors() {
        assert!(matches!(q1_weight(&set(&[0.8, 0.4]), &set(&[0.8, 0.4]), &[1.0, 1.0], 0.1), Err(Error::Degenerate(_))));
        assert!(matches!(q1_weight(&set(&[0.8, 0.4]), &set(&[0.8, 0.5]), &[1.0, 1.0], 1.0), Err(Error::Domain(_))));
        assert!(q1_weight(&set(&[0.8, 0.4]), &set(&[0.5]), &[1.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn ratio_cases_vanish() {
        // (i) α₁ > α̃₁, (ii) α₁ = α̃₁, (iii) α₁ < α̃₁; all with α₂ < α̃₂
        let cases = [([0.9, 0.3], [0.7, 0.4]), ([0.8, 0.3], [0.8, 0.4]), ([0.7, 0.3], [0.9, 0.4])];
        for (a, b) in cases {
            let pair = OrderPair::new(&set(&a), &set(&b)).unwrap();
            assert_eq!(pair.j0, 1);
            assert!(!pair.swapped);
            let r6 = pair.ratios(1e-6)[0].abs();
            let r2 = pair.ratios(1e-2)[0].abs();
            assert!(r6 < 1e-2, "{a:?} {b:?}: {r6}");
            assert!(r6 <= 0.1 * r2);
        }
        let same = OrderPair::new(&set(&[0.8, 0.3]), &set(&[0.8, 0.4])).unwrap();
        assert_eq!(same.ratios(0.5)[0], 0.0);
    }

    #[test]
    fn q1_limit_is_monotone_for_the_bank() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x0 = PI / 2.0;
        let q = [1.0, q2(x0)];
        for (a, b) in random_order_pairs(&mut rng, 20) {
            let pair = OrderPair::new(&a, &b).unwrap();
            let target = q[pair.j0];
            let errs: Vec<f64> = decade_grid(2, 8).iter().map(|&s| (q1_weight(&a, &b, &q, s).unwrap() - target).abs()).collect();
            assert!(errs[errs.len() - 1] <= 0.02, "{a:?} {b:?}: {errs:?}");
            assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-14), "{a:?} {b:?}: {errs:?}");
        }
    }

    #[test]
    fn bank_respects_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs = random_order_pairs(&mut rng, 200);
        let mut kinds = [0usize; 3];
        for (a, b) in &pairs {
            for s in [a, b] {
                let v = s.alphas();
                assert!(v[1] >= 0.2 && v[0] <= 0.95 && v[0] - v[1] >= 0.35);
            }
            let d: Vec<f64> = a.alphas().iter().zip(b.alphas()).map(|(x, y)| (x - y).abs()).collect();
            assert!(d.iter().all(|&v| v == 0.0 || v >= 0.1));
            kinds[(d[0] > 0.0) as usize + 2 * (d[1] > 0.0) as usize - 1] += 1;
        }
        assert!(kinds.iter().all(|&k| k > 0), "{kinds:?}");
    }

    #[test]
    fn w0_of_laplacian_eigenfunction() {
        let p = problem(vec![0.5], vec![1.0.into()], Coefficient::function(f64::sin), 256);
        let w = reference_w0(&p, 0).unwrap();
        let err = p.grid.nodes().iter().zip(&w).map(|(x, w)| (w - x.sin()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
        let z = problem(vec![0.5], vec![1.0.into()], Coefficient::constant(0.0), 64);
        assert!(reference_w0(&z, 0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn w0_is_positive_for_nonnegative_data() {
        let p = benchmark(256, Coefficient::function(f64::sin));
        for j in 0..2 {
            let w = reference_w0(&p, j).unwrap();
            assert!(w.iter().all(|&v| v > 0.0));
        }
        let bump = benchmark(128, Coefficient::function(|x| if (1.0..1.5).contains(&x) { 1.0 } else { 0.0 }));
        assert!(reference_w0(&bump, 1).unwrap().iter().all(|&v| v > 0.0));
        assert!(reference_w0(&p, 2).is_err());
    }

    #[test]
    fn discriminator_limit_matches_w0() {
        let p = benchmark(256, Coefficient::function(f64::sin));
        let node = p.grid.nearest(PI / 2.0);
        let tr = discriminator(&p, &set(&[0.8, 0.4]), &set(&[0.8, 0.5]), node, &decade_grid(1, 6)).unwrap();
        assert_eq!(tr.j0, 1);
        let w0 = reference_w0(&p, tr.j0).unwrap()[node];
        assert!(w0 > 0.0);
        assert!((tr.limit() - w0).abs() <= 0.05 * w0, "{} vs {w0}", tr.limit());
        // Q₁ is exactly q₂ when only α₂ differs
        assert!(tr.q1_values.iter().all(|q| (q - q2(p.grid.nodes()[node])).abs() < 1e-12));
        // the approach tightens as s decreases
        let errs: Vec<f64> = tr.w_values.iter().map(|w| (w - w0).abs()).collect();
        assert!(errs[errs.len() - 1] < errs[0]);
    }

    #[test]
    fn discriminator_sign_follows_data() {
        let neg = benchmark(128, Coefficient::function(|x| -x.sin()));
        let node = neg.grid.nearest(PI / 3.0);
        let tr = discriminator(&neg, &set(&[0.8, 0.4]), &set(&[0.8, 0.5]), node, &decade_grid(2, 8)).unwrap();
        assert!(tr.limit() < 0.0);
        let zero = benchmark(64, Coefficient::constant(0.0));
        let tr = discriminator(&zero, &set(&[0.8, 0.4]), &set(&[0.7, 0.5]), 10, &decade_grid(1, 8)).unwrap();
        assert!(tr.w_values.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn discriminator_errors() {
        let p = benchmark(64, Coefficient::function(f64::sin));
        let a = set(&[0.8, 0.4]);
        assert!(matches!(discriminator(&p, &a, &a, 10, &[0.1]), Err(Error::Degenerate(_))));
        assert!(discriminator(&p, &a, &set(&[0.8, 0.5]), 10, &[0.1, 0.2]).is_err());
        assert!(discriminator(&p, &a, &set(&[0.8, 0.5]), 10, &[1.5]).is_err());
        assert!(discriminator(&p, &a, &set(&[0.8, 0.5]), 64, &[0.1]).is_err());
    }

    #[test]
    fn laplace_transform_is_positive_for_nonnegative_data() {
        let p = benchmark(128, Coefficient::function(f64::sin));
        let node = p.grid.nearest(0.3);
        for k in -2..=8 {
            let s = 10f64.powi(-k);
            assert!(laplace_transform(&p, Complex64::new(s, 0.0)).unwrap().iter().all(|v| v.re > 0.0), "s = {s}");
        }
        assert!(laplace_transform(&p, Complex64::new(1e-8, 0.0)).unwrap()[node].re > 0.0);
    }

    #[test]
    fn bank_discriminators_do_not_vanish() {
        let p = benchmark(64, Coefficient::function(f64::sin));
        let node = p.grid.nearest(PI / 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (a, b) in random_order_pairs(&mut rng, 20) {
            let tr = discriminator(&p, &a, &b, node, &decade_grid(2, 8)).unwrap();
            let w0 = reference_w0(&p, tr.j0).unwrap()[node];
            assert!(tr.limit().abs() >= 0.5 * w0, "{a:?} {b:?}: {} vs {w0}", tr.limit());
        }
    }

    #[test]
    fn discriminator_from_sampled_observations() {
        // single-term relaxation data with a long record: the observation
        // route and the exact route agree at moderate s
        let p = problem(vec![0.6], vec![1.0.into()], Coefficient::function(f64::sin), 64);
        let node = p.grid.nearest(PI / 2.0);
        let ts: Vec<f64> = (0..=4000).map(|i| 1e-3 * 1.003f64.powi(i)).collect();
        let mk = |alpha: f64| {
            let q = with_orders(&p, &set(&[alpha])).unwrap();
            let c = ContourSpec::default_for(&q.orders, ts[0]).unwrap();
            let mut times = vec![0.0];
            times.extend(&ts);
            let mut vals = vec![p.initial[node]];
            vals.extend(laplace_solve_at(&q, &c, &ts, node).unwrap());
            Observation::new(&p.grid, node, times, vals).unwrap()
        };
        let (oa, ob) = (mk(0.6), mk(0.7));
        let grid = [0.5, 0.1];
        let from_obs = discriminator_from_observations(&oa, &ob, &set(&[0.6]), &set(&[0.7]), &[1.0], &grid).unwrap();
        let exact = discriminator(&p, &set(&[0.6]), &set(&[0.7]), node, &grid).unwrap();
        for (a, b) in from_obs.w_values.iter().zip(&exact.w_values) {
            assert!((a - b).abs() <= 1e-3 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn stick_breaking_roundtrip() {
        let o = set(&[0.8, 0.4, 0.1]);
        let back = orders_from(&params_from(&o)).unwrap();
        for (a, b) in o.alphas().iter().zip(back.alphas()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(orders_from(&[5.0, 5.0]).unwrap().alphas()[1] < orders_from(&[5.0, 5.0]).unwrap().alphas()[0]);
    }

    #[test]
    fn dense_solver() {
        let x = solve_dense(vec![vec![0.0, 2.0], vec![3.0, 1.0]], vec![4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 1.0]).is_none());
    }

    fn synthetic(p: &DiscreteProblem, orders: &OrderSet, times: &[f64]) -> Observation {
        let q = with_orders(p, orders).unwrap();
        let node = p.grid.nearest(PI / 2.0);
        let c = ContourSpec::default_for(orders, times[0]).unwrap();
        Observation::new(&p.grid, node, times.to_vec(), laplace_solve_at(&q, &c, times, node).unwrap()).unwrap()
    }

    #[test]
    fn recovers_single_order() {
        let p = problem(vec![0.5], vec![1.0.into()], Coefficient::function(f64::sin), 64);
        let ts = uniform_times(10.0, 40);
        let obs = synthetic(&p, &set(&[0.63]), &ts);
        let est = estimate_orders(&obs, &p, &set(&[0.5]), &EstimateOptions::default()).unwrap();
        assert!(est.identified, "{est:?}");
        assert!((est.orders.alphas()[0] - 0.63).abs() <= 0.005, "{est:?}");
        assert!(est.trace.is_some());
    }

    #[test]
    fn recovers_benchmark_orders() {
        let p = benchmark(64, Coefficient::function(f64::sin));
        let ts = uniform_times(10.0, 40);
        let obs = synthetic(&p, &set(&[0.8, 0.4]), &ts);
        let est = estimate_orders(&obs, &p, &set(&[0.7, 0.3]), &EstimateOptions::default()).unwrap();
        assert!(est.identified && est.warnings.is_empty(), "{est:?}");
        for (a, b) in est.orders.alphas().iter().zip([0.8, 0.4]) {
            assert!((a - b).abs() <= 0.01, "{est:?}");
        }
        assert!(est.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn true_orders_are_a_local_minimum() {
        let p = benchmark(64, Coefficient::function(f64::sin));
        let ts = uniform_times(10.0, 40);
        let truth = [0.8, 0.4];
        let obs = synthetic(&p, &set(&truth), &ts);
        let at = order_misfit(&obs, &p, &set(&truth), None).unwrap();
        for j in 0..2 {
            for d in [-0.05, 0.05] {
                let mut v = truth;
                v[j] += d;
                assert!(order_misfit(&obs, &p, &set(&v), None).unwrap() > at);
            }
        }
    }

    #[test]
    fn sign_changing_data_are_flagged() {
        let p = problem(vec![0.5], vec![1.0.into()], Coefficient::function(|x| (2.0 * x).sin() + 0.3 * x.sin()), 64);
        let ts = uniform_times(10.0, 40);
        let obs = synthetic(&p, &set(&[0.6]), &ts);
        let est = estimate_orders(&obs, &p, &set(&[0.5]), &EstimateOptions::default()).unwrap();
        assert!(est.sign_changing_initial);
        assert!(!est.warnings.is_empty());
    }

    #[test]
    fn stagnation_is_reported() {
        // data from two orders fitted with one: the misfit cannot vanish
        let p2 = benchmark(64, Coefficient::function(f64::sin));
        let ts = uniform_times(10.0, 40);
        let obs = synthetic(&p2, &set(&[0.8, 0.3]), &ts);
        let p1 = problem(vec![0.5], vec![1.0.into()], Coefficient::function(f64::sin), 64);
        let est = estimate_orders(&obs, &p1, &set(&[0.5]), &EstimateOptions::default()).unwrap();
        assert!(!est.identified);
        assert!(est.warnings.iter().any(|w| w.contains("not identified")));
    }
}
