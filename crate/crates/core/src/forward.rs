//! Forward solvers: the eigenfunction solution of the single-term problem,
//! Picard iteration on the mild-solution integral equation, implicit L1 time
//! stepping, and Laplace inversion along the rays arg s = ±θ.
//!
//! The integral equation is worked in eigen-coordinates c(t) = (u(t), φ_n).
//! With M = B·∇ + b and P_j = multiplication by q_j it reads
//!
//! c(t) = E(t)c₀ + Σ_{j≥2} H_j(t) P_j c₀
//!        + ∫₀ᵗ [e(t−τ) M − Σ_{j≥2} H_j'(t−τ) P_j] c(τ) dτ,
//!
//! with, per mode λ and α = α₁, E(t) = E_{α,1}(−λt^α),
//! e(t) = t^{α−1}E_{α,α}(−λt^α) and H_j(t) = t^{α−α_j}E_{α,α−α_j+1}(−λt^α).
//! The s-integrals of the Picard recursion are done in closed form (they
//! produce H_j'), and the t-convolutions by product integration of the
//! piecewise-linear interpolant of c against the exact Mittag-Leffler
//! kernel primitives.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::fractional::{l1_weight, TimeGrid};
use crate::linalg::solve_tridiagonal;
use crate::operator::{l2_norm, sobolev_norm_of_coefficients, solve_shifted, DiscreteProblem, EigenBasis, Grid1D, OrderSet};
use crate::special::MittagLeffler;

/// Solution values at the interior nodes of a grid for a list of times.
/// The Dirichlet boundary values are implicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid1D,
    times: Vec<f64>,
    /// `values[k][i]` is u(x_i, t_k).
    values: Vec<Vec<f64>>,
}

impl Field {
    pub fn new(grid: Grid1D, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        check_len(times.len(), values.len())?;
        for (k, v) in values.iter().enumerate() {
            check_len(grid.n(), v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite field value at t = {}", times[k])));
            }
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("field times must be finite and strictly increasing".into()));
        }
        Ok(Self { grid, times, values })
    }

    pub fn zeros(grid: Grid1D, times: Vec<f64>) -> Result<Self> {
        let values = vec![vec![0.0; grid.n()]; times.len()];
        Self::new(grid, times, values)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Interior values at time index k.
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Values at all N + 2 grid points, boundary included.
    pub fn with_boundary(&self, k: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.grid.n() + 2);
        v.push(0.0);
        v.extend_from_slice(&self.values[k]);
        v.push(0.0);
        v
    }

    /// u(x_i, ·) over all times.
    pub fn node_series(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    /// Discrete L² norm at each time.
    pub fn l2_norms(&self) -> Vec<f64> {
        let h = self.grid.h();
        self.values.iter().map(|v| l2_norm(h, v)).collect()
    }

    pub fn scaled(&self, c: f64) -> Field {
        let values = self.values.iter().map(|v| v.iter().map(|x| c * x).collect()).collect();
        Field { grid: self.grid.clone(), times: self.times.clone(), values }
    }

    /// self − other, on identical grids and times.
    pub fn difference(&self, other: &Field) -> Result<Field> {
        if self.grid != other.grid || self.times != other.times {
            return Err(Error::Domain("fields live on different grids or times".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
        Ok(Field { grid: self.grid.clone(), times: self.times.clone(), values })
    }

    /// Linear interpolation in time.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        let (lo, hi) = (self.times[0], self.times[self.times.len() - 1]);
        if !(t >= lo && t <= hi) {
            return Err(Error::Domain(format!("time {t} outside the field range [{lo}, {hi}]")));
        }
        let j = self.times.partition_point(|&s| s < t);
        if self.times[j] == t {
            return Ok(self.values[j].clone());
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.values[j - 1].iter().zip(&self.values[j]).map(|(a, b)| a + w * (b - a)).collect())
    }

    pub fn resample(&self, times: &[f64]) -> Result<Field> {
        let values = times.iter().map(|&t| self.sample(t)).collect::<Result<Vec<_>>>()?;
        Field::new(self.grid.clone(), times.to_vec(), values)
    }

    /// max_k ‖u(t_k) − v(t_k)‖ / max_k ‖v(t_k)‖ over the times of `self`,
    /// with `reference` interpolated linearly in time.
    pub fn relative_difference(&self, reference: &Field) -> Result<f64> {
        if self.grid != reference.grid {
            return Err(Error::Domain("fields live on different grids".into()));
        }
        let h = self.grid.h();
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for (k, &t) in self.times.iter().enumerate() {
            let r = reference.sample(t)?;
            let d: Vec<f64> = self.values[k].iter().zip(&r).map(|(a, b)| a - b).collect();
            num = num.max(l2_norm(h, &d));
            den = den.max(l2_norm(h, &r));
        }
        Ok(if den > 0.0 { num / den } else { num })
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::Domain("times must be finite and nonnegative".into()));
    }
    Ok(())
}

fn check_leading(alpha1: f64) -> Result<()> {
    if !(alpha1 > 0.0 && alpha1 < 1.0) {
        return Err(Error::Domain(format!("alpha1 must lie in (0, 1), got {alpha1}")));
    }
    Ok(())
}

/// u(t) = S(t)a = Σ (a, φ_n) E_{α₁,1}(−λ_n t^{α₁}) φ_n, exact for the
/// single-term problem with q₁ ≡ 1 and B ≡ 0, b ≡ 0.
pub fn spectral_single_term(basis: &EigenBasis, alpha1: f64, a: &[f64], times: &[f64]) -> Result<Field> {
    check_leading(alpha1)?;
    check_times(times)?;
    let c0 = basis.project(a)?;
    let ml = MittagLeffler::with_beta(alpha1, 1.0)?;
    let values = times
        .iter()
        .map(|&t| {
            let ta = t.powf(alpha1);
            let c: Vec<f64> =
                c0.iter().zip(basis.eigenvalues()).map(|(&ck, &lam)| if ck == 0.0 { 0.0 } else { ck * ml.eval_real(-lam * ta) }).collect();
            basis.synthesize(&c)
        })
        .collect::<Result<Vec<_>>>()?;
    Field::new(basis.grid().clone(), times.to_vec(), values)
}

/// The antiderivatives F₁(ρ) = ρ^β E_{α,β+1}(−λρ^α) and
/// F₂(ρ) = ρ^{β+1} E_{α,β+2}(−λρ^α) of the kernel ρ^{β−1}E_{α,β}(−λρ^α).
struct Primitives {
    alpha: f64,
    beta: f64,
    first: MittagLeffler,
    second: MittagLeffler,
}

impl Primitives {
    fn new(alpha: f64, beta: f64) -> Result<Self> {
        Ok(Self { alpha, beta, first: MittagLeffler::with_beta(alpha, beta + 1.0)?, second: MittagLeffler::with_beta(alpha, beta + 2.0)? })
    }

    fn eval(&self, lambda: f64, rho: f64) -> (f64, f64) {
        if rho == 0.0 {
            return (0.0, 0.0);
        }
        let x = -lambda * rho.powf(self.alpha);
        let rb = rho.powf(self.beta);
        (rb * self.first.eval_real(x), rb * rho * self.second.eval_real(x))
    }

    fn first_only(&self, lambda: f64, rho: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        rho.powf(self.beta) * self.first.eval_real(-lambda * rho.powf(self.alpha))
    }
}

/// Hat-function weights of the interval ρ ∈ [ρa, ρb] from the primitives
/// at both ends: (weight of the node at ρ = ρb, weight of the node at ρ = ρa).
fn interval_weights(a: (f64, f64), b: (f64, f64), delta: f64) -> (f64, f64) {
    let mean = (b.1 - a.1) / delta;
    (b.0 - mean, mean - a.0)
}

/// Product-integration weights, per mode, for Σ_m w_{k,m} c(t_m) ≈
/// ∫₀^{t_k} κ(t_k − τ) c(τ) dτ.
enum Weights {
    /// Uniform steps: `left[n][d]` and `right[n][d]` are the interval
    /// weights at lag d = k − m (d ≥ 1) for the older and newer end.
    Toeplitz { left: Vec<Vec<f64>>, right: Vec<Vec<f64>> },
    /// Arbitrary steps: `nodes[k][n][m]` for m = 0..=k.
    Dense(Vec<Vec<Vec<f64>>>),
}

struct Kernel {
    /// Index of the term of the recursion, for error messages.
    term: usize,
    sign: f64,
    /// Modal coupling matrix, row-major N × N.
    coupling: Vec<f64>,
    weights: Weights,
}

fn modal_matrix(basis: &EigenBasis, apply: impl Fn(&[f64]) -> Vec<f64>) -> Result<Vec<f64>> {
    let n = basis.len();
    let mut m = vec![0.0; n * n];
    for col in 0..n {
        let c = basis.project(&apply(basis.vector(col)))?;
        for row in 0..n {
            m[row * n + col] = c[row];
        }
    }
    Ok(m)
}

fn is_uniform(times: &[f64]) -> bool {
    if times.len() < 2 {
        return true;
    }
    let dt = times[1] - times[0];
    times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-12 * dt.max(times[times.len() - 1]))
}

fn build_weights(p: &Primitives, lambdas: &[f64], times: &[f64], uniform: bool) -> Weights {
    let kk = times.len() - 1;
    if uniform {
        let dt = if kk > 0 { times[1] - times[0] } else { 1.0 };
        let (left, right) = lambdas
            .par_iter()
            .map(|&lam| {
                let f: Vec<(f64, f64)> = (0..=kk).map(|d| p.eval(lam, d as f64 * dt)).collect();
                let mut left = vec![0.0; kk + 1];
                let mut right = vec![0.0; kk + 1];
                for d in 1..=kk {
                    let (l, r) = interval_weights(f[d - 1], f[d], dt);
                    left[d] = l;
                    right[d] = r;
                }
                (left, right)
            })
            .unzip();
        return Weights::Toeplitz { left, right };
    }
    let nodes = (0..=kk)
        .map(|k| {
            lambdas
                .par_iter()
                .map(|&lam| {
                    let f: Vec<(f64, f64)> = (0..=k).map(|m| p.eval(lam, times[k] - times[m])).collect();
                    let mut w = vec![0.0; k + 1];
                    for m in 0..k {
                        let (older, newer) = interval_weights(f[m + 1], f[m], times[m + 1] - times[m]);
                        w[m] += older;
                        w[m + 1] += newer;
                    }
                    w
                })
                .collect()
        })
        .collect();
    Weights::Dense(nodes)
}

/// The affine map c ↦ Φ(c) of the Picard recursion on a fixed time grid,
/// with all Mittag-Leffler kernel data precomputed.
pub struct PicardOperator {
    basis: EigenBasis,
    alpha1: f64,
    gamma: f64,
    times: Vec<f64>,
    /// Terms 1 and 2, in modal coordinates, per time.
    free: Vec<Vec<f64>>,
    kernels: Vec<Kernel>,
}

impl PicardOperator {
    /// Precompute the recursion for `problem` on `times` (starting at 0).
    /// Uniform grids use lag-invariant weights, so they cost O(N K)
    /// kernel evaluations instead of O(N K²).
    pub fn new(problem: &DiscreteProblem, basis: &EigenBasis, times: &[f64], gamma: f64) -> Result<Self> {
        if basis.grid() != &problem.grid {
            return Err(Error::Domain("eigenbasis and problem use different grids".into()));
        }
        if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("the Picard grid must start at 0 and increase strictly".into()));
        }
        check_times(times)?;
        let alphas = problem.orders.alphas();
        let alpha1 = alphas[0];
        let lambdas = basis.eigenvalues();
        let n = basis.len();
        let uniform = is_uniform(times);
        let c0 = basis.project(&problem.initial)?;

        let e1 = MittagLeffler::with_beta(alpha1, 1.0)?;
        let mut free: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| {
                let ta = t.powf(alpha1);
                c0.iter().zip(lambdas).map(|(&c, &lam)| if c == 0.0 { 0.0 } else { c * e1.eval_real(-lam * ta) }).collect()
            })
            .collect();

        let mut kernels = Vec::new();
        if problem.has_convection() || problem.has_potential() {
            let coupling = modal_matrix(basis, |v| {
                let conv = problem.apply_convection(v);
                conv.iter().zip(v).zip(&problem.potential).map(|((c, x), b)| c + b * x).collect()
            })?;
            let p = Primitives::new(alpha1, alpha1)?;
            kernels.push(Kernel { term: 3, sign: 1.0, coupling, weights: build_weights(&p, lambdas, times, uniform) });
        }
        for (j, &aj) in alphas.iter().enumerate().skip(1) {
            let q = &problem.weights[j];
            let coupling = modal_matrix(basis, |v| v.iter().zip(q).map(|(x, w)| x * w).collect())?;
            let p = Primitives::new(alpha1, alpha1 - aj)?;
            let pc0 = matvec(&coupling, &c0, n);
            if pc0.iter().any(|&x| x != 0.0) {
                for (k, &t) in times.iter().enumerate() {
                    for m in 0..n {
                        free[k][m] += p.first_only(lambdas[m], t) * pc0[m];
                    }
                }
            }
            kernels.push(Kernel { term: 4, sign: -1.0, coupling, weights: build_weights(&p, lambdas, times, uniform) });
        }
        for (k, f) in free.iter().enumerate() {
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("terms 1-2 of the recursion are not finite at t = {}", times[k])));
            }
        }
        Ok(Self { basis: basis.clone(), alpha1, gamma, times: times.to_vec(), free, kernels })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    /// Φ(c) for modal coefficients `c[k]` at each time.
    pub fn apply(&self, c: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_len(self.times.len(), c.len())?;
        let n = self.basis.len();
        let mut out = self.free.clone();
        for ker in &self.kernels {
            let g: Vec<Vec<f64>> = c.iter().map(|ck| matvec(&ker.coupling, ck, n)).collect();
            for (k, o) in out.iter_mut().enumerate().skip(1) {
                for (mode, slot) in o.iter_mut().enumerate() {
                    let acc = match &ker.weights {
                        Weights::Toeplitz { left, right } => {
                            let (l, r) = (&left[mode], &right[mode]);
                            // interval m covers lag d = k − m (older end) and d − 1 (newer end)
                            let mut acc = 0.0;
                            for m in 0..k {
                                let d = k - m;
                                acc += l[d] * g[m][mode] + r[d] * g[m + 1][mode];
                            }
                            acc
                        }
                        Weights::Dense(nodes) => nodes[k][mode].iter().zip(&g).map(|(w, gm)| w * gm[mode]).sum(),
                    };
                    *slot += ker.sign * acc;
                }
                if o.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Numeric(format!("term {} of the recursion is not finite at t = {}", ker.term, self.times[k])));
                }
            }
        }
        Ok(out)
    }

    /// sup_k t_k^{α₁γ} ‖a_k − b_k‖_{D(A^γ)}.
    pub fn weighted_distance(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let mut sup: f64 = 0.0;
        for (k, &t) in self.times.iter().enumerate() {
            let d: Vec<f64> = a[k].iter().zip(&b[k]).map(|(x, y)| x - y).collect();
            let w = if t == 0.0 { 0.0 } else { t.powf(self.alpha1 * self.gamma) };
            sup = sup.max(w * sobolev_norm_of_coefficients(&self.basis, self.gamma, &d));
        }
        sup
    }

    /// Node values of modal coefficients.
    pub fn field(&self, c: &[Vec<f64>]) -> Result<Field> {
        let values = c.iter().map(|ck| self.basis.synthesize(ck)).collect::<Result<Vec<_>>>()?;
        Field::new(self.basis.grid().clone(), self.times.clone(), values)
    }

    /// Modal coefficients of a field on this operator's times.
    pub fn coefficients(&self, u: &Field) -> Result<Vec<Vec<f64>>> {
        if u.times() != self.times.as_slice() {
            return Err(Error::Domain("field times differ from the operator grid".into()));
        }
        (0..u.len()).map(|k| self.basis.project(u.at(k))).collect()
    }
}

fn matvec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|r| m[r * n..(r + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Iterate u_n of the Picard recursion with its convergence record.
#[derive(Debug, Clone)]
pub struct PicardState {
    pub index: usize,
    /// Modal coefficients of u_n at each time.
    pub coefficients: Vec<Vec<f64>>,
    /// d_m = sup_t t^{α₁γ}‖u_{m+1}(t) − u_m(t)‖_{D(A^γ)} for m < n.
    pub differences: Vec<f64>,
    pub converged: bool,
}

impl PicardState {
    /// u₀ = 0.
    pub fn initial(op: &PicardOperator) -> Self {
        Self { index: 0, coefficients: vec![vec![0.0; op.basis.len()]; op.times.len()], differences: Vec::new(), converged: false }
    }

    pub fn field(&self, op: &PicardOperator) -> Result<Field> {
        op.field(&self.coefficients)
    }
}

/// One step u_n ↦ u_{n+1}; the convergence flag is set once d_n ≤ tol.
pub fn picard_step(op: &PicardOperator, state: &PicardState, tol: f64) -> Result<PicardState> {
    let next = op.apply(&state.coefficients)?;
    let d = op.weighted_distance(&next, &state.coefficients);
    if !d.is_finite() {
        return Err(Error::Numeric(format!("Picard difference not finite at iterate {}", state.index)));
    }
    let mut differences = state.differences.clone();
    differences.push(d);
    Ok(PicardState { index: state.index + 1, coefficients: next, differences, converged: d <= tol })
}

/// Iterate from u₀ = 0 until the weighted difference drops below `tol`.
pub fn picard_iterate(op: &PicardOperator, tol: f64, max_iter: usize) -> Result<PicardState> {
    let mut state = PicardState::initial(op);
    while !state.converged {
        if state.index >= max_iter {
            return Err(Error::NonConvergence {
                iterations: state.index,
                last: state.differences.last().copied().unwrap_or(f64::INFINITY),
                history: state.differences,
            });
        }
        state = picard_step(op, &state, tol)?;
    }
    Ok(state)
}

/// The mild solution by Picard iteration, for γ ∈ [1/2, 1).
pub fn picard_solve(
    problem: &DiscreteProblem,
    basis: &EigenBasis,
    times: &TimeGrid,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Field> {
    if !(0.5..1.0).contains(&gamma) {
        return Err(Error::Domain(format!("gamma must lie in [1/2, 1), got {gamma}")));
    }
    let op = PicardOperator::new(problem, basis, times.times(), gamma)?;
    picard_iterate(&op, tol, max_iter)?.field(&op)
}

/// Non-uniform fields longer than this are resampled for the residual.
const RESIDUAL_STEPS: usize = 256;

/// max_t ‖u(t) − Φ[u](t)‖ / max_t ‖u(t)‖ for the integral equation of
/// `problem`. Non-uniform fields with more than 256 steps are first
/// interpolated onto a uniform grid of 256 steps, since the non-uniform
/// weights cost O(K²) per mode.
pub fn integral_equation_residual(u: &Field, problem: &DiscreteProblem, basis: &EigenBasis) -> Result<f64> {
    if u.times()[0] != 0.0 {
        return Err(Error::Domain("the field must start at t = 0".into()));
    }
    let u = if is_uniform(u.times()) || u.len() - 1 <= RESIDUAL_STEPS {
        u.clone()
    } else {
        let steps = RESIDUAL_STEPS;
        let t_end = u.times()[u.len() - 1];
        u.resample(TimeGrid::uniform(t_end, steps)?.times())?
    };
    let op = PicardOperator::new(problem, basis, u.times(), 0.5)?;
    let c = op.coefficients(&u)?;
    let phi = op.apply(&c)?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for (a, b) in c.iter().zip(&phi) {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        num = num.max(norm(&d));
        den = den.max(norm(a));
    }
    Ok(if den > 0.0 { num / den } else { num })
}

/// Implicit L1 scheme: at each step solve
/// (Σ_j q_j b^{(j)}_{k,k−1} + A_h − b − B·∇) u^k = Σ_j q_j (b^{(j)}_{k,k−1} u^{k−1} − history_j),
/// where b^{(j)} are the L1 weights of order α_j.
pub fn l1_solve(problem: &DiscreteProblem, times: &TimeGrid) -> Result<Field> {
    let t = times.times();
    let n = problem.n();
    let alphas = problem.orders.alphas();
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(t.len());
    values.push(problem.initial.clone());
    let mut diffs: Vec<Vec<f64>> = Vec::with_capacity(t.len());
    for k in 1..t.len() {
        let lead: Vec<f64> = alphas.iter().map(|&a| l1_weight(a, t, k, k - 1)).collect();
        let mut rhs = vec![0.0; n];
        for (j, &aj) in alphas.iter().enumerate() {
            let mut hist = vec![0.0; n];
            for (m, d) in diffs.iter().enumerate().take(k - 1) {
                let w = l1_weight(aj, t, k, m);
                for (h, x) in hist.iter_mut().zip(d) {
                    *h += w * x;
                }
            }
            let q = &problem.weights[j];
            let prev = &values[k - 1];
            for i in 0..n {
                rhs[i] += q[i] * (lead[j] * prev[i] - hist[i]);
            }
        }
        let (lower, diag, upper) = problem.bands(|i| lead.iter().zip(&problem.weights).map(|(w, q)| w * q[i]).sum::<f64>());
        let next =
            solve_tridiagonal(&lower, &diag, &upper, &rhs).map_err(|e| Error::Numeric(format!("L1 step {k} (t = {}): {e}", t[k])))?;
        diffs.push(next.iter().zip(&values[k - 1]).map(|(a, b)| a - b).collect());
        values.push(next);
    }
    Field::new(problem.grid.clone(), t.to_vec(), values)
}

/// Truncation below this value of |e^{s t}| at the outer radius is
/// considered resolved (e^{−36} ≈ 2e−16).
const TRUNCATION_EXPONENT: f64 = 36.0;

/// The two rays arg s = ±θ, truncated to r ∈ [r_min, r_max] and sampled by
/// the trapezoidal rule in ln r with the given step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSpec {
    theta: f64,
    r_min: f64,
    r_max: f64,
    step: f64,
}

impl ContourSpec {
    pub fn new(theta: f64, r_min: f64, r_max: f64, step: f64) -> Result<Self> {
        if !(theta > 0.5 * PI && theta < PI) {
            return Err(Error::Domain(format!("contour angle must lie in (pi/2, pi), got {theta}")));
        }
        if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
            return Err(Error::Domain(format!("contour radii must satisfy 0 < r_min < r_max < inf, got [{r_min}, {r_max}]")));
        }
        if !(step > 0.0) {
            return Err(Error::Domain(format!("contour step must be positive, got {step}")));
        }
        let c = Self { theta, r_min, r_max, step };
        if c.nodes() < 9 {
            return Err(Error::Domain(format!("contour has {} nodes per ray, at least 9 needed", c.nodes())));
        }
        Ok(c)
    }

    /// θ halfway between π/2 and the sector limit min(π/(2α₁), π), a step
    /// giving e^{−28} trapezoid error for an integrand analytic across the
    /// remaining angular margin, r_max = 50/(t_min |cos θ|) and r_min with
    /// r_min^{α_ℓ} ≤ 1e−16.
    pub fn default_for(orders: &OrderSet, t_min: f64) -> Result<Self> {
        if !(t_min > 0.0) {
            return Err(Error::Domain(format!("smallest time must be positive, got {t_min}")));
        }
        let limit = sector_limit(orders.leading());
        let theta = 0.5 * (0.5 * PI + limit);
        let margin = theta - 0.5 * PI;
        let step = 2.0 * PI * margin / 28.0;
        let r_max = 50.0 / (t_min * theta.cos().abs());
        let r_min = (16.0 * 10f64.ln() / orders.smallest()).min(690.0);
        Self::new(theta, (-r_min).exp(), r_max, step)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Quadrature nodes per ray.
    pub fn nodes(&self) -> usize {
        ((self.r_max / self.r_min).ln() / self.step).ceil() as usize + 1
    }

    /// Smallest time the truncation radius resolves.
    pub fn min_time(&self) -> f64 {
        TRUNCATION_EXPONENT / (self.r_max * self.theta.cos().abs())
    }

    fn check_sector(&self, alpha1: f64) -> Result<()> {
        let limit = sector_limit(alpha1);
        if !(self.theta < limit) {
            return Err(Error::Domain(format!("contour angle {} outside the sector (pi/2, {limit})", self.theta)));
        }
        Ok(())
    }
}

fn sector_limit(alpha1: f64) -> f64 {
    (PI / (2.0 * alpha1)).min(PI)
}

/// û(s) = (A_h − b − B·∇ + Q(s))⁻¹ (Q(s)/s · a) with Q(s) = Σ q_j s^{α_j}.
pub fn laplace_transform(problem: &DiscreteProblem, s: Complex64) -> Result<Vec<Complex64>> {
    let q = problem.q_of_s(s);
    // polar reciprocal: dividing by s squares |s|, which underflows on the
    // inner contour radii used for small orders
    let inv_s = Complex64::from_polar(1.0 / s.norm(), -s.arg());
    let rhs: Vec<Complex64> = q.iter().zip(&problem.initial).map(|(qi, a)| qi * inv_s * a).collect();
    solve_shifted(problem, s, &rhs)
}

/// s·û(s) at the upper-ray nodes with their trapezoid weights.
struct RaySamples {
    points: Vec<Complex64>,
    weights: Vec<f64>,
    values: Vec<Vec<Complex64>>,
}

fn ray_samples(problem: &DiscreteProblem, contour: &ContourSpec, times: &[f64], select: Option<usize>) -> Result<RaySamples> {
    problem.check_sign_hypotheses()?;
    contour.check_sector(problem.orders.leading())?;
    if let Some(&t) = times.iter().find(|&&t| !(t >= contour.min_time()) || !t.is_finite()) {
        return Err(Error::ContourResolution(format!(
            "t = {t} is below the resolution bound {:.3e} of the truncated contour",
            contour.min_time()
        )));
    }
    let m = contour.nodes();
    let x0 = contour.r_min.ln();
    let dir = Complex64::from_polar(1.0, contour.theta);
    let points: Vec<Complex64> = (0..m).map(|i| dir * (x0 + i as f64 * contour.step).exp()).collect();
    let mut weights = vec![contour.step; m];
    weights[0] *= 0.5;
    weights[m - 1] *= 0.5;
    let values = points
        .par_iter()
        .map(|&s| {
            let u = laplace_transform(problem, s)?;
            Ok(match select {
                Some(i) => vec![s * u[i]],
                None => u.iter().map(|v| s * v).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // conjugate symmetry check at the node nearest |s| = 1
    let mid = points.iter().enumerate().min_by(|a, b| a.1.norm().ln().abs().total_cmp(&b.1.norm().ln().abs())).map(|p| p.0).unwrap_or(0);
    let up = laplace_transform(problem, points[mid])?;
    let down = laplace_transform(problem, points[mid].conj())?;
    let scale = up.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let residue = up.iter().zip(&down).map(|(a, b)| (a.conj() - b).norm()).fold(0.0, f64::max);
    if residue > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::ContourResolution(format!("imaginary residue {residue:e} on the contour")));
    }
    Ok(RaySamples { points, weights, values })
}

impl RaySamples {
    /// u(t) = (1/π) Im Σ w_i s_i û(s_i) e^{s_i t}.
    fn invert(&self, t: f64) -> Vec<f64> {
        let width = self.values[0].len();
        let mut acc = vec![0.0; width];
        for ((s, w), v) in self.points.iter().zip(&self.weights).zip(&self.values) {
            let c = (s * t).exp() * (*w / PI);
            for (a, x) in acc.iter_mut().zip(v) {
                *a += (c * x).im;
            }
        }
        acc
    }
}

/// u(t) by Fourier-Mellin inversion along the contour, for B ≡ 0, b ≤ 0,
/// q_j ≥ 0. Each node is an independent shifted solve; the lower ray is the
/// conjugate of the upper one.
pub fn laplace_solve(problem: &DiscreteProblem, contour: &ContourSpec, times: &[f64]) -> Result<Field> {
    let samples = ray_samples(problem, contour, times, None)?;
    let values = times.iter().map(|&t| samples.invert(t)).collect();
    Field::new(problem.grid.clone(), times.to_vec(), values)
}

/// The same inversion restricted to one interior node.
pub fn laplace_solve_at(problem: &DiscreteProblem, contour: &ContourSpec, times: &[f64], node: usize) -> Result<Vec<f64>> {
    if node >= problem.n() {
        return Err(Error::Domain(format!("node {node} outside the {} interior nodes", problem.n())));
    }
    let samples = ray_samples(problem, contour, times, Some(node))?;
    let out: Vec<f64> = times.iter().map(|&t| samples.invert(t)[0]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value from the contour inversion".into()));
    }
    Ok(out)
}
