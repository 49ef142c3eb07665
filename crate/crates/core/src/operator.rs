//! Problem description and its finite-difference discretisation.
//!
//! The elliptic part −d/dx(a₁₁ d/dx ·) is discretised conservatively on a
//! uniform grid of interior nodes with Dirichlet rows eliminated, giving a
//! symmetric tridiagonal A_h. The potential b and the convection B·∇ are
//! kept as separate node-wise operators. All inner products are the
//! h-weighted discrete L² product (u, v)_h = h Σ u_i v_i.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::linalg::{solve_tridiagonal, symmetric_tridiagonal_eigen};
use crate::special::MittagLeffler;

/// A scalar coefficient function of x.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Coefficient::Constant(c)
    }

    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Function(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Function(f) => f(x),
        }
    }

    /// Samples at the given nodes.
    pub fn sample(&self, nodes: &[f64]) -> Vec<f64> {
        nodes.iter().map(|&x| self.eval(x)).collect()
    }

    /// Scaled copy c·f.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Coefficient::Constant(v) => Coefficient::Constant(c * v),
            Coefficient::Function(f) => {
                let f = Arc::clone(f);
                Coefficient::function(move |x| c * f(x))
            }
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl From<f64> for Coefficient {
    fn from(c: f64) -> Self {
        Coefficient::Constant(c)
    }
}

/// Fractional orders 1 > α₁ > α₂ > … > α_ℓ > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSet {
    alphas: Vec<f64>,
}

impl OrderSet {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Spec("at least one fractional order is required".into()));
        }
        if alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Spec(format!("orders must lie in (0, 1): {alphas:?}")));
        }
        if alphas.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Spec(format!("orders must be strictly decreasing: {alphas:?}")));
        }
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// The largest order α₁.
    pub fn leading(&self) -> f64 {
        self.alphas[0]
    }

    /// The smallest order α_ℓ.
    pub fn smallest(&self) -> f64 {
        self.alphas[self.alphas.len() - 1]
    }
}

/// Σ q_j ∂_t^{α_j} u = −𝒜u + B u' + b u on (x_lo, x_hi), u = 0 on the
/// boundary, u(·, 0) = a.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    /// a₁₁(x), bounded below by a positive constant.
    pub diffusion: Coefficient,
    /// b(x).
    pub potential: Coefficient,
    /// B(x).
    pub convection: Coefficient,
    /// q_j(x), one per order; q₁ ≡ 1.
    pub weights: Vec<Coefficient>,
    pub orders: OrderSet,
    /// Initial value a(x).
    pub initial: Coefficient,
}

impl ProblemSpec {
    /// Pure diffusion −(a₁₁ u')' with b ≡ 0, B ≡ 0 and the given orders and
    /// weights.
    pub fn new(x_lo: f64, x_hi: f64, orders: OrderSet, weights: Vec<Coefficient>, initial: Coefficient) -> Result<Self> {
        let spec = Self {
            x_lo,
            x_hi,
            diffusion: Coefficient::constant(1.0),
            potential: Coefficient::constant(0.0),
            convection: Coefficient::constant(0.0),
            weights,
            orders,
            initial,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The same problem with its initial value replaced.
    pub fn with_initial(&self, initial: Coefficient) -> Self {
        Self { initial, ..self.clone() }
    }

    /// The same problem with different orders (the weights are kept).
    pub fn with_orders(&self, orders: OrderSet) -> Result<Self> {
        let spec = Self { orders, ..self.clone() };
        spec.validate()?;
        Ok(spec)
    }

    /// The single-term problem q_ℓ ∂_t^{α_ℓ} v = −𝒜v + bv obtained by
    /// keeping only the smallest order.
    pub fn single_term(&self) -> Result<Self> {
        let l = self.orders.len() - 1;
        Ok(Self { orders: OrderSet::new(vec![self.orders.smallest()])?, weights: vec![self.weights[l].clone()], ..self.clone() })
    }

    /// Structural checks that do not need a grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.x_lo < self.x_hi) || !self.x_lo.is_finite() || !self.x_hi.is_finite() {
            return Err(Error::Spec(format!("empty or infinite domain ({}, {})", self.x_lo, self.x_hi)));
        }
        if self.weights.len() != self.orders.len() {
            return Err(Error::Spec(format!("{} weight functions for {} orders", self.weights.len(), self.orders.len())));
        }
        Ok(())
    }

    /// The checks that need sample points: ellipticity and q₁ ≡ 1.
    pub fn validate_on(&self, grid: &Grid1D) -> Result<()> {
        self.validate()?;
        let h = grid.h();
        // a₁₁ is sampled at the cell midpoints the stencil uses
        for i in 0..=grid.n() {
            let x = self.x_lo + (i as f64 + 0.5) * h;
            let a = self.diffusion.eval(x);
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Spec(format!("diffusion coefficient not uniformly elliptic: a11({x}) = {a}")));
            }
        }
        for &x in grid.nodes() {
            let q1 = self.weights[0].eval(x);
            if (q1 - 1.0).abs() > 1e-12 {
                return Err(Error::Spec(format!("the first weight must be identically 1, q1({x}) = {q1}")));
            }
        }
        Ok(())
    }

    /// Sign hypotheses of the long-time and inverse results: B ≡ 0, b ≤ 0,
    /// q_j ≥ 0 and q_j not identically zero, checked on the grid.
    pub fn check_sign_hypotheses(&self, grid: &Grid1D) -> Result<()> {
        for &x in grid.nodes() {
            if self.convection.eval(x) != 0.0 {
                return Err(Error::Spec(format!("convection must vanish, B({x}) = {}", self.convection.eval(x))));
            }
            if self.potential.eval(x) > 0.0 {
                return Err(Error::Spec(format!("potential must be nonpositive, b({x}) = {}", self.potential.eval(x))));
            }
            for (j, q) in self.weights.iter().enumerate() {
                if q.eval(x) < 0.0 {
                    return Err(Error::Spec(format!("weight q{} is negative at x = {x}", j + 1)));
                }
            }
        }
        for (j, q) in self.weights.iter().enumerate() {
            if grid.nodes().iter().all(|&x| q.eval(x) == 0.0) {
                return Err(Error::Spec(format!("weight q{} vanishes identically", j + 1)));
            }
        }
        Ok(())
    }
}

/// Uniform grid of N interior nodes, h = (x_hi − x_lo)/(N + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    x_lo: f64,
    x_hi: f64,
    nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(x_lo: f64, x_hi: f64, n: usize) -> Result<Self> {
        if n == 0 || !(x_lo < x_hi) {
            return Err(Error::Spec(format!("grid needs N >= 1 and x_lo < x_hi, got N = {n} on ({x_lo}, {x_hi})")));
        }
        let h = (x_hi - x_lo) / (n as f64 + 1.0);
        let nodes = (1..=n).map(|i| x_lo + i as f64 * h).collect();
        Ok(Self { x_lo, x_hi, nodes })
    }

    pub fn for_spec(spec: &ProblemSpec, n: usize) -> Result<Self> {
        Self::new(spec.x_lo, spec.x_hi, n)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn h(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.nodes.len() as f64 + 1.0)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.x_lo, self.x_hi)
    }

    /// Index of the interior node closest to x.
    pub fn nearest(&self, x: f64) -> usize {
        let k = ((x - self.x_lo) / self.h()).round() as isize - 1;
        k.clamp(0, self.n() as isize - 1) as usize
    }
}

/// h-weighted discrete L² inner product.
pub fn inner(h: f64, u: &[f64], v: &[f64]) -> f64 {
    h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

/// h-weighted discrete L² norm.
pub fn l2_norm(h: f64, u: &[f64]) -> f64 {
    inner(h, u, u).sqrt()
}

/// A problem sampled on a grid: the symmetric tridiagonal A_h and the
/// node values of b, B, q_j and a.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub grid: Grid1D,
    pub orders: OrderSet,
    /// Diagonal of A_h.
    pub a_diag: Vec<f64>,
    /// Off-diagonal of A_h (symmetric).
    pub a_off: Vec<f64>,
    pub potential: Vec<f64>,
    pub convection: Vec<f64>,
    /// q_j at the nodes, one vector per order.
    pub weights: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

/// Assemble A_h = −(a₁₁ u')' with a₁₁ sampled at cell midpoints:
/// (A_h u)_i = −[a_{i+1/2}(u_{i+1} − u_i) − a_{i−1/2}(u_i − u_{i−1})]/h².
pub fn assemble(spec: &ProblemSpec, grid: &Grid1D) -> Result<DiscreteProblem> {
    spec.validate_on(grid)?;
    let n = grid.n();
    let h = grid.h();
    let h2 = h * h;
    let mid: Vec<f64> = (0..=n).map(|i| spec.diffusion.eval(spec.x_lo + (i as f64 + 0.5) * h)).collect();
    let a_diag = (0..n).map(|i| (mid[i] + mid[i + 1]) / h2).collect();
    let a_off = (0..n.saturating_sub(1)).map(|i| -mid[i + 1] / h2).collect();
    let nodes = grid.nodes();
    Ok(DiscreteProblem {
        grid: grid.clone(),
        orders: spec.orders.clone(),
        a_diag,
        a_off,
        potential: spec.potential.sample(nodes),
        convection: spec.convection.sample(nodes),
        weights: spec.weights.iter().map(|q| q.sample(nodes)).collect(),
        initial: spec.initial.sample(nodes),
    })
}

impl DiscreteProblem {
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    /// A_h v.
    pub fn apply_a(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.a_diag[i] * v[i];
                if i > 0 {
                    s += self.a_off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.a_off[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    /// Centered B·∇v with zero boundary values.
    pub fn apply_convection(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let h = self.h();
        (0..n)
            .map(|i| {
                let left = if i > 0 { v[i - 1] } else { 0.0 };
                let right = if i + 1 < n { v[i + 1] } else { 0.0 };
                self.convection[i] * (right - left) / (2.0 * h)
            })
            .collect()
    }

    pub fn has_convection(&self) -> bool {
        self.convection.iter().any(|&b| b != 0.0)
    }

    pub fn has_potential(&self) -> bool {
        self.potential.iter().any(|&b| b != 0.0)
    }

    /// Discrete H² norm ‖A_h v‖ + ‖v‖.
    pub fn h2_norm(&self, v: &[f64]) -> f64 {
        let h = self.h();
        l2_norm(h, &self.apply_a(v)) + l2_norm(h, v)
    }

    /// Tridiagonal bands (lower, diag, upper) of A_h − diag(b) − B·∇ + diag(shift).
    pub fn bands<T>(&self, shift: impl Fn(usize) -> T) -> (Vec<T>, Vec<T>, Vec<T>)
    where
        T: num_complex::ComplexFloat + From<f64>,
    {
        let n = self.n();
        let h = self.h();
        let diag = (0..n).map(|i| <T as From<f64>>::from(self.a_diag[i] - self.potential[i]) + shift(i)).collect();
        let lower = (1..n).map(|i| <T as From<f64>>::from(self.a_off[i - 1] + self.convection[i] / (2.0 * h))).collect();
        let upper = (0..n.saturating_sub(1)).map(|i| <T as From<f64>>::from(self.a_off[i] - self.convection[i] / (2.0 * h))).collect();
        (lower, diag, upper)
    }

    /// Solve the real elliptic problem (A_h − b) w = f (convection ignored,
    /// as in the long-time limit where B ≡ 0).
    pub fn solve_elliptic(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), f.len())?;
        let n = self.n();
        let diag: Vec<f64> = (0..n).map(|i| self.a_diag[i] - self.potential[i]).collect();
        solve_tridiagonal(&self.a_off, &diag, &self.a_off, f)
    }

    /// The sign hypotheses B ≡ 0, b ≤ 0, q_j ≥ 0 and q_j ≢ 0 on the nodes.
    pub fn check_sign_hypotheses(&self) -> Result<()> {
        if self.has_convection() {
            return Err(Error::Spec("convection must vanish".into()));
        }
        if let Some(b) = self.potential.iter().find(|&&b| b > 0.0) {
            return Err(Error::Spec(format!("potential must be nonpositive, found {b}")));
        }
        for (j, q) in self.weights.iter().enumerate() {
            if q.iter().any(|&v| v < 0.0) {
                return Err(Error::Spec(format!("weight q{} is negative somewhere", j + 1)));
            }
            if q.iter().all(|&v| v == 0.0) {
                return Err(Error::Spec(format!("weight q{} vanishes identically", j + 1)));
            }
        }
        Ok(())
    }

    /// Q(x_i; s) = Σ_j q_j(x_i) s^{α_j} (principal branch).
    pub fn q_of_s(&self, s: Complex64) -> Vec<Complex64> {
        let n = self.n();
        let mut q = vec![Complex64::new(0.0, 0.0); n];
        for (alpha, w) in self.orders.alphas().iter().zip(&self.weights) {
            let sa = s.powf(*alpha);
            for i in 0..n {
                q[i] += sa * w[i];
            }
        }
        q
    }
}

/// Solve (A_h − b − B·∇ + Q(·; s)) w = rhs for complex s with
/// |arg s| < min(π/(2α₁), π).
pub fn solve_shifted(problem: &DiscreteProblem, s: Complex64, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(problem.n(), rhs.len())?;
    let limit = (PI / (2.0 * problem.orders.leading())).min(PI);
    if s.norm() == 0.0 || s.arg().abs() >= limit {
        return Err(Error::Domain(format!("shift {s} outside the sector |arg s| < {limit}")));
    }
    let q = problem.q_of_s(s);
    let (lower, diag, upper) = problem.bands(|i| q[i]);
    solve_tridiagonal(&lower, &diag, &upper, rhs)
}

/// Eigenpairs of A_h, orthonormal in the h-weighted product.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    grid: Grid1D,
    h: f64,
    n: usize,
    eigenvalues: Vec<f64>,
    /// Row-major: `vectors[k*n + i]` is φ_k at node i.
    vectors: Vec<f64>,
}

pub fn eigendecompose(problem: &DiscreteProblem) -> Result<EigenBasis> {
    let eig = symmetric_tridiagonal_eigen(&problem.a_diag, &problem.a_off)?;
    let n = problem.n();
    let h = problem.h();
    let scale = 1.0 / h.sqrt();
    let mut vectors = Vec::with_capacity(n * n);
    for v in &eig.vectors {
        vectors.extend(v.iter().map(|x| x * scale));
    }
    if eig.values.first().is_some_and(|&l| !(l > 0.0)) {
        return Err(Error::Numeric(format!("operator is not positive definite, smallest eigenvalue {}", eig.values[0])));
    }
    Ok(EigenBasis { grid: problem.grid.clone(), h, n, eigenvalues: eig.values, vectors })
}

impl EigenBasis {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    /// Coefficients (v, φ_k)_h.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, v.len())?;
        Ok((0..self.n).map(|k| inner(self.h, self.vector(k), v)).collect())
    }

    /// Σ_k c_k φ_k.
    pub fn synthesize(&self, c: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, c.len())?;
        let mut out = vec![0.0; self.n];
        for (k, &ck) in c.iter().enumerate() {
            if ck != 0.0 {
                for (o, p) in out.iter_mut().zip(self.vector(k)) {
                    *o += ck * p;
                }
            }
        }
        Ok(out)
    }

    /// Complex coefficients applied to the real basis.
    pub fn synthesize_complex(&self, c: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.n, c.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for (k, &ck) in c.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.vector(k)) {
                *o += ck * p;
            }
        }
        Ok(out)
    }

    /// Row-major N×N matrix of node values, row k = φ_k.
    pub fn matrix(&self) -> &[f64] {
        &self.vectors
    }
}

/// A^γ v = Σ λ_k^γ (v, φ_k) φ_k for γ ∈ [−1, 1].
pub fn frac_power_apply(basis: &EigenBasis, gamma: f64, v: &[f64]) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("fractional power must lie in [-1, 1], got {gamma}")));
    }
    let mut c = basis.project(v)?;
    for (ck, lam) in c.iter_mut().zip(basis.eigenvalues()) {
        *ck *= lam.powf(gamma);
    }
    basis.synthesize(&c)
}

/// ‖v‖_{D(A^γ)} = (Σ λ_k^{2γ} (v, φ_k)²)^{1/2} for γ ∈ [0, 1].
pub fn sobolev_norm(basis: &EigenBasis, gamma: f64, v: &[f64]) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("norm index must lie in [0, 1], got {gamma}")));
    }
    let c = basis.project(v)?;
    Ok(sobolev_norm_of_coefficients(basis, gamma, &c))
}

/// The same norm from precomputed coefficients.
pub fn sobolev_norm_of_coefficients(basis: &EigenBasis, gamma: f64, c: &[f64]) -> f64 {
    c.iter().zip(basis.eigenvalues()).map(|(ck, lam)| lam.powf(2.0 * gamma) * ck * ck).sum::<f64>().sqrt()
}

/// S^{(j)}(z) v for j ∈ {0, 1, 2}:
/// S(z)v = Σ (v, φ_k) E_{α,1}(−λ_k z^α) φ_k and
/// S^{(j)}(z)v = −Σ λ_k (v, φ_k) z^{α−j} E_{α,α−j+1}(−λ_k z^α) φ_k.
pub fn solution_operator(basis: &EigenBasis, alpha1: f64, deriv_order: u32, z: Complex64, v: &[f64]) -> Result<Vec<Complex64>> {
    if !(alpha1 > 0.0 && alpha1 < 1.0) {
        return Err(Error::Domain(format!("alpha1 must lie in (0, 1), got {alpha1}")));
    }
    if deriv_order > 2 {
        return Err(Error::Domain(format!("derivative order must be 0, 1 or 2, got {deriv_order}")));
    }
    if z.norm() == 0.0 || z.arg().abs() >= 0.5 * PI {
        return Err(Error::Domain(format!("z = {z} outside the half plane |arg z| < pi/2")));
    }
    let c = basis.project(v)?;
    let j = deriv_order as f64;
    let ml = MittagLeffler::with_beta(alpha1, if deriv_order == 0 { 1.0 } else { alpha1 - j + 1.0 })?;
    let za = z.powf(alpha1);
    let pre = if deriv_order == 0 { Complex64::new(1.0, 0.0) } else { -z.powf(alpha1 - j) };
    let coeffs: Vec<Complex64> = c
        .iter()
        .zip(basis.eigenvalues())
        .map(|(&ck, &lam)| {
            let e = ml.eval(-za * lam).value;
            let scale = if deriv_order == 0 { ck } else { lam * ck };
            pre * e * scale
        })
        .collect();
    basis.synthesize_complex(&coeffs)
}
