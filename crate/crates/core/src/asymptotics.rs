//! Long-time behaviour: the single-term comparison solution v, the leading
//! term u_ℓ(t) = (𝒜 − b)⁻¹(q_ℓ a) t^{−α_ℓ}/Γ(1 − α_ℓ), and power-law fits of
//! norm histories.

use crate::error::{Error, Result};
use crate::forward::{laplace_solve, ContourSpec, Field};
use crate::operator::{l2_norm, DiscreteProblem, OrderSet};
use crate::special::rgamma;

/// Least-squares line through (ln t, ln norm) on a window.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    /// RMS deviation of the log-log fit.
    pub residual: f64,
    pub samples: usize,
}

/// Fit ln norm = intercept + slope·ln t over the samples with t in
/// `window` (default: the last decade of `times`).
pub fn fit_decay(times: &[f64], norms: &[f64], window: Option<(f64, f64)>) -> Result<DecayFit> {
    crate::error::check_len(times.len(), norms.len())?;
    let t_max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = window.unwrap_or((t_max / 10.0, t_max));
    if !(lo < hi) || !(lo > 0.0) {
        return Err(Error::Domain(format!("fit window ({lo}, {hi}) must be positive and nonempty")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &n) in times.iter().zip(norms) {
        if t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12) {
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Domain(format!("norm {n} at t = {t} is not positive")));
            }
            xs.push(t.ln());
            ys.push(n.ln());
        }
    }
    if xs.len() < 8 {
        return Err(Error::Domain(format!("{} samples in the fit window, at least 8 needed", xs.len())));
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / m).sqrt();
    Ok(DecayFit { slope, intercept, window: (lo, hi), residual, samples: xs.len() })
}

/// The problem q_ℓ ∂_t^{α_ℓ} v = −𝒜v + bv with the same data.
pub fn single_term_problem(problem: &DiscreteProblem) -> Result<DiscreteProblem> {
    problem.check_sign_hypotheses()?;
    let l = problem.orders.len() - 1;
    Ok(DiscreteProblem {
        orders: OrderSet::new(vec![problem.orders.smallest()])?,
        weights: vec![problem.weights[l].clone()],
        ..problem.clone()
    })
}

/// v on the given (positive) times, by contour inversion: the variable
/// weight q_ℓ(x) rules out a plain eigenfunction expansion.
pub fn single_term_reference(problem: &DiscreteProblem, times: &[f64]) -> Result<Field> {
    let single = single_term_problem(problem)?;
    let t_min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let contour = ContourSpec::default_for(&single.orders, t_min)?;
    laplace_solve(&single, &contour, times)
}

/// w = (𝒜 − b)⁻¹(q_ℓ a), the spatial profile of the leading term.
pub fn leading_profile(problem: &DiscreteProblem) -> Result<Vec<f64>> {
    if let Some(b) = problem.potential.iter().find(|&&b| b > 0.0) {
        return Err(Error::Spec(format!("potential must be nonpositive, found {b}")));
    }
    let l = problem.orders.len() - 1;
    let rhs: Vec<f64> = problem.weights[l].iter().zip(&problem.initial).map(|(q, a)| q * a).collect();
    problem.solve_elliptic(&rhs)
}

/// u_ℓ(t) = w t^{−α_ℓ}/Γ(1 − α_ℓ).
pub fn leading_term(problem: &DiscreteProblem, t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    let w = leading_profile(problem)?;
    Ok(scale_leading(&w, problem.orders.smallest(), t))
}

fn scale_leading(w: &[f64], alpha: f64, t: f64) -> Vec<f64> {
    let c = t.powf(-alpha) * rgamma(1.0 - alpha);
    w.iter().map(|x| c * x).collect()
}

/// Norm histories and fits behind the long-time comparison.
#[derive(Debug, Clone)]
pub struct AsymptoticReport {
    pub times: Vec<f64>,
    /// ‖u(t)‖ in L².
    pub norm_u: Vec<f64>,
    /// ‖u(t) − v(t)‖ in the discrete H² norm.
    pub norm_u_minus_v: Vec<f64>,
    /// ‖u(t) − u_ℓ(t)‖ in the discrete H² norm.
    pub norm_u_minus_ul: Vec<f64>,
    pub fit_u: DecayFit,
    /// None when u − v vanishes to solver precision (ℓ = 1).
    pub fit_u_minus_v: Option<DecayFit>,
    pub fit_u_minus_ul: DecayFit,
    /// α_ℓ.
    pub alpha_last: f64,
    /// min{2α_ℓ, α_{ℓ−1}} (2α_ℓ when ℓ = 1).
    pub rate: f64,
}

impl AsymptoticReport {
    /// ‖u‖ decays like t^{−α_ℓ} to ±0.05.
    pub fn u_rate_ok(&self) -> bool {
        (self.fit_u.slope + self.alpha_last).abs() <= 0.05
    }

    /// The differences decay at least like t^{−rate} up to 0.1 slack.
    pub fn difference_rates_ok(&self) -> bool {
        let v_ok = self.fit_u_minus_v.as_ref().is_none_or(|f| f.slope <= -self.rate + 0.1);
        v_ok && self.fit_u_minus_ul.slope <= -self.rate + 0.1
    }

    pub fn passed(&self) -> bool {
        self.u_rate_ok() && self.difference_rates_ok()
    }
}

/// Compute u (contour inversion of the full problem), v and u_ℓ on `times`
/// and fit their decay over `window` (default: last decade).
pub fn verify_theorem_asymp(problem: &DiscreteProblem, times: &[f64], window: Option<(f64, f64)>) -> Result<AsymptoticReport> {
    problem.check_sign_hypotheses()?;
    let t_min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let contour = ContourSpec::default_for(&problem.orders, t_min)?;
    let u = laplace_solve(problem, &contour, times)?;
    let v = single_term_reference(problem, times)?;
    let w = leading_profile(problem)?;
    let alphas = problem.orders.alphas();
    let alpha_last = problem.orders.smallest();
    let rate = if alphas.len() > 1 { (2.0 * alpha_last).min(alphas[alphas.len() - 2]) } else { 2.0 * alpha_last };

    let h = problem.h();
    let mut norm_u = Vec::with_capacity(times.len());
    let mut norm_u_minus_v = Vec::with_capacity(times.len());
    let mut norm_u_minus_ul = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let uk = u.at(k);
        let ul = scale_leading(&w, alpha_last, t);
        let dv: Vec<f64> = uk.iter().zip(v.at(k)).map(|(a, b)| a - b).collect();
        let dl: Vec<f64> = uk.iter().zip(&ul).map(|(a, b)| a - b).collect();
        norm_u.push(l2_norm(h, uk));
        norm_u_minus_v.push(problem.h2_norm(&dv));
        norm_u_minus_ul.push(problem.h2_norm(&dl));
    }
    let fit_u = fit_decay(times, &norm_u, window)?;
    let scale = norm_u.iter().copied().fold(0.0, f64::max);
    let fit_u_minus_v =
        if norm_u_minus_v.iter().all(|&d| d <= 1e-10 * scale) { None } else { Some(fit_decay(times, &norm_u_minus_v, window)?) };
    let fit_u_minus_ul = fit_decay(times, &norm_u_minus_ul, window)?;
    Ok(AsymptoticReport {
        times: times.to_vec(),
        norm_u,
        norm_u_minus_v,
        norm_u_minus_ul,
        fit_u,
        fit_u_minus_v,
        fit_u_minus_ul,
        alpha_last,
        rate,
    })
}
