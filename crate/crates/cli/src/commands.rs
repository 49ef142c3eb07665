//! The subcommands. Each returns its artifacts, a few summary lines and the
//! number of failed checks; writing files and choosing the exit status is
//! left to the caller.

use multifrac::asymptotics::verify_theorem_asymp;
use multifrac::forward::{l1_solve, laplace_solve, laplace_solve_at, picard_solve, spectral_single_term, Field};
use multifrac::inverse::{estimate_orders, EstimateOptions, Observation};
use multifrac::operator::{eigendecompose, DiscreteProblem};
use multifrac::special::MittagLeffler;

use crate::config::{Config, SolverKind};
use crate::error::CliError;
use crate::output::{field_table, num, read_series, Artifacts, Table};
use crate::suite::{self, bound_text, Check, Status};

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub lines: Vec<String>,
    pub failed: usize,
}

fn count_failed(checks: &[Check]) -> usize {
    checks.iter().filter(|c| c.status == Status::Fail).count()
}

/// Mittag-Leffler tables E_{α,β}(x) on the configured grid plus the
/// special-function identity checks.
pub fn ml_eval(cfg: &Config) -> Result<Outcome, CliError> {
    let m = &cfg.raw.ml;
    let mut table = Table::new(&["alpha", "beta", "x", "value"]);
    for &a in &m.alphas {
        for &b in &m.betas {
            let ml = MittagLeffler::with_beta(a, b)?;
            for i in 0..m.points {
                let x = m.x_min + (m.x_max - m.x_min) * i as f64 / (m.points - 1) as f64;
                table.push(vec![num(a), num(b), num(x), num(ml.eval_real(x))]);
            }
        }
    }
    let checks = suite::special_functions();
    let mut out = Outcome { failed: count_failed(&checks), lines: suite::summary_lines(&checks), ..Default::default() };
    out.artifacts.insert("ml_eval.csv", &table)?;
    out.artifacts.insert("ml_checks.csv", &suite::checks_table(&checks))?;
    Ok(out)
}

/// Run one solver on the configured time grid. The contour solver gets
/// the initial value at t = 0 prepended.
pub fn solve_field(cfg: &Config, p: &DiscreteProblem, kind: SolverKind) -> Result<Field, CliError> {
    let tg = cfg.time_grid()?;
    let s = &cfg.raw.solver;
    Ok(match kind {
        SolverKind::Picard => {
            let basis = eigendecompose(p)?;
            picard_solve(p, &basis, &tg, s.gamma, s.tolerance, s.max_iter)?
        }
        SolverKind::L1 => l1_solve(p, &tg)?,
        SolverKind::Laplace => {
            let positive = &tg.times()[1..];
            let contour = cfg.contour(&p.orders, positive[0])?;
            let u = laplace_solve(p, &contour, positive)?;
            let mut values = vec![p.initial.clone()];
            values.extend((0..u.len()).map(|k| u.at(k).to_vec()));
            Field::new(p.grid.clone(), tg.times().to_vec(), values)?
        }
        SolverKind::Spectral => {
            if p.orders.len() != 1 || p.has_convection() || p.has_potential() {
                return Err(CliError::Config("solver.kind: spectral needs a single order with zero potential and convection".into()));
            }
            let basis = eigendecompose(p)?;
            spectral_single_term(&basis, p.orders.leading(), &p.initial, tg.times())?
        }
    })
}

pub fn solve(cfg: &Config) -> Result<Outcome, CliError> {
    let p = cfg.problem()?;
    let kind = cfg.raw.solver.kind;
    let u = solve_field(cfg, &p, kind)?;
    let mut out = Outcome::default();
    out.artifacts.insert(&format!("solution_{}.csv", kind.name()), &field_table(&u))?;
    let peak = u.l2_norms().iter().copied().fold(0.0, f64::max);
    out.lines.push(format!("{}: {} times x {} nodes, max ||u(t)|| = {:.6e}", kind.name(), u.len(), p.n(), peak));
    Ok(out)
}

/// Solver against reference solver on the same time grid.
pub fn crosscheck(cfg: &Config) -> Result<Outcome, CliError> {
    let p = cfg.problem()?;
    let (a, b) = (cfg.raw.solver.kind, cfg.raw.solver.reference);
    let u = solve_field(cfg, &p, a)?;
    let v = solve_field(cfg, &p, b)?;
    let d = u.difference(&v)?;
    let mut table = Table::new(&["t", "l2_solver", "l2_reference", "l2_delta", "max_abs_delta"]);
    let (nu, nv, nd) = (u.l2_norms(), v.l2_norms(), d.l2_norms());
    for k in 0..u.len() {
        let max_abs = d.at(k).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        table.push(vec![num(u.times()[k]), num(nu[k]), num(nv[k]), num(nd[k]), num(max_abs)]);
    }
    let rel = u.relative_difference(&v)?;
    let mut summary = Table::new(&["solver", "reference", "max_relative_difference"]);
    summary.push(vec![a.name().into(), b.name().into(), num(rel)]);
    let mut out = Outcome::default();
    out.artifacts.insert("crosscheck.csv", &table)?;
    out.artifacts.insert("crosscheck_summary.csv", &summary)?;
    out.lines.push(format!("{} vs {}: max relative L2 difference {:.6e}", a.name(), b.name(), rel));
    Ok(out)
}

/// Long-time norm histories and decay fits on the configured window.
pub fn asymptotics(cfg: &Config) -> Result<Outcome, CliError> {
    let p = cfg.problem()?;
    let a = &cfg.raw.asymptotics;
    let n = a.samples;
    let ts: Vec<f64> = (0..n).map(|i| a.t_min * (a.t_max / a.t_min).powf(i as f64 / (n - 1) as f64)).collect();
    let r = verify_theorem_asymp(&p, &ts, Some((a.t_min, a.t_max)))?;
    let mut hist = Table::new(&["t", "norm_u", "norm_u_minus_v", "norm_u_minus_ul"]);
    for (k, &t) in ts.iter().enumerate() {
        hist.push(vec![num(t), num(r.norm_u[k]), num(r.norm_u_minus_v[k]), num(r.norm_u_minus_ul[k])]);
    }
    let mut checks = vec![Check {
        criterion: 6,
        name: "slope of ||u||".into(),
        value: r.fit_u.slope,
        bound: format!("in [{}, {}]", bound_text(-r.alpha_last - 0.05), bound_text(-r.alpha_last + 0.05)),
        status: if r.u_rate_ok() { Status::Pass } else { Status::Fail },
    }];
    if let Some(f) = &r.fit_u_minus_v {
        checks.push(Check {
            criterion: 6,
            name: "slope of ||u - v||".into(),
            value: f.slope,
            bound: format!("<= {}", bound_text(-r.rate + 0.1)),
            status: if f.slope <= -r.rate + 0.1 { Status::Pass } else { Status::Fail },
        });
    }
    checks.push(Check {
        criterion: 6,
        name: "slope of ||u - u_l||".into(),
        value: r.fit_u_minus_ul.slope,
        bound: format!("<= {}", bound_text(-r.rate + 0.1)),
        status: if r.fit_u_minus_ul.slope <= -r.rate + 0.1 { Status::Pass } else { Status::Fail },
    });
    let mut fits = Table::new(&["quantity", "slope", "intercept", "residual", "samples"]);
    let mut add = |name: &str, f: &multifrac::asymptotics::DecayFit| {
        fits.push(vec![name.into(), num(f.slope), num(f.intercept), num(f.residual), f.samples.to_string()]);
    };
    add("norm_u", &r.fit_u);
    if let Some(f) = &r.fit_u_minus_v {
        add("norm_u_minus_v", f);
    }
    add("norm_u_minus_ul", &r.fit_u_minus_ul);
    let mut out = Outcome { failed: count_failed(&checks), lines: suite::summary_lines(&checks), ..Default::default() };
    out.artifacts.insert("asymptotics.csv", &hist)?;
    out.artifacts.insert("asymptotics_fit.csv", &fits)?;
    out.artifacts.insert("asymptotics_checks.csv", &suite::checks_table(&checks))?;
    Ok(out)
}

/// Order recovery from an observation file, or from data synthesised
/// with the configured orders when no file is given.
pub fn invert(cfg: &Config) -> Result<Outcome, CliError> {
    let p = cfg.problem()?;
    let node = p.grid.nearest(cfg.x0());
    let inv = &cfg.raw.inverse;
    let (obs, synthetic) = match cfg.observation_path() {
        Some(path) => {
            let (ts, us) = read_series(&path)?;
            (Observation::new(&p.grid, node, ts, us).map_err(|e| CliError::Config(format!("inverse.observation: {e}")))?, false)
        }
        None => {
            let ts: Vec<f64> = (1..=inv.samples).map(|k| inv.t_end * k as f64 / inv.samples as f64).collect();
            let contour = cfg.contour(&p.orders, ts[0])?;
            let us = laplace_solve_at(&p, &contour, &ts, node)?;
            (Observation::new(&p.grid, node, ts, us)?, true)
        }
    };
    let init = cfg.initial_orders()?;
    let opts = EstimateOptions { max_iter: inv.max_iter, misfit_tol: inv.misfit_tol, ..Default::default() };
    let est = estimate_orders(&obs, &p, &init, &opts)?;

    let mut orders = Table::new(&["j", "initial", "estimate", "configured"]);
    for j in 0..init.len() {
        orders.push(vec![(j + 1).to_string(), num(init.alphas()[j]), num(est.orders.alphas()[j]), num(p.orders.alphas()[j])]);
    }
    let mut history = Table::new(&["iteration", "relative_misfit"]);
    for (i, m) in est.history.iter().enumerate() {
        history.push(vec![i.to_string(), num(*m)]);
    }
    let mut diag = Table::new(&["key", "value"]);
    diag.push(vec!["x0".into(), num(obs.x0())]);
    diag.push(vec!["node".into(), node.to_string()]);
    diag.push(vec!["synthetic_observation".into(), synthetic.to_string()]);
    diag.push(vec!["relative_misfit".into(), num(est.misfit)]);
    diag.push(vec!["iterations".into(), est.iterations.to_string()]);
    diag.push(vec!["identified".into(), est.identified.to_string()]);
    diag.push(vec!["sign_changing_initial".into(), est.sign_changing_initial.to_string()]);
    for w in &est.warnings {
        diag.push(vec!["warning".into(), w.clone()]);
    }
    let mut out = Outcome { failed: usize::from(!est.identified), ..Default::default() };
    if let Some(tr) = &est.trace {
        let mut t = Table::new(&["s", "w", "q1"]);
        for i in 0..tr.s_values.len() {
            t.push(vec![num(tr.s_values[i]), num(tr.w_values[i]), num(tr.q1_values[i])]);
        }
        out.artifacts.insert("inversion_trace.csv", &t)?;
    }
    out.artifacts.insert("inversion_orders.csv", &orders)?;
    out.artifacts.insert("inversion_history.csv", &history)?;
    out.artifacts.insert("inversion_diagnostics.csv", &diag)?;
    let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.6}")).collect::<Vec<_>>().join(", ");
    out.lines.push(format!(
        "recovered orders ({}) from initial ({}), relative misfit {:.3e}, {} iterations",
        fmt(est.orders.alphas()),
        fmt(init.alphas()),
        est.misfit,
        est.iterations
    ));
    out.lines.extend(est.warnings.iter().map(|w| format!("warning: {w}")));
    Ok(out)
}

fn suite_artifacts(cfg: &Config, seed: u64) -> Result<(Vec<Check>, Artifacts), CliError> {
    let (checks, extra) = suite::run(cfg, seed)?;
    let mut a = Artifacts::default();
    a.insert("acceptance.csv", &suite::checks_table(&checks))?;
    for (name, t) in &extra {
        a.insert(name, t)?;
    }
    Ok((checks, a))
}

/// Criteria 1 to 9, run twice in-process; the second run's artifacts must
/// match the first byte for byte (criterion 10).
pub fn accept(cfg: &Config, seed: u64) -> Result<Outcome, CliError> {
    let (mut checks, first) = suite_artifacts(cfg, seed)?;
    let (_, second) = suite_artifacts(cfg, seed)?;
    let differing =
        first.names().filter(|n| first.get(n) != second.get(n)).count() + second.names().filter(|n| first.get(n).is_none()).count();
    checks.push(Check {
        criterion: 10,
        name: "artifacts differing between two runs with the same config and seed".into(),
        value: differing as f64,
        bound: "<= 0".into(),
        status: if differing == 0 { Status::Pass } else { Status::Fail },
    });
    let mut artifacts = first;
    artifacts.insert("acceptance.csv", &suite::checks_table(&checks))?;
    Ok(Outcome { artifacts, lines: suite::summary_lines(&checks), failed: count_failed(&checks) })
}
