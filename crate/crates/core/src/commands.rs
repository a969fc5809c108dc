//! `solve`, `approximate` and `verify` as library calls.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::approximation::{
    approximating_sequence, build_report, commutativity_report, limit_errors, ApproxError, ApproxReport, ApproxRow,
    ControlStatePair, MollifierKernel,
};
use crate::bvpath::BvError;
use crate::completion::{CompletionError, GraphCompletion};
use crate::expr::{Env, ExprError};
use crate::integrator::{gc_solution, integrate_caratheodory, integrate_spacetime, IntegrationError, Trajectory};
use crate::numeric::{merge_sorted, uniform_grid};
use crate::report::{self, ReportError};
use crate::scenario::{Scenario, SweepSpec};
use crate::verify::{self, example_cost, CriterionOutcome, VerifyError};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Path(#[from] BvError),
    #[error(transparent)]
    Completion(#[from] CompletionError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Approximation(#[from] ApproxError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CommandError>;

/// Command-line overrides shared by all commands.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub step: Option<f64>,
    pub ks: Option<Vec<usize>>,
    pub taus: Option<Vec<f64>>,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { step: None, ks: None, taus: None, out: PathBuf::from("out"), seed: 42 }
    }
}

impl RunOptions {
    fn step(&self, sc: &Scenario) -> Result<f64> {
        let step = self.step.unwrap_or(sc.solver.step);
        if !(step > 0.0 && step <= 1.0) {
            return Err(CommandError::Usage(format!("step must lie in (0, 1], got {step}")));
        }
        Ok(step)
    }

    fn sweep(&self, sc: &Scenario) -> Result<SweepSpec> {
        let (a, b) = sc.input.interval();
        let base = sc.sweep.clone();
        let ks = match (&self.ks, &base) {
            (Some(ks), _) => ks.clone(),
            (None, Some(s)) => s.ks.clone(),
            (None, None) => return Err(CommandError::Usage("no [sweep] block and no --ks given".into())),
        };
        if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CommandError::Usage("ks must be positive and strictly increasing".into()));
        }
        let taus = self.taus.clone().or_else(|| base.as_ref().map(|s| s.taus.clone())).unwrap_or_else(|| vec![b]);
        if taus.is_empty() || taus.iter().any(|t| !(*t >= a && *t <= b)) {
            return Err(CommandError::Usage(format!("every tau must lie in [{a}, {b}]")));
        }
        Ok(SweepSpec { ks, taus, support: base.and_then(|s| s.support) })
    }
}

/// Exit status, emitted files and a printable summary.
#[derive(Debug, Clone, Default)]
pub struct RunResult {
    pub status: i32,
    pub outputs: Vec<PathBuf>,
    pub summary: Vec<(String, String)>,
    pub outcomes: Vec<CriterionOutcome>,
}

impl RunResult {
    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(dir).map_err(|source| CommandError::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| CommandError::Io { path: path.clone(), source })?;
    Ok((path, BufWriter::new(file)))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10}")).collect();
    format!("({})", parts.join(", "))
}

/// State samples used to probe the Lie brackets.
fn bracket_samples(sc: &Scenario, x: &Trajectory) -> Result<Vec<Vec<f64>>> {
    let (a, b) = x.interval();
    let mut samples = vec![sc.x0.clone()];
    for t in uniform_grid(a, b, 10) {
        samples.push(x.eval(t)?);
    }
    Ok(samples)
}

/// Build the completion, integrate and write `trajectory.csv`,
/// `completion.csv` and, when a cost is declared, `cost.csv`.
pub fn cmd_solve(sc: &Scenario, opts: &RunOptions) -> Result<RunResult> {
    let step = opts.step(sc)?;
    let u = sc.input.path()?;
    let (a, b) = u.interval();
    let gc = GraphCompletion::build_with_grid(Arc::new(u.clone()), &sc.control_set, &sc.bridges, sc.solver.s_cells)?;
    let y = integrate_spacetime(&gc, &sc.dynamics, &sc.v, &sc.x0, step)?;
    let x = gc_solution(&y, gc.clock())?;

    let mut result = RunResult::default();
    let mut grid = uniform_grid(a, b, 1000);
    grid.extend_from_slice(u.breakpoints());
    let rows = report::trajectory_rows(&x, &merge_sorted(grid))?;
    let (path, w) = create(&opts.out, "trajectory.csv")?;
    report::write_trajectory(w, sc.dynamics.n(), &rows)?;
    result.outputs.push(path);
    let (path, w) = create(&opts.out, "completion.csv")?;
    report::write_completion(w, &gc)?;
    result.outputs.push(path);

    if let Some(cost) = &sc.cost {
        let phi = |t: f64| cost.phi.eval(&Env::time(t)).unwrap_or(f64::NAN);
        let value = example_cost(|t| Ok(x.eval(t)?), phi, &cost.times, b)?;
        let k = sc.input.k.map(|k| k.round() as usize).unwrap_or(0);
        let (path, w) = create(&opts.out, "cost.csv")?;
        report::write_costs(w, &[(k, value)])?;
        result.outputs.push(path);
        result.note("cost", format!("{value:.10}"));
    }

    let verdict = commutativity_report(&sc.dynamics, &bracket_samples(sc, &x)?)?.verdict();
    result.note("scenario", sc);
    result.note("Var(u)", format!("{:.10}", u.total_variation()));
    result.note("Lipschitz L", format!("{:.10}", gc.lipschitz()));
    result.note("variation budget", format!("{:.10}", gc.variation_budget()));
    result.note("commutativity", verdict);
    result.note("x(b)", fmt_vec(&x.eval(b)?));
    for jump in x.jumps() {
        result.note(&format!("jump at t = {}", jump.t), format!("{} -> {}", fmt_vec(&jump.left), fmt_vec(&jump.right)));
    }
    Ok(result)
}

/// Sweep `k` and write `approx.csv`.
///
/// With a `[target]` block and an input depending on `k`, each `u_k` is the
/// input family itself and the target pair is the declared limit.
/// Otherwise the sweep is the completion-based approximating sequence and
/// the target is the graph-completion solution.
pub fn cmd_approximate(sc: &Scenario, opts: &RunOptions) -> Result<RunResult> {
    let sweep = opts.sweep(sc)?;
    let step = opts.step(sc)?;
    match &sc.target {
        Some(_) if sc.input.is_family() => approximate_family(sc, opts, &sweep, step),
        _ => approximate_completion(sc, opts, &sweep, step),
    }
}

fn approximate_family(sc: &Scenario, opts: &RunOptions, sweep: &SweepSpec, step: f64) -> Result<RunResult> {
    let target = sc.target.as_ref().expect("checked by caller");
    let (a, b) = sc.input.interval();
    let eval_all = |exprs: &[crate::expr::Expr], t: f64| -> std::result::Result<Vec<f64>, ApproxError> {
        Ok(exprs.iter().map(|e| e.eval(&Env::time(t))).collect::<std::result::Result<_, _>>()?)
    };
    let target_pair = ControlStatePair::new((a, b), |t| Ok((eval_all(&target.input, t)?, eval_all(&target.state, t)?)));
    let runs = sweep
        .ks
        .par_iter()
        .map(|&k| -> Result<(ApproxRow, Vec<ApproxRow>, Option<f64>)> {
            let u = sc.input.path_with_k(Some(k as f64))?;
            let x = integrate_caratheodory(&sc.dynamics, &u, &sc.v, &sc.x0, step)?;
            let candidate = ControlStatePair::of_path(&u, &x);
            let (pointwise, l1) = limit_errors(&target_pair, &candidate, &sweep.taus)?;
            let var_uk = u.total_variation();
            let sup_xk = x.sup_norm(&uniform_grid(a, b, 1000))?;
            let rows: Vec<ApproxRow> = sweep
                .taus
                .iter()
                .zip(pointwise)
                .map(|(&tau, p)| ApproxRow { k, tau, pointwise_err: p, l1_err: l1, var_uk, sup_xk })
                .collect();
            let cost = match &sc.cost {
                Some(c) => {
                    let phi = |t: f64| c.phi.eval(&Env::time(t)).unwrap_or(f64::NAN);
                    Some(example_cost(|t| Ok(x.eval(t)?), phi, &c.times, b)?)
                }
                None => None,
            };
            Ok((rows[0].clone(), rows, cost))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = ApproxReport { rows: runs.iter().flat_map(|r| r.1.clone()).collect() };
    let mut result = RunResult::default();
    let (path, w) = create(&opts.out, "approx.csv")?;
    report::write_approx_report(w, &report)?;
    result.outputs.push(path);
    let costs: Vec<(usize, f64)> = sweep.ks.iter().zip(&runs).filter_map(|(&k, r)| r.2.map(|c| (k, c))).collect();
    if !costs.is_empty() {
        let (path, w) = create(&opts.out, "cost.csv")?;
        report::write_costs(w, &costs)?;
        result.outputs.push(path);
        let decreasing = costs.windows(2).all(|w| w[1].1 < w[0].1);
        result.note("cost", format!("{:?} (decreasing: {decreasing})", costs));
    }
    let certificate = report.certificate(f64::INFINITY, 1e-3);
    let first = runs.first().map(|r| r.0.var_uk).unwrap_or(0.0);
    let last = runs.last().map(|r| r.0.var_uk).unwrap_or(0.0);
    result.note("scenario", sc);
    result.note("mode", "input family against declared limit");
    result.note("errors decreasing", certificate.decreasing);
    result.note("largest final error", format!("{:.6e}", certificate.final_error));
    result.note("Var(u_k)", format!("{first:.6} -> {last:.6} over the sweep"));
    result.note(
        "verdict",
        if certificate.decreasing && certificate.below_threshold {
            "converging"
        } else if certificate.decreasing {
            "errors decreasing, threshold 1e-3 not reached"
        } else {
            "no monotone convergence observed"
        },
    );
    Ok(result)
}

fn approximate_completion(sc: &Scenario, opts: &RunOptions, sweep: &SweepSpec, step: f64) -> Result<RunResult> {
    let u = sc.input.path()?;
    let (a, b) = u.interval();
    let gc = GraphCompletion::build_with_grid(Arc::new(u.clone()), &sc.control_set, &sc.bridges, sc.solver.s_cells)?;
    let y = integrate_spacetime(&gc, &sc.dynamics, &sc.v, &sc.x0, step)?;
    let x = gc_solution(&y, gc.clock())?;
    let kernel = MollifierKernel::new(sweep.support.unwrap_or(b - a))?;
    let members = approximating_sequence(&gc, &sc.dynamics, &sc.v, &sc.x0, &sweep.ks, &kernel, step)?;
    let target = ControlStatePair::of_path(&u, &x);
    let report = build_report(&target, &members, &sweep.taus)?;
    let mut result = RunResult::default();
    let (path, w) = create(&opts.out, "approx.csv")?;
    report::write_approx_report(w, &report)?;
    result.outputs.push(path);
    let budget = gc.control_variation();
    let certificate = report.certificate(budget, 1e-3);
    result.note("scenario", sc);
    result.note("mode", "completion-based approximating sequence");
    result.note("Var(phi)", format!("{budget:.10}"));
    result.note("errors decreasing", certificate.decreasing);
    result.note("largest final error", format!("{:.6e}", certificate.final_error));
    result.note("Var(u_k) <= Var(phi)", certificate.variation_bounded);
    let surgery: Vec<String> = members
        .iter()
        .map(|m| format!("k={}: {}/{}", m.k, m.clock.surgery().iter().filter(|s| s.applied).count(), m.clock.surgery().len()))
        .collect();
    result.note("surgery applied", surgery.join(", "));
    result.note(
        "BV simple certificate",
        if certificate.passed() {
            "passed".to_string()
        } else {
            format!(
                "not certified (decreasing: {}, final error below 1e-3: {}, variation bounded: {})",
                certificate.decreasing, certificate.below_threshold, certificate.variation_bounded
            )
        },
    );
    Ok(result)
}

/// What `verify` checks.
#[derive(Debug, Clone)]
pub enum VerifyTarget<'a> {
    All,
    Scenario(&'a Scenario),
}

/// Run checks; status 1 when any fails.
pub fn cmd_verify(target: VerifyTarget<'_>, opts: &RunOptions) -> Result<RunResult> {
    let outcomes = match target {
        VerifyTarget::All => verify::run_all(opts.seed),
        VerifyTarget::Scenario(sc) => verify::run_scenario(sc),
    };
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| format!("{} ({})", o.id, o.name)).collect();
    let mut result = RunResult { status: if failed.is_empty() { 0 } else { 1 }, ..Default::default() };
    result.note("passed", format!("{}/{}", outcomes.len() - failed.len(), outcomes.len()));
    if !failed.is_empty() {
        result.note("failed", failed.join(", "));
    }
    result.outcomes = outcomes;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin, parse_scenario};

    #[test]
    fn frozen_scenario_gives_constant_trajectory() {
        let text = "[dynamics]\nn = 2\nm = 1\nf = \"0\", \"0\"\ng.1 = \"0\", \"0\"\n[input]\nbreakpoints = 0, 0.5, 1\ntable.0 = 0: 0; 0.5: 0\ntable.1 = 0.5: 1; 1: 1\n[initial]\nx = 3, -1\n";
        let sc = parse_scenario("frozen", text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions { out: dir.path().to_path_buf(), ..Default::default() };
        let result = cmd_solve(&sc, &opts).unwrap();
        let csv = std::fs::read_to_string(&result.outputs[0]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,side,x_1,x_2"));
        assert!(lines.all(|l| l.ends_with(",3,-1")));
        assert!(csv.contains("0.5,left,3,-1") && csv.contains("0.5,right,3,-1"));
    }

    #[test]
    fn solve_noncommutative_step() {
        let sc = builtin("step_noncomm").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions { out: dir.path().to_path_buf(), ..Default::default() };
        let result = cmd_solve(&sc, &opts).unwrap();
        let lookup = |k: &str| result.summary.iter().find(|(key, _)| key == k).unwrap().1.clone();
        assert_eq!(lookup("x(b)"), "(1.0000000000, 1.0000000000)");
        assert!(lookup("commutativity").starts_with("non-commuting"));
        assert_eq!(result.outputs.len(), 2);
    }

    #[test]
    fn sweep_requires_ks() {
        let sc = parse_scenario("m", "[dynamics]\nn = 1\nm = 1\nf = \"0\"\ng.1 = \"x1\"\n[input]\nbreakpoints = 0, 1\ntable.0 = 0: 0; 1: 1\n[initial]\nx = 1\n").unwrap();
        let opts = RunOptions::default();
        assert!(matches!(cmd_approximate(&sc, &opts), Err(CommandError::Usage(_))));
    }
}
