//! Absolutely continuous approximations of graph-completion solutions.
//!
//! A clock `sigma` is smoothed by convolution with a scaled bump kernel
//! (after odd reflection at `a` and point reflection about `(b, 1)`), the
//! inverse of the smoothed clock is surgically corrected at jump times, and
//! the resulting reparameterizations `phi0_k` drive the space-time system.
//! The module also holds the limit-solution error functional and Lie
//! bracket based commutativity checks.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::bvpath::{BvPath, ControlSet, SampledControl};
use crate::completion::{BridgeOverrides, Clock, CompletionCurve, CompletionError, GraphCompletion};
use crate::expr::{Env, ExprError, VectorField};
use crate::integrator::{
    gc_solution, integrate_spacetime, Dynamics, IntegrationError, SpaceTimeControl, SpaceTimePath, TimeMap, Trajectory,
};
use crate::numeric::{self, dist, integrate_adaptive, norm, MonotoneTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Completion(#[from] CompletionError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("usage error: {0}")]
    Usage(String),
}

/// Number of quadrature nodes across the support of the scaled kernel.
pub const DEFAULT_NODES_PER_WIDTH: usize = 1 << 12;

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// `rho(t) = C exp(-1 / (1 - (t/M)^2)) / M` on `(-M, M)`, and its scalings
/// `rho_k(t) = 2k rho(2kt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierKernel {
    half_width: f64,
    nodes_per_width: usize,
    normalization: f64,
}

impl MollifierKernel {
    pub fn new(half_width: f64) -> Result<Self, ApproxError> {
        Self::with_nodes(half_width, DEFAULT_NODES_PER_WIDTH)
    }

    pub fn with_nodes(half_width: f64, nodes_per_width: usize) -> Result<Self, ApproxError> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(ApproxError::Usage(format!("kernel half-width must be positive, got {half_width}")));
        }
        if nodes_per_width < 2 || !nodes_per_width.is_multiple_of(2) {
            return Err(ApproxError::Usage("the kernel needs an even number of at least two nodes".into()));
        }
        let mass = integrate_adaptive(-1.0, 1.0, 1e-15, 1e-14, bump)
            .map_err(|e| ApproxError::Precondition(format!("kernel normalization failed: {e}")))?;
        Ok(MollifierKernel { half_width, nodes_per_width, normalization: 1.0 / mass })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// `rho(t)`.
    pub fn density(&self, t: f64) -> f64 {
        self.normalization * bump(t / self.half_width) / self.half_width
    }

    /// `rho_k(t)`.
    pub fn scaled(&self, k: usize, t: f64) -> f64 {
        let two_k = 2.0 * k as f64;
        two_k * self.density(two_k * t)
    }

    /// Support half-width of `rho_k`.
    pub fn scaled_half_width(&self, k: usize) -> f64 {
        self.half_width / (2.0 * k as f64)
    }

    /// Positive midpoint-rule offsets and their normalized weights; each
    /// offset stands for the symmetric pair `+tau, -tau`.
    fn pair_nodes(&self, k: usize) -> Vec<(f64, f64)> {
        let w = self.scaled_half_width(k);
        let q = self.nodes_per_width;
        let h = 2.0 * w / q as f64;
        let half: Vec<(f64, f64)> = (0..q / 2).map(|j| {
            let tau = (j as f64 + 0.5) * h;
            (tau, self.scaled(k, tau))
        }).collect();
        let total: f64 = 2.0 * half.iter().map(|(_, r)| r).sum::<f64>();
        half.into_iter().map(|(tau, r)| (tau, r / total)).collect()
    }
}

fn extended(sigma: &Clock, t: f64) -> Result<f64, ApproxError> {
    let (a, b) = sigma.interval();
    Ok(if t < a {
        -sigma.eval(2.0 * a - t)?
    } else if t > b {
        2.0 - sigma.eval(2.0 * b - t)?
    } else {
        sigma.eval(t)?
    })
}

/// Sampled smooth clock `sigma_hat_k = sigma * rho_k`.
#[derive(Debug, Clone)]
pub struct MollifiedClock {
    k: usize,
    lipschitz: f64,
    table: MonotoneTable,
}

const BASE_CELLS: usize = 1024;
const WINDOW_CELLS: usize = 128;

fn sample_times(sigma: &Clock, w: f64) -> Vec<f64> {
    let (a, b) = sigma.interval();
    let mut times = numeric::uniform_grid(a, b, BASE_CELLS);
    for jump in sigma.discontinuities() {
        let lo = (jump.t - 2.0 * w).max(a);
        let hi = (jump.t + 2.0 * w).min(b);
        times.extend(numeric::uniform_grid(lo, hi, 2 * WINDOW_CELLS));
        times.push(jump.t);
    }
    let times = numeric::merge_sorted(times);
    let min_gap = 1e-12 * (b - a);
    let mut kept: Vec<f64> = Vec::with_capacity(times.len());
    for t in times {
        match kept.last() {
            Some(&prev) if t - prev < min_gap && t != b => {}
            Some(&prev) if t == b && t - prev < min_gap => {
                let last = kept.len() - 1;
                kept[last] = b;
            }
            _ => kept.push(t),
        }
    }
    kept
}

/// Smooth `sigma` by convolution with `rho_k`.
///
/// Fails when the sampled result violates the slope bound `1/L`, which
/// happens only if `sigma` itself violates it.
pub fn mollify_clock(sigma: &Clock, k: usize, kernel: &MollifierKernel) -> Result<MollifiedClock, ApproxError> {
    if k == 0 {
        return Err(ApproxError::Usage("k must be at least 1".into()));
    }
    let (a, b) = sigma.interval();
    if kernel.half_width() > b - a {
        return Err(ApproxError::Usage(format!("kernel half-width {} exceeds b - a = {}", kernel.half_width(), b - a)));
    }
    let w = kernel.scaled_half_width(k);
    let nodes = kernel.pair_nodes(k);
    let times = sample_times(sigma, w);
    let mut values = Vec::with_capacity(times.len());
    for &t in &times {
        let mut acc = 0.0;
        for &(tau, weight) in &nodes {
            acc += weight * (extended(sigma, t - tau)? + extended(sigma, t + tau)?);
        }
        values.push(acc);
    }
    let lipschitz = sigma.lipschitz();
    for (tw, sw) in times.windows(2).zip(values.windows(2)) {
        let slope = (sw[1] - sw[0]) / (tw[1] - tw[0]);
        if slope < 1.0 / lipschitz - 1e-9 {
            return Err(ApproxError::Precondition(format!(
                "smoothed clock has slope {slope} < 1/L = {} near t = {}",
                1.0 / lipschitz,
                tw[0]
            )));
        }
    }
    if values[0].abs() > 1e-8 || (values[values.len() - 1] - 1.0).abs() > 1e-8 {
        return Err(ApproxError::Precondition(format!(
            "smoothed clock maps [a, b] onto [{}, {}] instead of [0, 1]",
            values[0],
            values[values.len() - 1]
        )));
    }
    let last = values.len() - 1;
    values[0] = 0.0;
    values[last] = 1.0;
    let table = MonotoneTable::new(times, values)
        .ok_or_else(|| ApproxError::Precondition("smoothed clock is not strictly increasing on the sample grid".into()))?;
    Ok(MollifiedClock { k, lipschitz, table })
}

impl MollifiedClock {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn table(&self) -> &MonotoneTable {
        &self.table
    }

    /// Slope bound `L` of the clock that was smoothed.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.table.eval(t)
    }

    pub fn min_slope(&self) -> f64 {
        self.table.min_slope()
    }

    /// `|sigma_hat_k(t_i) - (sigma(t_i-) + sigma(t_i+)) / 2|` per clock jump.
    pub fn midpoint_errors(&self, sigma: &Clock) -> Vec<f64> {
        sigma.discontinuities().map(|j| (self.eval(j.t) - 0.5 * (j.left + j.right)).abs()).collect()
    }
}

/// Trapezoid L1 distance between two functions on a uniform grid.
pub fn l1_distance(a: f64, b: f64, cells: usize, mut f: impl FnMut(f64) -> Result<f64, ApproxError>) -> Result<f64, ApproxError> {
    let grid = numeric::uniform_grid(a, b, cells);
    let values = grid.iter().map(|&t| f(t)).collect::<Result<Vec<_>, _>>()?;
    Ok(numeric::trapezoid(&grid, &values))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurgeryCase {
    /// `sigma(t_i)` strictly inside the jump interval.
    Interior,
    /// `sigma(t_i) = sigma(t_i-)`.
    AtLeft,
    /// `sigma(t_i) = sigma(t_i+)`.
    AtRight,
}

/// Outcome of the inverse-clock surgery at one jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surgery {
    pub t: f64,
    pub case: SurgeryCase,
    pub applied: bool,
}

/// Strictly increasing AC clock `sigma_k` with inverse `phi0_k`.
#[derive(Debug, Clone)]
pub struct FixedClock {
    k: usize,
    phi0: MonotoneTable,
    sigma: MonotoneTable,
    surgery: Vec<Surgery>,
}

impl FixedClock {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.sigma.eval(t)
    }

    pub fn phi0(&self) -> &MonotoneTable {
        &self.phi0
    }

    pub fn sigma(&self) -> &MonotoneTable {
        &self.sigma
    }

    pub fn surgery(&self) -> &[Surgery] {
        &self.surgery
    }

    /// Lipschitz constant of `phi0_k`.
    pub fn inverse_lipschitz(&self) -> f64 {
        self.phi0.max_slope()
    }
}

/// Replace `phi_hat = sigma_hat^{-1}` on `[sigma(t_i-), sigma(t_i+)]` by a
/// piecewise-affine map through `(sigma(t_i), t_i)` whenever that is possible
/// without exceeding the slope `L`; keep `phi_hat` otherwise.
pub fn fixup_clock(hat: &MollifiedClock, sigma: &Clock) -> Result<FixedClock, ApproxError> {
    let lipschitz = sigma.lipschitz();
    let phi_hat = hat.table.inverse();
    let mut knots: Vec<(f64, f64)> = phi_hat.xs().iter().copied().zip(phi_hat.ys().iter().copied()).collect();
    let mut surgery = Vec::new();
    let slope_ok = |rise: f64, run: f64| run > 0.0 && rise > 0.0 && rise <= lipschitz * run * (1.0 + 1e-12);
    for jump in sigma.discontinuities() {
        let (t, s1, st, s2) = (jump.t, jump.left, jump.at, jump.right);
        let case = if st == s1 {
            SurgeryCase::AtLeft
        } else if st == s2 {
            SurgeryCase::AtRight
        } else {
            SurgeryCase::Interior
        };
        let current = MonotoneTable::new(knots.iter().map(|p| p.0).collect(), knots.iter().map(|p| p.1).collect())
            .expect("knots stay strictly increasing");
        let hat_t = hat.eval(t);
        let mut applied = false;
        if s1 < hat_t && hat_t < s2 {
            let (p1, p2) = (current.eval(s1), current.eval(s2));
            let middle = match case {
                SurgeryCase::Interior => Some(st),
                SurgeryCase::AtLeft => Some(s1 + (t - p1) / lipschitz),
                SurgeryCase::AtRight => Some(s2 - (p2 - t) / lipschitz),
            };
            if let Some(sm) = middle {
                if s1 < sm && sm < s2 && slope_ok(t - p1, sm - s1) && slope_ok(p2 - t, s2 - sm) {
                    let eps = 1e-14;
                    let mut next: Vec<(f64, f64)> = knots.iter().copied().filter(|&(s, _)| s < s1 - eps).collect();
                    next.push((s1, p1));
                    next.push((sm, t));
                    next.push((s2, p2));
                    next.extend(knots.iter().copied().filter(|&(s, _)| s > s2 + eps));
                    knots = next;
                    applied = true;
                }
            }
        }
        surgery.push(Surgery { t, case, applied });
    }
    let phi0 = MonotoneTable::new(knots.iter().map(|p| p.0).collect(), knots.iter().map(|p| p.1).collect())
        .ok_or_else(|| ApproxError::Precondition("corrected inverse clock is not strictly increasing".into()))?;
    let sigma_k = phi0.inverse();
    Ok(FixedClock { k: hat.k, phi0, sigma: sigma_k, surgery })
}

/// The space-time control `(phi0_k, phi)` built from a completion.
#[derive(Debug, Clone)]
pub struct ReclockedCompletion {
    curve: Arc<CompletionCurve>,
    phi0: MonotoneTable,
    sigma: MonotoneTable,
    fingerprint: u64,
}

impl ReclockedCompletion {
    pub fn new(gc: &GraphCompletion, clock: &FixedClock) -> Self {
        let mut hasher = DefaultHasher::new();
        gc.fingerprint().hash(&mut hasher);
        for (s, t) in clock.phi0.xs().iter().zip(clock.phi0.ys()) {
            s.to_bits().hash(&mut hasher);
            t.to_bits().hash(&mut hasher);
        }
        ReclockedCompletion {
            curve: gc.curve().clone(),
            phi0: clock.phi0.clone(),
            sigma: clock.sigma.clone(),
            fingerprint: hasher.finish(),
        }
    }
}

impl SpaceTimeControl for ReclockedCompletion {
    fn time_interval(&self) -> (f64, f64) {
        self.curve.path().interval()
    }

    fn control_dim(&self) -> usize {
        self.curve.path().dim()
    }

    fn knots(&self) -> Vec<f64> {
        let mut knots = self.curve.knots().to_vec();
        knots.extend_from_slice(self.phi0.xs());
        numeric::merge_sorted(knots)
    }

    fn parameter_of(&self, t: f64) -> Result<f64, IntegrationError> {
        Ok(self.sigma.eval(t))
    }

    fn eval(&self, s: f64) -> Result<(f64, Vec<f64>), IntegrationError> {
        let (_, u) = self.curve.eval(s)?;
        Ok((self.phi0.eval(s), u))
    }

    fn velocity(&self, s: f64, probe: f64) -> Result<(f64, Vec<f64>), IntegrationError> {
        let (_, du) = self.curve.velocity(s, probe)?;
        Ok((self.phi0.slope_at(probe), du))
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

/// `u_k = phi o sigma_k`.
#[derive(Debug, Clone)]
pub struct ApproxInput {
    curve: Arc<CompletionCurve>,
    sigma: MonotoneTable,
}

impl ApproxInput {
    pub fn interval(&self) -> (f64, f64) {
        self.curve.path().interval()
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, ApproxError> {
        Ok(self.curve.eval(self.sigma.eval(t).clamp(0.0, 1.0))?.1)
    }

    /// Times where `u_k` may bend: clock knots and preimages of curve knots.
    pub fn kinks(&self) -> Vec<f64> {
        let inverse = self.sigma.inverse();
        let mut times = self.sigma.xs().to_vec();
        times.extend(self.curve.knots().iter().map(|&s| inverse.eval(s)));
        numeric::merge_sorted(times)
    }

    /// Chord-sum variation over `cells` uniform cells refined by the kinks;
    /// exact when `phi` is piecewise linear.
    pub fn variation(&self, cells: usize) -> Result<f64, ApproxError> {
        let (a, b) = self.interval();
        let mut times = numeric::uniform_grid(a, b, cells);
        times.extend(self.kinks());
        let times = numeric::merge_sorted(times);
        let values = times.iter().map(|&t| self.eval(t)).collect::<Result<Vec<_>, _>>()?;
        Ok(values.windows(2).map(|w| dist(&w[0], &w[1])).sum())
    }

    /// Piecewise-linear path through the samples at the kinks and a uniform grid.
    pub fn to_path(&self, cells: usize) -> Result<BvPath, ApproxError> {
        let (a, b) = self.interval();
        let mut times = numeric::uniform_grid(a, b, cells);
        times.extend(self.kinks());
        let times: Vec<f64> = numeric::merge_sorted(times).into_iter().filter(|t| *t >= a && *t <= b).collect();
        let values = times.iter().map(|&t| self.eval(t)).collect::<Result<Vec<_>, _>>()?;
        BvPath::piecewise_linear(times, values).map_err(|e| ApproxError::Usage(e.to_string()))
    }
}

/// One member `(u_k, x_k)` of an approximating sequence.
#[derive(Debug, Clone)]
pub struct ApproxMember {
    pub k: usize,
    pub clock: FixedClock,
    pub input: ApproxInput,
    pub space_time: SpaceTimePath,
    pub trajectory: Trajectory,
}

/// Build `u_k = phi o sigma_k` and `x_k = y_k o sigma_k` for every `k`.
pub fn approximating_sequence(
    gc: &GraphCompletion,
    dynamics: &Dynamics,
    v: &SampledControl,
    x0: &[f64],
    ks: &[usize],
    kernel: &MollifierKernel,
    step: f64,
) -> Result<Vec<ApproxMember>, ApproxError> {
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ApproxError::Usage("the k sweep must be strictly increasing".into()));
    }
    ks.par_iter()
        .map(|&k| {
            let hat = mollify_clock(gc.clock(), k, kernel)?;
            let clock = fixup_clock(&hat, gc.clock())?;
            let control = ReclockedCompletion::new(gc, &clock);
            let space_time = integrate_spacetime(&control, dynamics, v, x0, step)?;
            let trajectory = Trajectory::new(space_time.without_time(), TimeMap::Table(clock.sigma.clone()), gc.path().interval())?;
            let input = ApproxInput { curve: gc.curve().clone(), sigma: clock.sigma.clone() };
            Ok(ApproxMember { k, clock, input, space_time, trajectory })
        })
        .collect()
}

/// Cells of the standard grid used for L1 distances.
pub const L1_CELLS: usize = 10_000;

type PairEval<'a> = Box<dyn Fn(f64) -> Result<(Vec<f64>, Vec<f64>), ApproxError> + Sync + 'a>;

/// A pair `t -> (u(t), x(t))` on `[a, b]`.
pub struct ControlStatePair<'a> {
    interval: (f64, f64),
    eval: PairEval<'a>,
}

impl<'a> ControlStatePair<'a> {
    pub fn new(interval: (f64, f64), eval: impl Fn(f64) -> Result<(Vec<f64>, Vec<f64>), ApproxError> + Sync + 'a) -> Self {
        ControlStatePair { interval, eval: Box::new(eval) }
    }

    /// `(u, x)` for a BV input and the trajectory it generates.
    pub fn of_path(u: &'a BvPath, x: &'a Trajectory) -> Self {
        Self::new(u.interval(), move |t| Ok((u.eval(t).map_err(|e| ApproxError::Usage(e.to_string()))?, x.eval(t)?)))
    }

    pub fn of_member(member: &'a ApproxMember) -> Self {
        Self::new(member.input.interval(), move |t| Ok((member.input.eval(t)?, member.trajectory.eval(t)?)))
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, ApproxError> {
        let (mut u, x) = (self.eval)(t)?;
        u.extend(x);
        Ok(u)
    }
}

/// Pointwise errors at each `tau` and the shared L1 error.
pub fn limit_errors(target: &ControlStatePair<'_>, candidate: &ControlStatePair<'_>, taus: &[f64]) -> Result<(Vec<f64>, f64), ApproxError> {
    let (a, b) = target.interval();
    if candidate.interval() != (a, b) {
        return Err(ApproxError::Usage(format!(
            "pairs live on different intervals {:?} and {:?}",
            target.interval(),
            candidate.interval()
        )));
    }
    let mismatch = |t: f64| -> Result<f64, ApproxError> {
        let (p, q) = (target.eval(t)?, candidate.eval(t)?);
        if p.len() != q.len() {
            return Err(ApproxError::Usage(format!("pairs have dimensions {} and {}", p.len(), q.len())));
        }
        Ok(dist(&p, &q))
    };
    let mut pointwise = Vec::with_capacity(taus.len());
    for &tau in taus {
        if !(tau >= a && tau <= b) {
            return Err(ApproxError::Usage(format!("tau = {tau} lies outside [{a}, {b}]")));
        }
        pointwise.push(mismatch(tau)?);
    }
    let l1 = l1_distance(a, b, L1_CELLS, mismatch)?;
    Ok((pointwise, l1))
}

/// `|(u_k, x_k)(tau) - (u, x)(tau)| + ||(u_k, x_k) - (u, x)||_1`.
pub fn limit_error(target: &ControlStatePair<'_>, candidate: &ControlStatePair<'_>, tau: f64) -> Result<f64, ApproxError> {
    let (pointwise, l1) = limit_errors(target, candidate, &[tau])?;
    Ok(pointwise[0] + l1)
}

/// One line of an approximation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxRow {
    pub k: usize,
    pub tau: f64,
    pub pointwise_err: f64,
    pub l1_err: f64,
    pub var_uk: f64,
    pub sup_xk: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApproxReport {
    pub rows: Vec<ApproxRow>,
}

/// Verdict on a finite sweep: errors shrink along `k` and end below a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub decreasing: bool,
    pub final_error: f64,
    pub below_threshold: bool,
    pub variation_bounded: bool,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.decreasing && self.below_threshold && self.variation_bounded
    }
}

/// Errors at the solver noise floor count as non-increasing.
const NOISE_FLOOR: f64 = 1e-9;

impl ApproxReport {
    pub fn ks(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self.rows.iter().map(|r| r.k).collect();
        ks.dedup();
        ks
    }

    /// Check `pointwise + l1` for every `tau` along the sweep.
    pub fn certificate(&self, variation_budget: f64, threshold: f64) -> Certificate {
        let ks = self.ks();
        let mut taus: Vec<f64> = self.rows.iter().map(|r| r.tau).collect();
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        let error = |k: usize, tau: f64| {
            self.rows.iter().find(|r| r.k == k && r.tau == tau).map(|r| r.pointwise_err + r.l1_err).unwrap_or(f64::INFINITY)
        };
        let mut decreasing = true;
        let mut final_error: f64 = 0.0;
        for &tau in &taus {
            for w in ks.windows(2) {
                let (e0, e1) = (error(w[0], tau), error(w[1], tau));
                if e1 > e0 * (1.0 + 1e-9) + NOISE_FLOOR {
                    decreasing = false;
                }
            }
            if let Some(&last) = ks.last() {
                final_error = final_error.max(error(last, tau));
            }
        }
        let variation_bounded = self.rows.iter().all(|r| r.var_uk <= variation_budget * (1.0 + 1e-12));
        Certificate { decreasing, final_error, below_threshold: final_error < threshold, variation_bounded }
    }
}

/// Report rows for each member against the target pair.
pub fn build_report(target: &ControlStatePair<'_>, members: &[ApproxMember], taus: &[f64]) -> Result<ApproxReport, ApproxError> {
    let rows: Vec<Vec<ApproxRow>> = members
        .par_iter()
        .map(|member| {
            let candidate = ControlStatePair::of_member(member);
            let (pointwise, l1) = limit_errors(target, &candidate, taus)?;
            let var_uk = member.input.variation(L1_CELLS)?;
            let (a, b) = member.input.interval();
            let sup_xk = member.trajectory.sup_norm(&numeric::uniform_grid(a, b, 1000))?;
            Ok(taus
                .iter()
                .zip(pointwise)
                .map(|(&tau, p)| ApproxRow { k: member.k, tau, pointwise_err: p, l1_err: l1, var_uk, sup_xk })
                .collect())
        })
        .collect::<Result<_, ApproxError>>()?;
    Ok(ApproxReport { rows: rows.into_iter().flatten().collect() })
}

/// Symbolic `[g_a, g_b] = Dg_b g_a - Dg_a g_b`.
pub fn bracket_field(ga: &VectorField, gb: &VectorField) -> Result<VectorField, ApproxError> {
    let n = ga.dim();
    if gb.dim() != n {
        return Err(ApproxError::Usage("bracket of fields with different dimensions".into()));
    }
    let (ja, jb) = (ga.jacobian(n)?, gb.jacobian(n)?);
    let contract = |jac: &[Vec<crate::expr::Expr>], field: &VectorField, i: usize| {
        let mut acc = crate::expr::Expr::num(0.0);
        for (d, f) in jac[i].iter().zip(field.components()) {
            acc = crate::expr::Expr::Binary(
                crate::expr::BinaryOp::Add,
                Box::new(acc),
                Box::new(crate::expr::Expr::Binary(crate::expr::BinaryOp::Mul, Box::new(d.clone()), Box::new(f.clone()))),
            );
        }
        acc
    };
    let components = (0..n)
        .map(|i| {
            crate::expr::Expr::Binary(
                crate::expr::BinaryOp::Sub,
                Box::new(contract(&jb, ga, i)),
                Box::new(contract(&ja, gb, i)),
            )
        })
        .collect();
    Ok(VectorField::new(components))
}

/// `[g_a, g_b](x)` from symbolic Jacobians.
pub fn lie_bracket(ga: &VectorField, gb: &VectorField, x: &[f64]) -> Result<Vec<f64>, ApproxError> {
    let n = ga.dim();
    if gb.dim() != n || x.len() != n {
        return Err(ApproxError::Usage("bracket arguments have inconsistent dimensions".into()));
    }
    let env = Env::state(x);
    let (va, vb) = (ga.eval(&env)?, gb.eval(&env)?);
    let (ja, jb) = (ga.jacobian(n)?, gb.jacobian(n)?);
    let mut out = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            out[i] += jb[i][j].eval(&env)? * va[j] - ja[i][j].eval(&env)? * vb[j];
        }
    }
    Ok(out)
}

/// Tolerance on bracket norms for the sampled commutativity verdict.
pub const COMMUTATIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CommutativityReport {
    /// `((alpha, beta), max |[g_alpha, g_beta]|)` over the samples, zero-based.
    pub pairs: Vec<((usize, usize), f64)>,
    /// First pair and sample point exceeding the tolerance.
    pub witness: Option<((usize, usize), Vec<f64>)>,
}

impl CommutativityReport {
    pub fn commuting(&self) -> bool {
        self.witness.is_none()
    }

    pub fn verdict(&self) -> String {
        match &self.witness {
            None => "commuting (sampled)".to_string(),
            Some(((a, b), x)) => format!("non-commuting: [g{}, g{}] != 0 at x = {:?}", a + 1, b + 1, x),
        }
    }
}

pub fn commutativity_report(dynamics: &Dynamics, samples: &[Vec<f64>]) -> Result<CommutativityReport, ApproxError> {
    if samples.is_empty() {
        return Err(ApproxError::Usage("at least one sample point is required".into()));
    }
    let g = dynamics.fields();
    let mut pairs = Vec::new();
    let mut witness = None;
    for alpha in 0..g.len() {
        for beta in alpha + 1..g.len() {
            let mut max: f64 = 0.0;
            for x in samples {
                let value = norm(&lie_bracket(&g[alpha], &g[beta], x)?);
                if value > COMMUTATIVITY_TOL && witness.is_none() {
                    witness = Some(((alpha, beta), x.clone()));
                }
                max = max.max(value);
            }
            pairs.push(((alpha, beta), max));
        }
    }
    Ok(CommutativityReport { pairs, witness })
}

/// Two inputs and initial states compared by [`dependence_probe`].
#[derive(Debug, Clone)]
pub struct ProbeCase {
    pub u1: BvPath,
    pub u2: BvPath,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

/// Inputs below this size count as identical data.
const ZERO_INPUT: f64 = 1e-14;

/// Largest observed ratio of output distance to input distance.
///
/// Output: `|x1(t) - x2(t)| + ||x1 - x2||_1`; input:
/// `|x1(a) - x2(a)| + |u1(a) - u2(a)| + |u1(t) - u2(t)| + ||u1 - u2||_1`,
/// at every probe time. Solutions are graph-completion solutions with
/// straight bridges.
#[allow(clippy::too_many_arguments)]
pub fn dependence_probe(
    dynamics: &Dynamics,
    set: &ControlSet,
    cases: &[ProbeCase],
    v: &SampledControl,
    samples: &[Vec<f64>],
    probe_times: &[f64],
    step: f64,
) -> Result<f64, ApproxError> {
    let report = commutativity_report(dynamics, samples)?;
    if !report.commuting() {
        return Err(ApproxError::Precondition(report.verdict()));
    }
    let mut worst: f64 = 0.0;
    for case in cases {
        if case.u1.interval() != case.u2.interval() {
            return Err(ApproxError::Usage("probe inputs live on different intervals".into()));
        }
        let solve = |u: &BvPath, x0: &[f64]| -> Result<Trajectory, ApproxError> {
            let gc = GraphCompletion::build_with_grid(Arc::new(u.clone()), set, &BridgeOverrides::default(), 256)?;
            let y = integrate_spacetime(&gc, dynamics, v, x0, step)?;
            Ok(gc_solution(&y, gc.clock())?)
        };
        let (t1, t2) = (solve(&case.u1, &case.x1)?, solve(&case.u2, &case.x2)?);
        let (a, b) = case.u1.interval();
        let path_err = |e: crate::bvpath::BvError| ApproxError::Usage(e.to_string());
        let x_l1 = l1_distance(a, b, L1_CELLS, |t| Ok(dist(&t1.eval(t)?, &t2.eval(t)?)))?;
        let u_l1 = l1_distance(a, b, L1_CELLS, |t| Ok(dist(&case.u1.eval(t).map_err(path_err)?, &case.u2.eval(t).map_err(path_err)?)))?;
        let base = dist(&case.x1, &case.x2) + dist(&case.u1.eval(a).map_err(path_err)?, &case.u2.eval(a).map_err(path_err)?);
        for &t in probe_times {
            let input = base + dist(&case.u1.eval(t).map_err(path_err)?, &case.u2.eval(t).map_err(path_err)?) + u_l1;
            let output = dist(&t1.eval(t)?, &t2.eval(t)?) + x_l1;
            if input > ZERO_INPUT {
                worst = worst.max(output / input);
            }
        }
    }
    Ok(worst)
}
