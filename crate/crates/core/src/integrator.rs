//! Fixed-step RK4 integration of the space-time system and of the original
//! Carathéodory system, plus evaluation of graph-completion solutions.

use std::sync::Arc;

use thiserror::Error;

use crate::bvpath::{BvError, BvPath, SampledControl, Segment};
use crate::completion::{Clock, CompletionError, CurvePoint, GraphCompletion};
use crate::expr::{Env, ExprError, Scope, VectorField};
use crate::numeric::{self, norm, MonotoneTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error(transparent)]
    Completion(#[from] CompletionError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Path(#[from] BvError),
    #[error("state norm {norm} exceeded the growth guard {guard} at {at}")]
    BlowUp { at: f64, norm: f64, guard: f64 },
    #[error("non-finite state at {at}")]
    Numeric { at: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid dynamics: {0}")]
    Dynamics(String),
}

/// Default abort threshold on `|x|`.
pub const DEFAULT_GUARD: f64 = 1e8;

/// `x' = f(t, x, u, v) + sum_a g_a(x) u_a'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    n: usize,
    m: usize,
    l: usize,
    f: VectorField,
    g: Vec<VectorField>,
    guard: f64,
}

impl Dynamics {
    pub fn new(n: usize, m: usize, l: usize, f: VectorField, g: Vec<VectorField>) -> Result<Self, IntegrationError> {
        if n == 0 || m == 0 {
            return Err(IntegrationError::Dynamics("n and m must be positive".into()));
        }
        if f.dim() != n {
            return Err(IntegrationError::Dynamics(format!("f has {} components, expected {n}", f.dim())));
        }
        if g.len() != m {
            return Err(IntegrationError::Dynamics(format!("expected {m} control fields, got {}", g.len())));
        }
        let drift_scope = Scope { t: true, k: false, n, m, l };
        if let Some(var) = f.components().iter().find_map(|c| c.first_out_of_scope(&drift_scope)) {
            return Err(IntegrationError::Dynamics(format!("f references {var}, which is not declared")));
        }
        let field_scope = Scope { n, ..Default::default() };
        for (alpha, field) in g.iter().enumerate() {
            if field.dim() != n {
                return Err(IntegrationError::Dynamics(format!("g{} has {} components, expected {n}", alpha + 1, field.dim())));
            }
            if let Some(var) = field.components().iter().find_map(|c| c.first_out_of_scope(&field_scope)) {
                return Err(IntegrationError::Dynamics(format!("g{} may depend on the state only, found {var}", alpha + 1)));
            }
        }
        Ok(Dynamics { n, m, l, f, g, guard: DEFAULT_GUARD })
    }

    /// Parse `f` and the columns `g_1..g_m` from expression sources.
    pub fn parse(n: usize, m: usize, l: usize, f: &[&str], g: &[Vec<&str>]) -> Result<Self, IntegrationError> {
        let f = VectorField::parse(f)?;
        let g = g.iter().map(|c| VectorField::parse(c)).collect::<Result<Vec<_>, _>>()?;
        Self::new(n, m, l, f, g)
    }

    pub fn with_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn drift(&self) -> &VectorField {
        &self.f
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.g
    }

    /// `f(t, x, u, v) dt + sum_a g_a(x) du_a`, written to `out`.
    #[allow(clippy::too_many_arguments)]
    pub fn rate(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], dt: f64, du: &[f64], out: &mut [f64]) -> Result<(), ExprError> {
        if dt != 0.0 {
            let env = Env { t: Some(t), k: None, x, u, v };
            self.f.eval_into(&env, out)?;
            for o in out.iter_mut() {
                *o *= dt;
            }
        } else {
            out.fill(0.0);
        }
        let env = Env::state(x);
        for (field, d) in self.g.iter().zip(du) {
            if *d == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(field.components()) {
                *o += c.eval(&env)? * d;
            }
        }
        Ok(())
    }
}

/// A Lipschitz space-time control `s -> (phi0(s), phi(s))` on `[0, 1]`.
pub trait SpaceTimeControl: Sync {
    fn time_interval(&self) -> (f64, f64);
    fn control_dim(&self) -> usize;
    /// Parameters where the derivative may change, including 0 and 1.
    fn knots(&self) -> Vec<f64>;
    /// Some parameter with `phi0(s) = t`.
    fn parameter_of(&self, t: f64) -> Result<f64, IntegrationError>;
    fn eval(&self, s: f64) -> Result<(f64, Vec<f64>), IntegrationError>;
    /// Derivative at `s` on the smooth piece containing `probe`.
    fn velocity(&self, s: f64, probe: f64) -> Result<(f64, Vec<f64>), IntegrationError>;
    fn fingerprint(&self) -> u64;
    /// `(eval(s), velocity(s, probe))`.
    fn eval_with_velocity(&self, s: f64, probe: f64) -> Result<(CurvePoint, CurvePoint), IntegrationError> {
        Ok((self.eval(s)?, self.velocity(s, probe)?))
    }
}

impl SpaceTimeControl for GraphCompletion {
    fn time_interval(&self) -> (f64, f64) {
        self.path().interval()
    }

    fn control_dim(&self) -> usize {
        self.path().dim()
    }

    fn knots(&self) -> Vec<f64> {
        self.curve().knots().to_vec()
    }

    fn parameter_of(&self, t: f64) -> Result<f64, IntegrationError> {
        Ok(self.clock().eval(t)?)
    }

    fn eval(&self, s: f64) -> Result<(f64, Vec<f64>), IntegrationError> {
        Ok(self.curve().eval(s)?)
    }

    fn velocity(&self, s: f64, probe: f64) -> Result<(f64, Vec<f64>), IntegrationError> {
        Ok(self.curve().velocity(s, probe)?)
    }

    fn fingerprint(&self) -> u64 {
        GraphCompletion::fingerprint(self)
    }

    fn eval_with_velocity(&self, s: f64, probe: f64) -> Result<(CurvePoint, CurvePoint), IntegrationError> {
        Ok(self.curve().eval_with_velocity(s, probe)?)
    }
}

/// Piecewise-cubic Hermite dense output of a fixed-step run.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution {
    nodes: Vec<f64>,
    states: Vec<Vec<f64>>,
    start_rates: Vec<Vec<f64>>,
    end_rates: Vec<Vec<f64>>,
}

impl DenseSolution {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    pub fn eval(&self, r: f64) -> Vec<f64> {
        if self.nodes.len() == 1 {
            return self.states[0].clone();
        }
        let j = numeric::locate(&self.nodes, r);
        let (r0, r1) = (self.nodes[j], self.nodes[j + 1]);
        let h = r1 - r0;
        let theta = ((r - r0) / h).clamp(0.0, 1.0);
        if theta == 0.0 {
            return self.states[j].clone();
        }
        if theta == 1.0 {
            return self.states[j + 1].clone();
        }
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + theta;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let (y0, y1) = (&self.states[j], &self.states[j + 1]);
        let (d0, d1) = (&self.start_rates[j], &self.end_rates[j]);
        (0..y0.len()).map(|i| h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i]).collect()
    }
}

/// Fixed-step classical RK4 over `knots`, with no step straddling a knot.
///
/// `rate(r, probe, state, out)` evaluates the right-hand side at `r` on the
/// smooth piece containing `probe`. State updates are accumulated with
/// compensated summation.
fn rk4<F>(knots: &[f64], step: f64, initial: Vec<f64>, guard: impl Fn(f64, &[f64]) -> Result<(), IntegrationError>, mut rate: F) -> Result<(DenseSolution, usize), IntegrationError>
where
    F: FnMut(f64, f64, &[f64], &mut [f64]) -> Result<(), IntegrationError>,
{
    let dim = initial.len();
    let mut nodes = vec![knots[0]];
    let mut states = vec![initial.clone()];
    let mut start_rates = Vec::new();
    let mut end_rates = Vec::new();
    let mut y = initial;
    let mut carry = vec![0.0; dim];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut stage = vec![0.0; dim];
    let mut steps = 0;
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        if !(len > 0.0) {
            continue;
        }
        let count = ((len / step) - 1e-9).ceil().max(1.0) as usize;
        for i in 0..count {
            let r0 = if i == 0 { lo } else { lo + len * (i as f64 / count as f64) };
            let r1 = if i + 1 == count { hi } else { lo + len * ((i + 1) as f64 / count as f64) };
            let hh = r1 - r0;
            let probe = 0.5 * (r0 + r1);
            rate(r0, probe, &y, &mut k1)?;
            for d in 0..dim {
                stage[d] = y[d] + 0.5 * hh * k1[d];
            }
            rate(probe, probe, &stage, &mut k2)?;
            for d in 0..dim {
                stage[d] = y[d] + 0.5 * hh * k2[d];
            }
            rate(probe, probe, &stage, &mut k3)?;
            for d in 0..dim {
                stage[d] = y[d] + hh * k3[d];
            }
            rate(r1, probe, &stage, &mut k4)?;
            for d in 0..dim {
                let increment = hh / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
                // Neumaier summation
                let sum = y[d] + increment;
                if y[d].abs() >= increment.abs() {
                    carry[d] += (y[d] - sum) + increment;
                } else {
                    carry[d] += (increment - sum) + y[d];
                }
                y[d] = sum;
            }
            let corrected: Vec<f64> = y.iter().zip(&carry).map(|(a, c)| a + c).collect();
            if corrected.iter().any(|x| !x.is_finite()) {
                return Err(IntegrationError::Numeric { at: r1 });
            }
            guard(r1, &corrected)?;
            let mut end = vec![0.0; dim];
            rate(r1, probe, &corrected, &mut end)?;
            start_rates.push(k1.clone());
            end_rates.push(end);
            nodes.push(r1);
            states.push(corrected);
            steps += 1;
        }
    }
    Ok((DenseSolution { nodes, states, start_rates, end_rates }, steps))
}

fn state_guard(guard: f64, skip: usize) -> impl Fn(f64, &[f64]) -> Result<(), IntegrationError> {
    move |at, state| {
        let n = norm(&state[skip..]);
        if n > guard {
            Err(IntegrationError::BlowUp { at, norm: n, guard })
        } else {
            Ok(())
        }
    }
}

fn check_initial(dyn_: &Dynamics, x0: &[f64], v: &SampledControl, m: usize, ab: (f64, f64)) -> Result<(), IntegrationError> {
    if x0.len() != dyn_.n() || x0.iter().any(|x| !x.is_finite()) {
        return Err(IntegrationError::Usage(format!("initial state must be {} finite numbers", dyn_.n())));
    }
    if m != dyn_.m() {
        return Err(IntegrationError::Usage(format!("input has dimension {m}, dynamics expects {}", dyn_.m())));
    }
    if v.dim() != dyn_.l() {
        return Err(IntegrationError::Usage(format!("v has dimension {}, dynamics expects {}", v.dim(), dyn_.l())));
    }
    let (va, vb) = v.interval();
    if (va, vb) != ab {
        return Err(IntegrationError::Usage(format!("v lives on [{va}, {vb}] but the input on [{}, {}]", ab.0, ab.1)));
    }
    if !(norm(x0) <= dyn_.guard()) {
        return Err(IntegrationError::BlowUp { at: ab.0, norm: norm(x0), guard: dyn_.guard() });
    }
    Ok(())
}

/// Numerical solution `(y0, y)` of the space-time system on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct SpaceTimePath {
    dense: DenseSolution,
    n: usize,
    step: f64,
    steps: usize,
    fingerprint: u64,
}

impl SpaceTimePath {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `y0(s)`.
    pub fn time(&self, s: f64) -> f64 {
        self.dense.eval(s)[0]
    }

    /// `y(s)`.
    pub fn state(&self, s: f64) -> Vec<f64> {
        self.dense.eval(s)[1..].to_vec()
    }

    /// Step nodes with the full state `(y0, y)`.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.dense.nodes.iter().copied().zip(self.dense.states.iter().map(Vec::as_slice))
    }

    pub(crate) fn without_time(&self) -> DenseSolution {
        let strip = |v: &Vec<Vec<f64>>| v.iter().map(|x| x[1..].to_vec()).collect();
        DenseSolution {
            nodes: self.dense.nodes.clone(),
            states: strip(&self.dense.states),
            start_rates: strip(&self.dense.start_rates),
            end_rates: strip(&self.dense.end_rates),
        }
    }
}

/// Integrate `y' = f(y0, y, phi, psi) phi0' + sum g_a(y) phi_a'` with
/// `psi = v o phi0` and `(y0, y)(0) = (a, x0)`.
pub fn integrate_spacetime(
    control: &dyn SpaceTimeControl,
    dynamics: &Dynamics,
    v: &SampledControl,
    x0: &[f64],
    step: f64,
) -> Result<SpaceTimePath, IntegrationError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(IntegrationError::Usage(format!("step must lie in (0, 1], got {step}")));
    }
    let (a, b) = control.time_interval();
    check_initial(dynamics, x0, v, control.control_dim(), (a, b))?;
    let mut knots = control.knots();
    for t in v.switch_times() {
        knots.push(control.parameter_of(t)?);
    }
    knots.push(0.0);
    knots.push(1.0);
    let knots: Vec<f64> = numeric::merge_sorted(knots).into_iter().filter(|s| (0.0..=1.0).contains(s)).collect();
    let n = dynamics.n();
    let mut initial = Vec::with_capacity(n + 1);
    initial.push(a);
    initial.extend_from_slice(x0);
    let mut cached_probe = f64::NAN;
    let mut psi: Vec<f64> = Vec::new();
    let (dense, steps) = rk4(&knots, step, initial, state_guard(dynamics.guard(), 1), |s, probe, state, out| {
        if probe != cached_probe && v.dim() > 0 {
            let (t_probe, _) = control.eval(probe)?;
            psi = v.eval(t_probe).to_vec();
            cached_probe = probe;
        }
        let ((_, u), (dt, du)) = control.eval_with_velocity(s, probe)?;
        out[0] = dt;
        dynamics.rate(state[0], &state[1..], &u, &psi, dt, &du, &mut out[1..])?;
        Ok(())
    })?;
    Ok(SpaceTimePath { dense, n, step, steps, fingerprint: control.fingerprint() })
}

/// How trajectory time maps into the variable of the dense solution.
#[derive(Debug, Clone)]
pub enum TimeMap {
    Identity,
    Clock(Clock),
    Table(MonotoneTable),
}

/// One-sided states of a trajectory at a clock discontinuity.
#[derive(Debug, Clone, PartialEq)]
pub struct StateJump {
    pub t: f64,
    pub left: Vec<f64>,
    pub at: Vec<f64>,
    pub right: Vec<f64>,
}

/// `t -> x(t)` as a dense solution composed with a time map.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dense: DenseSolution,
    map: TimeMap,
    interval: (f64, f64),
    jumps: Vec<StateJump>,
}

impl Trajectory {
    pub fn new(dense: DenseSolution, map: TimeMap, interval: (f64, f64)) -> Result<Self, IntegrationError> {
        let mut traj = Trajectory { dense, map, interval, jumps: Vec::new() };
        if let TimeMap::Clock(clock) = &traj.map {
            let jumps = clock
                .discontinuities()
                .map(|j| StateJump { t: j.t, left: traj.dense.eval(j.left), at: traj.dense.eval(j.at), right: traj.dense.eval(j.right) })
                .collect();
            traj.jumps = jumps;
        }
        Ok(traj)
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn dim(&self) -> usize {
        self.dense.states[0].len()
    }

    pub fn jumps(&self) -> &[StateJump] {
        &self.jumps
    }

    pub fn time_map(&self) -> &TimeMap {
        &self.map
    }

    fn param(&self, t: f64) -> Result<f64, IntegrationError> {
        let (a, b) = self.interval;
        if !(t >= a && t <= b) {
            return Err(IntegrationError::Usage(format!("time {t} lies outside [{a}, {b}]")));
        }
        Ok(match &self.map {
            TimeMap::Identity => t,
            TimeMap::Clock(c) => c.eval(t)?,
            TimeMap::Table(tab) => tab.eval(t),
        })
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrationError> {
        Ok(self.dense.eval(self.param(t)?))
    }

    /// `(x(t-), x(t+))`.
    pub fn one_sided(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>), IntegrationError> {
        if let Some(j) = self.jumps.iter().find(|j| j.t == t) {
            return Ok((j.left.clone(), j.right.clone()));
        }
        let x = self.eval(t)?;
        Ok((x.clone(), x))
    }

    pub fn sample(&self, times: &[f64]) -> Result<Vec<Vec<f64>>, IntegrationError> {
        times.iter().map(|&t| self.eval(t)).collect()
    }

    /// Largest `|x(t)|` over the dense solution nodes and the given times.
    pub fn sup_norm(&self, times: &[f64]) -> Result<f64, IntegrationError> {
        let mut sup = self.dense.states.iter().map(|s| norm(s)).fold(0.0, f64::max);
        for t in times {
            sup = sup.max(norm(&self.eval(*t)?));
        }
        Ok(sup)
    }
}

/// Graph-completion solution `x = y o sigma`.
pub fn gc_solution(y: &SpaceTimePath, clock: &Clock) -> Result<Trajectory, IntegrationError> {
    match clock.fingerprint() {
        Some(fp) if fp == y.fingerprint => Trajectory::new(y.without_time(), TimeMap::Clock(clock.clone()), clock.interval()),
        _ => Err(IntegrationError::Usage("clock and space-time path come from different parameterizations".into())),
    }
}

/// Set-valued envelope `y(phi0^{-1}(t))` endpoints for a completion.
pub fn jump_envelope(y: &SpaceTimePath, gc: &GraphCompletion, t: f64) -> Result<(Vec<f64>, Vec<f64>), IntegrationError> {
    if y.fingerprint != gc.fingerprint() {
        return Err(IntegrationError::Usage("completion and space-time path come from different parameterizations".into()));
    }
    let (s1, s2) = gc.preimage(t)?;
    Ok((y.state(s1), y.state(s2)))
}

/// Solve the original system for a jump-free input by RK4 in real time.
pub fn integrate_caratheodory(
    dynamics: &Dynamics,
    u: &BvPath,
    v: &SampledControl,
    x0: &[f64],
    step: f64,
) -> Result<Trajectory, IntegrationError> {
    let (a, b) = u.interval();
    check_initial(dynamics, x0, v, u.dim(), (a, b))?;
    if !(step > 0.0) {
        return Err(IntegrationError::Usage(format!("step must be positive, got {step}")));
    }
    if !u.is_continuous() {
        return Err(IntegrationError::Precondition("the input has jumps; use a graph completion".into()));
    }
    for (i, seg) in u.segments().iter().enumerate() {
        if let Segment::Expr(e) = seg {
            if !e.is_differentiable() {
                return Err(IntegrationError::Precondition(format!("segment {i} is not differentiable")));
            }
        }
    }
    let mut knots: Vec<f64> = u.breakpoints().to_vec();
    for seg in u.segments() {
        if let Segment::Table(tab) = seg {
            knots.extend_from_slice(tab.times());
        }
    }
    knots.extend(v.switch_times());
    let knots = numeric::merge_sorted(knots);
    let mut cached_probe = f64::NAN;
    let mut psi: Vec<f64> = Vec::new();
    let mut segment = 0;
    let (dense, _) = rk4(&knots, step, x0.to_vec(), state_guard(dynamics.guard(), 0), |t, probe, state, out| {
        if probe != cached_probe {
            psi = v.eval(probe).to_vec();
            segment = u.segment_index(probe);
            cached_probe = probe;
        }
        let (value, rate) = match &u.segments()[segment] {
            Segment::Expr(e) => (e.eval(t)?, e.derivative(t)?),
            Segment::Table(tab) => (tab.eval(t), tab.slope(probe)),
        };
        dynamics.rate(t, state, &value, &psi, 1.0, &rate, out)?;
        Ok(())
    })?;
    Trajectory::new(dense, TimeMap::Identity, (a, b))
}

/// `x6(b) + max_{t in times} (x4(t) - exp(phi(t)))^2`.
pub fn evaluate_cost_example(x: &Trajectory, phi: &BvPath, times: &[f64]) -> Result<f64, IntegrationError> {
    if x.dim() < 6 {
        return Err(IntegrationError::Usage(format!("the cost needs at least 6 state components, got {}", x.dim())));
    }
    if phi.dim() != 1 {
        return Err(IntegrationError::Usage("phi must be scalar".into()));
    }
    let (_, b) = x.interval();
    let terminal = x.eval(b)?[5];
    let mut sup: f64 = 0.0;
    for &t in times {
        let gap = x.eval(t)?[3] - phi.eval(t)?[0].exp();
        sup = sup.max(gap * gap);
    }
    Ok(terminal + sup)
}

/// Shared handle for parallel sweeps.
pub type SharedDynamics = Arc<Dynamics>;
