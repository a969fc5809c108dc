//! Pointwise-defined bounded-variation inputs with explicit jump bookkeeping.
//!
//! A [`BvPath`] lives on `[a, b]` and is described by breakpoints
//! `a = t_0 < ... < t_N = b`, one continuous segment per open interval and a
//! jump triple `(u(t-), u(t), u(t+))` at every breakpoint. Variation is
//! measured with the Euclidean norm of the control space.

use std::sync::Arc;

use thiserror::Error;

use crate::expr::{self, Env, Expr, ExprError, Scope, Var};
use crate::numeric::{self, dist, integrate_adaptive, norm, QuadratureError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BvError {
    #[error("time {t} lies outside [{a}, {b}]")]
    Domain { t: f64, a: f64, b: f64 },
    #[error("invalid path: {0}")]
    Invalid(String),
    #[error("value {value:?} at t = {t} is not in the control set")]
    OutsideSet { t: f64, value: Vec<f64> },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("variation estimate failed: {0}")]
    Variation(#[from] QuadratureError),
}

/// Tolerance used for membership and one-sided limit consistency checks.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ControlSetKind {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Hull { vertices: Vec<Vec<f64>> },
}

/// Compact control set `U` together with its Whitney constant `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    dim: usize,
    kind: ControlSetKind,
    whitney: f64,
}

impl ControlSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>, whitney: f64) -> Result<Self, BvError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(BvError::Invalid("box bounds must be non-empty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(BvError::Invalid("box requires finite lower <= upper on every axis".into()));
        }
        Self::checked(lower.len(), ControlSetKind::Box { lower, upper }, whitney)
    }

    pub fn hull(vertices: Vec<Vec<f64>>, whitney: f64) -> Result<Self, BvError> {
        let dim = vertices.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || vertices.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(BvError::Invalid("hull needs at least one finite vertex of consistent dimension".into()));
        }
        Self::checked(dim, ControlSetKind::Hull { vertices }, whitney)
    }

    /// Symmetric box `[-r, r]^dim` with `M = 1`.
    pub fn cube(dim: usize, r: f64) -> Self {
        Self::boxed(vec![-r; dim], vec![r; dim], 1.0).expect("valid cube")
    }

    fn checked(dim: usize, kind: ControlSetKind, whitney: f64) -> Result<Self, BvError> {
        if !(whitney >= 1.0) || !whitney.is_finite() {
            return Err(BvError::Invalid(format!("Whitney constant must be >= 1, got {whitney}")));
        }
        Ok(ControlSet { dim, kind, whitney })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ControlSetKind {
        &self.kind
    }

    pub fn whitney(&self) -> f64 {
        self.whitney
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        if p.len() != self.dim {
            return false;
        }
        match &self.kind {
            ControlSetKind::Box { lower, upper } => p
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(x, (l, u))| *x >= l - MEMBERSHIP_TOL && *x <= u + MEMBERSHIP_TOL),
            ControlSetKind::Hull { vertices } => hull_contains(vertices, p, MEMBERSHIP_TOL),
        }
    }
}

/// Away-step Frank-Wolfe on `min |V lambda - p|^2` over the simplex, with the
/// duality gap used as an exclusion certificate.
fn hull_contains(vertices: &[Vec<f64>], p: &[f64], tol: f64) -> bool {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let nearest = (0..vertices.len())
        .min_by(|&i, &j| dist(&vertices[i], p).total_cmp(&dist(&vertices[j], p)))
        .expect("non-empty hull");
    let mut weights = vec![0.0; vertices.len()];
    weights[nearest] = 1.0;
    let mut x = vertices[nearest].clone();
    for _ in 0..100_000 {
        let g: Vec<f64> = x.iter().zip(p).map(|(a, b)| a - b).collect();
        let gnorm2 = dot(&g, &g);
        if gnorm2.sqrt() <= tol {
            return true;
        }
        let scores: Vec<f64> = vertices.iter().map(|v| dot(&g, v)).collect();
        let fw = (0..vertices.len()).min_by(|&i, &j| scores[i].total_cmp(&scores[j])).expect("non-empty");
        let gx = dot(&g, &x);
        let gap = gx - scores[fw];
        if gnorm2 - 2.0 * gap > tol * tol {
            return false;
        }
        let away = (0..vertices.len())
            .filter(|&i| weights[i] > 0.0)
            .max_by(|&i, &j| scores[i].total_cmp(&scores[j]))
            .expect("active set");
        let away_gain = scores[away] - gx;
        let (dir, gamma_max, forward): (Vec<f64>, f64, bool) = if gap >= away_gain {
            (vertices[fw].iter().zip(&x).map(|(s, xi)| s - xi).collect(), 1.0, true)
        } else {
            let w = weights[away];
            (x.iter().zip(&vertices[away]).map(|(xi, a)| xi - a).collect(), w / (1.0 - w), false)
        };
        let dd = dot(&dir, &dir);
        if dd == 0.0 {
            return gnorm2.sqrt() <= tol;
        }
        let gamma = (-dot(&g, &dir) / dd).clamp(0.0, gamma_max);
        if gamma == 0.0 {
            return gnorm2.sqrt() <= tol;
        }
        for (xi, di) in x.iter_mut().zip(&dir) {
            *xi += gamma * di;
        }
        if forward {
            for w in weights.iter_mut() {
                *w *= 1.0 - gamma;
            }
            weights[fw] += gamma;
        } else {
            for w in weights.iter_mut() {
                *w *= 1.0 + gamma;
            }
            weights[away] -= gamma;
            if weights[away] < 1e-15 {
                weights[away] = 0.0;
            }
        }
    }
    dist(&x, p) <= 10.0 * tol
}

/// Continuous segment given by expressions in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprSegment {
    components: Vec<Expr>,
    derivatives: Option<Vec<Expr>>,
}

impl ExprSegment {
    /// Components may reference `t` only; bind `k` beforehand.
    pub fn new(components: Vec<Expr>) -> Result<Self, BvError> {
        if components.is_empty() {
            return Err(BvError::Invalid("segment needs at least one component".into()));
        }
        let scope = Scope { t: true, ..Default::default() };
        if let Some(var) = components.iter().find_map(|c| c.first_out_of_scope(&scope)) {
            return Err(BvError::Invalid(format!("segment expressions may only use t, found {var}")));
        }
        let derivatives = components.iter().map(|c| c.differentiate_ae(Var::T)).collect::<Result<Vec<_>, _>>().ok();
        Ok(ExprSegment { components, derivatives })
    }

    pub fn parse(sources: &[&str]) -> Result<Self, BvError> {
        let components = sources.iter().map(|s| expr::parse(s)).collect::<Result<Vec<_>, _>>()?;
        Self::new(components)
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn is_differentiable(&self) -> bool {
        self.derivatives.is_some()
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, ExprError> {
        let env = Env::time(t);
        self.components.iter().map(|c| c.eval(&env)).collect()
    }

    pub fn derivative(&self, t: f64) -> Result<Vec<f64>, ExprError> {
        let env = Env::time(t);
        match &self.derivatives {
            Some(d) => d.iter().map(|c| c.eval(&env)).collect(),
            None => Err(ExprError::UnsupportedDerivative("abs", Var::T)),
        }
    }

    /// Euclidean speed `|u'(t)|`.
    pub fn speed(&self, t: f64) -> Result<f64, ExprError> {
        self.derivative(t).map(|d| norm(&d))
    }

    fn variation(&self, t0: f64, t1: f64) -> Result<f64, BvError> {
        if t1 <= t0 {
            return Ok(0.0);
        }
        if self.derivatives.is_some() {
            if let Ok(v) = integrate_adaptive(t0, t1, 1e-13, 1e-11, |t| self.speed(t).unwrap_or(f64::NAN)) {
                return Ok(v);
            }
        }
        // no usable derivative: adaptive chord refinement, bisecting cells whose
        // chord sum still grows when split
        const INITIAL_CELLS: usize = 256;
        let min_width = 1e-13 * (t1 - t0).max(1.0);
        let grid = numeric::uniform_grid(t0, t1, INITIAL_CELLS);
        let values = grid.iter().map(|&t| self.eval(t)).collect::<Result<Vec<_>, _>>()?;
        let mut stack: Vec<(f64, Vec<f64>, f64, Vec<f64>)> = grid
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| (t[0], v[0].clone(), t[1], v[1].clone()))
            .collect();
        let mut total = 0.0;
        let mut evaluations = 0usize;
        while let Some((l, ul, r, ur)) = stack.pop() {
            let chord = dist(&ul, &ur);
            let m = 0.5 * (l + r);
            if r - l <= min_width || m <= l || m >= r {
                total += chord;
                continue;
            }
            let um = self.eval(m)?;
            evaluations += 1;
            if evaluations > 1 << 22 {
                return Err(BvError::Variation(QuadratureError::NoConvergence { a: t0, b: t1, estimate: total, error: f64::NAN }));
            }
            let split = dist(&ul, &um) + dist(&um, &ur);
            if split - chord <= 1e-15 * split.max(1e-300) + 1e-16 {
                total += split;
            } else {
                stack.push((l, ul, m, um.clone()));
                stack.push((m, um, r, ur));
            }
        }
        Ok(total)
    }
}

/// Continuous piecewise-linear segment given by sample knots.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSegment {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TableSegment {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, BvError> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(BvError::Invalid("table needs at least two knots with one value each".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(BvError::Invalid("table knots must be strictly increasing".into()));
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(BvError::Invalid("table values must be finite and of equal dimension".into()));
        }
        Ok(TableSegment { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let i = numeric::locate(&self.times, t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let lambda = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        numeric::lerp(&self.values[i], &self.values[i + 1], lambda)
    }

    /// Chord slope on the knot cell containing `probe`.
    pub fn slope(&self, probe: f64) -> Vec<f64> {
        let i = numeric::locate(&self.times, probe);
        let dt = self.times[i + 1] - self.times[i];
        self.values[i].iter().zip(&self.values[i + 1]).map(|(a, b)| (b - a) / dt).collect()
    }

    fn variation(&self, t: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.times.len() - 1 {
            if self.times[i] >= t {
                break;
            }
            if self.times[i + 1] <= t {
                total += dist(&self.values[i], &self.values[i + 1]);
            } else {
                total += dist(&self.values[i], &self.eval(t));
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Expr(ExprSegment),
    Table(TableSegment),
}

impl Segment {
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, BvError> {
        match self {
            Segment::Expr(e) => Ok(e.eval(t)?),
            Segment::Table(tab) => Ok(tab.eval(t)),
        }
    }

    fn dim(&self) -> Result<usize, BvError> {
        match self {
            Segment::Expr(e) => Ok(e.components.len()),
            Segment::Table(t) => Ok(t.values[0].len()),
        }
    }

    /// Variation on `[t0, t]` where `t0` is the segment start.
    fn variation(&self, t0: f64, t: f64) -> Result<f64, BvError> {
        match self {
            Segment::Expr(e) => e.variation(t0, t),
            Segment::Table(tab) => Ok(tab.variation(t)),
        }
    }

    fn reversed(&self, a: f64, b: f64) -> Segment {
        match self {
            Segment::Expr(e) => {
                let mirrored = Expr::Binary(
                    crate::expr::BinaryOp::Sub,
                    Box::new(Expr::Num(a + b)),
                    Box::new(Expr::Var(Var::T)),
                );
                let components = e.components.iter().map(|c| c.substitute(Var::T, &mirrored)).collect();
                Segment::Expr(ExprSegment::new(components).expect("same scope"))
            }
            Segment::Table(tab) => Segment::Table(TableSegment {
                times: tab.times.iter().rev().map(|t| a + b - t).collect(),
                values: tab.values.iter().rev().cloned().collect(),
            }),
        }
    }
}

/// Jump data `(u(t-), u(t), u(t+))` at a breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub left: Vec<f64>,
    pub at: Vec<f64>,
    pub right: Vec<f64>,
}

impl Jump {
    pub fn is_continuous(&self) -> bool {
        self.left == self.at && self.at == self.right
    }

    /// `|u(t) - u(t-)| + |u(t+) - u(t)|`.
    pub fn size(&self) -> f64 {
        dist(&self.left, &self.at) + dist(&self.at, &self.right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvPath {
    a: f64,
    b: f64,
    dim: usize,
    breakpoints: Vec<f64>,
    segments: Vec<Segment>,
    jumps: Vec<Jump>,
    segment_variation: Vec<f64>,
}

impl BvPath {
    /// Build a path from breakpoints, segments and optional at-values.
    ///
    /// Left and right values of every jump triple are the one-sided limits of
    /// the adjacent segments. A missing at-value defaults to the right limit
    /// (left limit at `b`).
    pub fn new(breakpoints: Vec<f64>, segments: Vec<Segment>, at_values: Vec<Option<Vec<f64>>>) -> Result<Self, BvError> {
        let n = breakpoints.len();
        if n < 2 || segments.len() != n - 1 || at_values.len() != n {
            return Err(BvError::Invalid(format!(
                "{} breakpoints need {} segments and {} at-values, got {} and {}",
                n,
                n.saturating_sub(1),
                n,
                segments.len(),
                at_values.len()
            )));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(BvError::Invalid("breakpoints must be finite and strictly increasing".into()));
        }
        let dim = segments[0].dim()?;
        for s in &segments {
            if s.dim()? != dim {
                return Err(BvError::Invalid("segments have inconsistent dimensions".into()));
            }
        }
        for (i, seg) in segments.iter().enumerate() {
            if let Segment::Table(tab) = seg {
                let (t0, t1) = (tab.times[0], tab.times[tab.times.len() - 1]);
                if t0 != breakpoints[i] || t1 != breakpoints[i + 1] {
                    return Err(BvError::Invalid(format!(
                        "table segment {i} spans [{t0}, {t1}] instead of [{}, {}]",
                        breakpoints[i],
                        breakpoints[i + 1]
                    )));
                }
            }
        }
        let mut jumps = Vec::with_capacity(n);
        for (i, at) in at_values.into_iter().enumerate() {
            let t = breakpoints[i];
            let left = if i > 0 { Some(segments[i - 1].eval(t)?) } else { None };
            let right = if i + 1 < n { Some(segments[i].eval(t)?) } else { None };
            let at = at.or_else(|| right.clone()).or_else(|| left.clone()).expect("two breakpoints at least");
            if at.len() != dim || at.iter().any(|x| !x.is_finite()) {
                return Err(BvError::Invalid(format!("at-value at breakpoint {i} has wrong dimension or is not finite")));
            }
            jumps.push(Jump { left: left.unwrap_or_else(|| at.clone()), right: right.unwrap_or_else(|| at.clone()), at });
        }
        Self::assemble(breakpoints, segments, jumps)
    }

    /// Build from explicit jump triples, validated against segment limits.
    pub fn with_jumps(breakpoints: Vec<f64>, segments: Vec<Segment>, jumps: Vec<Jump>) -> Result<Self, BvError> {
        let n = breakpoints.len();
        if jumps.len() != n {
            return Err(BvError::Invalid(format!("expected {n} jump triples, got {}", jumps.len())));
        }
        let at_values = jumps.iter().map(|j| Some(j.at.clone())).collect();
        let path = Self::new(breakpoints, segments, at_values)?;
        for (i, (given, derived)) in jumps.iter().zip(&path.jumps).enumerate() {
            let left_ok = i == 0 || dist(&given.left, &derived.left) <= MEMBERSHIP_TOL;
            let right_ok = i + 1 == n || dist(&given.right, &derived.right) <= MEMBERSHIP_TOL;
            if !left_ok || !right_ok {
                return Err(BvError::Invalid(format!(
                    "jump triple at breakpoint {i} does not match the adjacent segment limits"
                )));
            }
        }
        Ok(path)
    }

    fn assemble(breakpoints: Vec<f64>, segments: Vec<Segment>, jumps: Vec<Jump>) -> Result<Self, BvError> {
        let dim = jumps[0].at.len();
        let segment_variation = segments
            .iter()
            .enumerate()
            .map(|(i, s)| s.variation(breakpoints[i], breakpoints[i + 1]))
            .collect::<Result<Vec<_>, _>>()?;
        if segment_variation.iter().any(|v| !v.is_finite()) {
            return Err(BvError::Invalid("segment variation is not finite".into()));
        }
        Ok(BvPath {
            a: breakpoints[0],
            b: *breakpoints.last().expect("non-empty"),
            dim,
            breakpoints,
            segments,
            jumps,
            segment_variation,
        })
    }

    pub fn constant(a: f64, b: f64, value: Vec<f64>) -> Result<Self, BvError> {
        let seg = TableSegment::new(vec![a, b], vec![value.clone(), value])?;
        Self::new(vec![a, b], vec![Segment::Table(seg)], vec![None, None])
    }

    /// Continuous piecewise-linear path through the given knots.
    pub fn piecewise_linear(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, BvError> {
        let (a, b) = (times[0], *times.last().ok_or_else(|| BvError::Invalid("empty table".into()))?);
        let seg = TableSegment::new(times, values)?;
        Self::new(vec![a, b], vec![Segment::Table(seg)], vec![None, None])
    }

    /// Piecewise-constant path with one jump at `t_jump`.
    pub fn step(a: f64, b: f64, t_jump: f64, left: Vec<f64>, at: Vec<f64>, right: Vec<f64>) -> Result<Self, BvError> {
        let s0 = TableSegment::new(vec![a, t_jump], vec![left.clone(), left])?;
        let s1 = TableSegment::new(vec![t_jump, b], vec![right.clone(), right])?;
        Self::new(vec![a, t_jump, b], vec![Segment::Table(s0), Segment::Table(s1)], vec![None, Some(at), None])
    }

    /// Single expression segment on `[a, b]`.
    pub fn from_exprs(a: f64, b: f64, sources: &[&str]) -> Result<Self, BvError> {
        let seg = ExprSegment::parse(sources)?;
        Self::new(vec![a, b], vec![Segment::Expr(seg)], vec![None, None])
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// `true` when no breakpoint carries a discontinuity.
    pub fn is_continuous(&self) -> bool {
        self.jumps.iter().all(Jump::is_continuous)
    }

    fn check_domain(&self, t: f64) -> Result<(), BvError> {
        if t >= self.a && t <= self.b {
            Ok(())
        } else {
            Err(BvError::Domain { t, a: self.a, b: self.b })
        }
    }

    /// Index of the segment covering the open cell that contains `t`.
    pub fn segment_index(&self, t: f64) -> usize {
        numeric::locate(&self.breakpoints, t)
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, BvError> {
        self.check_domain(t)?;
        match self.breakpoints.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => Ok(self.jumps[i].at.clone()),
            Err(pos) => self.segments[pos - 1].eval(t),
        }
    }

    pub fn one_sided_limits(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>), BvError> {
        self.check_domain(t)?;
        match self.breakpoints.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => Ok((self.jumps[i].left.clone(), self.jumps[i].right.clone())),
            Err(pos) => {
                let v = self.segments[pos - 1].eval(t)?;
                Ok((v.clone(), v))
            }
        }
    }

    /// Variation on `[a, t]`: the left jump at `t` counts, the right jump at
    /// `t` only once time has moved past it.
    pub fn variation(&self, t: f64) -> Result<f64, BvError> {
        self.check_domain(t)?;
        let mut total = 0.0;
        for (i, &ti) in self.breakpoints.iter().enumerate() {
            if ti > t {
                break;
            }
            let jump = &self.jumps[i];
            total += dist(&jump.left, &jump.at);
            if t > ti {
                total += dist(&jump.at, &jump.right);
            }
            if i < self.segments.len() && t > ti {
                let next = self.breakpoints[i + 1];
                total += if t >= next { self.segment_variation[i] } else { self.segments[i].variation(ti, t)? };
            }
        }
        if !total.is_finite() {
            return Err(BvError::Invalid("variation is not finite".into()));
        }
        Ok(total)
    }

    /// Variation of the continuous segment `i` on its open interval.
    pub fn segment_variation(&self, i: usize) -> f64 {
        self.segment_variation[i]
    }

    pub fn total_variation(&self) -> f64 {
        self.segment_variation.iter().sum::<f64>() + self.jumps.iter().map(Jump::size).sum::<f64>()
    }

    /// Check every stored value (and a sample of each expression segment)
    /// against the control set.
    pub fn check_in(&self, set: &ControlSet) -> Result<(), BvError> {
        if set.dim() != self.dim {
            return Err(BvError::Invalid(format!("path has dimension {} but U has dimension {}", self.dim, set.dim())));
        }
        let check = |t: f64, value: &[f64]| {
            if set.contains(value) {
                Ok(())
            } else {
                Err(BvError::OutsideSet { t, value: value.to_vec() })
            }
        };
        for (t, jump) in self.breakpoints.iter().zip(&self.jumps) {
            check(*t, &jump.left)?;
            check(*t, &jump.at)?;
            check(*t, &jump.right)?;
        }
        for (i, seg) in self.segments.iter().enumerate() {
            match seg {
                Segment::Table(tab) => {
                    for (t, v) in tab.times.iter().zip(&tab.values) {
                        check(*t, v)?;
                    }
                }
                Segment::Expr(e) => {
                    for t in numeric::uniform_grid(self.breakpoints[i], self.breakpoints[i + 1], 256) {
                        check(t, &e.eval(t)?)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// The same path traversed backwards in time, `t -> a + b - t`.
    pub fn reversed(&self) -> BvPath {
        let (a, b) = (self.a, self.b);
        let breakpoints: Vec<f64> = self.breakpoints.iter().rev().map(|t| a + b - t).collect();
        let segments: Vec<Segment> = self.segments.iter().rev().map(|s| s.reversed(a, b)).collect();
        let jumps: Vec<Jump> = self
            .jumps
            .iter()
            .rev()
            .map(|j| Jump { left: j.right.clone(), at: j.at.clone(), right: j.left.clone() })
            .collect();
        Self::assemble(breakpoints, segments, jumps).expect("reversal of a valid path")
    }

    /// Replace `k` in every expression segment; tables are unchanged.
    pub fn bind_family(segments: &[Vec<Expr>], k: f64) -> Vec<Vec<Expr>> {
        segments.iter().map(|comps| comps.iter().map(|c| c.bind(Var::K, k)).collect()).collect()
    }
}

/// Piecewise-constant, left-continuous samples of `v` on a uniform grid.
///
/// Cell `j` covers `(a + j h, a + (j + 1) h]`; `v(a)` is the first sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledControl {
    a: f64,
    b: f64,
    dim: usize,
    values: Vec<Vec<f64>>,
}

impl SampledControl {
    pub fn new(a: f64, b: f64, values: Vec<Vec<f64>>) -> Result<Self, BvError> {
        if !(b > a) || values.is_empty() {
            return Err(BvError::Invalid("sampled control needs a < b and at least one sample".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(BvError::Invalid("sampled control values must be finite and of equal dimension".into()));
        }
        Ok(SampledControl { a, b, dim, values })
    }

    /// No auxiliary control (`l = 0`).
    pub fn none(a: f64, b: f64) -> Self {
        SampledControl { a, b, dim: 0, values: vec![Vec::new()] }
    }

    /// Sample expressions in `t` at the right end of each of `cells` cells.
    pub fn from_exprs(a: f64, b: f64, cells: usize, sources: &[&str]) -> Result<Self, BvError> {
        let exprs = sources.iter().map(|s| expr::parse(s)).collect::<Result<Vec<_>, _>>()?;
        let grid = numeric::uniform_grid(a, b, cells.max(1));
        let values = grid[1..]
            .iter()
            .map(|&t| exprs.iter().map(|e| e.eval(&Env::time(t))).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(a, b, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> &[f64] {
        let cells = self.values.len();
        let h = (self.b - self.a) / cells as f64;
        let j = ((t - self.a) / h).ceil() as isize - 1;
        &self.values[j.clamp(0, cells as isize - 1) as usize]
    }

    /// Interior cell boundaries, where the sampled value may change.
    pub fn switch_times(&self) -> Vec<f64> {
        let cells = self.values.len();
        if self.dim == 0 {
            return Vec::new();
        }
        (1..cells).map(|j| self.a + (self.b - self.a) * (j as f64 / cells as f64)).collect()
    }

    pub fn check_in(&self, set: &ControlSet) -> Result<(), BvError> {
        if self.dim == 0 {
            return Ok(());
        }
        for (j, v) in self.values.iter().enumerate() {
            if !set.contains(v) {
                return Err(BvError::OutsideSet { t: self.a + (j as f64) * (self.b - self.a) / self.values.len() as f64, value: v.clone() });
            }
        }
        Ok(())
    }
}

/// Shared handle used by clocks and completions.
pub type SharedPath = Arc<BvPath>;
