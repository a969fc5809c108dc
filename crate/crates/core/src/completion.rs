//! Graph completions of BV inputs and their clocks.
//!
//! A completion is a Lipschitz curve `s -> (phi0(s), phi(s))` on `[0, 1]`
//! whose image contains the graph of `u`. Each jump is bridged by two
//! polylines (left value to at-value, at-value to right value) and the whole
//! curve is parameterized by normalized Euclidean arclength in `(t, u)`
//! space, so its Lipschitz constant equals its total length.
//!
//! The curve is stored as exact pieces rather than samples: affine pieces for
//! bridge legs and table cells, and graph pieces for expression segments,
//! where `t(s)` is recovered by inverting the arclength integral. This keeps
//! the clock identity `(phi0, phi)(sigma(t)) = (t, u(t))` at round-off level.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

use crate::bvpath::{BvError, BvPath, ControlSet, ExprSegment, Segment, MEMBERSHIP_TOL};
use crate::expr::ExprError;
use crate::numeric::{self, dist, gauss_legendre8};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompletionError {
    #[error(transparent)]
    Path(#[from] BvError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("time {t} lies outside [{a}, {b}]")]
    Domain { t: f64, a: f64, b: f64 },
    #[error("parameter {s} lies outside [0, 1]")]
    Parameter { s: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("bridge at breakpoint {index} has length {length} exceeding the Whitney bound {bound}")]
    Whitney { index: usize, length: f64, bound: f64 },
    #[error("arclength computation failed: {0}")]
    Arclength(String),
}

/// Piecewise-linear curve in the control space.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec<f64>>,
}

impl Polyline {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, CompletionError> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.len() < 2 || dim == 0 || points.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
            return Err(CompletionError::Config("a bridge needs at least two finite points of equal dimension".into()));
        }
        Ok(Polyline { points })
    }

    pub fn segment(from: &[f64], to: &[f64]) -> Self {
        Polyline { points: vec![from.to_vec(), to.to_vec()] }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn start(&self) -> &[f64] {
        &self.points[0]
    }

    pub fn end(&self) -> &[f64] {
        &self.points[self.points.len() - 1]
    }

    /// Length, which is also the variation of the arc.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| dist(&w[0], &w[1])).sum()
    }

    /// Point at normalized arclength `lambda` in `[0, 1]`.
    pub fn point_at(&self, lambda: f64) -> Vec<f64> {
        let total = self.length();
        if total == 0.0 {
            return self.points[0].clone();
        }
        let mut remaining = lambda.clamp(0.0, 1.0) * total;
        for w in self.points.windows(2) {
            let leg = dist(&w[0], &w[1]);
            if remaining <= leg && leg > 0.0 {
                return numeric::lerp(&w[0], &w[1], remaining / leg);
            }
            remaining -= leg;
        }
        self.end().to_vec()
    }
}

/// The two arcs bridging one jump triple.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgePair {
    pub minus: Polyline,
    pub plus: Polyline,
}

/// Default bridge: straight chords `u(t-) -> u(t) -> u(t+)`.
pub fn bridge(u_minus: &[f64], u_at: &[f64], u_plus: &[f64], set: &ControlSet) -> Result<BridgePair, CompletionError> {
    for (t, p) in [(0.0, u_minus), (0.5, u_at), (1.0, u_plus)] {
        if !set.contains(p) {
            return Err(BvError::OutsideSet { t, value: p.to_vec() }.into());
        }
    }
    Ok(BridgePair { minus: Polyline::segment(u_minus, u_at), plus: Polyline::segment(u_at, u_plus) })
}

/// Check a user-supplied arc: endpoints, membership of its vertices (the
/// built-in sets are convex) and `length <= M |to - from|`.
pub fn validate_arc(index: usize, arc: &Polyline, from: &[f64], to: &[f64], set: &ControlSet) -> Result<(), CompletionError> {
    if arc.start().len() != from.len() {
        return Err(CompletionError::Config(format!("bridge at breakpoint {index} has the wrong dimension")));
    }
    if dist(arc.start(), from) > MEMBERSHIP_TOL || dist(arc.end(), to) > MEMBERSHIP_TOL {
        return Err(CompletionError::Config(format!(
            "bridge at breakpoint {index} must run from {from:?} to {to:?}"
        )));
    }
    if let Some(p) = arc.points().iter().find(|p| !set.contains(p)) {
        return Err(BvError::OutsideSet { t: f64::NAN, value: p.clone() }.into());
    }
    let length = arc.length();
    let bound = set.whitney() * dist(from, to);
    if length > bound * (1.0 + 1e-12) + 1e-12 {
        return Err(CompletionError::Whitney { index, length, bound });
    }
    Ok(())
}

/// User arcs replacing the default chords, keyed by breakpoint index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BridgeOverrides {
    pub minus: BTreeMap<usize, Polyline>,
    pub plus: BTreeMap<usize, Polyline>,
}

impl BridgeOverrides {
    pub fn is_empty(&self) -> bool {
        self.minus.is_empty() && self.plus.is_empty()
    }
}

/// Cumulative arclength of `t -> (t, u(t))` on an expression segment.
#[derive(Debug, Clone)]
struct ArcTable {
    cells: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ArcTable {
    fn build(seg: &ExprSegment, t0: f64, t1: f64) -> Result<Self, CompletionError> {
        let speed = |t: f64| -> Result<f64, ExprError> {
            let d = seg.derivative(t)?;
            Ok((1.0 + d.iter().map(|x| x * x).sum::<f64>()).sqrt())
        };
        let cell_lengths = |cells: &[f64]| -> Result<Vec<f64>, ExprError> {
            cells.windows(2).map(|w| gauss_legendre8(w[0], w[1], speed)).collect()
        };
        let mut n = 8;
        let mut cells = numeric::uniform_grid(t0, t1, n);
        let mut lengths = cell_lengths(&cells)?;
        let mut total: f64 = lengths.iter().sum();
        loop {
            if n >= 1 << 16 {
                return Err(CompletionError::Arclength(format!("no convergence on [{t0}, {t1}]")));
            }
            n *= 2;
            let finer = numeric::uniform_grid(t0, t1, n);
            let finer_lengths = cell_lengths(&finer)?;
            let finer_total: f64 = finer_lengths.iter().sum();
            let converged = (finer_total - total).abs() <= 1e-14 * finer_total;
            cells = finer;
            lengths = finer_lengths;
            total = finer_total;
            if converged || !total.is_finite() {
                break;
            }
        }
        if !total.is_finite() {
            return Err(CompletionError::Arclength(format!("non-finite arclength on [{t0}, {t1}]")));
        }
        let mut cumulative = Vec::with_capacity(lengths.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for l in lengths {
            acc += l;
            cumulative.push(acc);
        }
        Ok(ArcTable { cells, cumulative })
    }

    fn total(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }

    fn speed(seg: &ExprSegment, t: f64) -> Result<f64, ExprError> {
        let d = seg.derivative(t)?;
        Ok((1.0 + d.iter().map(|x| x * x).sum::<f64>()).sqrt())
    }

    fn length_to(&self, seg: &ExprSegment, t: f64) -> Result<f64, ExprError> {
        let j = numeric::locate(&self.cells, t);
        let t = t.clamp(self.cells[0], self.cells[self.cells.len() - 1]);
        Ok(self.cumulative[j] + gauss_legendre8(self.cells[j], t, |x| Self::speed(seg, x))?)
    }

    /// Time at which the accumulated arclength equals `target`.
    fn invert(&self, seg: &ExprSegment, target: f64) -> Result<f64, ExprError> {
        let last = self.cells.len() - 1;
        if target <= 0.0 {
            return Ok(self.cells[0]);
        }
        if target >= self.total() {
            return Ok(self.cells[last]);
        }
        let j = numeric::locate(&self.cumulative, target);
        let (mut lo, mut hi) = (self.cells[j], self.cells[j + 1]);
        let base = self.cumulative[j];
        let frac = (target - base) / (self.cumulative[j + 1] - base);
        let mut t = lo + frac * (hi - lo);
        let tol = 2.0 * f64::EPSILON * self.total().max(1.0);
        for _ in 0..100 {
            let residual = base + gauss_legendre8(self.cells[j], t, |x| Self::speed(seg, x))? - target;
            if residual.abs() <= tol {
                return Ok(t);
            }
            if residual > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let mut next = t - residual / Self::speed(seg, t)?;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0) || hi - lo <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
                return Ok(next);
            }
            t = next;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone)]
enum PieceKind {
    /// Affine in `(t, u)`; bridge legs have `t0 == t1`.
    Line { u0: Vec<f64>, u1: Vec<f64> },
    /// Graph of expression segment `segment` over `[t0, t1]`.
    Graph { segment: usize, arc: ArcTable },
}

#[derive(Debug, Clone)]
struct Piece {
    t0: f64,
    t1: f64,
    length: f64,
    /// Arclength in `(t, u)` at the piece start.
    offset: f64,
    /// Variation of the control part across the piece.
    control_length: f64,
    kind: PieceKind,
}

/// Parameter intervals covering the bridge at one breakpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpArcs {
    pub t: f64,
    pub c_minus: f64,
    pub d_minus: f64,
    pub c_plus: f64,
    pub d_plus: f64,
}

/// `(phi0, phi)` or its derivative at one parameter.
pub type CurvePoint = (f64, Vec<f64>);

/// The exact curve `(phi0, phi)` behind a completion.
#[derive(Debug)]
pub struct CompletionCurve {
    path: Arc<BvPath>,
    pieces: Vec<Piece>,
    /// Normalized piece start parameters plus the final `1.0`.
    knots: Vec<f64>,
    /// Per continuous segment, the piece index range.
    segment_pieces: Vec<(usize, usize)>,
    arcs: Vec<JumpArcs>,
    length: f64,
    fingerprint: u64,
}

impl CompletionCurve {
    fn build(path: Arc<BvPath>, bridges: &[BridgePair]) -> Result<Self, CompletionError> {
        let bps = path.breakpoints().to_vec();
        let mut pieces: Vec<Piece> = Vec::new();
        let mut offset = 0.0;
        let mut segment_pieces = Vec::new();
        let mut raw_arcs = Vec::new();
        let push = |pieces: &mut Vec<Piece>, offset: &mut f64, t0: f64, t1: f64, length: f64, control_length: f64, kind| {
            if length > 0.0 {
                pieces.push(Piece { t0, t1, length, offset: *offset, control_length, kind });
                *offset += length;
            }
        };
        for (i, &t) in bps.iter().enumerate() {
            let legs = |poly: &Polyline, pieces: &mut Vec<Piece>, offset: &mut f64| {
                for w in poly.points().windows(2) {
                    let l = dist(&w[0], &w[1]);
                    push(pieces, offset, t, t, l, l, PieceKind::Line { u0: w[0].clone(), u1: w[1].clone() });
                }
            };
            let c_minus = offset;
            legs(&bridges[i].minus, &mut pieces, &mut offset);
            let d_minus = offset;
            legs(&bridges[i].plus, &mut pieces, &mut offset);
            let d_plus = offset;
            raw_arcs.push((t, c_minus, d_minus, d_minus, d_plus));
            if i + 1 < bps.len() {
                let first = pieces.len();
                let (t0, t1) = (t, bps[i + 1]);
                match &path.segments()[i] {
                    Segment::Table(tab) => {
                        for (tw, vw) in tab.times().windows(2).zip(tab.values().windows(2)) {
                            let du = dist(&vw[0], &vw[1]);
                            let l = (tw[1] - tw[0]).hypot(du);
                            push(&mut pieces, &mut offset, tw[0], tw[1], l, du, PieceKind::Line { u0: vw[0].clone(), u1: vw[1].clone() });
                        }
                    }
                    Segment::Expr(seg) => {
                        if !seg.is_differentiable() {
                            return Err(CompletionError::Config(format!(
                                "segment {i} has no almost-everywhere derivative; use a table segment"
                            )));
                        }
                        let arc = ArcTable::build(seg, t0, t1)?;
                        let l = arc.total();
                        let var = path.segment_variation(i);
                        push(&mut pieces, &mut offset, t0, t1, l, var, PieceKind::Graph { segment: i, arc });
                    }
                }
                segment_pieces.push((first, pieces.len()));
            }
        }
        let length = offset;
        if !(length > 0.0) || !length.is_finite() {
            return Err(CompletionError::Arclength("completion has no positive finite length".into()));
        }
        let mut knots: Vec<f64> = pieces.iter().map(|p| p.offset / length).collect();
        knots.push(1.0);
        let arcs = raw_arcs
            .into_iter()
            .map(|(t, c_m, d_m, c_p, d_p)| JumpArcs {
                t,
                c_minus: c_m / length,
                d_minus: d_m / length,
                c_plus: c_p / length,
                d_plus: d_p / length,
            })
            .collect();
        let mut hasher = DefaultHasher::new();
        length.to_bits().hash(&mut hasher);
        for k in &knots {
            k.to_bits().hash(&mut hasher);
        }
        Ok(CompletionCurve { path, pieces, knots, segment_pieces, arcs, length, fingerprint: hasher.finish() })
    }

    pub fn path(&self) -> &BvPath {
        &self.path
    }

    /// Total arclength, equal to the Lipschitz constant of the normalized curve.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn arcs(&self) -> &[JumpArcs] {
        &self.arcs
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Variation of `phi` alone.
    pub fn control_variation(&self) -> f64 {
        self.pieces.iter().map(|p| p.control_length).sum()
    }

    fn expr_segment(&self, index: usize) -> &ExprSegment {
        match &self.path.segments()[index] {
            Segment::Expr(e) => e,
            Segment::Table(_) => unreachable!("graph pieces come from expression segments"),
        }
    }

    fn piece_index(&self, s: f64) -> usize {
        numeric::locate(&self.knots, s).min(self.pieces.len() - 1)
    }

    fn check_s(&self, s: f64) -> Result<(), CompletionError> {
        if (0.0..=1.0).contains(&s) {
            Ok(())
        } else {
            Err(CompletionError::Parameter { s })
        }
    }

    fn local(&self, piece: &Piece, s: f64) -> f64 {
        ((s * self.length) - piece.offset).clamp(0.0, piece.length)
    }

    fn eval_piece(&self, index: usize, s: f64) -> Result<(f64, Vec<f64>), CompletionError> {
        let piece = &self.pieces[index];
        let local = self.local(piece, s);
        match &piece.kind {
            PieceKind::Line { u0, u1 } => {
                let lambda = local / piece.length;
                Ok((piece.t0 + lambda * (piece.t1 - piece.t0), numeric::lerp(u0, u1, lambda)))
            }
            PieceKind::Graph { segment, arc } => {
                let seg = self.expr_segment(*segment);
                let t = arc.invert(seg, local)?;
                Ok((t, seg.eval(t)?))
            }
        }
    }

    /// `(phi0(s), phi(s))`.
    pub fn eval(&self, s: f64) -> Result<(f64, Vec<f64>), CompletionError> {
        self.check_s(s)?;
        self.eval_piece(self.piece_index(s), s)
    }

    /// Derivative of `(phi0, phi)` at `s`, on the piece containing `probe`.
    pub fn velocity(&self, s: f64, probe: f64) -> Result<(f64, Vec<f64>), CompletionError> {
        let piece = &self.pieces[self.piece_index(probe)];
        let scale = self.length / piece.length;
        match &piece.kind {
            PieceKind::Line { u0, u1 } => {
                Ok(((piece.t1 - piece.t0) * scale, u0.iter().zip(u1).map(|(a, b)| (b - a) * scale).collect()))
            }
            PieceKind::Graph { segment, arc } => {
                let seg = self.expr_segment(*segment);
                let t = arc.invert(seg, self.local(piece, s))?;
                let du = seg.derivative(t)?;
                let dt = self.length / (1.0 + du.iter().map(|x| x * x).sum::<f64>()).sqrt();
                Ok((dt, du.iter().map(|d| d * dt).collect()))
            }
        }
    }

    /// `eval(s)` and `velocity(s, probe)` with a single arclength inversion.
    pub fn eval_with_velocity(&self, s: f64, probe: f64) -> Result<(CurvePoint, CurvePoint), CompletionError> {
        self.check_s(s)?;
        let index = self.piece_index(probe);
        let piece = &self.pieces[index];
        match &piece.kind {
            PieceKind::Graph { segment, arc } if self.piece_index(s) == index => {
                let seg = self.expr_segment(*segment);
                let t = arc.invert(seg, self.local(piece, s))?;
                let du = seg.derivative(t)?;
                let dt = self.length / (1.0 + du.iter().map(|x| x * x).sum::<f64>()).sqrt();
                Ok(((t, seg.eval(t)?), (dt, du.iter().map(|d| d * dt).collect())))
            }
            _ => Ok((self.eval(s)?, self.velocity(s, probe)?)),
        }
    }

    /// Clock value on the continuous part, `t` strictly inside segment `i`.
    fn clock_interior(&self, i: usize, t: f64) -> Result<f64, CompletionError> {
        let (first, end) = self.segment_pieces[i];
        let pieces = &self.pieces[first..end];
        let idx = pieces.partition_point(|p| p.t1 < t).min(pieces.len() - 1);
        let piece = &pieces[idx];
        let local = match &piece.kind {
            PieceKind::Line { .. } => piece.length * ((t - piece.t0) / (piece.t1 - piece.t0)),
            PieceKind::Graph { segment, arc } => arc.length_to(self.expr_segment(*segment), t)?,
        };
        Ok(((piece.offset + local) / self.length).clamp(0.0, 1.0))
    }

    /// Completion clock: end of the left arc at breakpoints, the unique
    /// parameter over `t` elsewhere.
    fn clock(&self, t: f64) -> Result<f64, CompletionError> {
        let bps = self.path.breakpoints();
        match bps.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => Ok(self.arcs[i].d_minus),
            Err(pos) => self.clock_interior(pos - 1, t),
        }
    }
}

/// Monotone selection `sigma` with `(phi0, phi)(sigma(t)) = (t, u(t))`.
#[derive(Debug, Clone)]
pub struct Clock {
    a: f64,
    b: f64,
    normalizer: f64,
    lipschitz: f64,
    jumps: Vec<ClockJump>,
    source: ClockSource,
}

/// Clock values around one breakpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockJump {
    pub t: f64,
    pub left: f64,
    pub at: f64,
    pub right: f64,
}

impl ClockJump {
    pub fn gap(&self) -> f64 {
        self.right - self.left
    }
}

#[derive(Debug, Clone)]
enum ClockSource {
    Canonical(Arc<BvPath>),
    Completion(Arc<CompletionCurve>),
}

impl Clock {
    /// `sigma(t) = (t - a + Var_[a,t](u)) / (b - a + Var_[a,b](u))`.
    pub fn canonical(path: Arc<BvPath>) -> Result<Self, CompletionError> {
        let (a, b) = path.interval();
        let normalizer = b - a + path.variation(b)?;
        let mut jumps = Vec::with_capacity(path.breakpoints().len());
        for (t, jump) in path.breakpoints().iter().zip(path.jumps()) {
            let at_value = (t - a + path.variation(*t)?) / normalizer;
            jumps.push(ClockJump {
                t: *t,
                left: at_value - dist(&jump.left, &jump.at) / normalizer,
                at: at_value,
                right: at_value + dist(&jump.at, &jump.right) / normalizer,
            });
        }
        Ok(Clock { a, b, normalizer, lipschitz: normalizer, jumps, source: ClockSource::Canonical(path) })
    }

    fn of_completion(curve: Arc<CompletionCurve>) -> Self {
        let (a, b) = curve.path.interval();
        let jumps = curve
            .arcs
            .iter()
            .map(|arc| ClockJump { t: arc.t, left: arc.c_minus, at: arc.d_minus, right: arc.d_plus })
            .collect();
        Clock { a, b, normalizer: curve.length, lipschitz: curve.length, jumps, source: ClockSource::Completion(curve) }
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Constant `L` with `sigma(t2) - sigma(t1) >= (t2 - t1) / L`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn jumps(&self) -> &[ClockJump] {
        &self.jumps
    }

    /// Breakpoints where the clock actually jumps.
    pub fn discontinuities(&self) -> impl Iterator<Item = &ClockJump> {
        self.jumps.iter().filter(|j| j.gap() > 0.0)
    }

    /// Fingerprint of the completion parameterization, if any.
    pub fn fingerprint(&self) -> Option<u64> {
        match &self.source {
            ClockSource::Canonical(_) => None,
            ClockSource::Completion(c) => Some(c.fingerprint),
        }
    }

    fn check(&self, t: f64) -> Result<(), CompletionError> {
        if t >= self.a && t <= self.b {
            Ok(())
        } else {
            Err(CompletionError::Domain { t, a: self.a, b: self.b })
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64, CompletionError> {
        self.check(t)?;
        match &self.source {
            ClockSource::Canonical(path) => Ok((t - self.a + path.variation(t)?) / self.normalizer),
            ClockSource::Completion(curve) => curve.clock(t),
        }
    }

    /// `(sigma(t-), sigma(t+))`; equal away from breakpoints.
    pub fn one_sided(&self, t: f64) -> Result<(f64, f64), CompletionError> {
        self.check(t)?;
        match self.jumps.binary_search_by(|j| j.t.total_cmp(&t)) {
            Ok(i) => Ok((self.jumps[i].left, self.jumps[i].right)),
            Err(_) => {
                let v = self.eval(t)?;
                Ok((v, v))
            }
        }
    }
}

/// Default number of cells of the sampled parameter grid.
pub const DEFAULT_S_CELLS: usize = 1 << 14;

/// A graph completion of a BV input together with its clock.
#[derive(Debug, Clone)]
pub struct GraphCompletion {
    curve: Arc<CompletionCurve>,
    clock: Clock,
    bridges: Vec<BridgePair>,
    whitney: f64,
    s_grid: Vec<f64>,
    phi0: Vec<f64>,
    phi: Vec<Vec<f64>>,
}

impl GraphCompletion {
    pub fn build(path: Arc<BvPath>, set: &ControlSet, overrides: &BridgeOverrides) -> Result<Self, CompletionError> {
        Self::build_with_grid(path, set, overrides, DEFAULT_S_CELLS)
    }

    pub fn build_with_grid(
        path: Arc<BvPath>,
        set: &ControlSet,
        overrides: &BridgeOverrides,
        s_cells: usize,
    ) -> Result<Self, CompletionError> {
        if s_cells < 2 {
            return Err(CompletionError::Config("the parameter grid needs at least two cells".into()));
        }
        path.check_in(set)?;
        let n = path.breakpoints().len();
        for index in overrides.minus.keys().chain(overrides.plus.keys()) {
            if *index >= n {
                return Err(CompletionError::Config(format!(
                    "bridge override for breakpoint {index}, but the input has breakpoints 0..{}",
                    n - 1
                )));
            }
        }
        let mut bridges = Vec::with_capacity(n);
        for (i, jump) in path.jumps().iter().enumerate() {
            let mut pair = bridge(&jump.left, &jump.at, &jump.right, set)?;
            if let Some(arc) = overrides.minus.get(&i) {
                validate_arc(i, arc, &jump.left, &jump.at, set)?;
                pair.minus = arc.clone();
            }
            if let Some(arc) = overrides.plus.get(&i) {
                validate_arc(i, arc, &jump.at, &jump.right, set)?;
                pair.plus = arc.clone();
            }
            bridges.push(pair);
        }
        let curve = Arc::new(CompletionCurve::build(path, &bridges)?);
        let s_grid = numeric::uniform_grid(0.0, 1.0, s_cells);
        let mut phi0 = Vec::with_capacity(s_grid.len());
        let mut phi = Vec::with_capacity(s_grid.len());
        for &s in &s_grid {
            let (t, u) = curve.eval(s)?;
            phi0.push(t);
            phi.push(u);
        }
        let clock = Clock::of_completion(curve.clone());
        Ok(GraphCompletion { curve, clock, bridges, whitney: set.whitney(), s_grid, phi0, phi })
    }

    pub fn curve(&self) -> &Arc<CompletionCurve> {
        &self.curve
    }

    pub fn path(&self) -> &BvPath {
        self.curve.path()
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn bridges(&self) -> &[BridgePair] {
        &self.bridges
    }

    pub fn whitney(&self) -> f64 {
        self.whitney
    }

    pub fn lipschitz(&self) -> f64 {
        self.curve.length
    }

    /// `Var_[0,1](phi0, phi)`, which is the total arclength.
    pub fn variation(&self) -> f64 {
        self.curve.length
    }

    /// `Var_[0,1](phi)`.
    pub fn control_variation(&self) -> f64 {
        self.curve.control_variation()
    }

    /// `(b - a) + (2M - 1) Var_[a,b](u)`.
    pub fn variation_budget(&self) -> f64 {
        let (a, b) = self.path().interval();
        (b - a) + (2.0 * self.whitney - 1.0) * self.path().total_variation()
    }

    pub fn jump_arcs(&self) -> &[JumpArcs] {
        &self.curve.arcs
    }

    pub fn fingerprint(&self) -> u64 {
        self.curve.fingerprint
    }

    pub fn s_grid(&self) -> &[f64] {
        &self.s_grid
    }

    pub fn phi0_samples(&self) -> &[f64] {
        &self.phi0
    }

    pub fn phi_samples(&self) -> &[Vec<f64>] {
        &self.phi
    }

    pub fn eval(&self, s: f64) -> Result<(f64, Vec<f64>), CompletionError> {
        self.curve.eval(s)
    }

    /// Largest chord slope of `(phi0, phi)` over the sampled grid.
    pub fn max_chord_slope(&self) -> f64 {
        (1..self.s_grid.len())
            .map(|j| {
                let dt = self.phi0[j] - self.phi0[j - 1];
                let du = dist(&self.phi[j], &self.phi[j - 1]);
                dt.hypot(du) / (self.s_grid[j] - self.s_grid[j - 1])
            })
            .fold(0.0, f64::max)
    }

    pub fn phi0_is_monotone(&self) -> bool {
        self.phi0.windows(2).all(|w| w[1] >= w[0])
    }

    /// Maximal parameter interval on which `phi0 = t`.
    pub fn preimage(&self, t: f64) -> Result<(f64, f64), CompletionError> {
        let (a, b) = self.path().interval();
        if !(t >= a && t <= b) {
            return Err(CompletionError::Domain { t, a, b });
        }
        match self.path().breakpoints().binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => Ok((self.curve.arcs[i].c_minus, self.curve.arcs[i].d_plus)),
            Err(_) => {
                let s = self.clock.eval(t)?;
                Ok((s, s))
            }
        }
    }
}
