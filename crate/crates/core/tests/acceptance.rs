//! Acceptance checks. Each criterion is measured against an oracle written
//! here, then cross-checked with the library's own `verify` module.

use std::error::Error;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use impulsive_core::approximation::{approximating_sequence, fixup_clock, lie_bracket, mollify_clock, MollifierKernel};
use impulsive_core::bvpath::{BvPath, ControlSet, ExprSegment, SampledControl, Segment, TableSegment};
use impulsive_core::completion::{BridgeOverrides, Clock, GraphCompletion, Polyline};
use impulsive_core::expr::{parse, Env, Var};
use impulsive_core::integrator::{gc_solution, integrate_caratheodory, integrate_spacetime, Dynamics, Trajectory};
use impulsive_core::scenario::{builtin, Scenario};
use impulsive_core::verify;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Res<T> = Result<T, Box<dyn Error>>;
type Check = (bool, String);

fn grid(a: f64, b: f64, cells: usize) -> Vec<f64> {
    (0..=cells).map(|i| a + (b - a) * i as f64 / cells as f64).collect()
}

fn norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Composite Simpson rule with `n` (even) cells.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    h / 3.0 * (f(a) + f(b) + inner)
}

/// State of the oscillating example: the first five components are exact,
/// the running cost is integrated by Simpson's rule.
fn oscillating_oracle(k: f64, t: f64) -> Vec<f64> {
    let rk = k.sqrt();
    let (u1, u2) = (((k * t).cos() - 1.0) / rk, (k * t).sin() / rk);
    let x3 = |s: f64| 1.0 - s + (k * s).sin() / k;
    let x5 = |s: f64| 1.0 - s;
    let running = |s: f64| {
        let (a, b) = (((k * s).cos() - 1.0) / rk, (k * s).sin() / rk);
        (x3(s) - x5(s)).powi(2) + a * a + b * b
    };
    let cells = 2 * ((4000.0 * t * k.max(10.0) / 10.0).ceil() as usize).max(1);
    vec![u1, u2, x3(t), t.exp(), x5(t), simpson(0.0, t, cells, running)]
}

fn limit_oracle(t: f64) -> Vec<f64> {
    vec![0.0, 0.0, 1.0 - t, t.exp(), 1.0 - t, 0.0]
}

fn oscillating(sc: &Scenario, k: usize) -> Res<Trajectory> {
    let u = sc.input.path_with_k(Some(k as f64))?;
    Ok(integrate_caratheodory(&sc.dynamics, &u, &sc.v, &sc.x0, 1e-4)?)
}

fn completion_solution(sc: &Scenario, u: &BvPath, bridges: &BridgeOverrides) -> Res<(GraphCompletion, Trajectory)> {
    let gc = GraphCompletion::build_with_grid(Arc::new(u.clone()), &sc.control_set, bridges, 1024)?;
    let y = integrate_spacetime(&gc, &sc.dynamics, &sc.v, &sc.x0, 1e-3)?;
    let x = gc_solution(&y, gc.clock())?;
    Ok((gc, x))
}

fn bridge(points: &[[f64; 2]]) -> Res<BridgeOverrides> {
    let mut o = BridgeOverrides::default();
    o.minus.insert(1, Polyline::new(points.iter().map(|p| p.to_vec()).collect())?);
    Ok(o)
}

const L_SHAPE: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
const FLIPPED: [[f64; 2]; 3] = [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
const DIAGONAL: [[f64; 2]; 2] = [[0.0, 0.0], [1.0, 1.0]];

fn bridges() -> Res<Vec<(Vec<[f64; 2]>, BridgeOverrides)>> {
    Ok(vec![
        (L_SHAPE.to_vec(), bridge(&L_SHAPE)?),
        (FLIPPED.to_vec(), bridge(&FLIPPED)?),
        (DIAGONAL.to_vec(), BridgeOverrides::default()),
    ])
}

fn closed_form() -> Res<Check> {
    let sc = builtin("ex21")?;
    let mut passed = true;
    let mut parts = Vec::new();
    for k in [5usize, 20, 100] {
        let start = Instant::now();
        let x = oscillating(&sc, k)?;
        let elapsed = start.elapsed().as_secs_f64();
        let mut err: f64 = 0.0;
        for t in grid(0.0, 1.0, 100) {
            for (got, want) in x.eval(t)?.iter().zip(oscillating_oracle(k as f64, t)) {
                err = err.max((got - want).abs());
            }
        }
        passed &= err <= 1e-6 && elapsed <= 2.0;
        parts.push(format!("k={k} err {err:.1e} in {elapsed:.2}s"));
    }
    Ok((passed, parts.join(", ")))
}

fn convergence() -> Res<Check> {
    let sc = builtin("ex21")?;
    let mut errors = Vec::new();
    for k in [25usize, 100, 400] {
        let x = oscillating(&sc, k)?;
        let mut sup: f64 = 0.0;
        for t in grid(0.0, 1.0, 100) {
            sup = sup.max(norm(&x.eval(t)?, &limit_oracle(t)));
        }
        errors.push(sup);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    Ok((ratios.iter().all(|r| *r <= 0.6), format!("sup errors {}, ratios {ratios:.3?}", sci(&errors))))
}

fn cost() -> Res<Check> {
    let sc = builtin("ex21")?;
    let times = [0.25, 0.5, 0.75, 1.0];
    let cost_of = |x: &dyn Fn(f64) -> Res<Vec<f64>>| -> Res<f64> {
        let mut sup: f64 = 0.0;
        for &t in &times {
            sup = sup.max((x(t)?[3] - t.exp()).powi(2));
        }
        Ok(x(1.0)?[5] + sup)
    };
    let traj = oscillating(&sc, 100)?;
    let got = cost_of(&|t| Ok(traj.eval(t)?))?;
    let oracle = oscillating_oracle(100.0, 1.0)[5];
    let limit = cost_of(&|t| Ok(limit_oracle(t)))?;
    let passed = got <= 0.03 && (got - oracle).abs() <= 1e-6 && limit == 0.0;
    Ok((passed, format!("cost(k=100) {got:.6} vs quadrature {oracle:.6}, limit cost {limit}")))
}

/// `x2(1) = integral of u1 du2` along the bridge, one straight leg at a time.
fn line_integral(points: &[[f64; 2]]) -> f64 {
    points.windows(2).map(|w| (w[1][1] - w[0][1]) * (w[0][0] + w[1][0]) / 2.0).sum()
}

fn noncommutative() -> Res<Check> {
    let sc = builtin("step_noncomm")?;
    let u = sc.input.path()?;
    let mut passed = true;
    let mut parts = Vec::new();
    for (points, overrides) in bridges()? {
        let (_, x) = completion_solution(&sc, &u, &overrides)?;
        let end = x.eval(1.0)?;
        let want = [1.0, line_integral(&points)];
        let err = norm(&end, &want);
        passed &= err <= 1e-8;
        parts.push(format!("x(1) = ({:.6}, {:.6}) err {err:.1e}", end[0], end[1]));
    }
    let distinct = [1.0, 0.0, 0.5].iter().zip(bridges()?).all(|(v, (p, _))| line_integral(&p) == *v);
    Ok((passed && distinct, parts.join("; ")))
}

fn commutative() -> Res<Check> {
    let sc = builtin("step_comm")?;
    let u = sc.input.path()?;
    let runs = bridges()?
        .into_iter()
        .map(|(_, b)| completion_solution(&sc, &u, &b).map(|r| r.1))
        .collect::<Res<Vec<_>>>()?;
    let mut spread: f64 = 0.0;
    let mut exact: f64 = 0.0;
    for t in grid(0.0, 1.0, 1000) {
        let ut = u.eval(t)?;
        let closed = [ut[0].exp(), ut[1].exp()];
        let first = runs[0].eval(t)?;
        exact = exact.max(norm(&first, &closed));
        for run in &runs[1..] {
            spread = spread.max(norm(&first, &run.eval(t)?));
        }
    }
    Ok((spread <= 1e-7 && exact <= 1e-7, format!("bridge spread {spread:.1e}, distance to exp(u) {exact:.1e}")))
}

fn consistency() -> Res<Check> {
    let sc = builtin("ex21")?;
    let u = sc.input.path_with_k(Some(10.0))?;
    let gc = GraphCompletion::build_with_grid(Arc::new(u.clone()), &sc.control_set, &BridgeOverrides::default(), 1024)?;
    let y = integrate_spacetime(&gc, &sc.dynamics, &sc.v, &sc.x0, 1e-4)?;
    let via_graph = gc_solution(&y, gc.clock())?;
    let direct = integrate_caratheodory(&sc.dynamics, &u, &sc.v, &sc.x0, 1e-4)?;
    let (mut gap, mut exact): (f64, f64) = (0.0, 0.0);
    for t in grid(0.0, 1.0, 1000) {
        let g = via_graph.eval(t)?;
        gap = gap.max(norm(&g, &direct.eval(t)?));
        exact = exact.max(norm(&g, &oscillating_oracle(10.0, t)));
    }
    Ok((gap <= 1e-7 && exact <= 1e-6, format!("graph vs direct {gap:.1e}, vs closed form {exact:.1e}")))
}

fn mixed() -> Res<BvPath> {
    let s0 = ExprSegment::parse(&["0.5*sin(6*t)", "t^2"])?;
    let s1 = TableSegment::new(vec![0.4, 0.7, 1.0], vec![vec![-0.5, 0.0], vec![0.25, 0.5], vec![0.0, -0.5]])?;
    Ok(BvPath::new(vec![0.0, 0.4, 1.0], vec![Segment::Expr(s0), Segment::Table(s1)], vec![None, Some(vec![0.0, 0.5]), None])?)
}

fn completions() -> Res<Vec<GraphCompletion>> {
    let step = builtin("step_noncomm")?;
    let mut out = Vec::new();
    for (_, b) in bridges()? {
        out.push(GraphCompletion::build_with_grid(Arc::new(step.input.path()?), &step.control_set, &b, 1024)?);
    }
    let osc = builtin("ex21")?;
    let u = osc.input.path_with_k(Some(10.0))?;
    out.push(GraphCompletion::build_with_grid(Arc::new(u), &osc.control_set, &BridgeOverrides::default(), 1024)?);
    out.push(GraphCompletion::build_with_grid(Arc::new(mixed()?), &ControlSet::cube(2, 1.0), &BridgeOverrides::default(), 1024)?);
    Ok(out)
}

fn clocks() -> Res<Check> {
    let step = Arc::new(BvPath::step(0.0, 1.0, 0.5, vec![0.0], vec![1.0], vec![1.0])?);
    let canonical = Clock::canonical(step.clone())?;
    let by_hand = |t: f64| (t + step.variation(t).unwrap()) / (1.0 + step.total_variation());
    let mut hand_ok = true;
    for (t, want) in [(0.25, 0.125), (0.5, 0.75), (0.75, 0.875)] {
        hand_ok &= canonical.eval(t)? == want && by_hand(t) == want;
    }
    let (mut identity, mut margin): (f64, f64) = (0.0, f64::INFINITY);
    for gc in completions()? {
        let u = gc.path();
        let mut times = grid(0.0, 1.0, 1000);
        times.extend_from_slice(u.breakpoints());
        for t in times {
            let (s_time, s_ctrl) = gc.eval(gc.clock().eval(t)?)?;
            identity = identity.max(norm(&s_ctrl, &u.eval(t)?).hypot(s_time - t));
        }
        let g = grid(0.0, 1.0, 400);
        let sigma = g.iter().map(|&t| gc.clock().eval(t)).collect::<Result<Vec<_>, _>>()?;
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                margin = margin.min(sigma[j] - sigma[i] - (g[j] - g[i]) / gc.lipschitz());
            }
        }
    }
    let passed = hand_ok && identity <= 1e-9 && margin >= -1e-12;
    Ok((passed, format!("hand values {hand_ok}, identity error {identity:.1e}, slope margin {margin:.1e}")))
}

/// Convolution with `rho_k` at a jump `t` of a clock given by its branches
/// `before(s)` for `s < t` and `after(s)` for `s > t`, by Simpson's rule.
fn convolve(before: impl Fn(f64) -> f64, after: impl Fn(f64) -> f64, k: usize, t: f64) -> f64 {
    let bump = |s: f64| if s.abs() >= 1.0 { 0.0 } else { (-1.0 / (1.0 - s * s)).exp() };
    let mass = simpson(-1.0, 1.0, 20_000, bump);
    let w = 1.0 / (2.0 * k as f64);
    let ahead = simpson(-1.0, 0.0, 20_000, |s| bump(s) * after(t - s * w));
    let behind = simpson(0.0, 1.0, 20_000, |s| bump(s) * before(t - s * w));
    (ahead + behind) / mass
}

fn smoothing() -> Res<Check> {
    let ks = [8usize, 32, 128];
    let kernel = MollifierKernel::new(1.0)?;
    let set = ControlSet::cube(1, 2.0);

    let flat = Clock::canonical(Arc::new(BvPath::constant(0.0, 1.0, vec![0.0])?))?;
    let mut identity: f64 = 0.0;
    for &k in &ks {
        let hat = mollify_clock(&flat, k, &kernel)?;
        for t in grid(0.0, 1.0, 1000) {
            identity = identity.max((hat.eval(t) - t).abs());
        }
    }

    // 0 on [0, 1/2], jump to 1, then a ramp from 1 to 2.
    let ramp = |at: f64| -> Res<BvPath> {
        let s0 = TableSegment::new(vec![0.0, 0.5], vec![vec![0.0], vec![0.0]])?;
        let s1 = TableSegment::new(vec![0.5, 1.0], vec![vec![1.0], vec![2.0]])?;
        Ok(BvPath::new(vec![0.0, 0.5, 1.0], vec![Segment::Table(s0), Segment::Table(s1)], vec![None, Some(vec![at]), None])?)
    };
    let l = 0.5 + 1.0 + 0.5 * 5f64.sqrt();
    let before = |t: f64| t / l;
    let after = |t: f64| (1.5 + 5f64.sqrt() * (t - 0.5)) / l;
    let skewed = GraphCompletion::build_with_grid(Arc::new(ramp(1.0)?), &set, &BridgeOverrides::default(), 1024)?;
    let interior = GraphCompletion::build_with_grid(Arc::new(ramp(0.5)?), &set, &BridgeOverrides::default(), 1024)?;
    let mut midpoint = Vec::new();
    let (mut quadrature_gap, mut lip_ratio, mut surgery_err): (f64, f64, f64) = (0.0, 0.0, f64::NAN);
    for &k in &ks {
        let hat = mollify_clock(skewed.clock(), k, &kernel)?;
        midpoint.push((hat.eval(0.5) - (before(0.5) + after(0.5)) / 2.0).abs());
        quadrature_gap = quadrature_gap.max((hat.eval(0.5) - convolve(before, after, k, 0.5)).abs());
        lip_ratio = lip_ratio.max(fixup_clock(&hat, skewed.clock())?.inverse_lipschitz() / l);
        let fixed = fixup_clock(&mollify_clock(interior.clock(), k, &kernel)?, interior.clock())?;
        lip_ratio = lip_ratio.max(fixed.inverse_lipschitz() / interior.lipschitz());
        surgery_err = (fixed.eval(0.5) - interior.clock().eval(0.5)?).abs();
    }
    let decreasing = midpoint.windows(2).all(|w| w[1] < w[0]);
    let passed = (skewed.lipschitz() - l).abs() <= 1e-12
        && identity <= 1e-12
        && decreasing
        && quadrature_gap <= 1e-8
        && surgery_err <= 1e-3
        && lip_ratio <= 1.0 + 1e-6;
    Ok((
        passed,
        format!(
            "L gap {:.1e}, identity {identity:.1e}, midpoint errors {}, vs quadrature {quadrature_gap:.1e}, surgery error {surgery_err:.1e}, Lip ratio {lip_ratio:.9}",
            (skewed.lipschitz() - l).abs(),
            sci(&midpoint)
        ),
    ))
}

fn budgets() -> Res<Check> {
    let mut slack = f64::INFINITY;
    for gc in completions()? {
        let (a, b) = gc.path().interval();
        let budget = (b - a) + (2.0 * gc.whitney() - 1.0) * gc.path().total_variation();
        slack = slack.min(budget - gc.variation());
    }
    let sc = builtin("step_noncomm")?;
    let gc = GraphCompletion::build_with_grid(Arc::new(sc.input.path()?), &sc.control_set, &sc.bridges, 1024)?;
    let var_phi = line_length(&L_SHAPE);
    let members = approximating_sequence(&gc, &sc.dynamics, &sc.v, &sc.x0, &[8, 32, 128], &MollifierKernel::new(1.0)?, 1e-3)?;
    let mut worst: f64 = 0.0;
    for m in &members {
        let g = grid(0.0, 1.0, 20_000);
        let values = g.iter().map(|&t| m.input.eval(t)).collect::<Result<Vec<_>, _>>()?;
        worst = worst.max(values.windows(2).map(|w| norm(&w[0], &w[1])).sum());
    }
    let passed = slack >= -1e-6 && (gc.control_variation() - var_phi).abs() <= 1e-12 && worst <= var_phi + 1e-9;
    Ok((passed, format!("budget slack {slack:.3}, max Var(u_k) {worst:.9} vs Var(phi) {var_phi}")))
}

fn sci(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" > ")
}

fn line_length(points: &[[f64; 2]]) -> f64 {
    points.windows(2).map(|w| norm(&w[0], &w[1])).sum()
}

fn rk4_order() -> Res<Check> {
    let dynamics = Dynamics::parse(1, 1, 0, &["10*x1"], &[vec!["0"]])?;
    let u = BvPath::constant(0.0, 1.0, vec![0.0])?;
    let v = SampledControl::none(0.0, 1.0);
    let err = |h: f64| -> Res<f64> { Ok((integrate_caratheodory(&dynamics, &u, &v, &[1.0], h)?.eval(1.0)?[0] - 10f64.exp()).abs()) };
    let ratio = err(1e-3)? / err(5e-4)?;
    Ok((ratio >= 12.0, format!("error ratio {ratio:.2} on x' = 10x")))
}

fn dsl(seed: u64) -> Res<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = ["x1^2*x2 + t", "sin(x1*x2)", "exp(t - x1)/(1 + x2^2)", "log(2 + cos(x1)) * sqrt(1 + t^2)"];
    let vars = [Var::T, Var::X(0), Var::X(1)];
    let mut gap: f64 = 0.0;
    for text in samples {
        let e = parse(text)?;
        for (slot, &var) in vars.iter().enumerate() {
            let d = e.differentiate(var)?;
            for _ in 0..25 {
                let p: [f64; 3] = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
                let at = |q: [f64; 3]| e.eval(&Env { t: Some(q[0]), x: &q[1..], ..Default::default() });
                let h = 1e-5;
                let (mut lo, mut hi) = (p, p);
                lo[slot] -= h;
                hi[slot] += h;
                let fd = (at(hi)? - at(lo)?) / (2.0 * h);
                let sym = d.eval(&Env { t: Some(p[0]), x: &p[1..], ..Default::default() })?;
                gap = gap.max((sym - fd).abs() / sym.abs().max(1.0));
            }
        }
    }
    let sc = builtin("ex21")?;
    let g = sc.dynamics.fields();
    let mut bracket_ok = true;
    for _ in 0..10 {
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        bracket_ok &= lie_bracket(&g[0], &g[1], &x)? == [0.0, 0.0, -2.0, 0.0, 0.0, 0.0];
    }
    Ok((gap <= 1e-6 && bracket_ok, format!("derivative gap {gap:.1e}, [g1, g2] = -2 e3: {bracket_ok}")))
}

fn main() -> ExitCode {
    let seed = std::env::var("IMPULSIVE_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(42);
    let checks: Vec<Box<dyn Fn() -> Res<Check>>> = vec![
        Box::new(closed_form),
        Box::new(convergence),
        Box::new(cost),
        Box::new(noncommutative),
        Box::new(commutative),
        Box::new(consistency),
        Box::new(clocks),
        Box::new(smoothing),
        Box::new(budgets),
        Box::new(rk4_order),
        Box::new(move || dsl(seed)),
    ];
    let library = verify::run_all(seed);
    let mut failures = 0;
    for ((id, name), (check, lib)) in verify::CRITERIA.iter().zip(checks.iter().zip(&library)) {
        let (mut passed, mut measured) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        if !lib.passed {
            passed = false;
            measured.push_str(&format!("; verify module disagrees: {}", lib.measured));
        }
        failures += usize::from(!passed);
        println!("[{}] {id:>2} {name}: {measured}", if passed { "PASS" } else { "FAIL" });
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
