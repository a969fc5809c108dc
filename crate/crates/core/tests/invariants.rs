use std::fs;
use std::sync::Arc;

use impulsive_core::approximation::{
    approximating_sequence, build_report, dependence_probe, ControlStatePair, MollifierKernel, ProbeCase,
};
use impulsive_core::bvpath::{BvPath, ControlSet, SampledControl, Segment, TableSegment};
use impulsive_core::commands::{cmd_approximate, cmd_solve, RunOptions};
use impulsive_core::completion::{BridgeOverrides, GraphCompletion, Polyline};
use impulsive_core::integrator::{gc_solution, integrate_spacetime, Dynamics, IntegrationError, SpaceTimeControl};
use impulsive_core::scenario::builtin;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seed() -> u64 {
    std::env::var("IMPULSIVE_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(42)
}

fn grid(cells: usize) -> Vec<f64> {
    (0..=cells).map(|i| i as f64 / cells as f64).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// A completion run at the non-uniform speed `s = h(r) = (r + r^2) / 2`.
struct Reparameterized<'a>(&'a GraphCompletion);

fn h(r: f64) -> f64 {
    (r + r * r) / 2.0
}

fn h_inv(s: f64) -> f64 {
    ((1.0 + 8.0 * s).sqrt() - 1.0) / 2.0
}

impl SpaceTimeControl for Reparameterized<'_> {
    fn time_interval(&self) -> (f64, f64) {
        self.0.time_interval()
    }

    fn control_dim(&self) -> usize {
        self.0.control_dim()
    }

    fn knots(&self) -> Vec<f64> {
        let mut knots: Vec<f64> = self.0.knots().into_iter().map(h_inv).collect();
        knots[0] = 0.0;
        *knots.last_mut().unwrap() = 1.0;
        knots
    }

    fn parameter_of(&self, t: f64) -> Result<f64, IntegrationError> {
        Ok(h_inv(self.0.parameter_of(t)?))
    }

    fn eval(&self, r: f64) -> Result<(f64, Vec<f64>), IntegrationError> {
        SpaceTimeControl::eval(self.0, h(r))
    }

    fn velocity(&self, r: f64, probe: f64) -> Result<(f64, Vec<f64>), IntegrationError> {
        let speed = (1.0 + 2.0 * r) / 2.0;
        let (dt, du) = self.0.velocity(h(r), h(probe))?;
        Ok((dt * speed, du.into_iter().map(|d| d * speed).collect()))
    }

    fn fingerprint(&self) -> u64 {
        self.0.fingerprint() ^ 0x5eed
    }
}

#[test]
fn reparameterized_completion_gives_the_same_trajectory() {
    let noncomm = builtin("step_noncomm").unwrap();
    let osc = builtin("ex21").unwrap();
    let cases = [
        (noncomm.clone(), noncomm.input.path().unwrap(), noncomm.bridges.clone(), 1e-10),
        (osc.clone(), osc.input.path_with_k(Some(10.0)).unwrap(), BridgeOverrides::default(), 1e-7),
    ];
    for (sc, u, bridges, tol) in cases {
        let gc = GraphCompletion::build_with_grid(Arc::new(u), &sc.control_set, &bridges, 1024).unwrap();
        let x = gc_solution(&integrate_spacetime(&gc, &sc.dynamics, &sc.v, &sc.x0, 1e-3).unwrap(), gc.clock()).unwrap();
        let w = integrate_spacetime(&Reparameterized(&gc), &sc.dynamics, &sc.v, &sc.x0, 1e-3).unwrap();
        for t in grid(200) {
            let r = h_inv(gc.clock().eval(t).unwrap());
            assert!((w.time(r) - t).abs() <= tol, "time at t = {t}");
            let gap = dist(&w.state(r), &x.eval(t).unwrap());
            assert!(gap <= tol, "t = {t}: gap {gap:e}");
        }
    }
}

fn linear_step(height: f64) -> BvPath {
    BvPath::step(0.0, 1.0, 0.5, vec![0.0], vec![height], vec![height]).unwrap()
}

fn piecewise_linear(values: &[f64]) -> BvPath {
    let n = values.len() - 1;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let seg = TableSegment::new(times, values.iter().map(|&v| vec![v]).collect()).unwrap();
    BvPath::new(vec![0.0, 1.0], vec![Segment::Table(seg)], vec![None, None]).unwrap()
}

#[test]
fn commuting_solutions_depend_continuously_on_data() {
    let dynamics = Dynamics::parse(1, 1, 0, &["0"], &[vec!["x1"]]).unwrap();
    let set = ControlSet::cube(1, 3.0);
    let v = SampledControl::none(0.0, 1.0);
    let samples = vec![vec![-1.0], vec![0.5], vec![2.0]];
    let probes = [0.25, 0.5, 0.75, 1.0];
    let ratio = |cases: &[ProbeCase]| dependence_probe(&dynamics, &set, cases, &v, &samples, &probes, 1e-3).unwrap();

    let ratios: Vec<f64> = [1e-2, 1e-3]
        .iter()
        .map(|d| ratio(&[ProbeCase { u1: linear_step(1.0), u2: linear_step(1.0 + d), x1: vec![1.0], x2: vec![1.0] }]))
        .collect();
    assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0), "{ratios:?}");
    assert!(ratios[0] / ratios[1] < 2.0 && ratios[1] / ratios[0] < 2.0, "{ratios:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(seed());
    let cases: Vec<ProbeCase> = (0..10)
        .map(|_| {
            let base: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bumped: Vec<f64> = base.iter().map(|b| b + rng.gen_range(-0.05..0.05)).collect();
            ProbeCase { u1: piecewise_linear(&base), u2: piecewise_linear(&bumped), x1: vec![1.0], x2: vec![1.0 + rng.gen_range(0.0..0.05)] }
        })
        .collect();
    let r = ratio(&cases);
    assert!(r.is_finite() && r < 100.0, "ratio {r}");
}

#[test]
fn dependence_probe_rejects_noncommuting_fields() {
    let sc = builtin("step_noncomm").unwrap();
    let case = ProbeCase { u1: sc.input.path().unwrap(), u2: sc.input.path().unwrap(), x1: vec![0.0, 0.0], x2: vec![0.0, 0.0] };
    let err = dependence_probe(&sc.dynamics, &sc.control_set, &[case], &sc.v, &[vec![0.5, 0.5]], &[1.0], 1e-3).unwrap_err();
    assert!(err.to_string().contains("non-commuting"), "{err}");
}

#[test]
fn approximating_inputs_are_dense_in_the_completions() {
    let sc = builtin("step_noncomm").unwrap();
    let u = sc.input.path().unwrap();
    let gc = GraphCompletion::build_with_grid(Arc::new(u.clone()), &sc.control_set, &sc.bridges, 1024).unwrap();
    let var_phi = gc.control_variation();
    let kernel = MollifierKernel::new(1.0).unwrap();
    let members = approximating_sequence(&gc, &sc.dynamics, &sc.v, &sc.x0, &[8, 32, 128, 512], &kernel, 1e-3).unwrap();
    let fine = grid(100_000);
    let away = [0.1, 0.3, 0.45, 0.55, 0.7, 0.9, 1.0];
    let mut jump_err = Vec::new();
    for m in &members {
        let values: Vec<Vec<f64>> = fine.iter().map(|&t| m.input.eval(t).unwrap()).collect();
        assert!(values.iter().all(|p| sc.control_set.contains(p)), "k = {}", m.k);
        let width = 1.0 / m.k as f64;
        let zoom: Vec<Vec<f64>> = (0..=20_000).map(|i| m.input.eval(0.5 - width + 2.0 * width * i as f64 / 20_000.0).unwrap()).collect();
        let largest_step = zoom.windows(2).map(|w| dist(&w[0], &w[1])).fold(0.0, f64::max);
        assert!(largest_step < 1e-2, "k = {}: increment {largest_step}", m.k);
        let var: f64 = values.windows(2).map(|w| dist(&w[0], &w[1])).sum();
        assert!(var <= var_phi + 1e-9, "k = {}: Var(u_k) = {var}", m.k);
        if m.k >= 128 {
            for &t in &away {
                assert!(dist(&m.input.eval(t).unwrap(), &u.eval(t).unwrap()) <= 1e-12, "k = {}, t = {t}", m.k);
            }
        }
        jump_err.push(dist(&m.input.eval(0.5).unwrap(), &u.eval(0.5).unwrap()));
    }
    assert!(jump_err.windows(2).all(|w| w[1] <= 0.5 * w[0]), "{jump_err:?}");
    assert!(*jump_err.last().unwrap() <= 1e-3, "{jump_err:?}");
}

#[test]
fn commuting_dynamics_ignore_the_bridge_shape() {
    let sc = builtin("step_comm").unwrap();
    let u = sc.input.path().unwrap();
    let solve = |bridges: &BridgeOverrides| {
        let gc = GraphCompletion::build_with_grid(Arc::new(u.clone()), &sc.control_set, bridges, 1024).unwrap();
        gc_solution(&integrate_spacetime(&gc, &sc.dynamics, &sc.v, &sc.x0, 1e-3).unwrap(), gc.clock()).unwrap()
    };
    let reference = solve(&BridgeOverrides::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed());
    for _ in 0..6 {
        let inner = rng.gen_range(1..5);
        let mut xs: Vec<f64> = (0..inner).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut ys: Vec<f64> = (0..inner).map(|_| rng.gen_range(0.0..1.0)).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let mut points = vec![vec![0.0, 0.0]];
        points.extend(xs.into_iter().zip(ys).map(|(x, y)| vec![x, y]));
        points.push(vec![1.0, 1.0]);
        let mut bridges = BridgeOverrides::default();
        bridges.minus.insert(1, Polyline::new(points.clone()).unwrap());
        let x = solve(&bridges);
        for t in grid(400) {
            let ut = u.eval(t).unwrap();
            let got = x.eval(t).unwrap();
            assert!(dist(&got, &reference.eval(t).unwrap()) <= 1e-7, "bridge {points:?} at t = {t}");
            assert!(dist(&got, &[ut[0].exp(), ut[1].exp()]) <= 1e-7, "bridge {points:?} at t = {t}");
        }
    }
}

#[test]
fn fine_sweep_earns_the_certificate() {
    let sc = builtin("step_noncomm").unwrap();
    let u = sc.input.path().unwrap();
    let gc = GraphCompletion::build_with_grid(Arc::new(u.clone()), &sc.control_set, &sc.bridges, 1024).unwrap();
    let x = gc_solution(&integrate_spacetime(&gc, &sc.dynamics, &sc.v, &sc.x0, 1e-3).unwrap(), gc.clock()).unwrap();
    let kernel = MollifierKernel::new(1.0).unwrap();
    let members = approximating_sequence(&gc, &sc.dynamics, &sc.v, &sc.x0, &[32, 128, 512, 2048], &kernel, 1e-3).unwrap();
    let report = build_report(&ControlStatePair::of_path(&u, &x), &members, &[0.25, 0.5, 0.75, 1.0]).unwrap();
    let cert = report.certificate(gc.control_variation(), 1e-3);
    assert!(cert.passed(), "{cert:?}");
    assert!(cert.final_error < 1e-3);
}

#[test]
fn csv_headers_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { out: dir.path().to_path_buf(), ks: Some(vec![8, 32]), ..RunOptions::default() };
    let first_line = |name: &str| fs::read_to_string(dir.path().join(name)).unwrap().lines().next().unwrap().to_string();

    cmd_solve(&builtin("step_noncomm").unwrap(), &opts).unwrap();
    assert_eq!(first_line("trajectory.csv"), "t,side,x_1,x_2");
    assert_eq!(first_line("completion.csv"), "s,phi0,phi_1,phi_2");

    cmd_approximate(&builtin("step_noncomm").unwrap(), &opts).unwrap();
    assert_eq!(first_line("approx.csv"), "k,tau,pointwise_err,l1_err,var_uk,sup_xk");

    let family = RunOptions { step: Some(1e-3), ks: Some(vec![10, 20]), ..opts };
    cmd_approximate(&builtin("ex21").unwrap(), &family).unwrap();
    assert_eq!(first_line("cost.csv"), "k,cost");
    cmd_solve(&builtin("ex21").unwrap(), &family).unwrap();
    assert_eq!(first_line("trajectory.csv"), "t,side,x_1,x_2,x_3,x_4,x_5,x_6");
    assert_eq!(first_line("completion.csv"), "s,phi0,phi_1,phi_2,phi_3");
}
