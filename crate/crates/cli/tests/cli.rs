use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn impulsive(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impulsive"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_writes_trajectory_and_completion() {
    let dir = tempfile::tempdir().unwrap();
    let o = impulsive(&["solve", "--scenario", "step_noncomm"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("x(b): (1.0000000000, 1.0000000000)"));
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("t,side,x_1,x_2"));
    assert!(traj.contains("\n0.5,left,0,0\n"));
    assert!(traj.contains("\n0.5,right,1,1"));
    let comp = fs::read_to_string(dir.path().join("completion.csv")).unwrap();
    assert_eq!(comp.lines().next(), Some("s,phi0,phi_1,phi_2"));
}

#[test]
fn approximate_reports_monotone_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = impulsive(&["approximate", "--scenario", "step_noncomm", "--ks", "8,32,128", "--taus", "0.5,1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("errors decreasing: true"));
    let text = fs::read_to_string(dir.path().join("approx.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,tau,pointwise_err,l1_err,var_uk,sup_xk"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 6);
    let at_half: Vec<f64> = rows.iter().filter(|r| r[1] == 0.5).map(|r| r[2] + r[3]).collect();
    assert!(at_half[0] > at_half[1] && at_half[1] > at_half[2], "{at_half:?}");
}

#[test]
fn approximate_family_writes_costs() {
    let dir = tempfile::tempdir().unwrap();
    let o = impulsive(&["approximate", "--scenario", "ex21", "--ks", "10,40", "--step", "1e-3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let costs = fs::read_to_string(dir.path().join("cost.csv")).unwrap();
    let values: Vec<f64> = costs.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 2);
    assert!(values[1] < values[0]);
}

#[test]
fn verify_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lin.scn");
    fs::write(
        &path,
        "[dynamics]\nn = 1\nm = 1\nf = \"0\"\ng.1 = \"x1\"\n\n[input]\nbreakpoints = 0, 1\nsegment.0 = \"t^2\"\n\n[initial]\nx = 1\n",
    )
    .unwrap();
    let o = impulsive(&["verify", "--scenario", path.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("[PASS]  6"));
}

#[test]
fn diagnostics_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = impulsive(&["solve", "--scenario", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown builtin scenario"));

    let bad = dir.path().join("bad.scn");
    fs::write(&bad, "[dynamics]\nn = 1\nm = 1\nf = \"0\"\ng.1 = \"u1\"\n").unwrap();
    let o = impulsive(&["solve", "--scenario", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 5, field dynamics.g.1"), "{}", stderr(&o));

    let o = impulsive(&["approximate", "--scenario", "step_comm", "--ks", "32,8"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--ks"));

    let o = impulsive(&["solve"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_all_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = impulsive(&["verify", "--seed", "7"], dir.path());
    let text = stdout(&o);
    assert!(o.status.success(), "{text}{}", stderr(&o));
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 11);
    assert!(text.contains("(seed 7)"));
}
