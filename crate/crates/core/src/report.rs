//! CSV output with stable headers.

use std::io::Write;

use thiserror::Error;

use crate::approximation::ApproxReport;
use crate::completion::GraphCompletion;
use crate::integrator::{IntegrationError, Trajectory};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

pub type Result<T> = std::result::Result<T, ReportError>;

pub const APPROX_HEADER: [&str; 6] = ["k", "tau", "pointwise_err", "l1_err", "var_uk", "sup_xk"];
pub const COST_HEADER: [&str; 2] = ["k", "cost"];

/// `t,side,x_1,..,x_n`.
pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "side".to_string()];
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h
}

/// `s,phi0,phi_1,..,phi_m`.
pub fn completion_header(m: usize) -> Vec<String> {
    let mut h = vec!["s".to_string(), "phi0".to_string()];
    h.extend((1..=m).map(|i| format!("phi_{i}")));
    h
}

/// Position of a trajectory row relative to a jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    Left,
    At,
    Right,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::At => "at",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub side: Side,
    pub x: Vec<f64>,
}

/// Samples on `grid` plus the left and right ends of every state jump,
/// ordered by `t` and then side.
pub fn trajectory_rows(x: &Trajectory, grid: &[f64]) -> Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::with_capacity(grid.len() + 2 * x.jumps().len());
    for &t in grid {
        rows.push(TrajectoryRow { t, side: Side::At, x: x.eval(t)? });
    }
    for jump in x.jumps() {
        rows.push(TrajectoryRow { t: jump.t, side: Side::Left, x: jump.left.clone() });
        rows.push(TrajectoryRow { t: jump.t, side: Side::Right, x: jump.right.clone() });
        if !grid.contains(&jump.t) {
            rows.push(TrajectoryRow { t: jump.t, side: Side::At, x: jump.at.clone() });
        }
    }
    rows.sort_by(|p, q| p.t.total_cmp(&q.t).then(p.side.cmp(&q.side)));
    Ok(rows)
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_trajectory<W: Write>(out: W, n: usize, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(n))?;
    for row in rows {
        let mut rec = vec![num(row.t), row.side.label().to_string()];
        rec.extend(row.x.iter().copied().map(num));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The sampled parameter grid of a completion.
pub fn write_completion<W: Write>(out: W, gc: &GraphCompletion) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(completion_header(gc.path().dim()))?;
    for ((s, t), u) in gc.s_grid().iter().zip(gc.phi0_samples()).zip(gc.phi_samples()) {
        let mut rec = vec![num(*s), num(*t)];
        rec.extend(u.iter().copied().map(num));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows ordered by `tau` and then `k`.
pub fn write_approx_report<W: Write>(out: W, report: &ApproxReport) -> Result<()> {
    let mut rows: Vec<_> = report.rows.iter().collect();
    rows.sort_by(|p, q| p.tau.total_cmp(&q.tau).then(p.k.cmp(&q.k)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(APPROX_HEADER)?;
    for r in rows {
        w.write_record([r.k.to_string(), num(r.tau), num(r.pointwise_err), num(r.l1_err), num(r.var_uk), num(r.sup_xk)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_costs<W: Write>(out: W, costs: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COST_HEADER)?;
    for (k, c) in costs {
        w.write_record([k.to_string(), num(*c)])?;
    }
    w.flush()?;
    Ok(())
}
