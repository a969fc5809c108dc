//! Small numerical kernels shared across modules: quadrature rules, vector
//! helpers and a monotone piecewise-linear table.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("integrand is not finite at {0}")]
    NonFinite(f64),
    #[error("adaptive quadrature did not converge on [{a}, {b}] (estimate {estimate}, error {error})")]
    NoConvergence { a: f64, b: f64, estimate: f64, error: f64 },
}

const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// 8-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre8<E>(a: f64, b: f64, mut f: impl FnMut(f64) -> Result<f64, E>) -> Result<f64, E> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for (x, w) in GL8_X.iter().zip(GL8_W) {
        sum += w * (f(mid - half * x)? + f(mid + half * x)?);
    }
    Ok(sum * half)
}

const K15_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_W: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const G7_W: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15(a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> Result<(f64, f64), QuadratureError> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut kron = 0.0;
    let mut gauss = 0.0;
    for i in 0..8 {
        let (fl, fr) = if i == 7 {
            let v = f(mid);
            (v, 0.0)
        } else {
            (f(mid - half * K15_X[i]), f(mid + half * K15_X[i]))
        };
        if !fl.is_finite() || !fr.is_finite() {
            return Err(QuadratureError::NonFinite(mid));
        }
        let pair = fl + fr;
        kron += K15_W[i] * pair;
        if i % 2 == 1 {
            gauss += G7_W[i / 2] * pair;
        }
    }
    Ok((kron * half, (kron - gauss).abs() * half))
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature.
///
/// Intervals with the largest error estimate are bisected until the summed
/// estimate drops below `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate_adaptive(
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    mut f: impl FnMut(f64) -> f64,
) -> Result<f64, QuadratureError> {
    if a == b {
        return Ok(0.0);
    }
    const MAX_INTERVALS: usize = 20_000;
    let (v, e) = kronrod15(a, b, &mut f)?;
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        let error: f64 = intervals.iter().map(|iv| iv.3).sum();
        if error <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if intervals.len() >= MAX_INTERVALS || mid <= lo || mid >= hi {
            return Err(QuadratureError::NoConvergence { a, b, estimate: total, error });
        }
        let (v1, e1) = kronrod15(lo, mid, &mut f)?;
        let (v2, e2) = kronrod15(mid, hi, &mut f)?;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn lerp(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)).collect()
}

/// Uniform grid of `cells + 1` points on `[a, b]` with exact endpoints.
pub fn uniform_grid(a: f64, b: f64, cells: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=cells).map(|i| a + (b - a) * (i as f64 / cells as f64)).collect();
    grid[cells] = b;
    grid
}

/// Trapezoid rule for samples on a (not necessarily uniform) grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Sorted, deduplicated union of abscissae.
pub fn merge_sorted(mut points: Vec<f64>) -> Vec<f64> {
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

/// Index `i` with `xs[i] <= x < xs[i+1]`, clamped to the valid cell range.
pub fn locate(xs: &[f64], x: f64) -> usize {
    debug_assert!(xs.len() >= 2);
    let idx = xs.partition_point(|&p| p <= x);
    idx.saturating_sub(1).min(xs.len() - 2)
}

/// Strictly increasing piecewise-linear map given by its knots.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl MonotoneTable {
    /// Knots must be strictly increasing in both coordinates.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Option<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return None;
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&xs) || !increasing(&ys) {
            return None;
        }
        Some(MonotoneTable { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn eval(&self, x: f64) -> f64 {
        // clamped outside the domain
        let i = locate(&self.xs, x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        if x <= x0 {
            return y0;
        }
        if x >= x1 {
            return y1;
        }
        y0 + (x - x0) * ((y1 - y0) / (x1 - x0))
    }

    /// Slope on the cell containing `probe`.
    pub fn slope_at(&self, probe: f64) -> f64 {
        let i = locate(&self.xs, probe);
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }

    pub fn inverse(&self) -> MonotoneTable {
        MonotoneTable { xs: self.ys.clone(), ys: self.xs.clone() }
    }

    pub fn max_slope(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .fold(0.0, f64::max)
    }

    pub fn min_slope(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_degree_15() {
        let v: Result<f64, ()> = gauss_legendre8(-1.0, 2.0, |x| Ok(x.powi(15) + 3.0 * x.powi(4)));
        let exact = (2f64.powi(16) - 1.0) / 16.0 + 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v.unwrap() - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let v = integrate_adaptive(0.0, 1.0, 1e-13, 1e-13, |t| (2.0 * std::f64::consts::PI * t).cos().abs()).unwrap();
        assert!((v - 2.0 / std::f64::consts::PI).abs() < 1e-11);
    }

    #[test]
    fn adaptive_reports_non_finite() {
        let r = integrate_adaptive(0.0, 1.0, 1e-12, 1e-12, |_| f64::NAN);
        assert!(matches!(r, Err(QuadratureError::NonFinite(_))));
    }

    #[test]
    fn monotone_table_eval_and_inverse() {
        let t = MonotoneTable::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.eval(0.5), 1.0);
        assert_eq!(t.eval(2.0), 2.5);
        assert_eq!(t.inverse().eval(2.5), 2.0);
        assert_eq!(t.max_slope(), 2.0);
        assert_eq!(t.min_slope(), 0.5);
        assert!(MonotoneTable::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_none());
    }

    #[test]
    fn locate_clamps() {
        let xs = [0.0, 1.0, 2.0];
        assert_eq!(locate(&xs, -1.0), 0);
        assert_eq!(locate(&xs, 1.0), 1);
        assert_eq!(locate(&xs, 2.0), 1);
        assert_eq!(locate(&xs, 0.5), 0);
    }
}
