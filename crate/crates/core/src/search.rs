//! One-dimensional maximization over a bounded interval: a coarse grid scan
//! followed by golden-section refinement inside the bracket around the best
//! grid point.

use crate::error::{Error, Result};

pub const GRID_POINTS: usize = 201;
pub const TOLERANCE: f64 = 1e-8;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub x: f64,
    pub value: f64,
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let step = if points > 1 {
        (hi - lo) / (points - 1) as f64
    } else {
        0.0
    };
    (0..points).map(move |i| if i + 1 == points { hi } else { lo + step * i as f64 })
}

/// Maximizes `f` on `[lo, hi]`.
///
/// Grid points where `f` errors or returns a non-finite value are skipped;
/// if every grid point fails the first error is returned.
pub fn maximize<F>(mut f: F, lo: f64, hi: f64) -> Result<Optimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let grid: Vec<f64> = linspace(lo, hi, GRID_POINTS).collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut first_err = None;
    for &x in &grid {
        match f(x) {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => {
                values.push(f64::NEG_INFINITY);
                first_err.get_or_insert(Error::NonFinite(format!("objective {v} at {x}")));
            }
            Err(e) => {
                values.push(f64::NEG_INFINITY);
                first_err.get_or_insert(e);
            }
        }
    }
    let (best, &best_value) = values
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| {
            if *v > *acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    if best_value == f64::NEG_INFINITY {
        return Err(first_err.unwrap_or_else(|| Error::NonFinite("empty search grid".into())));
    }

    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    let mut eval = |x: f64| match f(x) {
        Ok(v) if v.is_finite() => v,
        _ => f64::NEG_INFINITY,
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    while (b - a).abs() > TOLERANCE {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = eval(mid);
    let refined = [(c, fc), (d, fd), (mid, fm)]
        .into_iter()
        .fold((mid, fm), |acc, p| if p.1 > acc.1 { p } else { acc });
    if refined.1 >= best_value {
        Ok(Optimum {
            x: refined.0,
            value: refined.1,
        })
    } else {
        Ok(Optimum {
            x: grid[best],
            value: best_value,
        })
    }
}

/// Minimizes `f` by maximizing `-f`.
pub fn minimize<F>(mut f: F, lo: f64, hi: f64) -> Result<Optimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let o = maximize(|x| f(x).map(|v| -v), lo, hi)?;
    Ok(Optimum {
        x: o.x,
        value: -o.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_quadratic_max() {
        let o = maximize(|x| Ok(-(x - 0.3137).powi(2)), -1.0, 1.0).unwrap();
        assert!((o.x - 0.3137).abs() < 1e-7);
    }

    #[test]
    fn handles_boundary_optimum() {
        let o = minimize(|x| Ok(x), -0.9, 0.9).unwrap();
        assert!((o.x + 0.9).abs() < 1e-7);
    }

    #[test]
    fn picks_global_mode_on_grid() {
        // narrow global peak at 0.8, wider local one at -0.5
        let f = |x: f64| Ok((-((x + 0.5) / 0.3).powi(2)).exp() + 2.0 * (-((x - 0.8) / 0.05).powi(2)).exp());
        let o = maximize(f, -1.0, 1.0).unwrap();
        assert!((o.x - 0.8).abs() < 1e-6);
    }

    #[test]
    fn skips_failing_points() {
        let o = maximize(
            |x| {
                if x > 0.5 {
                    Err(Error::Singular { rho: x })
                } else {
                    Ok(x)
                }
            },
            -1.0,
            1.0,
        )
        .unwrap();
        assert!(o.x <= 0.5 && o.x > 0.49);
        assert!(maximize(|x| Err(Error::Singular { rho: x }), 0.0, 1.0).is_err());
    }
}
