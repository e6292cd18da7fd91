//! Dense primal simplex for small equality-form LPs with a known identity basis.
//!
//! Used for the transportation variant with per-pair loss fractions, which is
//! a generalized network problem and no longer totally unimodular.

const EPS: f64 = 1e-9;

/// Minimizes `c·x` subject to `A x = b`, `x >= 0`.
///
/// `basis[r]` names a column of `A` equal to the unit vector `e_r`, and
/// `b >= 0`, so the starting basis is feasible. Returns `None` if unbounded.
pub(crate) fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64], mut basis: Vec<usize>) -> Option<Vec<f64>> {
    let rows = a.len();
    let cols = c.len();
    let width = cols + 1;
    let mut t = vec![0.0; (rows + 1) * width];
    for r in 0..rows {
        t[r * width..r * width + cols].copy_from_slice(&a[r]);
        t[r * width + cols] = b[r];
    }
    let z = rows * width;
    for j in 0..cols {
        let mut rc = c[j];
        for r in 0..rows {
            rc -= c[basis[r]] * t[r * width + j];
        }
        t[z + j] = rc;
    }

    let limit = 100 * (rows + cols) + 1000;
    for _ in 0..limit {
        let Some(enter) = (0..cols).find(|&j| t[z + j] < -EPS) else {
            let mut x = vec![0.0; cols];
            for r in 0..rows {
                x[basis[r]] = t[r * width + cols].max(0.0);
            }
            return Some(x);
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..rows {
            let coef = t[r * width + enter];
            if coef > EPS {
                let ratio = t[r * width + cols] / coef;
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best - EPS || (ratio <= best + EPS && basis[r] < basis[l]),
                };
                if better {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        let pr = leave?;
        let pivot = t[pr * width + enter];
        for j in 0..width {
            t[pr * width + j] /= pivot;
        }
        for r in 0..=rows {
            if r == pr {
                continue;
            }
            let f = t[r * width + enter];
            if f != 0.0 {
                for j in 0..width {
                    t[r * width + j] -= f * t[pr * width + j];
                }
            }
        }
        basis[pr] = enter;
    }
    None
}
