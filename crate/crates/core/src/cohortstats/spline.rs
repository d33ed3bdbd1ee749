//! Penalized cubic-spline smoother with generalized cross-validation.
//!
//! The fit is a regression on a clamped cubic B-spline basis with knots at
//! the x-quantiles, penalized by second divided differences of the
//! coefficients over the Greville abscissae. That penalty's null space is
//! exactly the linear functions for any knot placement, so linear trends
//! pass through unshrunk. The smoothing weight is chosen by GCV over a
//! fixed 25-point log grid spanning 1e-6 to 1e6 (first minimum wins, so
//! selection is deterministic).

use super::StatsError;

const DEGREE: usize = 3;
const GCV_GRID_POINTS: usize = 25;
const GCV_LOG10_MIN: f64 = -6.0;
const GCV_LOG10_MAX: f64 = 6.0;

/// Fitted smooth curve: evaluable anywhere in the data range (clamped
/// outside), with the selected penalty weight exposed.
#[derive(Debug, Clone)]
pub struct GamFit {
    knots: Vec<f64>,
    coeffs: Vec<f64>,
    pub lambda: f64,
    pub gcv_score: f64,
    x_min: f64,
    x_max: f64,
}

/// All cubic basis values at `x`: returns (span, [N_{span-3..span}]).
fn basis_funs(knots: &[f64], n_basis: usize, x: f64) -> (usize, [f64; 4]) {
    // knot span search over the clamped vector
    let last = n_basis; // index of the last distinct knot position + DEGREE
    let mut span = DEGREE;
    while span < last - 1 && x >= knots[span + 1] {
        span += 1;
    }
    let mut n = [0.0f64; 4];
    let mut left = [0.0f64; 4];
    let mut right = [0.0f64; 4];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { n[r] / denom } else { 0.0 };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    (span, n)
}

fn greville(knots: &[f64], i: usize) -> f64 {
    (knots[i + 1] + knots[i + 2] + knots[i + 3]) / 3.0
}

/// Cholesky factorization (lower), in place.
fn cholesky(a: &mut [Vec<f64>]) -> Result<(), StatsError> {
    let n = a.len();
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= a[i][k] * a[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(StatsError::DegenerateInput(
                        "spline normal equations are not positive definite".into(),
                    ));
                }
                a[i][j] = sum.sqrt();
            } else {
                a[i][j] = sum / a[j][j];
            }
        }
        for j in (i + 1)..n {
            a[i][j] = 0.0;
        }
    }
    Ok(())
}

fn solve_cholesky(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    x
}

/// Penalized spline regression of `y` on `x`. Requires `n > num_knots + 2`
/// data points and non-constant x.
pub fn gam_fit(x: &[f64], y: &[f64], num_knots: usize) -> Result<GamFit, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if num_knots < 4 {
        return Err(StatsError::InvalidArgument(
            "need at least 4 knots for a cubic basis".into(),
        ));
    }
    if x.len() <= num_knots + 2 {
        return Err(StatsError::InvalidArgument(format!(
            "need more than {} points for {} knots, got {}",
            num_knots + 2,
            num_knots,
            x.len()
        )));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (x_min, x_max) = (sorted[0], sorted[sorted.len() - 1]);
    if x_min == x_max {
        return Err(StatsError::DegenerateInput("x values are all equal".into()));
    }

    // knots at the x-quantiles, forced strictly increasing
    let span = x_max - x_min;
    let mut distinct = Vec::with_capacity(num_knots);
    for j in 0..num_knots {
        let q = j as f64 / (num_knots - 1) as f64;
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        let v = if lo + 1 < sorted.len() {
            sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
        } else {
            sorted[lo]
        };
        let v = match distinct.last() {
            Some(&prev) if v <= prev => prev + 1e-9 * span,
            _ => v,
        };
        distinct.push(v);
    }

    // clamped knot vector: triple the end knots
    let mut knots = Vec::with_capacity(num_knots + 2 * DEGREE);
    for _ in 0..DEGREE {
        knots.push(distinct[0]);
    }
    knots.extend_from_slice(&distinct);
    for _ in 0..DEGREE {
        knots.push(distinct[num_knots - 1]);
    }
    let n_basis = num_knots + DEGREE - 1;

    // design matrix rows (sparse: 4 entries each)
    let n = x.len();
    let rows: Vec<(usize, [f64; 4])> = x
        .iter()
        .map(|&xi| basis_funs(&knots, n_basis, xi.clamp(x_min, x_max)))
        .collect();

    // normal equations M = B'B, rhs = B'y
    let mut m = vec![vec![0.0f64; n_basis]; n_basis];
    let mut rhs = vec![0.0f64; n_basis];
    for ((span, vals), &yi) in rows.iter().zip(y) {
        for a in 0..4 {
            let ia = span - DEGREE + a;
            rhs[ia] += vals[a] * yi;
            for b in 0..4 {
                let ib = span - DEGREE + b;
                m[ia][ib] += vals[a] * vals[b];
            }
        }
    }

    // second-divided-difference penalty over the Greville abscissae
    let mut penalty = vec![vec![0.0f64; n_basis]; n_basis];
    for i in 0..n_basis - 2 {
        let g0 = greville(&knots, i);
        let g1 = greville(&knots, i + 1);
        let g2 = greville(&knots, i + 2);
        let h1 = g1 - g0;
        let h2 = g2 - g1;
        let row = [
            2.0 / (h1 * (h1 + h2)),
            -2.0 / (h1 * h2),
            2.0 / (h2 * (h1 + h2)),
        ];
        for a in 0..3 {
            for b in 0..3 {
                penalty[i + a][i + b] += row[a] * row[b];
            }
        }
    }

    // GCV over the fixed lambda grid
    let mut best: Option<(f64, f64, Vec<f64>)> = None; // (gcv, lambda, coeffs)
    for gi in 0..GCV_GRID_POINTS {
        let log10 = GCV_LOG10_MIN
            + (GCV_LOG10_MAX - GCV_LOG10_MIN) * gi as f64 / (GCV_GRID_POINTS - 1) as f64;
        let lambda = 10f64.powf(log10);
        let mut a = vec![vec![0.0f64; n_basis]; n_basis];
        for i in 0..n_basis {
            for j in 0..n_basis {
                a[i][j] = m[i][j] + lambda * penalty[i][j];
            }
        }
        if cholesky(&mut a).is_err() {
            continue;
        }
        let coeffs = solve_cholesky(&a, &rhs);

        // effective degrees of freedom: tr((M + lambda P)^-1 M)
        let mut trace = 0.0;
        for j in 0..n_basis {
            let col: Vec<f64> = (0..n_basis).map(|i| m[i][j]).collect();
            let sol = solve_cholesky(&a, &col);
            trace += sol[j];
        }

        let mut rss = 0.0;
        for ((span, vals), &yi) in rows.iter().zip(y) {
            let mut fit = 0.0;
            for (k, v) in vals.iter().enumerate() {
                fit += v * coeffs[span - DEGREE + k];
            }
            rss += (yi - fit) * (yi - fit);
        }
        let denom = (n as f64 - trace).max(1e-9);
        let gcv = n as f64 * rss / (denom * denom);
        if best.as_ref().is_none_or(|(b, _, _)| gcv < *b) {
            best = Some((gcv, lambda, coeffs));
        }
    }
    let (gcv_score, lambda, coeffs) = best.ok_or_else(|| {
        StatsError::DegenerateInput("no lambda on the grid produced a solvable system".into())
    })?;

    Ok(GamFit {
        knots,
        coeffs,
        lambda,
        gcv_score,
        x_min,
        x_max,
    })
}

impl GamFit {
    /// Evaluate the fitted curve; x outside the data range clamps to the
    /// boundary.
    pub fn eval(&self, x: f64) -> f64 {
        let n_basis = self.coeffs.len();
        let (span, vals) = basis_funs(&self.knots, n_basis, x.clamp(self.x_min, self.x_max));
        let mut out = 0.0;
        for (k, v) in vals.iter().enumerate() {
            out += v * self.coeffs[span - DEGREE + k];
        }
        out
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    /// Uniformly sampled curve over the data range.
    pub fn sample_curve(&self, points: usize) -> Vec<(f64, f64)> {
        (0..points)
            .map(|i| {
                let x = self.x_min
                    + (self.x_max - self.x_min) * i as f64 / (points - 1).max(1) as f64;
                (x, self.eval(x))
            })
            .collect()
    }
}
