//! Numerical building blocks: moments, mid-ranks, QR least squares, t-tests.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the N-1 divisor.
pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

/// 1-based ranks; tied values share the average of the ranks they span.
pub(crate) fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation, `None` when either side has zero variance.
pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a t statistic.
pub(crate) fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub(crate) struct LeastSquares {
    /// Intercept first, then one coefficient per column.
    pub coefs: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `(X'X)^-1` of the design with the intercept column.
    pub xtx_inv: Vec<Vec<f64>>,
}

/// The column (0-based, excluding the intercept) that is linearly dependent on the
/// ones before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Collinear(pub usize);

/// Ordinary least squares with an intercept, solved by modified Gram-Schmidt QR.
pub(crate) fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<LeastSquares, Collinear> {
    let n = y.len();
    let p = columns.len() + 1;
    let mut q: Vec<Vec<f64>> = std::iter::once(vec![1.0; n]).chain(columns.iter().cloned()).collect();
    let mut r = vec![vec![0.0; p]; p];
    for j in 0..p {
        let original = norm(&q[j]);
        for i in 0..j {
            let proj = dot(&q[i], &q[j]);
            r[i][j] = proj;
            let qi = q[i].clone();
            for (v, u) in q[j].iter_mut().zip(&qi) {
                *v -= proj * u;
            }
        }
        let remaining = norm(&q[j]);
        if original == 0.0 || remaining <= 1e-9 * original {
            return Err(Collinear(j.saturating_sub(1)));
        }
        r[j][j] = remaining;
        for v in q[j].iter_mut() {
            *v /= remaining;
        }
    }
    let qty: Vec<f64> = q.iter().map(|col| dot(col, y)).collect();
    let mut coefs = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| r[i][k] * coefs[k]).sum();
        coefs[i] = (qty[i] - s) / r[i][i];
    }
    let residuals = (0..n)
        .map(|row| {
            let fitted = coefs[0] + columns.iter().zip(&coefs[1..]).map(|(c, b)| c[row] * b).sum::<f64>();
            y[row] - fitted
        })
        .collect();

    // R^-1 by back substitution, then (X'X)^-1 = R^-1 R^-T
    let mut rinv = vec![vec![0.0; p]; p];
    for j in 0..p {
        rinv[j][j] = 1.0 / r[j][j];
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r[i][k] * rinv[k][j]).sum();
            rinv[i][j] = -s / r[i][i];
        }
    }
    let mut xtx_inv = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            xtx_inv[i][j] = (i.max(j)..p).map(|k| rinv[i][k] * rinv[j][k]).sum();
        }
    }
    Ok(LeastSquares {
        coefs,
        residuals,
        xtx_inv,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_eq!(midranks(&[1.0, 1.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn exact_line() {
        let fit = least_squares(&[vec![1.0, 2.0, 3.0]], &[2.0, 4.0, 6.0]).unwrap();
        assert!(fit.coefs[0].abs() < 1e-12);
        assert!((fit.coefs[1] - 2.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn duplicate_column_is_collinear() {
        let x = vec![1.0, 2.0, 4.0, 3.0];
        let err = least_squares(&[x.clone(), vec![0.0, 1.0, 0.0, 1.0], x], &[1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert_eq!(err, Collinear(2));
    }

    #[test]
    fn constant_column_collides_with_intercept() {
        let err = least_squares(&[vec![3.0; 4]], &[1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert_eq!(err, Collinear(0));
    }

    #[test]
    fn xtx_inverse_matches_closed_form_for_simple_regression() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let fit = least_squares(std::slice::from_ref(&x), &[1.0, 3.0, 2.0, 5.0]).unwrap();
        // Var(slope) factor = 1 / Sxx
        let sxx: f64 = x.iter().map(|v| (v - 2.5) * (v - 2.5)).sum();
        assert!((fit.xtx_inv[1][1] - 1.0 / sxx).abs() < 1e-12);
    }

    #[test]
    fn t_p_values() {
        assert!((t_two_sided_p(0.0, 10.0) - 1.0).abs() < 1e-12);
        // t = 2.228 is the 97.5% quantile at 10 df
        assert!((t_two_sided_p(2.228_138_851_986_274, 10.0) - 0.05).abs() < 1e-6);
        assert_eq!(t_two_sided_p(f64::INFINITY, 3.0), 0.0);
    }
}
