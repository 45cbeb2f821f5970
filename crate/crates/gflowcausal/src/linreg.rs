//! Per-node regression helpers shared by the BIC score and the pruners.
//!
//! Everything fits an intercept by centering; the intercept is never counted
//! as a model parameter by callers.

use nalgebra::{Cholesky, DMatrix, DVector};

pub(crate) const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub(crate) struct OlsFit {
    pub coeffs: Vec<f64>,
    pub rss: f64,
    /// Set when the Gram matrix needed a ridge bump to factor.
    pub ridge_fallback: bool,
}

/// Ordinary least squares of `y` on the given predictor columns, solved via
/// the normal equations. A rank-deficient Gram matrix falls back to a ridge
/// of 1e-8 and flags the fit.
pub(crate) fn ols(columns: &[Vec<f64>], y: &[f64]) -> OlsFit {
    let n = y.len();
    let k = columns.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    if k == 0 {
        let rss = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
        return OlsFit {
            coeffs: Vec::new(),
            rss,
            ridge_fallback: false,
        };
    }
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    let mut gram = DMatrix::zeros(k, k);
    let mut xty = DVector::zeros(k);
    for a in 0..k {
        for b in a..k {
            let dot: f64 = centered[a].iter().zip(&centered[b]).map(|(x, z)| x * z).sum();
            gram[(a, b)] = dot;
            gram[(b, a)] = dot;
        }
        xty[a] = centered[a].iter().zip(&yc).map(|(x, z)| x * z).sum();
    }

    // A singular Gram matrix can slip through Cholesky with a rounding-noise
    // pivot, so treat a severely graded factor as rank-deficient.
    let plain = Cholesky::new(gram.clone())
        .filter(|c| {
            let l = c.l();
            let (mut min_p, mut max_p) = (f64::INFINITY, 0.0f64);
            for i in 0..k {
                min_p = min_p.min(l[(i, i)]);
                max_p = max_p.max(l[(i, i)]);
            }
            min_p > 1e-7 * max_p
        })
        .map(|c| c.solve(&xty))
        .filter(|beta| beta.iter().all(|b| b.is_finite()));
    let (beta, ridge_fallback) = match plain {
        Some(beta) => (beta, false),
        None => {
            let mut bumped = gram.clone();
            for i in 0..k {
                bumped[(i, i)] += RIDGE;
            }
            let chol = Cholesky::new(bumped)
                .expect("ridge-regularized Gram matrix is positive definite");
            (chol.solve(&xty), true)
        }
    };

    let mut rss = 0.0;
    for row in 0..n {
        let mut fitted = 0.0;
        for j in 0..k {
            fitted += beta[j] * centered[j][row];
        }
        let r = yc[row] - fitted;
        rss += r * r;
    }
    OlsFit {
        coeffs: beta.iter().copied().collect(),
        rss,
        ridge_fallback,
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LassoFit {
    pub coeffs: Vec<f64>,
    pub converged: bool,
}

/// L1-penalized least squares by cyclic coordinate descent with
/// soft-thresholding on centered data:
/// minimize (1/2n)||y - Xb||^2 + lambda * ||b||_1.
pub(crate) fn lasso_cd(
    columns: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
) -> LassoFit {
    let n = y.len();
    let k = columns.len();
    if k == 0 {
        return LassoFit {
            coeffs: Vec::new(),
            converged: true,
        };
    }
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut residual: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    let col_ms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / n as f64)
        .collect();
    let mut beta = vec![0.0; k];
    let soft = |v: f64, t: f64| -> f64 {
        if v > t {
            v - t
        } else if v < -t {
            v + t
        } else {
            0.0
        }
    };

    for _ in 0..max_sweeps {
        let mut max_delta: f64 = 0.0;
        for j in 0..k {
            if col_ms[j] == 0.0 {
                continue; // constant column can never enter
            }
            let rho = centered[j].iter().zip(&residual).map(|(x, r)| x * r).sum::<f64>()
                / n as f64
                + col_ms[j] * beta[j];
            let new = soft(rho, lambda) / col_ms[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, x) in residual.iter_mut().zip(&centered[j]) {
                    *r -= delta * x;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < tol {
            return LassoFit {
                coeffs: beta,
                converged: true,
            };
        }
    }
    LassoFit {
        coeffs: beta,
        converged: false,
    }
}
