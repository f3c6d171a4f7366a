//! Frequentist comparators: least squares, reduced-rank least squares, and
//! rank-penalized model selection.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matdata::frobenius_sq;

/// Relative singular-value cutoff for pseudoinverse and rank decisions.
pub const RANK_REL_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct BaselineFit {
    pub b_hat: DMatrix<f64>,
    pub rank_used: usize,
    /// `||Y - X b_hat||_F^2 + pen * rank_used` (with `pen = 0` for the
    /// unpenalized fits).
    pub penalized_objective: f64,
}

/// Moore-Penrose pseudoinverse via SVD; singular values below
/// `RANK_REL_TOL * sigma_max` are treated as zero.
pub fn pseudo_inverse(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| numerical("svd produced no U factor"))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| numerical("svd produced no V^T factor"))?;
    let smax = svd.singular_values.max();
    let cutoff = RANK_REL_TOL * smax;
    let mut sigma_inv = DMatrix::zeros(v_t.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            sigma_inv[(i, i)] = 1.0 / s;
        }
    }
    Ok(v_t.transpose() * sigma_inv * u.transpose())
}

/// Numerical rank: count of singular values above `rel_tol * sigma_max`.
pub fn matrix_rank(x: &DMatrix<f64>, rel_tol: f64) -> usize {
    let svals = x.clone().svd(false, false).singular_values;
    let smax = svals.max();
    if smax <= 0.0 {
        return 0;
    }
    svals.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Minimum-norm least-squares solution `B = X^+ Y`.
pub fn ols_fit(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rows(x, y)?;
    Ok(pseudo_inverse(x)? * y)
}

/// Rank-constrained least squares: project `Y` onto the column space of `X`
/// via OLS, truncate the SVD of the projection to rank `r`, and map back.
/// Minimizes `||Y - X B||_F^2` over `rank(B) <= r` when `X` has full column
/// rank.
pub fn reduced_rank_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, r: usize) -> Result<BaselineFit> {
    check_rows(x, y)?;
    let x_pinv = pseudo_inverse(x)?;
    let b_ols = &x_pinv * y;
    let y_hat = x * &b_ols;
    let max_rank = y_hat.nrows().min(y_hat.ncols());

    let b_hat = if r == 0 {
        DMatrix::zeros(x.ncols(), y.ncols())
    } else if r >= max_rank {
        b_ols
    } else {
        let svd = y_hat.clone().svd(true, true);
        let u = svd.u.as_ref().ok_or_else(|| numerical("svd produced no U factor"))?;
        let v_t = svd.v_t.as_ref().ok_or_else(|| numerical("svd produced no V^T factor"))?;
        let mut truncated = DMatrix::zeros(y_hat.nrows(), y_hat.ncols());
        for i in 0..r {
            let scaled = u.column(i) * svd.singular_values[i];
            truncated += scaled * v_t.row(i);
        }
        x_pinv * truncated
    };

    let fit = frobenius_sq(&(y - x * &b_hat));
    Ok(BaselineFit { b_hat, rank_used: r.min(max_rank), penalized_objective: fit })
}

/// Exhaustive scan over `r in 0..=min(p, m)` minimizing
/// `||Y - X B_r||_F^2 + pen * r`; exact ties break toward smaller `r`.
pub fn rank_penalized_select(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    pen: f64,
) -> Result<BaselineFit> {
    check_rows(x, y)?;
    if !(pen >= 0.0) {
        return Err(Error::Domain(format!("penalty must be >= 0, got {pen}")));
    }
    let max_rank = x.ncols().min(y.ncols());
    let mut best: Option<BaselineFit> = None;
    for r in 0..=max_rank {
        let fit = reduced_rank_fit(x, y, r)?;
        let objective = fit.penalized_objective + pen * r as f64;
        let better = match &best {
            None => true,
            Some(current) => objective < current.penalized_objective,
        };
        if better {
            best = Some(BaselineFit { penalized_objective: objective, ..fit });
        }
    }
    Ok(best.expect("scan covers r = 0"))
}

/// Penalty matched to the per-rank cost scale of the oracle inequality:
/// `2 s2 (rank(X) + m) ln(ell * max(p, m))`.
pub fn default_rank_penalty(s2: f64, rank_x: usize, m: usize, ell: usize, p: usize) -> f64 {
    2.0 * s2 * (rank_x + m) as f64 * ((ell * p.max(m)) as f64).ln()
}

fn check_rows(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

fn numerical(context: &str) -> Error {
    Error::Numerical { context: context.to_string(), condition: f64::NAN }
}
