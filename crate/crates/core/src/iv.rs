//! Two-stage least squares and an ordinary least squares helper.
//!
//! All moment matrices use the plain `1/n` sample average of the fitting
//! sample, so `M̂ = [Ê[XZᵀ] Ê[ZZᵀ]⁻¹ Ê[ZXᵀ]]⁻¹ Ê[XZᵀ] Ê[ZZᵀ]⁻¹` and
//! `β̂ = M̂ Ê[ZY]` hold literally. Inverses are never formed: square systems
//! are solved with a column-pivoted QR and least squares with a Householder
//! QR of the design, each after the relevant Gram matrix has passed a
//! singular value screen.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RpivError};

/// Smallest admissible ratio of smallest to largest singular value.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Result of a 2SLS fit on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSlsFit {
    /// Coefficients, length p'.
    pub beta_hat: DVector<f64>,
    /// p' × d' matrix mapping instrument moments to coefficient moments.
    pub m_hat: DMatrix<f64>,
    /// `Y_i - X_iᵀ β̂` on the fitting sample.
    pub residuals: DVector<f64>,
    pub sample_size: usize,
}

fn is_well_conditioned(m: &DMatrix<f64>) -> bool {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    max > 0.0 && max.is_finite() && min >= SINGULAR_RATIO * max
}

/// Sample average `(1/n) Σ a_i b_iᵀ` for row-observation matrices.
pub fn cross_moment(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.tr_mul(b) / a.nrows() as f64
}

fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>, err: RpivError) -> Result<DMatrix<f64>> {
    a.clone().col_piv_qr().solve(b).ok_or(err)
}

pub fn fit_tsls(y: &DVector<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<TwoSlsFit> {
    let n = y.len();
    let (p, d) = (x.ncols(), z.ncols());
    if x.nrows() != n || z.nrows() != n {
        return Err(RpivError::DimensionMismatch(format!(
            "y has {n} rows, x has {}, z has {}",
            x.nrows(),
            z.nrows()
        )));
    }
    if d < p {
        return Err(RpivError::DimensionMismatch(format!(
            "{d} instruments for {p} regressors"
        )));
    }
    if n <= d {
        return Err(RpivError::TooFewObservations(format!(
            "2SLS needs more than {d} observations, got {n}"
        )));
    }
    let szz = cross_moment(z, z);
    if !is_well_conditioned(&szz) {
        return Err(RpivError::InstrumentGramSingular);
    }
    let szx = cross_moment(z, x);
    let szy = z.tr_mul(y) / n as f64;

    // W = Ê[ZZᵀ]⁻¹ Ê[ZXᵀ], so Wᵀ = Ê[XZᵀ] Ê[ZZᵀ]⁻¹.
    let w = solve(&szz, &szx, RpivError::InstrumentGramSingular)?;
    let g = szx.tr_mul(&w);
    if !is_well_conditioned(&g) {
        return Err(RpivError::RankConditionFailed);
    }
    let m_hat = solve(&g, &w.transpose(), RpivError::RankConditionFailed)?;
    let beta_hat = &m_hat * szy;
    let residuals = y - x * &beta_hat;
    Ok(TwoSlsFit {
        beta_hat,
        m_hat,
        residuals,
        sample_size: n,
    })
}

/// Least squares coefficients of `y` on the columns of `x`.
pub fn fit_ols(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = y.len();
    if x.nrows() != n {
        return Err(RpivError::DimensionMismatch(format!(
            "y has {n} rows, x has {}",
            x.nrows()
        )));
    }
    if n <= x.ncols() {
        return Err(RpivError::TooFewObservations(format!(
            "OLS needs more than {} observations, got {n}",
            x.ncols()
        )));
    }
    if !is_well_conditioned(&cross_moment(x, x)) {
        return Err(RpivError::SingularGram);
    }
    let qr = x.clone().qr();
    let qty = qr.q().tr_mul(y);
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or(RpivError::SingularGram)
}

/// `y - x·coef` for the least squares coefficients.
pub fn ols_residuals(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let coef = fit_ols(y, x)?;
    Ok(y - x * coef)
}
