//! Sargan overidentification test and the squared-instrument augmentation
//! used to make it applicable in the just-identified case.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::AugmentedDataset;
use crate::error::{Result, RpivError};
use crate::iv::{cross_moment, fit_tsls, ols_residuals};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JTestOutcome {
    pub statistic: f64,
    /// `d' - p'`.
    pub dof: usize,
    pub p_value: f64,
}

/// `J = n · Ê[ZR̂]ᵀ Ê[ZZᵀ]⁻¹ Ê[ZR̂] / Ê[R̂²]`, referred to χ²(d' - p').
///
/// Runs on the whole sample given.
pub fn sargan(ds: &AugmentedDataset) -> Result<JTestOutcome> {
    if ds.d() <= ds.p() {
        return Err(RpivError::JustIdentified);
    }
    let dof = ds.d() - ds.p();
    let fit = fit_tsls(&ds.y, &ds.x, &ds.z)?;
    let n = ds.n() as f64;
    let g = ds.z.tr_mul(&fit.residuals) / n;
    let mean_r2 = fit.residuals.norm_squared() / n;
    let statistic = if mean_r2 > 0.0 {
        let szz = cross_moment(&ds.z, &ds.z);
        let solved = szz
            .col_piv_qr()
            .solve(&g)
            .ok_or(RpivError::InstrumentGramSingular)?;
        (n * g.dot(&solved) / mean_r2).max(0.0)
    } else {
        0.0
    };
    let chi2 = ChiSquared::new(dof as f64)
        .map_err(|e| RpivError::InvalidConfig(format!("chi-square reference: {e}")))?;
    let p_value = chi2.sf(statistic).clamp(0.0, 1.0);
    Ok(JTestOutcome {
        statistic,
        dof,
        p_value,
    })
}

/// Appends the elementwise square of instrument column `which` to `z`.
pub fn dieterle_augment(ds: &AugmentedDataset, which: usize) -> Result<AugmentedDataset> {
    if which >= ds.d() || !ds.instrument_mask[which] {
        return Err(RpivError::NotAnInstrument(which));
    }
    let col = ds.z.column(which).into_owned();
    let squared: DVector<f64> = col.map(|v| v * v);
    if squared == col {
        return Err(RpivError::CollinearAugmentation);
    }
    let resid = ols_residuals(&squared, &ds.z).map_err(|e| match e {
        RpivError::SingularGram => RpivError::InstrumentGramSingular,
        other => other,
    })?;
    if resid.norm() <= 1e-10 * squared.norm() {
        return Err(RpivError::CollinearAugmentation);
    }
    let mut out = ds.clone();
    let d = ds.d();
    out.z = ds.z.clone().insert_column(d, 0.0);
    out.z.column_mut(d).copy_from(&squared);
    out.z_names.push(format!("{}^2", ds.z_names[which]));
    out.instrument_mask.push(true);
    Ok(out)
}
