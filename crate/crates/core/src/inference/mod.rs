//! Hypothesis tests and model selection on top of the TAR engine.

mod combine;
mod hotelling;
mod lr;
mod msc;
mod wald;

pub use combine::{combine_pvalues, CombinedP, COMBINATION_METHOD, P_FLOOR};
pub use hotelling::{hotelling_permutation, hotelling_t2, HotellingResult};
pub use lr::{bootstrap_linearity, lr_statistic, BootstrapOptions, LrTestResult};
pub use msc::{msc_select, msc_value, MscCandidate, MscRecord};
pub use wald::{sup_wald, wald_at, wald_tgc, ThetaSelector, WaldTestResult};

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail probability of a χ² variable with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    ChiSquared::new(df).map(|c| c.sf(x)).unwrap_or(f64::NAN)
}

/// `(1 + #{draws >= observed}) / (n + 1)`.
pub(crate) fn exceedance_p(observed: f64, draws: &[f64]) -> f64 {
    let tol = 1e-10 * observed.abs().max(1.0);
    let count = draws.iter().filter(|&&d| d >= observed - tol).count();
    (1 + count) as f64 / (draws.len() + 1) as f64
}
