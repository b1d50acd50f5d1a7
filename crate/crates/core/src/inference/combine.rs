use log::warn;
use serde::{Deserialize, Serialize};

use super::chi2_sf;
use crate::error::{Error, Result};

/// Smallest p-value entering a logarithm.
pub const P_FLOOR: f64 = 1e-15;

/// Recorded in output metadata so another combination rule can be swapped in.
pub const COMBINATION_METHOD: &str = "fisher";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedP {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    /// Inputs raised to [`P_FLOOR`].
    pub clamped: usize,
}

/// Fisher's method: `-2 Σ ln p_i` against χ² with `2k` degrees of freedom.
pub fn combine_pvalues(ps: &[f64]) -> Result<CombinedP> {
    if ps.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut clamped = 0;
    let mut chi2 = 0.0;
    for &p in ps {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::InvalidPValue(p));
        }
        let p = if p < P_FLOOR {
            clamped += 1;
            P_FLOOR
        } else {
            p
        };
        chi2 -= 2.0 * p.ln();
    }
    if clamped > 0 {
        warn!("{clamped} p-value(s) clamped to {P_FLOOR:e} before combination");
    }
    let df = 2 * ps.len();
    Ok(CombinedP {
        chi2,
        df,
        p: chi2_sf(chi2, df as f64),
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_halves() {
        let c = combine_pvalues(&[0.5, 0.5]).unwrap();
        assert_relative_eq!(c.chi2, 4.0 * 2f64.ln(), epsilon = 1e-12);
        assert_eq!(c.df, 4);
        // χ²_4 tail: e^{-x/2}(1 + x/2)
        let x = c.chi2;
        assert_relative_eq!(c.p, (-x / 2.0).exp() * (1.0 + x / 2.0), epsilon = 1e-12);
        assert!((c.p - 0.5966).abs() < 1e-4);
    }

    #[test]
    fn ones_and_errors() {
        assert_eq!(combine_pvalues(&[1.0, 1.0, 1.0]).unwrap().p, 1.0);
        assert!(matches!(combine_pvalues(&[]), Err(Error::EmptyList)));
        assert!(combine_pvalues(&[1.5]).is_err());
        let z = combine_pvalues(&[0.0, 0.5]).unwrap();
        assert_eq!(z.clamped, 1);
        assert!(z.p < 1e-10);
    }

    #[test]
    fn order_free() {
        let a = combine_pvalues(&[0.1, 0.7, 0.03]).unwrap();
        let b = combine_pvalues(&[0.03, 0.1, 0.7]).unwrap();
        assert_relative_eq!(a.p, b.p, max_relative = 1e-14);
    }
}
