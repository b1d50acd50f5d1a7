//! Two-sample Hotelling T² with a row-relabelling permutation null.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exceedance_p;
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotellingResult {
    pub t2: f64,
    pub p: f64,
    pub n_perm: usize,
    /// The pooled covariance was singular and got a diagonal ridge.
    pub shrunk: bool,
}

/// Classical two-sample T² on the pooled covariance. A singular covariance
/// is shrunk by `1e-8 · trace / dim` on the diagonal.
pub fn hotelling_t2(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, bool)> {
    let (n1, dim) = a.shape();
    let n2 = b.nrows();
    if b.ncols() != dim {
        return Err(Error::DimensionMismatch(format!("{dim} vs {} columns", b.ncols())));
    }
    if n1 < 1 || n2 < 1 || n1 + n2 < 3 {
        return Err(Error::DimensionMismatch("need at least three rows in total".into()));
    }
    let ma = a.row_mean().transpose();
    let mb = b.row_mean().transpose();
    let scatter = |m: &DMatrix<f64>, mean: &DVector<f64>| {
        let mut s = DMatrix::zeros(dim, dim);
        for r in m.row_iter() {
            let d = r.transpose() - mean;
            s += &d * d.transpose();
        }
        s
    };
    let pooled = (scatter(a, &ma) + scatter(b, &mb)) / (n1 + n2 - 2) as f64;
    let diff = ma - mb;
    let scale = (n1 * n2) as f64 / (n1 + n2) as f64;
    if let Some(ch) = pooled.clone().cholesky() {
        return Ok((scale * diff.dot(&ch.solve(&diff)), false));
    }
    let trace = pooled.trace();
    if trace <= 0.0 {
        let t2 = if diff.iter().all(|&v| v == 0.0) { 0.0 } else { f64::INFINITY };
        return Ok((t2, true));
    }
    let ridge = 1e-8 * trace / dim as f64;
    let shrunk = pooled + DMatrix::identity(dim, dim) * ridge;
    let ch = shrunk
        .cholesky()
        .ok_or_else(|| Error::DimensionMismatch("covariance not positive definite after shrinkage".into()))?;
    Ok((scale * diff.dot(&ch.solve(&diff)), true))
}

fn sorted_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.sort_by(|x, y| {
        x.iter()
            .zip(y)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows
}

fn stack(rows: &[&Vec<f64>], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j])
}

/// Permutation p-value `(1 + #{T²_perm ≥ T²_obs}) / (n_perm + 1)`. Rows are
/// put in a canonical order first, so the result depends on the two row sets
/// and the seed but not on input row order.
pub fn hotelling_permutation(a: &DMatrix<f64>, b: &DMatrix<f64>, n_perm: usize, seed: u64) -> Result<HotellingResult> {
    let dim = a.ncols();
    if b.ncols() != dim {
        return Err(Error::DimensionMismatch(format!("{dim} vs {} columns", b.ncols())));
    }
    let ra = sorted_rows(a);
    let rb = sorted_rows(b);
    let n1 = ra.len();
    let pooled: Vec<&Vec<f64>> = ra.iter().chain(rb.iter()).collect();
    let split = |idx: &[usize]| {
        let ga: Vec<&Vec<f64>> = idx[..n1].iter().map(|&i| pooled[i]).collect();
        let gb: Vec<&Vec<f64>> = idx[n1..].iter().map(|&i| pooled[i]).collect();
        hotelling_t2(&stack(&ga, dim), &stack(&gb, dim))
    };
    let identity: Vec<usize> = (0..pooled.len()).collect();
    let (t2, shrunk) = split(&identity)?;
    let draws: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut idx = identity.clone();
            idx.shuffle(&mut substream(seed, &[k as u64]));
            split(&idx).map(|(v, _)| v)
        })
        .collect::<Result<_>>()?;
    Ok(HotellingResult {
        t2,
        p: exceedance_p(t2, &draws),
        n_perm,
        shrunk,
    })
}
