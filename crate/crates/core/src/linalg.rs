//! Least-squares kernels shared by the TAR engine and the confound filter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on |R_ii| / |R_00| below which a pivoted column is
/// treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LsSolution {
    /// One entry per design column; dropped columns hold 0.
    pub coef: Vec<f64>,
    pub dropped: Vec<usize>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
}

/// Least squares through column-pivoted Householder QR. Columns whose pivot
/// falls below the rank tolerance are dropped and get a zero coefficient.
pub fn lstsq(a: &DMatrix<f64>, y: &[f64]) -> Result<LsSolution> {
    let (n, m) = a.shape();
    assert_eq!(n, y.len(), "design rows and responses differ");
    if m == 0 {
        return Err(Error::AllColumnsDropped);
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let k = n.min(m);
    let r00 = r[(0, 0)].abs();
    if r00 == 0.0 || !r00.is_finite() {
        return Err(Error::AllColumnsDropped);
    }
    let rank = (0..k).take_while(|&i| r[(i, i)].abs() > RANK_TOL * r00).count();

    // column order after pivoting
    let mut order = DMatrix::<f64>::from_fn(1, m, |_, j| j as f64);
    qr.p().permute_columns(&mut order);
    let order: Vec<usize> = order.iter().map(|&v| v as usize).collect();

    let yv = DVector::from_column_slice(y);
    let mut qty = yv.clone();
    qr.q_tr_mul(&mut qty);
    let r11 = r.view((0, 0), (rank, rank)).into_owned();
    let rhs = qty.rows(0, rank).into_owned();
    let b = r11
        .solve_upper_triangular(&rhs)
        .ok_or(Error::AllColumnsDropped)?;

    let mut coef = vec![0.0; m];
    for (i, &col) in order.iter().take(rank).enumerate() {
        coef[col] = b[i];
    }
    let mut dropped: Vec<usize> = order[rank..].to_vec();
    dropped.sort_unstable();

    let fitted = a * DVector::from_column_slice(&coef);
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let ssr = residuals.iter().map(|e| e * e).sum();
    Ok(LsSolution {
        coef,
        dropped,
        residuals,
        ssr,
    })
}

/// Running cross-products `X'X`, `X'y`, `y'y` for rank-one updates during
/// threshold sweeps.
#[derive(Debug, Clone)]
pub struct Gram {
    pub m: usize,
    pub xtx: Vec<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
    pub n: usize,
}

impl Gram {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            xtx: vec![0.0; m * m],
            xty: vec![0.0; m],
            yty: 0.0,
            n: 0,
        }
    }

    #[inline]
    pub fn add(&mut self, row: &[f64], y: f64) {
        let m = self.m;
        for i in 0..m {
            let ri = row[i];
            self.xty[i] += ri * y;
            let base = i * m;
            for j in 0..=i {
                self.xtx[base + j] += ri * row[j];
            }
        }
        self.yty += y * y;
        self.n += 1;
    }

    /// `X'X += w row row'`, leaving `X'y` untouched.
    #[inline]
    pub fn add_outer(&mut self, row: &[f64], w: f64) {
        let m = self.m;
        for i in 0..m {
            let ri = w * row[i];
            let base = i * m;
            for j in 0..=i {
                self.xtx[base + j] += ri * row[j];
            }
        }
        self.n += 1;
    }

    pub fn minus(&self, other: &Gram) -> Gram {
        Gram {
            m: self.m,
            xtx: self.xtx.iter().zip(&other.xtx).map(|(a, b)| a - b).collect(),
            xty: self.xty.iter().zip(&other.xty).map(|(a, b)| a - b).collect(),
            yty: self.yty - other.yty,
            n: self.n - other.n,
        }
    }

    /// Residual sum of squares of the regression on the columns `cols`
    /// (all columns if `None`). Falls back to an eigen pseudo-inverse when
    /// the sub-matrix is not positive definite.
    pub fn ssr(&self, cols: Option<&[usize]>) -> f64 {
        let idx: Vec<usize> = match cols {
            Some(c) => c.to_vec(),
            None => (0..self.m).collect(),
        };
        let k = idx.len();
        let a = DMatrix::from_fn(k, k, |i, j| {
            let (r, c) = if idx[i] >= idx[j] { (idx[i], idx[j]) } else { (idx[j], idx[i]) };
            self.xtx[r * self.m + c]
        });
        let b = DVector::from_fn(k, |i, _| self.xty[idx[i]]);
        let explained = match a.clone().cholesky() {
            Some(ch) => b.dot(&ch.solve(&b)),
            None => {
                let (inv, _) = sym_inverse(&a);
                b.dot(&(inv * &b))
            }
        };
        (self.yty - explained).max(0.0)
    }
}

/// Inverse of a symmetric positive semi-definite matrix. When the Cholesky
/// factorisation fails a pseudo-inverse is returned with the flag set.
pub fn sym_inverse(a: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if let Some(ch) = a.clone().cholesky() {
        let inv = ch.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return (inv, false);
        }
    }
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let tol = lmax * 1e-12 * n.max(1) as f64;
    let mut inv = DMatrix::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > tol {
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / l;
        }
    }
    (inv, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lstsq_matches_normal_equations() {
        let a = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0]);
        let y = [1.0, 3.1, 4.9, 7.2, 9.0];
        let s = lstsq(&a, &y).unwrap();
        let ata = a.transpose() * &a;
        let aty = a.transpose() * DVector::from_column_slice(&y);
        let b = ata.cholesky().unwrap().solve(&aty);
        assert_relative_eq!(s.coef[0], b[0], epsilon = 1e-12);
        assert_relative_eq!(s.coef[1], b[1], epsilon = 1e-12);
        assert!(s.dropped.is_empty());
    }

    #[test]
    fn duplicated_column_dropped() {
        let a = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 2.0, 1.0, -1.0, -1.0, 1.0, 0.5, 0.5, 1.0, 3.0, 3.0]);
        let y = [1.0, 2.0, 0.0, 5.0];
        let s = lstsq(&a, &y).unwrap();
        assert_eq!(s.dropped.len(), 1);
        assert!(s.dropped[0] == 1 || s.dropped[0] == 2);
        let reduced = a.columns(0, 2).into_owned();
        let full = lstsq(&reduced, &y).unwrap();
        assert_relative_eq!(s.ssr, full.ssr, epsilon = 1e-10);
        assert_relative_eq!(s.coef[1] + s.coef[2], full.coef[1], epsilon = 1e-10);
    }

    #[test]
    fn gram_ssr_agrees_with_qr() {
        let a = DMatrix::from_fn(30, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + j as f64 * 0.1);
        let y: Vec<f64> = (0..30).map(|i| ((i * 13) % 7) as f64).collect();
        let mut g = Gram::zeros(3);
        for i in 0..30 {
            let row: Vec<f64> = a.row(i).iter().copied().collect();
            g.add(&row, y[i]);
        }
        let s = lstsq(&a, &y).unwrap();
        assert_relative_eq!(g.ssr(None), s.ssr, max_relative = 1e-9);
        let sub = lstsq(&a.columns(0, 2).into_owned(), &y).unwrap();
        assert_relative_eq!(g.ssr(Some(&[0, 1])), sub.ssr, max_relative = 1e-9);
    }

    #[test]
    fn pseudo_inverse_flagged() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (inv, pinv) = sym_inverse(&a);
        assert!(pinv);
        assert_relative_eq!(inv[(0, 0)], 0.25, epsilon = 1e-12);
    }
}
