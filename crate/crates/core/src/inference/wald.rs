//! Heteroskedasticity-consistent Wald test of zero driver coefficients in the
//! two-regime model, pointwise at `(r, d)` and as a sup over the grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chi2_sf;
use crate::error::{Error, Result};
use crate::linalg::{lstsq, sym_inverse};
use crate::tar::{min_regime_size, plans_for, LagOrders, SplitPlan, TarConfig, TarData, TarFit, ThresholdFn};

/// Which driver coefficients are restricted to zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSelector {
    /// Every θ in both regimes.
    #[default]
    All,
    Regime1,
    Regime2,
    /// Listed driver lags (1-based) in both regimes.
    Lags(Vec<usize>),
}

impl ThetaSelector {
    fn picks(&self, regime: usize, lag: usize) -> bool {
        match self {
            ThetaSelector::All => true,
            ThetaSelector::Regime1 => regime == 1,
            ThetaSelector::Regime2 => regime == 2,
            ThetaSelector::Lags(l) => l.contains(&lag),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ThetaSelector::All => "theta(1) = theta(2) = 0".into(),
            ThetaSelector::Regime1 => "theta(1) = 0".into(),
            ThetaSelector::Regime2 => "theta(2) = 0".into(),
            ThetaSelector::Lags(l) => format!("theta at lags {l:?} = 0"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldTestResult {
    pub delta: f64,
    pub df: usize,
    pub p: f64,
    pub selector: String,
    pub r: f64,
    pub d: usize,
    /// A pseudo-inverse replaced a singular sandwich or moment matrix.
    pub pinv_fallback: bool,
}

struct Regime {
    coef: Vec<f64>,
    cov: DMatrix<f64>,
    pinv: bool,
}

fn regime_sandwich(rows: &DMatrix<f64>, y: &[f64]) -> Result<Regime> {
    let fit = lstsq(rows, y)?;
    let m = rows.ncols();
    let moment = rows.transpose() * rows;
    let mut meat = DMatrix::zeros(m, m);
    for (i, e) in fit.residuals.iter().enumerate() {
        let w = rows.row(i).transpose();
        meat += (&w * w.transpose()) * (e * e);
    }
    let (minv, pinv) = sym_inverse(&moment);
    let cov = &minv * meat * &minv;
    Ok(Regime {
        coef: fit.coef,
        cov,
        pinv,
    })
}

fn gather(rows: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), rows.ncols(), |i, j| rows[(idx[i], j)])
}

/// Δ_T for a given regime assignment.
fn delta_for_split(
    rows1: &DMatrix<f64>,
    rows2: &DMatrix<f64>,
    y: &[f64],
    regime1: &[bool],
    orders: &LagOrders,
    selector: &ThetaSelector,
) -> Result<(f64, usize, bool)> {
    let idx1: Vec<usize> = (0..y.len()).filter(|&i| regime1[i]).collect();
    let idx2: Vec<usize> = (0..y.len()).filter(|&i| !regime1[i]).collect();
    let y1: Vec<f64> = idx1.iter().map(|&i| y[i]).collect();
    let y2: Vec<f64> = idx2.iter().map(|&i| y[i]).collect();
    let regs = [
        (regime_sandwich(&gather(rows1, &idx1), &y1)?, orders.p1, orders.q1),
        (regime_sandwich(&gather(rows2, &idx2), &y2)?, orders.p2, orders.q2),
    ];

    let mut picked: Vec<(usize, usize)> = Vec::new(); // (regime index, coefficient index)
    for (k, (_, p, q)) in regs.iter().enumerate() {
        for lag in 1..=*q {
            if selector.picks(k + 1, lag) {
                picked.push((k, p + lag));
            }
        }
    }
    let df = picked.len();
    if df == 0 {
        return Err(Error::InvalidConfig(format!(
            "selector `{}` picks no driver coefficient for orders {orders:?}",
            selector.describe()
        )));
    }
    let est = DVector::from_fn(df, |i, _| {
        let (k, c) = picked[i];
        regs[k].0.coef[c]
    });
    // block-diagonal across regimes
    let cov = DMatrix::from_fn(df, df, |i, j| {
        let ((ki, ci), (kj, cj)) = (picked[i], picked[j]);
        if ki == kj {
            regs[ki].0.cov[(ci, cj)]
        } else {
            0.0
        }
    });
    let (cinv, pinv) = sym_inverse(&cov);
    let delta = est.dot(&(cinv * &est)).max(0.0);
    Ok((delta, df, pinv || regs[0].0.pinv || regs[1].0.pinv))
}

/// Pointwise Δ_T(r, d).
pub fn wald_at(
    data: &TarData,
    orders: &LagOrders,
    u: ThresholdFn,
    r: f64,
    d: usize,
    min_regime_frac: f64,
    selector: &ThetaSelector,
) -> Result<WaldTestResult> {
    let thr = data.threshold(d, u)?;
    let cols1 = data.columns(orders.p1, orders.q1);
    let cols2 = data.columns(orders.p2, orders.q2);
    let regime1: Vec<bool> = thr.iter().map(|&v| v <= r).collect();
    let n1 = regime1.iter().filter(|&&b| b).count();
    let n = data.n();
    let (min1, min2) = (
        min_regime_size(n, min_regime_frac, cols1.len()),
        min_regime_size(n, min_regime_frac, cols2.len()),
    );
    if n1 < min1 || n - n1 < min2 {
        return Err(Error::RegimeTooSmall {
            n1,
            n2: n - n1,
            min: min1.max(min2),
        });
    }
    let (delta, df, pinv) = delta_for_split(
        &data.design(&cols1),
        &data.design(&cols2),
        data.responses(),
        &regime1,
        orders,
        selector,
    )?;
    Ok(WaldTestResult {
        delta,
        df,
        p: chi2_sf(delta, df as f64),
        selector: selector.describe(),
        r,
        d,
        pinv_fallback: pinv,
    })
}

/// Wald test at the `(r̂, d̂)` of an existing fit.
pub fn wald_tgc(data: &TarData, fit: &TarFit, selector: &ThetaSelector, min_regime_frac: f64) -> Result<WaldTestResult> {
    wald_at(data, &fit.orders, fit.threshold_fn, fit.r_hat, fit.d_hat, min_regime_frac, selector)
}

/// Running moments of one regime, enough to rebuild the sandwich at any cut:
/// `Σ ww'`, `Σ wy`, `Σ y²ww'`, `Σ y·w⊗w⊗w` and `Σ w⊗w⊗w⊗w`.
#[derive(Clone)]
struct Moments {
    m: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
    yyww: Vec<f64>,
    yw3: Vec<f64>,
    w4: Vec<f64>,
}

impl Moments {
    fn zeros(m: usize) -> Self {
        Self {
            m,
            xtx: vec![0.0; m * m],
            xty: vec![0.0; m],
            yyww: vec![0.0; m * m],
            yw3: vec![0.0; m * m * m],
            w4: vec![0.0; m * m * m * m],
        }
    }

    fn add(&mut self, w: &[f64], y: f64) {
        let m = self.m;
        for a in 0..m {
            self.xty[a] += w[a] * y;
            for b in 0..m {
                let ab = w[a] * w[b];
                let i = a * m + b;
                self.xtx[i] += ab;
                self.yyww[i] += ab * y * y;
                for c in 0..m {
                    let abc = ab * w[c];
                    let j = i * m + c;
                    self.yw3[j] += abc * y;
                    for d in 0..m {
                        self.w4[j * m + d] += abc * w[d];
                    }
                }
            }
        }
    }

    fn minus(&self, o: &Moments) -> Moments {
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u - v).collect();
        Moments {
            m: self.m,
            xtx: sub(&self.xtx, &o.xtx),
            xty: sub(&self.xty, &o.xty),
            yyww: sub(&self.yyww, &o.yyww),
            yw3: sub(&self.yw3, &o.yw3),
            w4: sub(&self.w4, &o.w4),
        }
    }

    /// Coefficients and sandwich covariance of the regression on `cols`.
    fn sandwich(&self, cols: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.m;
        let k = cols.len();
        let moment = DMatrix::from_fn(k, k, |i, j| self.xtx[cols[i] * m + cols[j]]);
        let (minv, _) = sym_inverse(&moment);
        let beta = &minv * DVector::from_fn(k, |i, _| self.xty[cols[i]]);
        let meat = DMatrix::from_fn(k, k, |i, j| {
            let ab = cols[i] * m + cols[j];
            let mut v = self.yyww[ab];
            for (c, &cc) in cols.iter().enumerate() {
                let abc = ab * m + cc;
                v -= 2.0 * beta[c] * self.yw3[abc];
                for (d, &cd) in cols.iter().enumerate() {
                    v += beta[c] * beta[d] * self.w4[abc * m + cd];
                }
            }
            v
        });
        let cov = &minv * meat * &minv;
        (beta, cov)
    }
}

/// Δ_T at every cut of `plan`, from running moments. Used to locate the sup;
/// the reported value is recomputed exactly.
fn sweep_delta(data: &TarData, plan: &SplitPlan, cols: [&[usize]; 2], picked: &[(usize, usize)]) -> Vec<f64> {
    let m = data.width();
    let y = data.responses();
    let mut total = Moments::zeros(m);
    for i in 0..data.n() {
        total.add(data.row(i), y[i]);
    }
    let mut g1 = Moments::zeros(m);
    let mut pos = 0;
    let mut out = Vec::with_capacity(plan.cuts.len());
    for &(n1, _) in &plan.cuts {
        while pos < n1 {
            let i = plan.order[pos];
            g1.add(data.row(i), y[i]);
            pos += 1;
        }
        let g2 = total.minus(&g1);
        let fits = [g1.sandwich(cols[0]), g2.sandwich(cols[1])];
        let df = picked.len();
        let est = DVector::from_fn(df, |i, _| fits[picked[i].0].0[picked[i].1]);
        let cov = DMatrix::from_fn(df, df, |i, j| {
            let ((ki, ci), (kj, cj)) = (picked[i], picked[j]);
            if ki == kj {
                fits[ki].1[(ci, cj)]
            } else {
                0.0
            }
        });
        let (cinv, _) = sym_inverse(&cov);
        let v = est.dot(&(cinv * &est));
        out.push(if v.is_finite() { v.max(0.0) } else { 0.0 });
    }
    out
}

/// sup of Δ_T(r, d) over the grid of `cfg`; the p-value treats the maximising
/// `(r, d)` as fixed. Ties keep the smaller delay, then the smaller threshold.
pub fn sup_wald(data: &TarData, cfg: &TarConfig, selector: &ThetaSelector) -> Result<WaldTestResult> {
    cfg.validate()?;
    let orders = &cfg.orders;
    let plans = plans_for(data, cfg, orders.widths())?;
    let cols1 = data.columns(orders.p1, orders.q1);
    let cols2 = data.columns(orders.p2, orders.q2);
    let mut picked = Vec::new();
    for (k, (p, q)) in [(orders.p1, orders.q1), (orders.p2, orders.q2)].into_iter().enumerate() {
        for lag in 1..=q {
            if selector.picks(k + 1, lag) {
                picked.push((k, p + lag));
            }
        }
    }
    if picked.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "selector `{}` picks no driver coefficient for orders {orders:?}",
            selector.describe()
        )));
    }
    let per_delay: Vec<Vec<f64>> = plans
        .par_iter()
        .map(|plan| sweep_delta(data, plan, [&cols1, &cols2], &picked))
        .collect();

    let mut best: Option<(f64, usize, usize)> = None;
    for (pi, values) in per_delay.iter().enumerate() {
        for (ci, &v) in values.iter().enumerate() {
            if best.is_none_or(|(b, _, _)| v > b) {
                best = Some((v, pi, ci));
            }
        }
    }
    let (_, pi, ci) = best.ok_or(Error::NoFeasibleSplit)?;
    let (plan, n1) = (&plans[pi], plans[pi].cuts[ci].0);
    let mut regime1 = vec![false; data.n()];
    for &i in &plan.order[..n1] {
        regime1[i] = true;
    }
    let (delta, df, pinv) = delta_for_split(
        &data.design(&cols1),
        &data.design(&cols2),
        data.responses(),
        &regime1,
        orders,
        selector,
    )?;
    Ok(WaldTestResult {
        delta,
        df,
        p: chi2_sf(delta, df as f64),
        selector: selector.describe(),
        r: plan.cuts[ci].1,
        d: plan.d,
        pinv_fallback: pinv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{gen_causal_pair, CausalPairSpec, RegimeSpec};
    use crate::tar::grid_fit;

    fn theta_pair(theta: f64, seed: u64, t: usize) -> (Vec<f64>, Vec<f64>) {
        let spec = CausalPairSpec::two_regime(
            RegimeSpec::new(0.0, &[0.4], &[theta]),
            RegimeSpec::new(0.0, &[-0.4], &[0.0]),
            0.0,
            1,
        );
        gen_causal_pair(&spec, t, 500, seed).unwrap()
    }

    #[test]
    fn zero_theta_gives_zero_delta() {
        // driver identically zero: its lag column is dropped and θ̂ = 0
        let cfg = TarConfig::new(1, 1, [1]).with_threshold_fn(ThresholdFn::SelfExciting);
        let (_, y) = theta_pair(0.0, 1, 300);
        let data = TarData::for_config(y, vec![0.0; 300], &cfg).unwrap();
        let fit = grid_fit(&data, &cfg).unwrap();
        assert_eq!(fit.theta1, [0.0]);
        let w = wald_tgc(&data, &fit, &ThetaSelector::All, cfg.min_regime_frac).unwrap();
        assert_eq!(w.delta, 0.0);
        assert_eq!(w.p, 1.0);
        assert_eq!(w.df, 2);
    }

    #[test]
    fn restriction_counts() {
        let cfg = TarConfig::new(1, 1, [1]);
        let (x, y) = theta_pair(0.8, 2, 400);
        let data = TarData::for_config(y, x, &cfg).unwrap();
        let all = wald_at(&data, &cfg.orders, ThresholdFn::Identity, 0.0, 1, 0.1, &ThetaSelector::All).unwrap();
        assert_eq!(all.df, 2);
        let one = wald_at(&data, &cfg.orders, ThresholdFn::Identity, 0.0, 1, 0.1, &ThetaSelector::Regime1).unwrap();
        assert_eq!(one.df, 1);
        assert!(one.delta > 20.0);
        let none = TarConfig::new(1, 0, [1]);
        assert!(wald_at(&data, &none.orders, ThresholdFn::Identity, 0.0, 1, 0.1, &ThetaSelector::All).is_err());
    }

    #[test]
    fn sup_properties() {
        let (x, y) = theta_pair(0.3, 3, 300);
        let cfg = TarConfig::new(1, 1, [1, 2]);
        let data = TarData::for_config(y, x, &cfg).unwrap();
        let sup = sup_wald(&data, &cfg, &ThetaSelector::All).unwrap();
        let at = wald_at(&data, &cfg.orders, ThresholdFn::Identity, sup.r, sup.d, 0.1, &ThetaSelector::All).unwrap();
        assert!((sup.delta - at.delta).abs() <= 1e-9 * at.delta.max(1.0));
        // any fixed cell is below the sup
        let fixed = wald_at(&data, &cfg.orders, ThresholdFn::Identity, 0.0, 2, 0.1, &ThetaSelector::All).unwrap();
        assert!(sup.delta >= fixed.delta);
        // single-cell grid equals the pointwise value
        let narrow = TarConfig {
            trim: 0.499,
            ..cfg.with_delays([1])
        };
        let one = sup_wald(&data, &narrow, &ThetaSelector::All).unwrap();
        let pt = wald_at(&data, &cfg.orders, ThresholdFn::Identity, one.r, 1, 0.1, &ThetaSelector::All).unwrap();
        assert_eq!(one.delta, pt.delta);
    }

    #[test]
    fn sweep_matches_exact_refits() {
        let (x, y) = theta_pair(0.5, 4, 250);
        let cfg = TarConfig::new(2, 1, [1, 2]);
        let data = TarData::for_config(y, x, &cfg).unwrap();
        let o = &cfg.orders;
        let (c1, c2) = (data.columns(o.p1, o.q1), data.columns(o.p2, o.q2));
        let picked = [(0, o.p1 + 1), (1, o.p2 + 1)];
        for plan in plans_for(&data, &cfg, o.widths()).unwrap() {
            let fast = sweep_delta(&data, &plan, [&c1, &c2], &picked);
            for (k, &(n1, _)) in plan.cuts.iter().enumerate() {
                let mut regime1 = vec![false; data.n()];
                for &i in &plan.order[..n1] {
                    regime1[i] = true;
                }
                let (exact, _, _) =
                    delta_for_split(&data.design(&c1), &data.design(&c2), data.responses(), &regime1, o, &ThetaSelector::All).unwrap();
                assert!((fast[k] - exact).abs() <= 1e-7 * exact.max(1.0), "{} vs {exact}", fast[k]);
            }
        }
    }
}
