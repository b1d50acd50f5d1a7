//! Conditional least-squares estimation of the linear ADL model and the
//! two-regime threshold model, with the grid search over threshold value and
//! delay carried out as arranged autoregressions.
//!
//! Rows are sorted by the threshold variable once per delay; sweeping the
//! sorted rows moves observations from regime 2 into regime 1 one at a time,
//! so each candidate threshold costs two small Cholesky solves on running
//! cross-products instead of a fresh regression.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, Gram};

/// Transformation `u(.)` applied to the lagged driver to form the threshold
/// variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdFn {
    #[default]
    Identity,
    Abs,
    Square,
    /// Threshold on the response's own past (SETAR).
    SelfExciting,
}

impl ThresholdFn {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            ThresholdFn::Identity | ThresholdFn::SelfExciting => v,
            ThresholdFn::Abs => v.abs(),
            ThresholdFn::Square => v * v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ThresholdFn::Identity => "identity",
            ThresholdFn::Abs => "abs",
            ThresholdFn::Square => "square",
            ThresholdFn::SelfExciting => "self_exciting",
        }
    }
}

impl std::str::FromStr for ThresholdFn {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "abs" => Ok(Self::Abs),
            "square" => Ok(Self::Square),
            "self_exciting" | "setar" => Ok(Self::SelfExciting),
            other => Err(Error::InvalidConfig(format!("unknown threshold functional `{other}`"))),
        }
    }
}

/// `u(s_{t-d})` for t = d .. len-1. `s` is the driver, or the response itself
/// for [`ThresholdFn::SelfExciting`].
pub fn threshold_series(s: &[f64], d: usize, u: ThresholdFn) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidConfig("delay must be at least 1".into()));
    }
    if s.len() <= d {
        return Err(Error::SeriesTooShort { len: s.len(), need: d });
    }
    Ok(s[..s.len() - d].iter().map(|&v| u.apply(v)).collect())
}

/// Per-regime lag orders for the response (`p`) and the driver (`q`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LagOrders {
    pub p1: usize,
    pub p2: usize,
    pub q1: usize,
    pub q2: usize,
}

impl LagOrders {
    pub fn equal(p: usize, q: usize) -> Self {
        Self { p1: p, p2: p, q1: q, q2: q }
    }

    pub fn max_p(&self) -> usize {
        self.p1.max(self.p2)
    }

    pub fn max_q(&self) -> usize {
        self.q1.max(self.q2)
    }

    pub fn max_lag(&self) -> usize {
        self.max_p().max(self.max_q())
    }

    /// Regressor count of regime 1 and 2.
    pub fn widths(&self) -> (usize, usize) {
        (1 + self.p1 + self.q1, 1 + self.p2 + self.q2)
    }

    /// Total estimated coefficients across both regimes.
    pub fn n_params(&self) -> usize {
        let (a, b) = self.widths();
        a + b
    }

    /// Orders shared by both regimes; the linear model nested in this TAR.
    pub fn common(&self) -> (usize, usize) {
        (self.p1.min(self.p2), self.q1.min(self.q2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.p1 + self.p2 == 0 {
            return Err(Error::InvalidConfig("p1 + p2 must be at least 1".into()));
        }
        Ok(())
    }
}

/// Hyperparameter set of the two-regime model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TarConfig {
    #[serde(flatten)]
    pub orders: LagOrders,
    /// Candidate delays, searched in ascending order.
    #[serde(default = "default_delays")]
    pub delays: Vec<usize>,
    #[serde(default)]
    pub threshold_fn: ThresholdFn,
    /// Fraction of sorted threshold values excluded from each tail.
    #[serde(default = "default_trim")]
    pub trim: f64,
    #[serde(default = "default_min_regime_frac")]
    pub min_regime_frac: f64,
}

fn default_delays() -> Vec<usize> {
    (1..=12).collect()
}
fn default_trim() -> f64 {
    0.15
}
fn default_min_regime_frac() -> f64 {
    0.10
}

impl Default for TarConfig {
    fn default() -> Self {
        Self {
            orders: LagOrders::equal(12, 12),
            delays: default_delays(),
            threshold_fn: ThresholdFn::Identity,
            trim: default_trim(),
            min_regime_frac: default_min_regime_frac(),
        }
    }
}

impl TarConfig {
    pub fn new(p: usize, q: usize, delays: impl IntoIterator<Item = usize>) -> Self {
        Self {
            orders: LagOrders::equal(p, q),
            delays: delays.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn with_threshold_fn(mut self, u: ThresholdFn) -> Self {
        self.threshold_fn = u;
        self
    }

    pub fn with_delays(&self, delays: impl IntoIterator<Item = usize>) -> Self {
        Self {
            delays: delays.into_iter().collect(),
            ..self.clone()
        }
    }

    pub fn max_delay(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        self.orders.validate()?;
        if self.delays.is_empty() || self.delays.contains(&0) {
            return Err(Error::InvalidConfig("delays must be a nonempty set of positive integers".into()));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::InvalidConfig(format!("trim {} outside [0, 0.5)", self.trim)));
        }
        if !(0.0..0.5).contains(&self.min_regime_frac) {
            return Err(Error::InvalidConfig(format!(
                "min_regime_frac {} outside [0, 0.5)",
                self.min_regime_frac
            )));
        }
        Ok(())
    }
}

/// Response, driver and the full lagged design on a fixed usable sample
/// `t = start .. T-1`. Every delay and lag order evaluated on one `TarData`
/// sees the same rows, so their sums of squares are comparable.
#[derive(Debug, Clone)]
pub struct TarData {
    y: Vec<f64>,
    x: Vec<f64>,
    start: usize,
    p_full: usize,
    q_full: usize,
    /// Row-major n × (1 + p_full + q_full).
    rows: Vec<f64>,
}

impl TarData {
    pub fn new(y: Vec<f64>, x: Vec<f64>, p_full: usize, q_full: usize, start: usize) -> Result<Self> {
        if y.len() != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "y has {} samples, x has {}",
                y.len(),
                x.len()
            )));
        }
        let start = start.max(p_full).max(q_full);
        if y.len() <= start + 1 {
            return Err(Error::SeriesTooShort {
                len: y.len(),
                need: start + 1,
            });
        }
        let mut data = Self {
            y,
            x,
            start,
            p_full,
            q_full,
            rows: Vec::new(),
        };
        data.rebuild_rows();
        Ok(data)
    }

    /// Usable sample starting after the largest lag and delay in `cfg`.
    pub fn for_config(y: Vec<f64>, x: Vec<f64>, cfg: &TarConfig) -> Result<Self> {
        let start = cfg.orders.max_lag().max(cfg.max_delay());
        Self::new(y, x, cfg.orders.max_p(), cfg.orders.max_q(), start)
    }

    fn rebuild_rows(&mut self) {
        let m = self.width();
        let n = self.n();
        let mut rows = Vec::with_capacity(n * m);
        for t in self.start..self.y.len() {
            rows.push(1.0);
            rows.extend((1..=self.p_full).map(|i| self.y[t - i]));
            rows.extend((1..=self.q_full).map(|i| self.x[t - i]));
        }
        self.rows = rows;
    }

    /// Same driver and sample, different response.
    pub(crate) fn with_response(&self, y: Vec<f64>) -> Self {
        let mut d = Self {
            y,
            x: self.x.clone(),
            start: self.start,
            p_full: self.p_full,
            q_full: self.q_full,
            rows: Vec::new(),
        };
        d.rebuild_rows();
        d
    }

    /// Number of usable observations.
    pub fn n(&self) -> usize {
        self.y.len() - self.start
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn responses(&self) -> &[f64] {
        &self.y[self.start..]
    }

    pub(crate) fn width(&self) -> usize {
        1 + self.p_full + self.q_full
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        let m = self.width();
        &self.rows[i * m..(i + 1) * m]
    }

    /// Column indices of the full design used by lag orders `(p, q)`.
    pub fn columns(&self, p: usize, q: usize) -> Vec<usize> {
        assert!(p <= self.p_full && q <= self.q_full, "orders exceed the data's lag window");
        let mut c = vec![0];
        c.extend(1..=p);
        c.extend((1..=q).map(|i| self.p_full + i));
        c
    }

    pub fn design(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), cols.len(), |i, j| self.row(i)[cols[j]])
    }

    /// Threshold variable aligned with the usable rows.
    pub fn threshold(&self, d: usize, u: ThresholdFn) -> Result<Vec<f64>> {
        if d == 0 || d > self.start {
            return Err(Error::InvalidConfig(format!(
                "delay {d} not covered by sample start {}",
                self.start
            )));
        }
        let src = if u == ThresholdFn::SelfExciting { &self.y } else { &self.x };
        Ok(src[self.start - d..src.len() - d].iter().map(|&v| u.apply(v)).collect())
    }

    fn check_orders(&self, orders: &LagOrders) -> Result<()> {
        if orders.max_p() > self.p_full || orders.max_q() > self.q_full {
            return Err(Error::InvalidConfig(format!(
                "orders {orders:?} exceed data lag window ({}, {})",
                self.p_full, self.q_full
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub ssr: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    pub dropped: Vec<usize>,
}

/// OLS of the linear ADL model via pivoted QR.
pub fn fit_linear(rows: &DMatrix<f64>, y: &[f64]) -> Result<LinearFit> {
    let s = lstsq(rows, y)?;
    Ok(LinearFit {
        coef: s.coef,
        ssr: s.ssr,
        residuals: s.residuals,
        dropped: s.dropped,
    })
}

/// Two independent regime regressions at a fixed threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFit {
    pub coef1: Vec<f64>,
    pub coef2: Vec<f64>,
    pub ssr1: f64,
    pub ssr2: f64,
    /// Residuals in time order.
    pub residuals: Vec<f64>,
    /// `true` where the row belongs to regime 1 (`thr <= r`).
    pub regime1: Vec<bool>,
    pub n1: usize,
    pub n2: usize,
}

impl SplitFit {
    pub fn ssr(&self) -> f64 {
        self.ssr1 + self.ssr2
    }
}

/// Arranged autoregression at threshold `r`: rows with `thr <= r` form
/// regime 1 and the rest regime 2; both must hold at least `min_size` rows.
pub fn fit_tar_at(rows: &DMatrix<f64>, y: &[f64], thr: &[f64], r: f64, min_size: usize) -> Result<SplitFit> {
    fit_split(rows, rows, y, thr, r, min_size, min_size)
}

pub(crate) fn fit_split(
    rows1: &DMatrix<f64>,
    rows2: &DMatrix<f64>,
    y: &[f64],
    thr: &[f64],
    r: f64,
    min1: usize,
    min2: usize,
) -> Result<SplitFit> {
    assert_eq!(thr.len(), y.len());
    let regime1: Vec<bool> = thr.iter().map(|&v| v <= r).collect();
    let idx1: Vec<usize> = (0..y.len()).filter(|&i| regime1[i]).collect();
    let idx2: Vec<usize> = (0..y.len()).filter(|&i| !regime1[i]).collect();
    let (n1, n2) = (idx1.len(), idx2.len());
    if n1 < min1.max(1) || n2 < min2.max(1) {
        return Err(Error::RegimeTooSmall {
            n1,
            n2,
            min: min1.max(min2).max(1),
        });
    }
    let sub = |rows: &DMatrix<f64>, idx: &[usize]| DMatrix::from_fn(idx.len(), rows.ncols(), |i, j| rows[(idx[i], j)]);
    let y1: Vec<f64> = idx1.iter().map(|&i| y[i]).collect();
    let y2: Vec<f64> = idx2.iter().map(|&i| y[i]).collect();
    let f1 = lstsq(&sub(rows1, &idx1), &y1)?;
    let f2 = lstsq(&sub(rows2, &idx2), &y2)?;
    let mut residuals = vec![0.0; y.len()];
    for (k, &i) in idx1.iter().enumerate() {
        residuals[i] = f1.residuals[k];
    }
    for (k, &i) in idx2.iter().enumerate() {
        residuals[i] = f2.residuals[k];
    }
    Ok(SplitFit {
        coef1: f1.coef,
        coef2: f2.coef,
        ssr1: f1.ssr,
        ssr2: f2.ssr,
        residuals,
        regime1,
        n1,
        n2,
    })
}

/// Estimated two-regime model at the selected `(r, d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TarFit {
    pub orders: LagOrders,
    pub threshold_fn: ThresholdFn,
    /// Intercept then `p1` autoregressive coefficients.
    pub phi1: Vec<f64>,
    pub theta1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub theta2: Vec<f64>,
    pub r_hat: f64,
    pub d_hat: usize,
    pub ssr: f64,
    pub ssr1: f64,
    pub ssr2: f64,
    pub n1: usize,
    pub n2: usize,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl TarFit {
    pub fn t_eff(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn has_theta(&self) -> bool {
        self.orders.q1 + self.orders.q2 > 0
    }
}

/// Smallest admissible regime size for `n` rows and regressor width `m`.
pub(crate) fn min_regime_size(n: usize, frac: f64, m: usize) -> usize {
    ((frac * n as f64).ceil() as usize).max(m)
}

/// Sorted row order and the feasible cut points for one delay.
#[derive(Debug, Clone)]
pub(crate) struct SplitPlan {
    pub d: usize,
    pub order: Vec<usize>,
    /// (rows in regime 1, threshold value), ascending in r.
    pub cuts: Vec<(usize, f64)>,
}

pub(crate) fn split_plan(thr: &[f64], d: usize, cfg: &TarConfig, widths: (usize, usize)) -> SplitPlan {
    let n = thr.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| thr[a].total_cmp(&thr[b]).then(a.cmp(&b)));
    let lo_skip = (cfg.trim * n as f64).floor() as usize;
    let (lo, hi) = (lo_skip, n.saturating_sub(1 + lo_skip));
    let min1 = min_regime_size(n, cfg.min_regime_frac, widths.0);
    let min2 = min_regime_size(n, cfg.min_regime_frac, widths.1);
    let mut cuts = Vec::new();
    if lo <= hi {
        let mut k = 0;
        while k < n {
            let v = thr[order[k]];
            let mut end = k + 1;
            while end < n && thr[order[end]] == v {
                end += 1;
            }
            // group [k, end) shares value v; n1 = end
            let in_band = end > lo && k <= hi;
            if in_band && end >= min1 && n - end >= min2 {
                cuts.push((end, v));
            }
            k = end;
        }
    }
    SplitPlan { d, order, cuts }
}

pub(crate) fn plans_for(data: &TarData, cfg: &TarConfig, widths: (usize, usize)) -> Result<Vec<SplitPlan>> {
    cfg.delays
        .iter()
        .map(|&d| Ok(split_plan(&data.threshold(d, cfg.threshold_fn)?, d, cfg, widths)))
        .collect()
}

/// Best cut of one plan: (combined ssr, cut index). `None` when no cut is
/// feasible.
pub(crate) fn sweep_min(
    data: &TarData,
    plan: &SplitPlan,
    cols1: Option<&[usize]>,
    cols2: Option<&[usize]>,
) -> Option<(f64, usize)> {
    let ssr = sweep_ssr(data, plan, cols1, cols2);
    let mut best: Option<(f64, usize)> = None;
    for (i, &s) in ssr.iter().enumerate() {
        if best.is_none_or(|(b, _)| s < b) {
            best = Some((s, i));
        }
    }
    best
}

/// Combined regime ssr at every cut of `plan`.
pub(crate) fn sweep_ssr(
    data: &TarData,
    plan: &SplitPlan,
    cols1: Option<&[usize]>,
    cols2: Option<&[usize]>,
) -> Vec<f64> {
    let m = data.width();
    let y = data.responses();
    let mut total = Gram::zeros(m);
    for i in 0..data.n() {
        total.add(data.row(i), y[i]);
    }
    let mut g1 = Gram::zeros(m);
    let mut pos = 0;
    let mut out = Vec::with_capacity(plan.cuts.len());
    for &(n1, _) in &plan.cuts {
        while pos < n1 {
            let i = plan.order[pos];
            g1.add(data.row(i), y[i]);
            pos += 1;
        }
        let g2 = total.minus(&g1);
        out.push(g1.ssr(cols1) + g2.ssr(cols2));
    }
    out
}

/// Linear-model ssr on the columns shared by both regimes, from cross-products.
pub(crate) fn linear_ssr_gram(data: &TarData, cols: &[usize]) -> f64 {
    let mut g = Gram::zeros(data.width());
    let y = data.responses();
    for i in 0..data.n() {
        g.add(data.row(i), y[i]);
    }
    g.ssr(Some(cols))
}

/// Location of the minimal combined ssr over the `(r, d)` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct GridMin {
    pub ssr: f64,
    pub r: f64,
    pub d: usize,
}

pub(crate) fn grid_min(data: &TarData, plans: &[SplitPlan], orders: &LagOrders) -> Option<GridMin> {
    let cols1 = data.columns(orders.p1, orders.q1);
    let cols2 = data.columns(orders.p2, orders.q2);
    let full = cols1.len() == data.width() && cols2.len() == data.width();
    let (c1, c2) = if full { (None, None) } else { (Some(&cols1[..]), Some(&cols2[..])) };
    let per_delay: Vec<Option<GridMin>> = plans
        .par_iter()
        .map(|plan| {
            sweep_min(data, plan, c1, c2).map(|(ssr, k)| GridMin {
                ssr,
                r: plan.cuts[k].1,
                d: plan.d,
            })
        })
        .collect();
    // plans are in ascending delay order; strict < keeps the smaller d on ties
    let mut best: Option<GridMin> = None;
    for g in per_delay.into_iter().flatten() {
        if best.is_none_or(|b| g.ssr < b.ssr) {
            best = Some(g);
        }
    }
    best
}

/// Refit both regimes by QR at a fixed `(r, d)`.
pub fn fit_at(data: &TarData, orders: &LagOrders, u: ThresholdFn, r: f64, d: usize, min_regime_frac: f64) -> Result<TarFit> {
    data.check_orders(orders)?;
    let thr = data.threshold(d, u)?;
    let cols1 = data.columns(orders.p1, orders.q1);
    let cols2 = data.columns(orders.p2, orders.q2);
    let n = data.n();
    let split = fit_split(
        &data.design(&cols1),
        &data.design(&cols2),
        data.responses(),
        &thr,
        r,
        min_regime_size(n, min_regime_frac, cols1.len()),
        min_regime_size(n, min_regime_frac, cols2.len()),
    )?;
    let split_coef = |c: &[f64], p: usize| (c[..=p].to_vec(), c[p + 1..].to_vec());
    let (phi1, theta1) = split_coef(&split.coef1, orders.p1);
    let (phi2, theta2) = split_coef(&split.coef2, orders.p2);
    Ok(TarFit {
        orders: *orders,
        threshold_fn: u,
        phi1,
        theta1,
        phi2,
        theta2,
        r_hat: r,
        d_hat: d,
        ssr: split.ssr(),
        ssr1: split.ssr1,
        ssr2: split.ssr2,
        n1: split.n1,
        n2: split.n2,
        residuals: split.residuals,
    })
}

/// Least-squares `(r, d)` over the trimmed grid: minimises the combined regime
/// ssr; ties go to the smaller delay, then the smaller threshold.
pub fn grid_fit(data: &TarData, cfg: &TarConfig) -> Result<TarFit> {
    cfg.validate()?;
    data.check_orders(&cfg.orders)?;
    let plans = plans_for(data, cfg, cfg.orders.widths())?;
    let best = grid_min(data, &plans, &cfg.orders).ok_or(Error::NoFeasibleSplit)?;
    fit_at(data, &cfg.orders, cfg.threshold_fn, best.r, best.d, cfg.min_regime_frac)
}

/// Linear ADL fit on the shared-order columns of `data`.
pub fn fit_linear_data(data: &TarData, orders: &LagOrders) -> Result<LinearFit> {
    data.check_orders(orders)?;
    let (p, q) = orders.common();
    fit_linear(&data.design(&data.columns(p, q)), data.responses())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::build_design;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn threshold_series_examples() {
        assert_eq!(threshold_series(&[1.0, -2.0, 3.0], 1, ThresholdFn::Abs).unwrap(), [1.0, 2.0]);
        assert_eq!(threshold_series(&[1.0, -2.0, 3.0, 4.0], 2, ThresholdFn::Identity).unwrap(), [1.0, -2.0]);
        assert_eq!(ThresholdFn::Square.apply(0.5), 0.25);
        assert!(threshold_series(&[1.0], 1, ThresholdFn::Identity).is_err());
        assert!(threshold_series(&[1.0, 2.0], 0, ThresholdFn::Identity).is_err());
    }

    #[test]
    fn data_threshold_alignment_matches_design() {
        let y: Vec<f64> = (0..20).map(f64::from).collect();
        let x: Vec<f64> = (100..120).map(f64::from).collect();
        let data = TarData::new(y.clone(), x.clone(), 2, 1, 3).unwrap();
        assert_eq!(data.n(), 17);
        assert_eq!(data.responses()[0], 3.0);
        assert_eq!(data.row(0), [1.0, 2.0, 1.0, 102.0]);
        // u(x_{t-2}) at t=3 is x_1
        assert_eq!(data.threshold(2, ThresholdFn::Identity).unwrap()[0], 101.0);
        assert_eq!(data.threshold(1, ThresholdFn::SelfExciting).unwrap()[0], 2.0);
        assert!(data.threshold(4, ThresholdFn::Identity).is_err());
    }

    #[test]
    fn exact_ar1_recovered() {
        let mut y = vec![1.0];
        for _ in 1..50 {
            let last = *y.last().unwrap();
            y.push(0.5 * last);
        }
        let d = build_design(&y, &y, 1, 0).unwrap();
        let f = fit_linear(&d.rows, &d.responses).unwrap();
        assert_relative_eq!(f.coef[1], 0.5, epsilon = 1e-12);
        assert!(f.ssr <= 1e-18 * y.iter().map(|v| v * v).sum::<f64>());
    }

    #[test]
    fn intercept_only_is_mean() {
        let y = noise(200, 3);
        let rows = DMatrix::from_element(200, 1, 1.0);
        let f = fit_linear(&rows, &y).unwrap();
        assert_relative_eq!(f.coef[0], y.iter().sum::<f64>() / 200.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_split_rejected() {
        let y = noise(100, 1);
        let rows = DMatrix::from_element(100, 1, 1.0);
        let thr = noise(100, 2);
        let max = thr.iter().cloned().fold(f64::MIN, f64::max);
        assert!(matches!(fit_tar_at(&rows, &y, &thr, max, 1), Err(Error::RegimeTooSmall { n2: 0, .. })));
        let ok = fit_tar_at(&rows, &y, &thr, 0.0, 1).unwrap();
        assert_eq!(ok.n1 + ok.n2, 100);
        assert_relative_eq!(
            ok.ssr(),
            ok.residuals.iter().map(|e| e * e).sum::<f64>(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn split_plan_respects_trim_and_ties() {
        let thr = vec![1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let cfg = TarConfig {
            trim: 0.1,
            min_regime_frac: 0.2,
            ..TarConfig::new(0, 0, [1])
        };
        let plan = split_plan(&thr, 1, &cfg, (1, 1));
        // tie groups end at 2, 3, 6, 7, 8, 9, 10; need n1 >= 2 and n2 >= 2
        let n1s: Vec<usize> = plan.cuts.iter().map(|c| c.0).collect();
        assert_eq!(n1s, [2, 3, 6, 7, 8]);
        assert_eq!(plan.cuts[2].1, 3.0);
    }

    #[test]
    fn single_cell_grid_equals_fit_at() {
        let x = noise(300, 5);
        let e = noise(300, 6);
        let mut y = vec![0.0; 300];
        for t in 1..300 {
            let a = if x[t - 1] <= 0.0 { 0.6 } else { -0.6 };
            y[t] = a * y[t - 1] + e[t];
        }
        let cfg = TarConfig {
            trim: 0.499,
            ..TarConfig::new(1, 0, [1])
        };
        let data = TarData::for_config(y, x, &cfg).unwrap();
        let plan = &plans_for(&data, &cfg, cfg.orders.widths()).unwrap()[0];
        assert_eq!(plan.cuts.len(), 1);
        let g = grid_fit(&data, &cfg).unwrap();
        let rows = data.design(&data.columns(1, 0));
        let thr = data.threshold(1, ThresholdFn::Identity).unwrap();
        let direct = fit_tar_at(&rows, data.responses(), &thr, plan.cuts[0].1, 1).unwrap();
        assert_relative_eq!(g.ssr, direct.ssr(), max_relative = 1e-12);
        assert_eq!(g.phi1, direct.coef1);
    }

    #[test]
    fn grid_errors() {
        let data = TarData::new(noise(40, 1), vec![0.0; 40], 1, 1, 1).unwrap();
        // constant driver: one tie group, no interior cut
        assert!(matches!(grid_fit(&data, &TarConfig::new(1, 1, [1])), Err(Error::NoFeasibleSplit)));
        let bad = TarConfig { trim: 0.6, ..TarConfig::new(1, 1, [1]) };
        assert!(grid_fit(&data, &bad).is_err());
        assert!(TarConfig::new(0, 1, [1]).validate().is_err());
    }
}
