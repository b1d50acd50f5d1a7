//! Modified Schwarz criterion `Δ_T − 2 ln(T) K` for choosing a parsimonious
//! causal representation.

use serde::{Deserialize, Serialize};

use super::wald::{sup_wald, ThetaSelector};
use crate::error::{Error, Result};
use crate::tar::{fit_at, grid_fit, LagOrders, TarConfig, TarData, TarFit};

pub fn msc_value(delta: f64, t_eff: usize, k_params: usize) -> f64 {
    delta - 2.0 * (t_eff as f64).ln() * k_params as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscCandidate {
    pub orders: LagOrders,
    pub delta: f64,
    pub k_params: usize,
    pub msc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscRecord {
    pub msc: f64,
    pub delta: f64,
    pub k_params: usize,
    pub gamma: LagOrders,
    pub fit: TarFit,
    pub t_eff: usize,
    pub candidates: Vec<MscCandidate>,
}

impl MscRecord {
    /// Threshold Granger causality: the selected model keeps driver lags.
    pub fn tgc(&self) -> bool {
        self.fit.has_theta()
    }
}

/// Index of the largest criterion; the earlier candidate wins ties.
pub(crate) fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Maximises the criterion over `order_grid`. `base` supplies delays,
/// threshold functional and trimming; its orders are ignored. Candidates
/// without driver lags have Δ_T = 0.
pub fn msc_select(y: &[f64], x: &[f64], order_grid: &[LagOrders], base: &TarConfig) -> Result<MscRecord> {
    if order_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let p_full = order_grid.iter().map(|o| o.max_p()).max().unwrap_or(0);
    let q_full = order_grid.iter().map(|o| o.max_q()).max().unwrap_or(0);
    let start = p_full.max(q_full).max(base.max_delay());
    let data = TarData::new(y.to_vec(), x.to_vec(), p_full, q_full, start)?;
    let t_eff = data.n();

    let mut scored = Vec::with_capacity(order_grid.len());
    for orders in order_grid {
        let cfg = TarConfig {
            orders: *orders,
            ..base.clone()
        };
        cfg.validate()?;
        let (delta, fit) = if orders.q1 + orders.q2 == 0 {
            (0.0, grid_fit(&data, &cfg)?)
        } else {
            let w = sup_wald(&data, &cfg, &ThetaSelector::All)?;
            let fit = fit_at(&data, orders, cfg.threshold_fn, w.r, w.d, cfg.min_regime_frac)?;
            (w.delta, fit)
        };
        let k = orders.n_params();
        scored.push((
            MscCandidate {
                orders: *orders,
                delta,
                k_params: k,
                msc: msc_value(delta, t_eff, k),
            },
            fit,
        ));
    }
    let values: Vec<f64> = scored.iter().map(|(c, _)| c.msc).collect();
    let best = argmax_first(&values).ok_or(Error::EmptyGrid)?;
    let candidates: Vec<MscCandidate> = scored.iter().map(|(c, _)| c.clone()).collect();
    let (chosen, fit) = scored.swap_remove(best);
    Ok(MscRecord {
        msc: chosen.msc,
        delta: chosen.delta,
        k_params: chosen.k_params,
        gamma: chosen.orders,
        fit,
        t_eff,
        candidates,
    })
}
