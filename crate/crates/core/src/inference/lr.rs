//! sup-LR test of linearity against the two-regime alternative, with the
//! null distribution approximated by a residual bootstrap.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exceedance_p;
use crate::error::{Error, Result};
use crate::linalg::{lstsq, sym_inverse, Gram};
use crate::rng::substream;
use crate::tar::{grid_min, linear_ssr_gram, plans_for, SplitPlan, TarConfig, TarData, ThresholdFn};

/// `T (S_M1 - S_M2) / S_M2`.
pub fn lr_statistic(linear_ssr: f64, tar_ssr: f64, t_eff: usize) -> Result<f64> {
    if tar_ssr <= 0.0 {
        return Err(Error::ZeroResidual);
    }
    Ok((t_eff as f64 * (linear_ssr - tar_ssr) / tar_ssr).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub seed: u64,
    /// Heteroskedasticity-consistent statistic with a ±1 wild bootstrap.
    pub hetero_robust: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replications: 500,
            seed: 0,
            hetero_robust: false,
        }
    }
}

impl BootstrapOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self {
            replications,
            seed,
            hetero_robust: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTestResult {
    pub lr: f64,
    pub p_boot: f64,
    #[serde(skip)]
    pub boot_draws: Vec<f64>,
    pub r_hat: f64,
    pub d_hat: usize,
    pub t_eff: usize,
    pub hetero_robust: bool,
}

struct Observed {
    stat: f64,
    r: f64,
    d: usize,
}

/// Tests the linear ADL model against the two-regime TAR over the grid in
/// `cfg`. Deterministic for a given seed regardless of thread count.
pub fn bootstrap_linearity(data: &TarData, cfg: &TarConfig, opts: &BootstrapOptions) -> Result<LrTestResult> {
    cfg.validate()?;
    if opts.replications < 99 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least 99 replications, got {}",
            opts.replications
        )));
    }
    let (p, q) = cfg.orders.common();
    let lin_cols = data.columns(p, q);
    let lin = lstsq(&data.design(&lin_cols), data.responses())?;
    let plans = plans_for(data, cfg, cfg.orders.widths())?;
    let obs = statistic(data, cfg, &plans, &lin_cols, &lin.residuals, opts.hetero_robust)?;

    let centered: Vec<f64> = {
        let m = lin.residuals.iter().sum::<f64>() / lin.residuals.len() as f64;
        lin.residuals.iter().map(|e| e - m).collect()
    };
    let reuse_plans = cfg.threshold_fn != ThresholdFn::SelfExciting;

    let draws: Vec<f64> = (0..opts.replications)
        .into_par_iter()
        .map(|b| -> Result<f64> {
            let mut rng = substream(opts.seed, &[b as u64]);
            let n = centered.len();
            let shocks: Vec<f64> = if opts.hetero_robust {
                lin.residuals
                    .iter()
                    .map(|&e| if rng.random::<bool>() { e } else { -e })
                    .collect()
            } else {
                (0..n).map(|_| centered[rng.random_range(0..n)]).collect()
            };
            let ystar = rebuild(data, p, q, &lin.coef, &shocks);
            let boot = data.with_response(ystar);
            let own_plans;
            let plans_b = if reuse_plans {
                &plans
            } else {
                own_plans = plans_for(&boot, cfg, cfg.orders.widths())?;
                &own_plans
            };
            let null_res = if opts.hetero_robust {
                lstsq(&boot.design(&lin_cols), boot.responses())?.residuals
            } else {
                Vec::new()
            };
            match statistic(&boot, cfg, plans_b, &lin_cols, &null_res, opts.hetero_robust) {
                Ok(o) => Ok(o.stat),
                // a bootstrap sample without a feasible split carries no evidence
                Err(Error::NoFeasibleSplit) => Ok(0.0),
                Err(Error::ZeroResidual) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    Ok(LrTestResult {
        lr: obs.stat,
        p_boot: exceedance_p(obs.stat, &draws),
        boot_draws: draws,
        r_hat: obs.r,
        d_hat: obs.d,
        t_eff: data.n(),
        hetero_robust: opts.hetero_robust,
    })
}

/// Regenerates responses from the fitted linear recursion, holding the
/// pre-sample values and the driver fixed.
fn rebuild(data: &TarData, p: usize, q: usize, coef: &[f64], shocks: &[f64]) -> Vec<f64> {
    let (y, x, start) = (data.y(), data.x(), data.start());
    let mut out = y.to_vec();
    for t in start..y.len() {
        let mut v = coef[0];
        for i in 1..=p {
            v += coef[i] * out[t - i];
        }
        for j in 1..=q {
            v += coef[p + j] * x[t - j];
        }
        out[t] = v + shocks[t - start];
    }
    out
}

fn statistic(
    data: &TarData,
    cfg: &TarConfig,
    plans: &[SplitPlan],
    lin_cols: &[usize],
    null_residuals: &[f64],
    hetero: bool,
) -> Result<Observed> {
    if hetero {
        return sup_robust(data, plans, lin_cols, null_residuals);
    }
    let best = grid_min(data, plans, &cfg.orders).ok_or(Error::NoFeasibleSplit)?;
    let s1 = linear_ssr_gram(data, lin_cols);
    Ok(Observed {
        stat: lr_statistic(s1, best.ssr, data.n())?,
        r: best.r,
        d: best.d,
    })
}

/// sup over the grid of the heteroskedasticity-consistent Wald statistic for
/// equal regime coefficients, with the variance built from null residuals.
fn sup_robust(data: &TarData, plans: &[SplitPlan], cols: &[usize], null_res: &[f64]) -> Result<Observed> {
    let m = cols.len();
    let y = data.responses();
    let n = data.n();
    let sub = |row: &[f64]| -> Vec<f64> { cols.iter().map(|&c| row[c]).collect() };
    let rows: Vec<Vec<f64>> = (0..n).map(|i| sub(data.row(i))).collect();

    let mut total = Gram::zeros(m);
    let mut vtotal = Gram::zeros(m);
    for i in 0..n {
        total.add(&rows[i], y[i]);
        vtotal.add_outer(&rows[i], null_res[i] * null_res[i]);
    }

    let per_plan: Vec<Option<Observed>> = plans
        .par_iter()
        .map(|plan| {
            let mut g1 = Gram::zeros(m);
            let mut v1 = Gram::zeros(m);
            let mut pos = 0;
            let mut best: Option<Observed> = None;
            for &(n1, r) in &plan.cuts {
                while pos < n1 {
                    let i = plan.order[pos];
                    g1.add(&rows[i], y[i]);
                    v1.add_outer(&rows[i], null_res[i] * null_res[i]);
                    pos += 1;
                }
                let stat = robust_contrast(&g1, &total.minus(&g1), &v1, &vtotal.minus(&v1));
                if best.as_ref().is_none_or(|b| stat > b.stat) {
                    best = Some(Observed { stat, r, d: plan.d });
                }
            }
            best
        })
        .collect();
    let mut best: Option<Observed> = None;
    for o in per_plan.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| o.stat > b.stat) {
            best = Some(o);
        }
    }
    best.ok_or(Error::NoFeasibleSplit)
}

fn full_sym(g: &Gram) -> DMatrix<f64> {
    let m = g.m;
    DMatrix::from_fn(m, m, |i, j| if i >= j { g.xtx[i * m + j] } else { g.xtx[j * m + i] })
}

fn robust_contrast(g1: &Gram, g2: &Gram, v1: &Gram, v2: &Gram) -> f64 {
    let (m1inv, _) = sym_inverse(&full_sym(g1));
    let (m2inv, _) = sym_inverse(&full_sym(g2));
    let b1 = &m1inv * DVector::from_column_slice(&g1.xty);
    let b2 = &m2inv * DVector::from_column_slice(&g2.xty);
    let c1 = &m1inv * full_sym(v1) * &m1inv;
    let c2 = &m2inv * full_sym(v2) * &m2inv;
    let diff = b1 - b2;
    let (cinv, _) = sym_inverse(&(c1 + c2));
    diff.dot(&(cinv * &diff)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{gen_causal_pair, CausalPairSpec, RegimeSpec};

    #[test]
    fn lr_examples() {
        assert_eq!(lr_statistic(100.0, 100.0, 50).unwrap(), 0.0);
        assert!((lr_statistic(120.0, 100.0, 100).unwrap() - 20.0).abs() < 1e-12);
        assert!(matches!(lr_statistic(1.0, 0.0, 10), Err(Error::ZeroResidual)));
    }

    fn pair(gap: f64, seed: u64) -> TarData {
        let spec = CausalPairSpec::two_regime(
            RegimeSpec::ar(&[0.5 * gap]),
            RegimeSpec::ar(&[-0.5 * gap]),
            0.0,
            1,
        );
        let (x, y) = gen_causal_pair(&spec, 400, 500, seed).unwrap();
        TarData::for_config(y, x, &TarConfig::new(1, 1, [1, 2])).unwrap()
    }

    #[test]
    fn replay_exact_and_detects_strong_threshold() {
        let cfg = TarConfig::new(1, 1, [1, 2]);
        let data = pair(1.2, 11);
        let opts = BootstrapOptions::new(99, 5);
        let a = bootstrap_linearity(&data, &cfg, &opts).unwrap();
        let b = bootstrap_linearity(&data, &cfg, &opts).unwrap();
        assert_eq!(a.p_boot.to_bits(), b.p_boot.to_bits());
        assert_eq!(a.boot_draws, b.boot_draws);
        assert!(a.p_boot <= 0.02, "p = {}", a.p_boot);
        assert_eq!(a.d_hat, 1);
        let expected = (1 + a.boot_draws.iter().filter(|&&d| d >= a.lr).count()) as f64 / 100.0;
        assert_eq!(a.p_boot, expected);
    }

    #[test]
    fn robust_variant_runs_and_detects() {
        let cfg = TarConfig::new(1, 1, [1]);
        let data = pair(1.2, 3);
        let opts = BootstrapOptions {
            hetero_robust: true,
            ..BootstrapOptions::new(99, 1)
        };
        let r = bootstrap_linearity(&data, &cfg, &opts).unwrap();
        assert!(r.hetero_robust);
        assert!(r.p_boot <= 0.05, "p = {}", r.p_boot);
    }

    #[test]
    fn too_few_replications() {
        let cfg = TarConfig::new(1, 1, [1]);
        assert!(bootstrap_linearity(&pair(0.0, 1), &cfg, &BootstrapOptions::new(50, 0)).is_err());
    }

    #[test]
    fn self_exciting_threshold() {
        let cfg = TarConfig::new(1, 0, [1]).with_threshold_fn(ThresholdFn::SelfExciting);
        let data = pair(0.0, 2);
        let r = bootstrap_linearity(&data, &cfg, &BootstrapOptions::new(99, 0)).unwrap();
        assert!((0.0..=1.0).contains(&r.p_boot));
    }
}
