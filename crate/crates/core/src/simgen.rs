//! Generators with known causal structure: k-regime TAR processes, causal
//! driver/response pairs, and factor-confounded networks.

use log::warn;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::series::ChannelMatrix;
use crate::tar::ThresholdFn;

/// Samples beyond this magnitude count as an explosion.
pub const EXPLOSION_LIMIT: f64 = 1e8;
pub const DEFAULT_BURN_IN: usize = 500;

/// Coefficients of one regime: intercept, autoregressive and driver lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RegimeSpec {
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub ar: Vec<f64>,
    #[serde(default)]
    pub x_coeffs: Vec<f64>,
}

impl RegimeSpec {
    pub fn new(intercept: f64, ar: &[f64], x_coeffs: &[f64]) -> Self {
        Self {
            intercept,
            ar: ar.to_vec(),
            x_coeffs: x_coeffs.to_vec(),
        }
    }

    pub fn ar(ar: &[f64]) -> Self {
        Self::new(0.0, ar, &[])
    }

    /// Σ|φ_i| ≥ 1: the regime alone is not guaranteed stationary.
    pub fn explosive_alone(&self) -> bool {
        self.ar.iter().map(|c| c.abs()).sum::<f64>() >= 1.0
    }

    fn validate(&self) -> Result<()> {
        let finite = self.intercept.is_finite() && self.ar.iter().chain(&self.x_coeffs).all(|c| c.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("regime coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// A k-regime TAR process. The active regime at t is the j with
/// `r_{j-1} < u(z_{t-d}) ≤ r_j`, where `r_0 = -∞` and `r_k = +∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TarProcessSpec {
    pub regimes: Vec<RegimeSpec>,
    /// Strictly increasing, one fewer than `regimes`.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default = "one")]
    pub delay: usize,
    #[serde(default)]
    pub threshold_fn: ThresholdFn,
    #[serde(default = "unit")]
    pub noise_sd: f64,
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}

impl TarProcessSpec {
    pub fn linear(regime: RegimeSpec) -> Self {
        Self {
            regimes: vec![regime],
            thresholds: Vec::new(),
            delay: 1,
            threshold_fn: ThresholdFn::Identity,
            noise_sd: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(Error::InvalidConfig("at least one regime required".into()));
        }
        if self.thresholds.len() + 1 != self.regimes.len() {
            return Err(Error::InvalidConfig(format!(
                "{} regimes need {} thresholds, got {}",
                self.regimes.len(),
                self.regimes.len() - 1,
                self.thresholds.len()
            )));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) || self.thresholds.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidConfig("thresholds must be finite and strictly increasing".into()));
        }
        if self.delay == 0 {
            return Err(Error::InvalidConfig("delay must be at least 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidConfig("noise_sd must be finite and non-negative".into()));
        }
        for r in &self.regimes {
            r.validate()?;
            if r.explosive_alone() {
                warn!("regime with sum |ar| >= 1; the process may still be stationary overall");
            }
        }
        Ok(())
    }

    /// Regime index (0-based) for threshold value `v`.
    pub fn regime_of(&self, v: f64) -> usize {
        self.thresholds.iter().take_while(|&&r| v > r).count()
    }

    fn uses_driver_lags(&self) -> bool {
        self.regimes.iter().any(|r| !r.x_coeffs.is_empty())
    }
}

/// Runs the recursion on a full path (burn-in included). Lagged values before
/// the first sample are taken as zero.
fn simulate(spec: &TarProcessSpec, driver: Option<&[f64]>, shocks: &[f64]) -> Result<Vec<f64>> {
    let total = shocks.len();
    let mut y = vec![0.0; total];
    for t in 0..total {
        let src = match driver {
            Some(z) => z,
            None => &y[..],
        };
        let regime = if spec.regimes.len() == 1 || t < spec.delay {
            if spec.regimes.len() == 1 {
                0
            } else {
                spec.regime_of(0.0)
            }
        } else {
            spec.regime_of(spec.threshold_fn.apply(src[t - spec.delay]))
        };
        let reg = &spec.regimes[regime];
        let mut v = reg.intercept;
        for (i, c) in reg.ar.iter().enumerate() {
            if t > i {
                v += c * y[t - i - 1];
            }
        }
        if let Some(z) = driver {
            for (i, c) in reg.x_coeffs.iter().enumerate() {
                if t > i {
                    v += c * z[t - i - 1];
                }
            }
        }
        v += spec.noise_sd * shocks[t];
        if !v.is_finite() || v.abs() > EXPLOSION_LIMIT {
            return Err(Error::NonFiniteSample(t));
        }
        y[t] = v;
    }
    Ok(y)
}

fn gaussian(n: usize, seed: u64, key: &[u64]) -> Vec<f64> {
    let mut rng = substream(seed, key);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `t` samples of a k-regime TAR process after discarding `burn_in`.
///
/// With `driver = None` the threshold variable is the process's own past
/// (SETAR). A driver must cover the full `burn_in + t` path; its lags also
/// feed the regimes' `x_coeffs`.
pub fn gen_tar(spec: &TarProcessSpec, driver: Option<&[f64]>, t: usize, burn_in: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if burn_in < 200 {
        return Err(Error::InvalidConfig(format!("burn_in {burn_in} below 200")));
    }
    let total = t + burn_in;
    match driver {
        Some(z) if z.len() != total => {
            return Err(Error::DimensionMismatch(format!(
                "driver has {} samples, need burn_in + t = {total}",
                z.len()
            )))
        }
        None if spec.uses_driver_lags() => {
            return Err(Error::InvalidConfig("x_coeffs given without a driver series".into()))
        }
        _ => {}
    }
    let shocks = gaussian(total, seed, &[0]);
    let y = simulate(spec, driver, &shocks)?;
    Ok(y[burn_in..].to_vec())
}

/// Driver `X` (linear AR) and response `Y` following the two-regime model
/// with `u(X_{t-d})` switching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalPairSpec {
    /// Autoregression of the driver; its `x_coeffs` are ignored.
    #[serde(default)]
    pub x: RegimeSpec,
    #[serde(default = "unit")]
    pub x_noise_sd: f64,
    pub regime1: RegimeSpec,
    pub regime2: RegimeSpec,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default = "one")]
    pub delay: usize,
    #[serde(default)]
    pub threshold_fn: ThresholdFn,
    #[serde(default = "unit")]
    pub y_noise_sd: f64,
}

impl CausalPairSpec {
    /// White-noise driver, unit innovations.
    pub fn two_regime(regime1: RegimeSpec, regime2: RegimeSpec, threshold: f64, delay: usize) -> Self {
        Self {
            x: RegimeSpec::default(),
            x_noise_sd: 1.0,
            regime1,
            regime2,
            threshold,
            delay,
            threshold_fn: ThresholdFn::Identity,
            y_noise_sd: 1.0,
        }
    }

    pub fn response_process(&self) -> TarProcessSpec {
        TarProcessSpec {
            regimes: vec![self.regime1.clone(), self.regime2.clone()],
            thresholds: vec![self.threshold],
            delay: self.delay,
            threshold_fn: self.threshold_fn,
            noise_sd: self.y_noise_sd,
        }
    }

    fn driver_process(&self) -> TarProcessSpec {
        TarProcessSpec {
            noise_sd: self.x_noise_sd,
            ..TarProcessSpec::linear(RegimeSpec::new(self.x.intercept, &self.x.ar, &[]))
        }
    }
}

/// Returns `(x, y)`, each of length `t`.
pub fn gen_causal_pair(spec: &CausalPairSpec, t: usize, burn_in: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if burn_in < 200 {
        return Err(Error::InvalidConfig(format!("burn_in {burn_in} below 200")));
    }
    let total = t + burn_in;
    let xp = spec.driver_process();
    xp.validate()?;
    let x = simulate(&xp, None, &gaussian(total, seed, &[1]))?;
    if spec.threshold_fn == ThresholdFn::SelfExciting {
        return Err(Error::InvalidConfig("a causal pair switches on the driver, not on itself".into()));
    }
    let yp = spec.response_process();
    yp.validate()?;
    let y = simulate(&yp, Some(&x), &gaussian(total, seed, &[2]))?;
    Ok((x[burn_in..].to_vec(), y[burn_in..].to_vec()))
}

/// A causal pair embedded in a network whose channels share latent factors.
/// Channel order: X, Y, then the confounder channels Z1..Zk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub pair: CausalPairSpec,
    pub n_confounders: usize,
    /// Latent factor processes.
    #[serde(default)]
    pub factors: Vec<TarProcessSpec>,
    /// One row per channel (X, Y, Z1..Zk), one column per factor.
    #[serde(default)]
    pub loadings: Vec<Vec<f64>>,
    /// Idiosyncratic noise sd of the Z channels.
    #[serde(default = "unit")]
    pub noise_scale: f64,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

impl NetworkSpec {
    pub fn n_nodes(&self) -> usize {
        2 + self.n_confounders
    }

    pub fn labels(&self) -> Vec<String> {
        self.labels.clone().unwrap_or_else(|| {
            let mut l = vec!["X".to_string(), "Y".to_string()];
            l.extend((1..=self.n_confounders).map(|k| format!("Z{k}")));
            l
        })
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.labels().len() != n {
            return Err(Error::InvalidConfig(format!("{n} channels need {n} labels")));
        }
        let shaped = self.loadings.len() == n && self.loadings.iter().all(|r| r.len() == self.factors.len());
        if (!self.factors.is_empty() || !self.loadings.is_empty()) && !shaped {
            return Err(Error::InvalidConfig(format!(
                "loadings must be {n} x {} (channels x factors)",
                self.factors.len()
            )));
        }
        if self.loadings.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("loadings must be finite".into()));
        }
        Ok(())
    }
}

/// Network recording plus its ground-truth decomposition.
#[derive(Debug, Clone)]
pub struct ConfoundedNetwork {
    pub matrix: ChannelMatrix,
    pub clean_x: Vec<f64>,
    pub clean_y: Vec<f64>,
    pub factors: Vec<Vec<f64>>,
}

pub fn gen_confounded_network(spec: &NetworkSpec, t: usize, seed: u64) -> Result<ConfoundedNetwork> {
    spec.validate()?;
    let burn = DEFAULT_BURN_IN;
    let (x, y) = gen_causal_pair(&spec.pair, t, burn, crate::rng::derive_seed(seed, &[10]))?;
    let factors: Vec<Vec<f64>> = spec
        .factors
        .iter()
        .enumerate()
        .map(|(k, f)| gen_tar(f, None, t, burn, crate::rng::derive_seed(seed, &[20, k as u64])))
        .collect::<Result<_>>()?;
    let load = |ch: usize, i: usize| -> f64 {
        factors
            .iter()
            .enumerate()
            .map(|(k, f)| spec.loadings[ch][k] * f[i])
            .sum()
    };
    let mut columns = Vec::with_capacity(spec.n_nodes());
    columns.push((0..t).map(|i| x[i] + load(0, i)).collect());
    columns.push((0..t).map(|i| y[i] + load(1, i)).collect());
    for z in 0..spec.n_confounders {
        let noise = gaussian(t, seed, &[30, z as u64]);
        columns.push((0..t).map(|i| load(2 + z, i) + spec.noise_scale * noise[i]).collect());
    }
    let matrix = ChannelMatrix::new(spec.labels(), columns, crate::series::DEFAULT_RATE_HZ)?;
    Ok(ConfoundedNetwork {
        matrix,
        clean_x: x,
        clean_y: y,
        factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{mean, variance};

    #[test]
    fn ar1_autocorrelation() {
        let spec = TarProcessSpec::linear(RegimeSpec::ar(&[0.5]));
        let y = gen_tar(&spec, None, 10_000, 500, 42).unwrap();
        let m = mean(&y);
        let num: f64 = y.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        let den: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
        let rho = num / den;
        assert!((rho - 0.5).abs() <= 3.0 / 100.0, "rho = {rho}");
    }

    #[test]
    fn white_noise_variance() {
        let spec = TarProcessSpec::linear(RegimeSpec::default());
        let y = gen_tar(&spec, None, 10_000, 500, 7).unwrap();
        assert!((variance(&y) - 1.0).abs() < 0.05);
    }

    #[test]
    fn seeds_replay_and_differ() {
        let spec = TarProcessSpec {
            regimes: vec![RegimeSpec::ar(&[0.6]), RegimeSpec::ar(&[-0.4])],
            thresholds: vec![0.0],
            ..TarProcessSpec::linear(RegimeSpec::default())
        };
        let a = gen_tar(&spec, None, 500, 200, 1).unwrap();
        let b = gen_tar(&spec, None, 500, 200, 1).unwrap();
        let c = gen_tar(&spec, None, 500, 200, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn regime_partition() {
        let spec = TarProcessSpec {
            regimes: vec![RegimeSpec::default(); 3],
            thresholds: vec![-1.0, 1.0],
            ..TarProcessSpec::linear(RegimeSpec::default())
        };
        assert_eq!(spec.regime_of(-1.0), 0);
        assert_eq!(spec.regime_of(-0.5), 1);
        assert_eq!(spec.regime_of(1.0), 1);
        assert_eq!(spec.regime_of(1.5), 2);
        let bad = TarProcessSpec {
            thresholds: vec![1.0, -1.0],
            ..spec
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn explosion_detected() {
        let spec = TarProcessSpec::linear(RegimeSpec::ar(&[1.5]));
        assert!(matches!(gen_tar(&spec, None, 1000, 500, 0), Err(Error::NonFiniteSample(_))));
        assert!(gen_tar(&TarProcessSpec::linear(RegimeSpec::default()), None, 10, 100, 0).is_err());
    }

    #[test]
    fn zero_loadings_leave_pair_untouched() {
        let spec = NetworkSpec {
            pair: CausalPairSpec::two_regime(RegimeSpec::ar(&[0.5]), RegimeSpec::ar(&[-0.5]), 0.0, 1),
            n_confounders: 3,
            factors: vec![TarProcessSpec::linear(RegimeSpec::ar(&[0.7]))],
            loadings: vec![vec![0.0]; 5],
            noise_scale: 1.0,
            labels: None,
        };
        let net = gen_confounded_network(&spec, 300, 9).unwrap();
        assert_eq!(net.matrix.channel(0), &net.clean_x[..]);
        assert_eq!(net.matrix.channel(1), &net.clean_y[..]);
        assert_eq!(net.matrix.labels(), ["X", "Y", "Z1", "Z2", "Z3"]);
    }
}
