//! Confound neutralization with spectral dynamic principal components.
//!
//! The channels outside the pair of interest are summarised by a few
//! two-sided filtered combinations (dynamic principal components computed in
//! the frequency domain). The pair is then regressed on those score series
//! and replaced by the residuals.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::series::{mean, ChannelMatrix};

pub const DEFAULT_TARGET_VAR: f64 = 0.85;
pub const DEFAULT_FILTER_HALF_LEN: usize = 10;
pub const DEFAULT_REG_LAGS: usize = 2;
pub const DEFAULT_MAX_COMPONENTS: usize = 3;

/// Smoothed cross-spectral matrices at the Fourier frequencies `2πk/T`,
/// `k = 1..=⌊T/2⌋`.
#[derive(Debug, Clone)]
pub struct SpectralDensity {
    pub freqs: Vec<f64>,
    pub matrices: Vec<DMatrix<Complex64>>,
    pub span: usize,
    pub len: usize,
}

impl SpectralDensity {
    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    /// Eigenvalues per frequency in decreasing order.
    pub fn eigenvalues(&self) -> Result<Vec<Vec<f64>>> {
        self.matrices.iter().map(|m| Ok(sorted_eigen(m)?.0)).collect()
    }
}

/// Default smoothing half-width `⌊√T⌋`.
pub fn default_span(len: usize) -> usize {
    ((len as f64).sqrt().floor() as usize).max(1)
}

pub fn estimate_spectrum(z: &[Vec<f64>], span: usize) -> Result<SpectralDensity> {
    let n = z.len();
    if n == 0 {
        return Err(Error::InvalidMatrix("no channels to summarise".into()));
    }
    let len = z[0].len();
    if z.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidMatrix("channels differ in length".into()));
    }
    let span = span.max(1);
    if len < 4 * span {
        return Err(Error::TooShort { len, need: 4 * span });
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let mut dft: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for (i, c) in z.iter().enumerate() {
        let m = mean(c);
        if c.iter().all(|&v| (v - m).abs() <= 1e-12 * m.abs().max(1.0)) {
            return Err(Error::ZeroVarianceChannel(i));
        }
        let mut buf: Vec<Complex64> = c.iter().map(|&v| Complex64::new(v - m, 0.0)).collect();
        fft.process(&mut buf);
        dft.push(buf);
    }
    // Modified Daniell smoothing: weight 1/(2m) inside the window and 1/(4m)
    // at its two ends. The zero frequency is taken from its neighbour since
    // centring removes it.
    let scale = 1.0 / (2.0 * PI * len as f64);
    let raw = |k: usize| -> DMatrix<Complex64> {
        let k = if k == 0 { 1 } else { k };
        DMatrix::from_fn(n, n, |a, b| dft[a][k] * dft[b][k].conj() * scale)
    };
    let f = len / 2;
    // prefix sums over the stretch k = 1 - span ..= f + span of the circle
    let lo = len - span + 1;
    let mut prefix = vec![DMatrix::<Complex64>::zeros(n, n)];
    for e in 0..f + 2 * span {
        let next = &prefix[e] + raw((lo + e) % len);
        prefix.push(next);
    }
    let inner = Complex64::new(1.0 / (2 * span) as f64, 0.0);
    let edge = Complex64::new(1.0 / (4 * span) as f64, 0.0);
    let mut freqs = Vec::with_capacity(f);
    let mut matrices = Vec::with_capacity(f);
    for k in 1..=f {
        // position of frequency k - span in the stretch is k - 1
        let a = k - 1;
        let b = k - 1 + 2 * span;
        let mid = &prefix[b] - &prefix[a + 1];
        let ends = raw((lo + a) % len) + raw((lo + b) % len);
        let acc = mid * inner + ends * edge;
        let herm = (&acc + acc.adjoint()) * Complex64::new(0.5, 0.0);
        freqs.push(2.0 * PI * k as f64 / len as f64);
        matrices.push(herm);
    }
    Ok(SpectralDensity {
        freqs,
        matrices,
        span,
        len,
    })
}

/// Eigenpairs sorted by decreasing eigenvalue.
fn sorted_eigen(m: &DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), 1e-14, 10_000).ok_or_else(|| Error::EigenFailure(format!("no convergence on a {n}x{n} spectral matrix")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpcaOptions {
    pub target_var: f64,
    pub filter_half_len: usize,
    /// `None` lets the variance target alone decide.
    pub max_components: Option<usize>,
    pub reg_lags: usize,
    /// Smoothing half-width; `None` means `⌊√T⌋`.
    pub span: Option<usize>,
}

impl Default for DpcaOptions {
    fn default() -> Self {
        Self {
            target_var: DEFAULT_TARGET_VAR,
            filter_half_len: DEFAULT_FILTER_HALF_LEN,
            max_components: Some(DEFAULT_MAX_COMPONENTS),
            reg_lags: DEFAULT_REG_LAGS,
            span: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpcaScores {
    /// One score series per retained component.
    pub scores: Vec<Vec<f64>>,
    /// Cumulative eigenvalue mass for every component, not only retained ones.
    pub explained_fraction: Vec<f64>,
    pub filter_len: usize,
    /// `filters[j][ℓ + L]` holds the channel weights at lag ℓ.
    #[serde(skip)]
    pub filters: Vec<Vec<Vec<f64>>>,
}

impl DpcaScores {
    pub fn n_components(&self) -> usize {
        self.scores.len()
    }

    pub fn len(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Rotates each eigenvector's phase for continuity across frequency. The first
/// frequency puts its largest entry on the positive real axis.
fn align_phases(vectors: &mut [Vec<Complex64>]) {
    let mut prev: Option<Vec<Complex64>> = None;
    for v in vectors.iter_mut() {
        let anchor = match &prev {
            Some(p) => p.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum::<Complex64>(),
            None => v
                .iter()
                .copied()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap_or(Complex64::new(1.0, 0.0)),
        };
        if anchor.norm() > 0.0 {
            let rot = anchor.conj() / anchor.norm();
            for c in v.iter_mut() {
                *c *= rot;
            }
        }
        prev = Some(v.clone());
    }
}

pub fn dpca_scores(sd: &SpectralDensity, z: &[Vec<f64>], target_var: f64, half_len: usize, max_components: Option<usize>) -> Result<DpcaScores> {
    if !(target_var > 0.0 && target_var <= 1.0) {
        return Err(Error::InvalidConfig(format!("target_var {target_var} outside (0, 1]")));
    }
    if half_len == 0 {
        return Err(Error::InvalidConfig("filter half-length must be at least 1".into()));
    }
    let n = sd.dim();
    if z.len() != n {
        return Err(Error::DimensionMismatch(format!("{} channels vs spectral dimension {n}", z.len())));
    }
    let len = z.first().map_or(0, Vec::len);
    if len != sd.len {
        return Err(Error::DimensionMismatch(format!("series length {len} vs spectrum built on {}", sd.len)));
    }
    let mut eig_vals = Vec::with_capacity(sd.matrices.len());
    let mut eig_vecs = Vec::with_capacity(sd.matrices.len());
    for m in &sd.matrices {
        let (vals, vecs) = sorted_eigen(m)?;
        eig_vals.push(vals);
        eig_vecs.push(vecs);
    }
    let total: f64 = eig_vals.iter().flat_map(|v| v.iter().map(|x| x.max(0.0))).sum();
    let mut explained = Vec::with_capacity(n);
    let mut acc = 0.0;
    for j in 0..n {
        acc += eig_vals.iter().map(|v| v[j].max(0.0)).sum::<f64>();
        explained.push(if total > 0.0 { (acc / total).min(1.0) } else { 1.0 });
    }
    if let Some(last) = explained.last_mut() {
        *last = 1.0;
    }
    let mut c = explained.iter().position(|&f| f >= target_var - 1e-12).map_or(n, |i| i + 1);
    if let Some(cap) = max_components {
        c = c.min(cap.max(1));
    }

    let centred: Vec<Vec<f64>> = z
        .iter()
        .map(|ch| {
            let m = mean(ch);
            ch.iter().map(|v| v - m).collect()
        })
        .collect();
    let mut filters = Vec::with_capacity(c);
    let mut scores = Vec::with_capacity(c);
    for j in 0..c {
        let mut vecs: Vec<Vec<Complex64>> = eig_vecs.iter().map(|e| e.column(j).iter().copied().collect()).collect();
        align_phases(&mut vecs);
        let mut taps = vec![vec![0.0; n]; 2 * half_len + 1];
        for (li, tap) in taps.iter_mut().enumerate() {
            let lag = li as f64 - half_len as f64;
            for (ch, out) in tap.iter_mut().enumerate() {
                // zero frequency borrows the first positive one
                let mut s = vecs[0][ch].re;
                for (k, v) in vecs.iter().enumerate() {
                    let w = if 2 * (k + 1) == len { 1.0 } else { 2.0 };
                    let phase = Complex64::from_polar(1.0, lag * sd.freqs[k]);
                    s += w * (v[ch].conj() * phase).re;
                }
                *out = s / len as f64;
            }
        }
        let mut score = vec![0.0; len];
        for (t, out) in score.iter_mut().enumerate() {
            let mut s = 0.0;
            for (li, tap) in taps.iter().enumerate() {
                let src = t as isize - (li as isize - half_len as isize);
                if src < 0 || src >= len as isize {
                    continue;
                }
                for (ch, w) in tap.iter().enumerate() {
                    s += w * centred[ch][src as usize];
                }
            }
            *out = s;
        }
        filters.push(taps);
        scores.push(score);
    }
    Ok(DpcaScores {
        scores,
        explained_fraction: explained,
        filter_len: half_len,
        filters,
    })
}

/// Residual of `y_star` regressed on an intercept and every score at lags
/// `-reg_lags..=reg_lags`. Shifted samples outside the series count as zero.
pub fn neutralize(y_star: &[f64], scores: &DpcaScores, reg_lags: usize) -> Result<Vec<f64>> {
    let len = y_star.len();
    if scores.scores.iter().any(|s| s.len() != len) {
        return Err(Error::DimensionMismatch(format!("response length {len} vs score length {}", scores.len())));
    }
    let k = reg_lags as isize;
    let shifts: Vec<(usize, isize)> = (0..scores.n_components()).flat_map(|j| (-k..=k).map(move |l| (j, l))).collect();
    let design = DMatrix::from_fn(len, shifts.len() + 1, |t, col| {
        if col == 0 {
            return 1.0;
        }
        let (j, l) = shifts[col - 1];
        let src = t as isize - l;
        if src < 0 || src >= len as isize {
            0.0
        } else {
            scores.scores[j][src as usize]
        }
    });
    let fit = lstsq(&design, y_star)?;
    if !shifts.is_empty() && fit.dropped.iter().filter(|&&c| c > 0).count() == shifts.len() {
        return Err(Error::AllColumnsDropped);
    }
    Ok(fit.residuals)
}

/// Neutralized copies of channels `x` and `y` of `m` against every other
/// channel. With no other channels the two series are only mean-centred.
pub fn neutralize_pair(m: &ChannelMatrix, x: usize, y: usize, opts: &DpcaOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let others: Vec<Vec<f64>> = (0..m.n_channels()).filter(|&i| i != x && i != y).map(|i| m.channel(i).to_vec()).collect();
    let centre = |v: &[f64]| {
        let mu = mean(v);
        v.iter().map(|a| a - mu).collect::<Vec<_>>()
    };
    if others.is_empty() {
        warn!("no remaining channels to neutralize against; centring only");
        return Ok((centre(m.channel(x)), centre(m.channel(y))));
    }
    let span = opts.span.unwrap_or_else(|| default_span(m.len()));
    let sd = estimate_spectrum(&others, span)?;
    let sc = dpca_scores(&sd, &others, opts.target_var, opts.filter_half_len, opts.max_components)?;
    Ok((neutralize(m.channel(x), &sc, opts.reg_lags)?, neutralize(m.channel(y), &sc, opts.reg_lags)?))
}

/// Writes `freq,lambda_1,..,lambda_n` rows.
pub fn write_eigenvalues<W: Write>(w: W, sd: &SpectralDensity) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["freq".to_string()];
    header.extend((1..=sd.dim()).map(|i| format!("lambda_{i}")));
    out.write_record(&header)?;
    for (f, vals) in sd.freqs.iter().zip(sd.eigenvalues()?) {
        let mut rec = vec![f.to_string()];
        rec.extend(vals.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<eigenvalue dump>", e))?;
    Ok(())
}

pub fn dump_eigenvalues(path: impl AsRef<Path>, sd: &SpectralDensity) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_eigenvalues(file, sd)
}
