//! Telescoping products of per-factor means, error propagation and the
//! analytic zero-coupling anchors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Observable;
use crate::sampler::ChainResult;

/// Minimum number of bins kept when growing the bin size.
pub const MIN_BINS: usize = 16;
/// Relative change below which two successive binning levels count as a
/// plateau.
pub const PLATEAU_TOL: f64 = 0.05;

/// Mean shifted by the first sample, so constant data come out exact.
fn mean(xs: &[f64]) -> f64 {
    match xs.first() {
        None => f64::NAN,
        Some(&x0) => x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64,
    }
}

fn mean_and_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = mean(xs);
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Standard error of the mean at bin sizes 1, 2, 4, ... while at least
/// `MIN_BINS` bins remain.
pub fn binning_levels(xs: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut bin = 1;
    while xs.len() / bin >= MIN_BINS.min(xs.len()).max(2) {
        let means: Vec<f64> = xs.chunks_exact(bin).map(mean).collect();
        out.push((bin, mean_and_sem(&means).1));
        bin *= 2;
    }
    out
}

/// Binned standard error: the bin size doubles until the error stops
/// growing by more than `PLATEAU_TOL`. Without a plateau the largest error
/// over all levels is returned.
pub fn binned_stderr(xs: &[f64]) -> f64 {
    let levels = binning_levels(xs);
    if levels.is_empty() {
        return f64::NAN;
    }
    for pair in levels.windows(2) {
        let (a, b) = (pair[0].1, pair[1].1);
        if b <= a * (1.0 + PLATEAU_TOL) {
            return a.max(b);
        }
    }
    levels.iter().map(|l| l.1).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub acceptance: f64,
}

impl FactorEstimate {
    pub fn from_samples(values: &[f64], acceptance: f64) -> Self {
        Self {
            mean: mean(values),
            stderr: binned_stderr(values),
            n_samples: values.len(),
            acceptance,
        }
    }

    pub fn from_chain(chain: &ChainResult) -> Self {
        Self::from_samples(&chain.values(), chain.acceptance)
    }
}

/// Per-factor estimates of one telescoping product, with the coupling grid
/// `c_i = i * delta`, `i = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioChain {
    pub kind: Observable,
    pub factors: Vec<FactorEstimate>,
    pub couplings: Vec<f64>,
}

impl RatioChain {
    pub fn new(kind: Observable, factors: Vec<FactorEstimate>, full_coupling: f64) -> Self {
        let n = factors.len();
        let couplings = (0..=n)
            .map(|i| full_coupling * i as f64 / n as f64)
            .collect();
        Self {
            kind,
            factors,
            couplings,
        }
    }

    /// Orders chain results by factor index; every index in `0..n_ratio`
    /// must appear exactly once.
    pub fn from_chains(
        kind: Observable,
        chains: &[ChainResult],
        n_ratio: usize,
        full_coupling: f64,
    ) -> Result<Self> {
        let mut slots: Vec<Option<FactorEstimate>> = vec![None; n_ratio];
        for c in chains {
            if c.kind != kind {
                return Err(Error::Estimator(format!(
                    "chain of kind {} in a {kind} product",
                    c.kind
                )));
            }
            match slots.get_mut(c.factor_index) {
                Some(slot @ None) => *slot = Some(FactorEstimate::from_chain(c)),
                Some(Some(_)) => {
                    return Err(Error::Estimator(format!(
                        "factor {} given twice",
                        c.factor_index
                    )));
                }
                None => {
                    return Err(Error::Estimator(format!(
                        "factor {} outside 0..{n_ratio}",
                        c.factor_index
                    )));
                }
            }
        }
        let factors = slots
            .into_iter()
            .enumerate()
            .map(|(i, f)| f.ok_or_else(|| Error::Estimator(format!("factor {i} missing"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(kind, factors, full_coupling))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Telescoped {
    pub log_ratio: f64,
    pub stderr: f64,
}

/// `ln[F(c_N) / F(c_0)] = -sum_i ln <ratio_i>`, errors added in quadrature.
pub fn telescope(chain: &RatioChain) -> Result<Telescoped> {
    if chain.factors.is_empty() {
        return Err(Error::Estimator("no factors".into()));
    }
    let mut log_ratio = 0.0;
    let mut var = 0.0;
    for (i, f) in chain.factors.iter().enumerate() {
        if f.n_samples < 2 {
            return Err(Error::Estimator(format!(
                "factor {i} has {} samples",
                f.n_samples
            )));
        }
        if !f.mean.is_finite() || f.mean <= 0.0 {
            return Err(Error::Estimator(format!(
                "factor {i} has non-positive mean {:e}",
                f.mean
            )));
        }
        log_ratio -= f.mean.ln();
        var += (f.stderr / f.mean).powi(2);
    }
    Ok(Telescoped {
        log_ratio,
        stderr: var.sqrt(),
    })
}

/// `ln F(t, 0)`: `2V ln 2` for the echo, and for the purity the exact
/// zero-hopping trace `V ln(2 + 2 e^{-gamma t / 2})`.
pub fn anchor_value(kind: Observable, gamma: f64, t: f64, volume: usize) -> f64 {
    let v = volume as f64;
    match kind {
        Observable::Echo => 2.0 * v * std::f64::consts::LN_2,
        Observable::Purity => v * (2.0 + 2.0 * (-0.5 * gamma * t).exp()).ln(),
    }
}

/// The alternative closed form `V ln(2 (1 + e^{-gamma t}))` for the zero-hopping
/// purity. Reported next to `anchor_value` and never used in the series.
pub fn alternative_purity_anchor(gamma: f64, t: f64, volume: usize) -> f64 {
    volume as f64 * (2.0 * (1.0 + (-gamma * t).exp())).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub n_t: usize,
    pub t: f64,
    /// `ln[F(t) / 4^V]`.
    pub log_value: f64,
    pub stderr: f64,
    /// `ln[F(t, c) / F(t, 0)]` from the telescoping product.
    pub log_ratio: f64,
    pub anchor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub n_t: usize,
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelitySeries {
    pub kind: Observable,
    pub volume: usize,
    pub points: Vec<SeriesPoint>,
    pub gaps: Vec<Gap>,
}

/// Outcome for one time point: a product of factor estimates or the reason
/// it could not be computed.
#[derive(Debug, Clone)]
pub struct TimePoint {
    pub n_t: usize,
    pub outcome: std::result::Result<RatioChain, String>,
}

/// Combines telescoped ratios with the anchors into `ln[F(t) / 4^V]`. Time
/// points are sorted by `n_t`; `n_t = 0` is exactly zero.
pub fn assemble_series(
    kind: Observable,
    gamma: f64,
    dt: f64,
    volume: usize,
    points: Vec<TimePoint>,
) -> FidelitySeries {
    let log_full = 2.0 * volume as f64 * std::f64::consts::LN_2;
    let mut out = FidelitySeries {
        kind,
        volume,
        points: Vec::new(),
        gaps: Vec::new(),
    };
    let mut points = points;
    points.sort_by_key(|p| p.n_t);
    for p in points {
        let t = p.n_t as f64 * dt;
        if p.n_t == 0 {
            out.points.push(SeriesPoint {
                n_t: 0,
                t: 0.0,
                log_value: 0.0,
                stderr: 0.0,
                log_ratio: 0.0,
                anchor: log_full,
            });
            continue;
        }
        let anchor = anchor_value(kind, gamma, t, volume);
        match p
            .outcome
            .map_err(Error::Estimator)
            .and_then(|c| telescope(&c))
        {
            Ok(tel) => out.points.push(SeriesPoint {
                n_t: p.n_t,
                t,
                log_value: tel.log_ratio + anchor - log_full,
                stderr: tel.stderr,
                log_ratio: tel.log_ratio,
                anchor,
            }),
            Err(e) => out.gaps.push(Gap {
                n_t: p.n_t,
                t,
                reason: e.to_string(),
            }),
        }
    }
    out
}
