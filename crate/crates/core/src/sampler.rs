//! Metropolis sampling of auxiliary fields at one telescoping coupling.
//!
//! Each chain samples `w(s)` at the upper coupling of one factor and records
//! `w_lo(s) / w_hi(s)`, whose mean is the ratio of the two fidelities.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::bss::{flip_ratio, log_weight, GreenState, SlicePropagators, UdtStack, DEFAULT_N_STAB};
use crate::error::{Error, Result};
use crate::model::{ChainRng, FieldConfig, ModelParams, Observable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub n_warmup: usize,
    pub n_sweeps: usize,
    pub meas_interval: usize,
    pub seed: u64,
    pub n_stab: usize,
    pub drift_tol: f64,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            n_warmup: 200,
            n_sweeps: 2000,
            meas_interval: 2,
            seed: 0,
            n_stab: DEFAULT_N_STAB,
            drift_tol: 1e-6,
        }
    }
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_sweeps == 0 {
            return Err(Error::arg("n_sweeps must be >= 1"));
        }
        if self.meas_interval == 0 {
            return Err(Error::arg("meas_interval must be >= 1"));
        }
        if self.n_stab == 0 {
            return Err(Error::arg("n_stab must be >= 1"));
        }
        if self.drift_tol.is_nan() || self.drift_tol <= 0.0 {
            return Err(Error::arg("drift_tol must be > 0"));
        }
        Ok(())
    }
}

/// A weight `w(s)`: propagators for one hopping strength plus the HS
/// coupling.
#[derive(Debug, Clone)]
pub struct WeightModel {
    pub props: SlicePropagators,
    pub lambda: f64,
}

impl WeightModel {
    pub fn log_weight(&self, config: &FieldConfig, n_stab: usize) -> Result<f64> {
        log_weight(config, &self.props, self.lambda, n_stab)
    }
}

/// The two weights of telescoping factor `i`: couplings `i * delta` and
/// `(i + 1) * delta`, in lambda for the echo and in w for the purity.
#[derive(Debug, Clone)]
pub struct CouplingStep {
    pub kind: Observable,
    pub factor_index: usize,
    pub coupling_lo: f64,
    pub coupling_hi: f64,
    pub lo: WeightModel,
    pub hi: WeightModel,
}

impl CouplingStep {
    pub fn new(
        adj: &DMatrix<f64>,
        params: &ModelParams,
        kind: Observable,
        factor_index: usize,
    ) -> Result<Self> {
        let n = params.n_ratio();
        if factor_index >= n {
            return Err(Error::arg(format!(
                "factor index {factor_index} outside 0..{n}"
            )));
        }
        let frac_lo = factor_index as f64 / n as f64;
        let frac_hi = (factor_index + 1) as f64 / n as f64;
        let (dt, n_t) = (params.dt(), params.n_t());
        match kind {
            Observable::Echo => {
                let props = SlicePropagators::new(adj, params.w(), dt, n_t, kind)?;
                let (lo, hi) = (params.lambda() * frac_lo, params.lambda() * frac_hi);
                Ok(Self {
                    kind,
                    factor_index,
                    coupling_lo: lo,
                    coupling_hi: hi,
                    lo: WeightModel {
                        props: props.clone(),
                        lambda: lo,
                    },
                    hi: WeightModel { props, lambda: hi },
                })
            }
            Observable::Purity => {
                let (lo, hi) = (params.w() * frac_lo, params.w() * frac_hi);
                Ok(Self {
                    kind,
                    factor_index,
                    coupling_lo: lo,
                    coupling_hi: hi,
                    lo: WeightModel {
                        props: SlicePropagators::new(adj, lo, dt, n_t, kind)?,
                        lambda: params.lambda(),
                    },
                    hi: WeightModel {
                        props: SlicePropagators::new(adj, hi, dt, n_t, kind)?,
                        lambda: params.lambda(),
                    },
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioSample {
    pub value: f64,
    pub config_hash: u64,
}

/// `w_lo(s) / w_hi(s)` for one configuration, both weights rebuilt from
/// scratch.
pub fn measure_ratio(
    config: &FieldConfig,
    step: &CouplingStep,
    n_stab: usize,
) -> Result<RatioSample> {
    let hi = step.hi.log_weight(config, n_stab)?;
    if hi == f64::NEG_INFINITY {
        return Err(Error::numerical(format!(
            "sampled configuration {:016x} has zero weight at coupling {}",
            config.fingerprint(),
            step.coupling_hi
        )));
    }
    let lo = step.lo.log_weight(config, n_stab)?;
    ratio_sample(config, lo, hi)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepStats {
    pub proposed: usize,
    pub accepted: usize,
    pub max_drift: f64,
}

/// One Markov chain: field, Green's function and partial products.
pub struct Walker<'a> {
    model: &'a WeightModel,
    config: FieldConfig,
    green: GreenState,
    stack: UdtStack,
    rng: ChainRng,
    n_stab: usize,
    drift_tol: f64,
}

impl<'a> Walker<'a> {
    pub fn new(
        model: &'a WeightModel,
        config: FieldConfig,
        rng: ChainRng,
        n_stab: usize,
        drift_tol: f64,
    ) -> Result<Self> {
        let stack = UdtStack::build(&config, &model.props, model.lambda, n_stab)?;
        let green = stack.green()?;
        Ok(Self {
            model,
            config,
            green,
            stack,
            rng,
            n_stab,
            drift_tol,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn green(&self) -> &GreenState {
        &self.green
    }

    pub fn model(&self) -> &WeightModel {
        self.model
    }

    fn restabilize(&mut self, fresh: GreenState, stats: &mut SweepStats) -> Result<()> {
        let drift = self.green.drift(&fresh);
        stats.max_drift = stats.max_drift.max(drift);
        if drift.is_nan() || drift > self.drift_tol {
            return Err(Error::Drift {
                drift,
                tol: self.drift_tol,
                slice: fresh.slice,
            });
        }
        self.green = fresh;
        Ok(())
    }

    /// One Metropolis update at `(slice, x)`; the Green's function must be
    /// at `slice`.
    fn update_site(&mut self, x: usize, stats: &mut SweepStats) -> Result<bool> {
        let lambda = self.model.lambda;
        let n = self.green.slice;
        let s_old = self.config.get(n, x);
        let ratio = flip_ratio(&self.green, s_old, lambda, x);
        if ratio.weight.is_nan() {
            return Err(Error::numerical(format!(
                "NaN acceptance ratio at slice {n}, site {x}"
            )));
        }
        stats.proposed += 1;
        if ratio.weight >= 1.0 || self.rng.gen::<f64>() < ratio.weight {
            self.green.apply_flip(x, &ratio);
            self.config.flip(n, x)?;
            stats.accepted += 1;
            return Ok(true);
        }
        Ok(false)
    }

    /// Slice-major sweep over every `(n, x)`, starting and ending at slice 0.
    pub fn sweep(&mut self) -> Result<SweepStats> {
        let props = &self.model.props;
        let lambda = self.model.lambda;
        let n_t = props.n_t();
        let mut stats = SweepStats::default();
        for n in 0..n_t {
            if n > 0 && n % self.n_stab == 0 {
                self.stack.advance_left(&self.config, props, lambda, n)?;
                let fresh = self.stack.green()?;
                self.restabilize(fresh, &mut stats)?;
            }
            for x in 0..props.volume() {
                self.update_site(x, &mut stats)?;
            }
            self.green.wrap(&self.config, props, lambda);
        }
        self.stack = UdtStack::build(&self.config, props, lambda, self.n_stab)?;
        let fresh = self.stack.green()?;
        self.restabilize(fresh, &mut stats)?;
        Ok(stats)
    }

    /// Current `ln w(s)` from the full chain rebuilt at the end of the last
    /// sweep; equal to [`WeightModel::log_weight`] of the current field.
    pub fn log_weight(&self) -> f64 {
        let ld = self.stack.full().log_det_one_plus();
        if ld.re == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        crate::model::log_normalization_from_lambda(
            self.model.lambda,
            self.model.props.n_t(),
            self.model.props.volume(),
        ) - self.model.lambda * self.config.sum() as f64
            + 2.0 * ld.re
    }

    /// [`measure_ratio`] for the current field, reusing the walker's own
    /// weight when it samples `step.hi`.
    pub fn measure(&self, step: &CouplingStep) -> Result<RatioSample> {
        let hi = self.log_weight();
        if hi == f64::NEG_INFINITY {
            return measure_ratio(&self.config, step, self.n_stab);
        }
        let lo = step.lo.log_weight(&self.config, self.n_stab)?;
        ratio_sample(&self.config, lo, hi)
    }
}

fn ratio_sample(config: &FieldConfig, lo: f64, hi: f64) -> Result<RatioSample> {
    let value = if lo == f64::NEG_INFINITY {
        0.0
    } else {
        (lo - hi).exp()
    };
    if !value.is_finite() {
        return Err(Error::numerical(format!(
            "weight ratio overflow: ln w_lo = {lo}, ln w_hi = {hi}"
        )));
    }
    Ok(RatioSample {
        value,
        config_hash: config.fingerprint(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainResult {
    pub kind: Observable,
    pub factor_index: usize,
    pub seed: u64,
    pub coupling_lo: f64,
    pub coupling_hi: f64,
    pub samples: Vec<RatioSample>,
    pub acceptance: f64,
    pub max_drift: f64,
}

impl ChainResult {
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }
}

/// Equilibrates at the factor's upper coupling and collects ratio samples.
pub fn run_chain(
    settings: &ChainSettings,
    adj: &DMatrix<f64>,
    params: &ModelParams,
    kind: Observable,
    factor_index: usize,
) -> Result<ChainResult> {
    settings.validate()?;
    let step = CouplingStep::new(adj, params, kind, factor_index)?;
    run_chain_step(settings, &step)
}

pub fn run_chain_step(settings: &ChainSettings, step: &CouplingStep) -> Result<ChainResult> {
    settings.validate()?;
    let mut rng = ChainRng::seed_from_u64(settings.seed);
    let props = &step.hi.props;
    let config = FieldConfig::random(props.n_t(), props.volume(), &mut rng);
    let mut walker = Walker::new(&step.hi, config, rng, settings.n_stab, settings.drift_tol)?;

    let mut max_drift: f64 = 0.0;
    for _ in 0..settings.n_warmup {
        max_drift = max_drift.max(walker.sweep()?.max_drift);
    }
    let (mut proposed, mut accepted) = (0usize, 0usize);
    let mut samples = Vec::with_capacity(settings.n_sweeps / settings.meas_interval);
    for i in 0..settings.n_sweeps {
        let st = walker.sweep()?;
        proposed += st.proposed;
        accepted += st.accepted;
        max_drift = max_drift.max(st.max_drift);
        if (i + 1) % settings.meas_interval == 0 {
            samples.push(walker.measure(step)?);
        }
    }
    Ok(ChainResult {
        kind: step.kind,
        factor_index: step.factor_index,
        seed: settings.seed,
        coupling_lo: step.coupling_lo,
        coupling_hi: step.coupling_hi,
        samples,
        acceptance: accepted as f64 / proposed.max(1) as f64,
        max_drift,
    })
}
