//! Orchestration of `run` and `oracle`: chain jobs on a bounded pool,
//! series assembly and output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{OutputFormat, RunConfig};
use crate::error::{Error, Result};
use crate::estimator::{
    alternative_purity_anchor, anchor_value, assemble_series, FactorEstimate, FidelitySeries,
    RatioChain, TimePoint,
};
use crate::model::{derive_seed, Observable};
use crate::oracle::{exact_fidelities, trotter_trace};
use crate::sampler::run_chain;

pub const SERIES_HEADER: &str = "t_w,log_ratio,stderr,V,kind";
/// Largest volume accepted by `oracle`.
pub const ORACLE_MAX_VOLUME: usize = 4;

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// Output directory: flag, then config, then `env_default`, then `out`.
pub fn resolve_out_dir(cfg: &RunConfig, ov: &Overrides, env_default: Option<PathBuf>) -> PathBuf {
    ov.out_dir
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .or(env_default)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn series_csv(series: &FidelitySeries, dt_times_w: f64) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for p in &series.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            sci(p.n_t as f64 * dt_times_w),
            sci(p.log_value),
            sci(p.stderr),
            series.volume,
            series.kind
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainRecord {
    pub time_index: usize,
    pub n_t: usize,
    pub factor_index: usize,
    pub seed: u64,
    pub coupling_lo: Option<f64>,
    pub coupling_hi: Option<f64>,
    pub acceptance: Option<f64>,
    pub max_drift: Option<f64>,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub n_samples: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub series: FidelitySeries,
    pub chains: Vec<ChainRecord>,
    pub max_drift: f64,
    pub wall_time_s: f64,
    pub numerical_errors: Vec<String>,
}

impl RunOutcome {
    pub fn aborted(&self) -> bool {
        !self.numerical_errors.is_empty() || !self.series.gaps.is_empty()
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::arg(format!("cannot build worker pool: {e}")))
}

/// Runs every (time point, factor) chain and assembles the series.
pub fn execute(cfg: &RunConfig, ov: &Overrides) -> Result<RunOutcome> {
    let start = Instant::now();
    let master = ov.seed.unwrap_or(cfg.sampler.master_seed);
    let jobs = ov.jobs.unwrap_or(cfg.execution.max_parallel_chains);
    let adj = cfg.lattice().adjacency_matrix();
    let kind = cfg.kind();
    let n_ratio = cfg.estimator.n_ratio;
    let times = cfg.time_points();

    let tasks: Vec<(usize, usize, usize)> = times
        .iter()
        .enumerate()
        .filter(|(_, &n_t)| n_t > 0)
        .flat_map(|(ti, &n_t)| (0..n_ratio).map(move |f| (ti, n_t, f)))
        .collect();

    let results: Vec<_> = pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(ti, n_t, f)| {
                let seed = derive_seed(master, ti, f);
                let res = cfg
                    .params(n_t)
                    .and_then(|p| run_chain(&cfg.chain_settings(seed), &adj, &p, kind, f));
                (ti, n_t, f, seed, res)
            })
            .collect()
    });

    let mut chains = Vec::with_capacity(results.len());
    let mut numerical_errors = Vec::new();
    let mut max_drift: f64 = 0.0;
    let mut per_time: Vec<Vec<crate::sampler::ChainResult>> = vec![Vec::new(); times.len()];
    let mut failed: Vec<Option<String>> = vec![None; times.len()];
    for (ti, n_t, f, seed, res) in results {
        let mut rec = ChainRecord {
            time_index: ti,
            n_t,
            factor_index: f,
            seed,
            coupling_lo: None,
            coupling_hi: None,
            acceptance: None,
            max_drift: None,
            mean: None,
            stderr: None,
            n_samples: None,
            error: None,
        };
        match res {
            Ok(c) => {
                let est = FactorEstimate::from_chain(&c);
                max_drift = max_drift.max(c.max_drift);
                rec.coupling_lo = Some(c.coupling_lo);
                rec.coupling_hi = Some(c.coupling_hi);
                rec.acceptance = Some(c.acceptance);
                rec.max_drift = Some(c.max_drift);
                rec.mean = Some(est.mean);
                rec.stderr = Some(est.stderr);
                rec.n_samples = Some(est.n_samples);
                per_time[ti].push(c);
            }
            Err(e) => {
                let msg = format!("chain n_t={n_t} factor={f} seed={seed}: {e}");
                rec.error = Some(e.to_string());
                failed[ti].get_or_insert(msg.clone());
                numerical_errors.push(msg);
            }
        }
        chains.push(rec);
    }

    let points = times
        .iter()
        .enumerate()
        .map(|(ti, &n_t)| {
            let outcome = match (&failed[ti], n_t) {
                (_, 0) => Err(String::new()),
                (Some(msg), _) => Err(msg.clone()),
                (None, _) => {
                    let full = match kind {
                        Observable::Echo => cfg.params(n_t).map(|p| p.lambda()).unwrap_or(f64::NAN),
                        Observable::Purity => 1.0,
                    };
                    RatioChain::from_chains(kind, &per_time[ti], n_ratio, full)
                        .map_err(|e| e.to_string())
                }
            };
            TimePoint { n_t, outcome }
        })
        .collect();
    let series = assemble_series(
        kind,
        cfg.physics.gamma_over_w,
        cfg.physics.dt_times_w,
        cfg.volume(),
        points,
    );

    Ok(RunOutcome {
        series,
        chains,
        max_drift,
        wall_time_s: start.elapsed().as_secs_f64(),
        numerical_errors,
    })
}

fn anchors_json(cfg: &RunConfig) -> serde_json::Value {
    let (g, dt, v) = (
        cfg.physics.gamma_over_w,
        cfg.physics.dt_times_w,
        cfg.volume(),
    );
    cfg.time_points()
        .iter()
        .map(|&n_t| {
            let t = n_t as f64 * dt;
            json!({
                "n_t": n_t,
                "t_w": t,
                "log_echo_zero_coupling": anchor_value(Observable::Echo, g, t, v),
                "log_purity_zero_hopping": anchor_value(Observable::Purity, g, t, v),
                "log_purity_zero_hopping_alternative": alternative_purity_anchor(g, t, v),
            })
        })
        .collect()
}

/// Writes `series.csv` (and `series.json` for the json format) plus
/// `run.json` into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, ov: &Overrides, out: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("series.csv"),
        series_csv(&out.series, cfg.physics.dt_times_w),
    )?;
    if cfg.output.format == OutputFormat::Json {
        fs::write(dir.join("series.json"), to_json(&out.series)?)?;
    }
    let mut echo = cfg.clone();
    echo.sampler.master_seed = ov.seed.unwrap_or(cfg.sampler.master_seed);
    if let Some(j) = ov.jobs {
        echo.execution.max_parallel_chains = j;
    }
    echo.output.directory = Some(dir.to_path_buf());
    let acceptance: Vec<_> = out.chains.iter().map(|c| c.acceptance).collect();
    let meta = json!({
        "config": echo,
        "master_seed": echo.sampler.master_seed,
        "seed_rule": "splitmix64 mix of (master_seed, time_index, factor_index)",
        "chains": out.chains,
        "acceptance_rates": acceptance,
        "max_drift": out.max_drift,
        "wall_time_s": out.wall_time_s,
        "anchors": anchors_json(cfg),
        "series": out.series,
        "numerical_errors": out.numerical_errors,
    });
    fs::write(dir.join("run.json"), to_json(&meta)?)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map_err(|e| Error::numerical(format!("serialization failed: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSeries {
    pub exact: FidelitySeries,
    pub trotter: FidelitySeries,
}

/// Exact and Trotterized `ln[F(t) / 4^V]` for every configured time point.
pub fn oracle_series(cfg: &RunConfig) -> Result<OracleSeries> {
    let v = cfg.volume();
    if v > ORACLE_MAX_VOLUME {
        return Err(Error::SizeCap(format!(
            "oracle needs V <= {ORACLE_MAX_VOLUME}, config has V = {v}"
        )));
    }
    let adj = cfg.lattice().adjacency_matrix();
    let kind = cfg.kind();
    let log_full = 2.0 * v as f64 * std::f64::consts::LN_2;
    let mk = || FidelitySeries {
        kind,
        volume: v,
        points: Vec::new(),
        gaps: Vec::new(),
    };
    let (mut exact, mut trotter) = (mk(), mk());
    for n_t in cfg.time_points() {
        let t = n_t as f64 * cfg.physics.dt_times_w;
        let (e, tr) = if n_t == 0 {
            (log_full, log_full)
        } else {
            let (m, p) = exact_fidelities(&adj, 1.0, cfg.physics.gamma_over_w, t)?;
            let e = match kind {
                Observable::Echo => m,
                Observable::Purity => p,
            };
            (
                e.re.ln(),
                trotter_trace(&adj, &cfg.params(n_t)?, kind)?.re.ln(),
            )
        };
        let point = |lv: f64| crate::estimator::SeriesPoint {
            n_t,
            t,
            log_value: lv - log_full,
            stderr: 0.0,
            log_ratio: lv - anchor_value(kind, cfg.physics.gamma_over_w, t, v),
            anchor: anchor_value(kind, cfg.physics.gamma_over_w, t, v),
        };
        exact.points.push(point(e));
        trotter.points.push(point(tr));
    }
    Ok(OracleSeries { exact, trotter })
}

pub fn write_oracle(dir: &Path, cfg: &RunConfig, s: &OracleSeries) -> Result<()> {
    fs::create_dir_all(dir)?;
    let dt = cfg.physics.dt_times_w;
    fs::write(dir.join("oracle_exact.csv"), series_csv(&s.exact, dt))?;
    fs::write(dir.join("oracle_trotter.csv"), series_csv(&s.trotter, dt))?;
    Ok(())
}
