//! Self-check suite behind `validate`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};

use crate::bss::{log_weight, DEFAULT_N_STAB};
use crate::estimator::{anchor_value, telescope, RatioChain};
use crate::lattice::LatticeSpec;
use crate::model::{hs_identity_residual, ChainRng, FieldConfig, ModelParams, Observable};
use crate::oracle::{brute_force_hs_with, fock_trace_of_exponentials, trotter_trace, LogWeightFn};
use crate::sampler::{run_chain, ChainSettings, Walker, WeightModel};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn from(name: &'static str, res: crate::Result<(bool, String)>) -> Self {
        match res {
            Ok((passed, detail)) => Self {
                name,
                passed,
                detail,
            },
            Err(e) => Self {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn square(l: usize) -> DMatrix<f64> {
    LatticeSpec::new(l, l)
        .expect("valid lattice")
        .adjacency_matrix()
}

fn hs_identity() -> crate::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for g in [0.005, 0.05, 0.2, 1.0] {
        for nc in 0..2 {
            for nd in 0..2 {
                worst = worst.max(hs_identity_residual(nc, nd, g)?);
            }
        }
    }
    Ok((worst <= 1e-12, format!("max residual {worst:.3e}")))
}

fn trace_determinant() -> crate::Result<(bool, String)> {
    let mut rng = ChainRng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let v = 1 + k % 3;
        let mut rand_m = || {
            DMatrix::from_fn(v, v, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        };
        let (x, y) = (rand_m(), rand_m());
        let lhs = fock_trace_of_exponentials(&[x.clone(), y.clone()])?;
        let rhs = (DMatrix::identity(v, v) + x.exp() * y.exp()).determinant();
        worst = worst.max((lhs - rhs).norm() / rhs.norm());
    }
    Ok((worst <= 1e-10, format!("max relative error {worst:.3e}")))
}

/// Exhaustive sum at zero hopping against the closed-form dephasing trace.
fn hs_sum_zero_hopping(weight: &LogWeightFn<'_>) -> crate::Result<(bool, String)> {
    let adj = DMatrix::<f64>::zeros(4, 4);
    let mut worst: f64 = 0.0;
    for n_t in [1, 2, 4] {
        let p = ModelParams::new(0.0, 4.0, 0.05, n_t, 1)?;
        let sum = brute_force_hs_with(&adj, &p, Observable::Purity, weight)?;
        let exact = anchor_value(Observable::Purity, 4.0, p.t(), 4).exp();
        worst = worst.max(rel(sum, exact));
    }
    Ok((worst <= 1e-8, format!("max relative error {worst:.3e}")))
}

fn brute_force_vs_trotter(weight: &LogWeightFn<'_>) -> crate::Result<(bool, String)> {
    let adj = square(2);
    let mut worst: f64 = 0.0;
    for kind in [Observable::Echo, Observable::Purity] {
        for n_t in [1, 2] {
            let p = ModelParams::new(1.0, 4.0, 0.05, n_t, 1)?;
            let hs = brute_force_hs_with(&adj, &p, kind, weight)?;
            let tr = trotter_trace(&adj, &p, kind)?;
            worst = worst.max(rel(hs, tr.re));
        }
    }
    Ok((worst <= 1e-8, format!("max relative error {worst:.3e}")))
}

fn mc_vs_oracle() -> crate::Result<(bool, String)> {
    let adj = square(2);
    let params = ModelParams::new(1.0, 4.0, 0.1, 4, 4)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for kind in [Observable::Echo, Observable::Purity] {
        let chains = (0..4)
            .map(|f| {
                let s = ChainSettings {
                    n_warmup: 50,
                    n_sweeps: 1500,
                    meas_interval: 1,
                    seed: 1000 + f as u64,
                    ..Default::default()
                };
                run_chain(&s, &adj, &params, kind, f)
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let full = match kind {
            Observable::Echo => params.lambda(),
            Observable::Purity => params.w(),
        };
        let tel = telescope(&RatioChain::from_chains(kind, &chains, 4, full)?)?;
        let truth =
            trotter_trace(&adj, &params, kind)?.re.ln() - anchor_value(kind, 4.0, params.t(), 4);
        let z = (tel.log_ratio - truth).abs() / tel.stderr;
        ok &= z < 3.0;
        detail.push(format!("{kind} {z:.2} sigma"));
    }
    Ok((ok, detail.join(", ")))
}

fn stabilization_drift() -> crate::Result<(bool, String)> {
    let adj = square(4);
    let params = ModelParams::new(1.0, 4.0, 0.05, 40, 1)?;
    let s = ChainSettings {
        n_warmup: 0,
        n_sweeps: 2,
        meas_interval: 1,
        seed: 5,
        drift_tol: 1.0,
        ..Default::default()
    };
    let c = run_chain(&s, &adj, &params, Observable::Purity, 0)?;
    Ok((c.max_drift < 1e-6, format!("max drift {:.3e}", c.max_drift)))
}

/// Single site, two slices: empirical distribution over the four fields
/// against the exact weights, chi^2 with 3 dof at the 0.1% level.
fn detailed_balance() -> crate::Result<(bool, String)> {
    let adj = DMatrix::<f64>::zeros(1, 1);
    let lambda = 0.9;
    let props = crate::bss::SlicePropagators::new(&adj, 0.0, 0.05, 2, Observable::Purity)?;
    let model = WeightModel { props, lambda };
    let w = |s: f64| (-lambda * s).exp() * (1.0 + (lambda * s).exp()).powi(2);
    let weights = (0..4)
        .map(|i| Ok(w(FieldConfig::from_index(2, 1, i)?.sum() as f64)))
        .collect::<crate::Result<Vec<f64>>>()?;
    let z: f64 = weights.iter().sum();
    let mut walker = Walker::new(
        &model,
        FieldConfig::uniform(2, 1, 1)?,
        ChainRng::seed_from_u64(3),
        10,
        1e-8,
    )?;
    let n = 20_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        for _ in 0..4 {
            walker.sweep()?;
        }
        let c = walker.config();
        counts[usize::from(c.get(0, 0) == -1) | usize::from(c.get(1, 0) == -1) << 1] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&weights)
        .map(|(&c, &wt)| {
            let e = n as f64 * wt / z;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    Ok((chi2 < 16.27, format!("chi2 {chi2:.2} (3 dof)")))
}

/// Every check, with `weight` standing in for the configuration weight in
/// the exhaustive sums.
pub fn run_checks_with(weight: &LogWeightFn<'_>) -> Vec<Check> {
    vec![
        Check::from("hs_identity", hs_identity()),
        Check::from("trace_determinant", trace_determinant()),
        Check::from("hs_sum_zero_hopping", hs_sum_zero_hopping(weight)),
        Check::from("brute_force_vs_trotter", brute_force_vs_trotter(weight)),
        Check::from("mc_vs_oracle", mc_vs_oracle()),
        Check::from("stabilization_drift", stabilization_drift()),
        Check::from("detailed_balance", detailed_balance()),
    ]
}

pub fn run_checks() -> Vec<Check> {
    run_checks_with(&|c, p, l| log_weight(c, p, l, DEFAULT_N_STAB))
}

pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    checks
        .iter()
        .map(|c| {
            format!(
                "{:<width$}  {}  {}\n",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            )
        })
        .collect()
}
