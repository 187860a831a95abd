//! Exact references for small systems.
//!
//! Everything here works in the full many-body space: the doubled Fock space
//! of `2V` modes (c modes first, then d modes) for the Liouvillian, or a
//! `V`-mode Fock space for trace identities. None of it shares code paths
//! with the determinant formulas in [`crate::bss`] except
//! [`brute_force_hs`], which sums those weights on purpose.

mod fock;

pub use fock::FockOperators;

use nalgebra::DMatrix;

use crate::bss::{log_weight, SlicePropagators, DEFAULT_N_STAB};
use crate::error::{Error, Result};
use crate::model::{FieldConfig, ModelParams, Observable};
use crate::C64;

/// Largest lattice volume for which the doubled-space Liouvillian is built.
pub const MAX_LIOUVILLIAN_VOLUME: usize = 6;
/// Largest `n_t * V` for exhaustive HS enumeration.
pub const MAX_HS_SPINS: usize = 20;

/// Dense `L = K + U` on the doubled Fock space.
#[derive(Debug, Clone)]
pub struct LiouvillianMatrix {
    volume: usize,
    /// `K`, the jump-free part (`L` at `gamma = 0`).
    pub hopping: DMatrix<C64>,
    /// Diagonal of `U`.
    pub interaction: Vec<f64>,
}

impl LiouvillianMatrix {
    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn dim(&self) -> usize {
        self.interaction.len()
    }

    pub fn full(&self) -> DMatrix<C64> {
        let mut l = self.hopping.clone();
        for (i, u) in self.interaction.iter().enumerate() {
            l[(i, i)] += u;
        }
        l
    }
}

/// `K = -i w sum_ab A_ab c+_a c_b + i w sum_ab A_ab d+_a d_b` and
/// `U = sum_x [gamma (n^c_x - 1/2)(n^d_x - 1/2) - gamma/4]`.
pub fn build_liouvillian(adj: &DMatrix<f64>, w: f64, gamma: f64) -> Result<LiouvillianMatrix> {
    let v = adj.nrows();
    if v > MAX_LIOUVILLIAN_VOLUME {
        return Err(Error::SizeCap(format!(
            "doubled space of V = {v} sites has dimension 2^{}; cap is V <= {MAX_LIOUVILLIAN_VOLUME}",
            2 * v
        )));
    }
    let fock = FockOperators::new(2 * v)?;
    let hop_c = adj.map(|a| C64::new(0.0, -w * a));
    let hop_d = adj.map(|a| C64::new(0.0, w * a));
    let hopping = fock.bilinear(&hop_c, 0) + fock.bilinear(&hop_d, v);
    let interaction = (0..fock.dim())
        .map(|state| {
            (0..v)
                .map(|x| {
                    let nc = (state >> x & 1) as f64;
                    let nd = (state >> (x + v) & 1) as f64;
                    gamma * ((nc - 0.5) * (nd - 0.5) - 0.25)
                })
                .sum()
        })
        .collect();
    Ok(LiouvillianMatrix {
        volume: v,
        hopping,
        interaction,
    })
}

/// Dense vectorized Lindblad generator
/// `-i H (x) 1 + i 1 (x) H^T + sum_k gamma (G_k (x) G_k* - 1/2 G_k+G_k (x) 1 - 1/2 1 (x) G_k^T G_k*)`
/// acting on `|rho> = sum_ij rho_ij |i> (x) |j>`.
pub fn lindblad_superoperator(
    h: &DMatrix<C64>,
    jumps: &[DMatrix<C64>],
    gamma: f64,
) -> DMatrix<C64> {
    let n = h.nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let i = C64::new(0.0, 1.0);
    let half = C64::new(0.5, 0.0);
    let mut l = h.kronecker(&id) * (-i) + id.kronecker(&h.transpose()) * i;
    for g in jumps {
        let gdg = g.adjoint() * g;
        let gc = g.map(|z| z.conj());
        let gtgc = g.transpose() * &gc;
        l += (g.kronecker(&gc) - gdg.kronecker(&id) * half - id.kronecker(&gtgc) * half)
            * C64::new(gamma, 0.0);
    }
    l
}

fn trace(m: &DMatrix<C64>) -> C64 {
    m.diagonal().sum()
}

fn pow(base: &DMatrix<C64>, mut e: usize) -> DMatrix<C64> {
    let n = base.nrows();
    let mut acc = DMatrix::<C64>::identity(n, n);
    let mut b = base.clone();
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &b;
        }
        e >>= 1;
        if e > 0 {
            b = &b * &b;
        }
    }
    acc
}

/// Exact `(M, P) = (tr e^{-K t} e^{L t}, tr e^{L t})`.
pub fn exact_fidelities(adj: &DMatrix<f64>, w: f64, gamma: f64, t: f64) -> Result<(C64, C64)> {
    let l = build_liouvillian(adj, w, gamma)?;
    let evolve = (l.full() * C64::new(t, 0.0)).exp();
    let back = (&l.hopping * C64::new(-t, 0.0)).exp();
    Ok((trace(&(back * &evolve)), trace(&evolve)))
}

/// Trotterized many-body trace `tr [Bd] prod_{n=1}^{Nt} e^{K dt} e^{U dt}`
/// with `Bd = e^{-K t}` for the echo and `1` for the purity.
pub fn trotter_trace(adj: &DMatrix<f64>, params: &ModelParams, kind: Observable) -> Result<C64> {
    let l = build_liouvillian(adj, params.w(), params.gamma())?;
    let dt = params.dt();
    let mut slice = (&l.hopping * C64::new(dt, 0.0)).exp();
    for (j, u) in l.interaction.iter().enumerate() {
        slice.column_mut(j).scale_mut((u * dt).exp());
    }
    let chain = pow(&slice, params.n_t());
    Ok(match kind {
        Observable::Purity => trace(&chain),
        Observable::Echo => {
            let back = (&l.hopping * C64::new(-params.t(), 0.0)).exp();
            trace(&(back * chain))
        }
    })
}

/// Signature of a configuration log-weight, so checks can be run against
/// deliberately broken variants.
pub type LogWeightFn<'a> = dyn Fn(&FieldConfig, &SlicePropagators, f64) -> Result<f64> + Sync + 'a;

/// Sum of `exp(log_weight)` over all `2^{Nt V}` auxiliary fields.
pub fn brute_force_hs(adj: &DMatrix<f64>, params: &ModelParams, kind: Observable) -> Result<f64> {
    brute_force_hs_with(adj, params, kind, &|c, p, l| {
        log_weight(c, p, l, DEFAULT_N_STAB)
    })
}

pub fn brute_force_hs_with(
    adj: &DMatrix<f64>,
    params: &ModelParams,
    kind: Observable,
    weight: &LogWeightFn<'_>,
) -> Result<f64> {
    let logs = enumerate_log_weights(adj, params, kind, weight)?;
    Ok(log_sum_exp(&logs).exp())
}

/// Log-weights of every configuration, in [`FieldConfig::from_index`] order.
pub fn enumerate_log_weights(
    adj: &DMatrix<f64>,
    params: &ModelParams,
    kind: Observable,
    weight: &LogWeightFn<'_>,
) -> Result<Vec<f64>> {
    let v = adj.nrows();
    let n = params.n_t() * v;
    if n > MAX_HS_SPINS {
        return Err(Error::SizeCap(format!(
            "{n} auxiliary spins; exhaustive sum is capped at {MAX_HS_SPINS}"
        )));
    }
    let props = SlicePropagators::new(adj, params.w(), params.dt(), params.n_t(), kind)?;
    (0..1u64 << n)
        .map(|i| {
            let cfg = FieldConfig::from_index(params.n_t(), v, i)?;
            weight(&cfg, &props, params.lambda())
        })
        .collect()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `tr prod_k e^{c+ X_k c}` over the `2^V` Fock space of `V = X.nrows()`
/// modes.
pub fn fock_trace_of_exponentials(xs: &[DMatrix<C64>]) -> Result<C64> {
    let v = xs.first().map(|x| x.nrows()).unwrap_or(0);
    let fock = FockOperators::new(v)?;
    let mut acc = DMatrix::<C64>::identity(fock.dim(), fock.dim());
    for x in xs {
        acc *= fock.bilinear(x, 0).exp();
    }
    Ok(trace(&acc))
}

/// Closed-form `ln P(t)` at zero hopping: each site contributes the trace
/// of its dephasing generator with spectrum `{0, -gamma/2, -gamma/2, 0}`.
pub fn zero_hopping_log_purity(gamma: f64, t: f64, volume: usize) -> f64 {
    volume as f64 * (2.0 + 2.0 * (-0.5 * gamma * t).exp()).ln()
}
