//! Couplings, the discrete Hubbard-Stratonovich transformation and the
//! Ising auxiliary field.
//!
//! The on-site interaction is taken per site,
//! `U = sum_x [gamma (n^c_x - 1/2)(n^d_x - 1/2) - gamma/4]`, which is the form
//! number-operator jumps produce in the doubled space. With
//! `cosh(lambda) = exp(gamma dt / 2)` each slice and site contributes
//! `exp(-gamma dt / 2) / 2 * sum_s exp(-lambda s) exp(lambda s n^c) exp(lambda s n^d)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator used by every Markov chain. ChaCha is counter based, so a chain
/// is fully described by its 64-bit seed.
pub type ChainRng = ChaCha8Rng;

/// Which fidelity a weight or estimator refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    /// Generalized Loschmidt echo, `tr e^{-K t} e^{L t}`.
    Echo,
    /// Relative purity, `tr e^{L t}`.
    Purity,
}

impl Observable {
    pub fn as_str(&self) -> &'static str {
        match self {
            Observable::Echo => "echo",
            Observable::Purity => "purity",
        }
    }
}

impl std::fmt::Display for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Solves `cosh(lambda) = exp(gamma_dt / 2)` for `lambda >= 0`.
pub fn lambda_from_gamma(gamma_dt: f64) -> Result<f64> {
    if !gamma_dt.is_finite() || gamma_dt < 0.0 {
        return Err(Error::arg(format!(
            "gamma*dt must be finite and >= 0, got {gamma_dt}"
        )));
    }
    // acosh(1 + e) = ln(1 + e + sqrt(e (2 + e))), written to keep precision
    // for small e.
    let e = (0.5 * gamma_dt).exp_m1();
    Ok((e + (e * (2.0 + e)).sqrt()).ln_1p())
}

/// Inverse of [`lambda_from_gamma`]: `gamma dt = 2 ln cosh(lambda)`.
pub fn gamma_dt_from_lambda(lambda: f64) -> f64 {
    2.0 * lambda.cosh().ln()
}

/// `|lhs - rhs|` of the HS identity for one site and one slice.
pub fn hs_identity_residual(nc: u8, nd: u8, gamma_dt: f64) -> Result<f64> {
    if nc > 1 || nd > 1 {
        return Err(Error::arg(format!(
            "occupations must be 0 or 1, got ({nc}, {nd})"
        )));
    }
    let lambda = lambda_from_gamma(gamma_dt)?;
    let (nc, nd) = (nc as f64, nd as f64);
    let lhs = (gamma_dt * (nc - 0.5) * (nd - 0.5)).exp();
    let k = nc + nd - 1.0;
    let rhs = 0.5 * (-0.25 * gamma_dt).exp() * ((lambda * k).exp() + (-lambda * k).exp());
    Ok((lhs - rhs).abs())
}

/// Physical couplings and Trotter discretization for one time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    w: f64,
    gamma: f64,
    dt: f64,
    n_t: usize,
    n_ratio: usize,
    lambda: f64,
}

impl ModelParams {
    pub fn new(w: f64, gamma: f64, dt: f64, n_t: usize, n_ratio: usize) -> Result<Self> {
        if !w.is_finite() {
            return Err(Error::arg(format!("w must be finite, got {w}")));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::arg(format!(
                "gamma must be finite and >= 0, got {gamma}"
            )));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::arg(format!("dt must be finite and > 0, got {dt}")));
        }
        if n_t == 0 {
            return Err(Error::arg("n_t must be >= 1"));
        }
        if n_ratio == 0 {
            return Err(Error::arg("n_ratio must be >= 1"));
        }
        let lambda = lambda_from_gamma(gamma * dt)?;
        Ok(Self {
            w,
            gamma,
            dt,
            n_t,
            n_ratio,
            lambda,
        })
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_ratio(&self) -> usize {
        self.n_ratio
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn t(&self) -> f64 {
        self.n_t as f64 * self.dt
    }

    /// `ln N = n_t V (-gamma dt / 2 - ln 2)`.
    pub fn log_normalization(&self, volume: usize) -> f64 {
        (self.n_t * volume) as f64 * (-0.5 * self.gamma * self.dt - std::f64::consts::LN_2)
    }
}

/// `ln N` written through the HS coupling, `-n_t V ln(2 cosh lambda)`.
/// Used when the coupling is swept in lambda directly.
pub fn log_normalization_from_lambda(lambda: f64, n_t: usize, volume: usize) -> f64 {
    -((n_t * volume) as f64) * (2.0 * lambda.cosh()).ln()
}

/// Ising auxiliary field `s[n][x]`, slice-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldConfig {
    n_t: usize,
    volume: usize,
    spins: Vec<i8>,
    sum: i64,
}

impl FieldConfig {
    pub fn uniform(n_t: usize, volume: usize, value: i8) -> Result<Self> {
        if value != 1 && value != -1 {
            return Err(Error::arg(format!(
                "auxiliary field must be +-1, got {value}"
            )));
        }
        Self::from_spins(n_t, volume, vec![value; n_t * volume])
    }

    pub fn from_spins(n_t: usize, volume: usize, spins: Vec<i8>) -> Result<Self> {
        if spins.len() != n_t * volume {
            return Err(Error::arg(format!(
                "expected {} spins, got {}",
                n_t * volume,
                spins.len()
            )));
        }
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::arg("auxiliary field entries must be +-1"));
        }
        let sum = spins.iter().map(|&s| s as i64).sum();
        Ok(Self {
            n_t,
            volume,
            spins,
            sum,
        })
    }

    /// Configuration number `index` in binary enumeration order (bit `k` set
    /// means spin `k` is -1).
    pub fn from_index(n_t: usize, volume: usize, index: u64) -> Result<Self> {
        let n = n_t * volume;
        if n > 63 {
            return Err(Error::arg("too many spins to enumerate"));
        }
        let spins = (0..n)
            .map(|k| if index >> k & 1 == 1 { -1 } else { 1 })
            .collect();
        Self::from_spins(n_t, volume, spins)
    }

    pub fn random<R: Rng>(n_t: usize, volume: usize, rng: &mut R) -> Self {
        let spins: Vec<i8> = (0..n_t * volume)
            .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
            .collect();
        let sum = spins.iter().map(|&s| s as i64).sum();
        Self {
            n_t,
            volume,
            spins,
            sum,
        }
    }

    pub fn random_seeded(n_t: usize, volume: usize, seed: u64) -> Self {
        Self::random(n_t, volume, &mut ChainRng::seed_from_u64(seed))
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    /// `S = sum_{n,x} s[n][x]`.
    pub fn sum(&self) -> i64 {
        self.sum
    }

    pub fn get(&self, n: usize, x: usize) -> i8 {
        self.spins[n * self.volume + x]
    }

    pub fn slice(&self, n: usize) -> &[i8] {
        &self.spins[n * self.volume..(n + 1) * self.volume]
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn flip(&mut self, n: usize, x: usize) -> Result<()> {
        if n >= self.n_t || x >= self.volume {
            return Err(Error::arg(format!(
                "flip at ({n}, {x}) outside {}x{} field",
                self.n_t, self.volume
            )));
        }
        let s = &mut self.spins[n * self.volume + x];
        self.sum -= 2 * *s as i64;
        *s = -*s;
        Ok(())
    }

    /// Stable 64-bit fingerprint (FNV-1a over the spins).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &s in &self.spins {
            h ^= (s as u8) as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-chain seed as a fixed function of the master seed and the chain's
/// (time index, factor index) coordinates.
pub fn derive_seed(master: u64, time_index: usize, factor_index: usize) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ (time_index as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
    splitmix64(b ^ (factor_index as u64).wrapping_mul(0xa076_1d64_78bd_642f))
}
