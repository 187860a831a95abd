//! Fermionic operators on a Fock space with Jordan-Wigner sign strings.
//!
//! Basis state `k` has mode `j` occupied iff bit `j` of `k` is set; the
//! string for mode `j` counts occupied modes with lower index.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

const MAX_MODES: usize = 14;

#[derive(Debug, Clone, Copy)]
pub struct FockOperators {
    n_modes: usize,
}

fn sign_below(state: usize, mode: usize) -> f64 {
    if (state & ((1 << mode) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

impl FockOperators {
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes > MAX_MODES {
            return Err(Error::SizeCap(format!(
                "{n_modes} fermionic modes; dense Fock space is capped at {MAX_MODES}"
            )));
        }
        Ok(Self { n_modes })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        1 << self.n_modes
    }

    pub fn annihilation(&self, mode: usize) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for state in 0..self.dim() {
            if state >> mode & 1 == 1 {
                m[(state ^ (1 << mode), state)] = C64::new(sign_below(state, mode), 0.0);
            }
        }
        m
    }

    pub fn creation(&self, mode: usize) -> DMatrix<C64> {
        self.annihilation(mode).adjoint()
    }

    pub fn number(&self, mode: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            if i == j && i >> mode & 1 == 1 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `sum_ab x_ab c+_{offset+a} c_{offset+b}`.
    pub fn bilinear(&self, x: &DMatrix<C64>, offset: usize) -> DMatrix<C64> {
        let n = x.nrows();
        assert!(offset + n <= self.n_modes, "bilinear exceeds mode count");
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for state in 0..self.dim() {
            for b in 0..n {
                let mb = offset + b;
                if state >> mb & 1 == 0 {
                    continue;
                }
                let sb = sign_below(state, mb);
                let mid = state ^ (1 << mb);
                for a in 0..n {
                    let coef = x[(a, b)];
                    if coef == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let ma = offset + a;
                    if mid >> ma & 1 == 1 {
                        continue;
                    }
                    let sa = sign_below(mid, ma);
                    m[(mid | (1 << ma), state)] += coef * (sa * sb);
                }
            }
        }
        m
    }
}
