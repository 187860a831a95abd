//! Periodic two-dimensional square lattice.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic `lx` x `ly` square lattice with row-major site ordering
/// (`site = x + lx * y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    lx: usize,
    ly: usize,
}

impl LatticeSpec {
    pub fn new(lx: usize, ly: usize) -> Result<Self> {
        if lx < 2 || ly < 2 {
            return Err(Error::arg(format!(
                "lattice extents must be >= 2, got {lx}x{ly}"
            )));
        }
        Ok(Self { lx, ly })
    }

    pub fn lx(&self) -> usize {
        self.lx
    }

    pub fn ly(&self) -> usize {
        self.ly
    }

    pub fn volume(&self) -> usize {
        self.lx * self.ly
    }

    pub fn site_index(&self, x: usize, y: usize) -> Result<usize> {
        if x >= self.lx || y >= self.ly {
            return Err(Error::arg(format!(
                "site ({x}, {y}) outside {}x{} lattice",
                self.lx, self.ly
            )));
        }
        Ok(x + self.lx * y)
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.lx, site / self.lx)
    }

    /// Bond-count matrix of the hopping sum over every site and both lattice
    /// directions. A direction of extent 2 reaches the same neighbour
    /// forwards and through the wrap, so those entries are 2.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let v = self.volume();
        let mut adj = DMatrix::zeros(v, v);
        for y in 0..self.ly {
            for x in 0..self.lx {
                let a = x + self.lx * y;
                for b in [
                    (x + 1) % self.lx + self.lx * y,
                    x + self.lx * ((y + 1) % self.ly),
                ] {
                    adj[(a, b)] += 1.0;
                    adj[(b, a)] += 1.0;
                }
            }
        }
        adj
    }
}
