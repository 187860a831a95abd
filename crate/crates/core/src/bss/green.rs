//! Equal-time Green's functions, single-flip updates and slice wrapping.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::FieldConfig;
use crate::C64;

use super::udt::Udt;
use super::{build_chain, max_abs, slice_block, SlicePropagators};

/// `G = (1 + A_n)^{-1}` for the chain `A_n = C_n ... C_{n-1}` rotated to
/// slice `n` (0-based), plus `ln det(1 + A_n)`, which is the same for every
/// rotation.
#[derive(Debug, Clone)]
pub struct GreenState {
    pub g: DMatrix<C64>,
    pub slice: usize,
    pub log_det: C64,
}

/// Outcome of proposing a single auxiliary-field flip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipRatio {
    /// Ratio of full configuration weights, `e^{2 lambda s_old} |R|^2`.
    pub weight: f64,
    /// Species-c determinant ratio `R = 1 + delta (1 - G_xx)`.
    pub det: C64,
    /// `delta = e^{-2 lambda s_old} - 1`.
    pub delta: f64,
}

pub fn flip_ratio(green: &GreenState, s_old: i8, lambda: f64, x: usize) -> FlipRatio {
    let s = s_old as f64;
    let delta = (-2.0 * lambda * s).exp_m1();
    let det = C64::new(1.0, 0.0) + delta * (C64::new(1.0, 0.0) - green.g[(x, x)]);
    FlipRatio {
        weight: (2.0 * lambda * s).exp() * det.norm_sqr(),
        det,
        delta,
    }
}

/// Green's function at `slice`, built from scratch through UDT factors.
pub fn green_from_scratch(
    config: &FieldConfig,
    props: &SlicePropagators,
    lambda: f64,
    slice: usize,
    n_stab: usize,
) -> Result<GreenState> {
    if slice >= props.n_t() {
        return Err(Error::arg(format!(
            "slice {slice} outside 0..{}",
            props.n_t()
        )));
    }
    let chain = build_chain(config, props, lambda, slice, n_stab)?;
    let (g, log_det) = chain.inverse_one_plus()?;
    Ok(GreenState { g, slice, log_det })
}

impl GreenState {
    /// Sherman-Morrison update for an accepted flip at site `x` of the
    /// current slice: `G' = G - (delta/R) G e_x (e_x^T - e_x^T G)`.
    pub fn apply_flip(&mut self, x: usize, ratio: &FlipRatio) {
        let n = self.g.nrows();
        let col: DVector<C64> = self.g.column(x).into_owned();
        let mut row: DVector<C64> = DVector::from_fn(n, |j, _| -self.g[(x, j)]);
        row[x] += C64::new(1.0, 0.0);
        let coef = -C64::new(ratio.delta, 0.0) / ratio.det;
        self.g.ger(coef, &col, &row, C64::new(1.0, 0.0));
        self.log_det += ratio.det.ln();
    }

    /// Moves from slice `n` to `n + 1` (cyclically): `G <- C_n^{-1} G C_n`.
    pub fn wrap(&mut self, config: &FieldConfig, props: &SlicePropagators, lambda: f64) {
        let n = self.slice;
        let f: Vec<f64> = config
            .slice(n)
            .iter()
            .map(|&s| (lambda * s as f64).exp())
            .collect();
        let mut x = std::mem::replace(&mut self.g, DMatrix::zeros(0, 0));
        for (i, fi) in f.iter().enumerate() {
            x.row_mut(i).unscale_mut(*fi);
            x.column_mut(i).scale_mut(*fi);
        }
        self.g = props.hop_inv(n) * x * props.hop(n);
        self.slice = (n + 1) % props.n_t();
    }

    /// Max-abs entrywise difference.
    pub fn drift(&self, other: &GreenState) -> f64 {
        max_abs(&(&self.g - &other.g))
    }
}

/// Partial products used during a slice-major sweep.
///
/// `right[k]` factorizes `C_{k s} ... C_{Nt-1}` (`s = n_stab`). The left
/// part `C_0 ... C_{m-1}` of the slices already visited is kept as the
/// factorization of its adjoint so it can also grow by left
/// multiplication.
#[derive(Debug, Clone)]
pub struct UdtStack {
    n_stab: usize,
    n_t: usize,
    right: Vec<Udt>,
    left_adj: Udt,
    left_slice: usize,
}

impl UdtStack {
    pub fn build(
        config: &FieldConfig,
        props: &SlicePropagators,
        lambda: f64,
        n_stab: usize,
    ) -> Result<Self> {
        if n_stab == 0 {
            return Err(Error::arg("n_stab must be >= 1"));
        }
        let n_t = props.n_t();
        let v = props.volume();
        let n_blocks = n_t.div_ceil(n_stab);
        let mut right = vec![Udt::identity(v); n_blocks];
        let mut acc = Udt::identity(v);
        for k in (0..n_blocks).rev() {
            let lo = k * n_stab;
            let hi = (lo + n_stab).min(n_t);
            acc = acc.left_mul(&slice_block(config, props, lambda, lo, hi))?;
            right[k] = acc.clone();
        }
        Ok(Self {
            n_stab,
            n_t,
            right,
            left_adj: Udt::identity(v),
            left_slice: 0,
        })
    }

    pub fn n_stab(&self) -> usize {
        self.n_stab
    }

    /// Factorization of the full chain `C_0 ... C_{Nt-1}`.
    pub fn full(&self) -> &Udt {
        &self.right[0]
    }

    pub fn left_slice(&self) -> usize {
        self.left_slice
    }

    /// Absorbs slices `left_slice .. to` (current field values) into the
    /// left product.
    pub fn advance_left(
        &mut self,
        config: &FieldConfig,
        props: &SlicePropagators,
        lambda: f64,
        to: usize,
    ) -> Result<()> {
        if to <= self.left_slice || to > self.n_t {
            return Err(Error::arg(format!(
                "cannot advance left product from {} to {to}",
                self.left_slice
            )));
        }
        let block = slice_block(config, props, lambda, self.left_slice, to);
        self.left_adj = self.left_adj.left_mul(&block.adjoint())?;
        self.left_slice = to;
        Ok(())
    }

    /// Green's function at the current left boundary, which must be a
    /// multiple of `n_stab`.
    pub fn green(&self) -> Result<GreenState> {
        let b = self.left_slice;
        if !b.is_multiple_of(self.n_stab) || b >= self.n_t {
            return Err(Error::arg(format!(
                "stack boundary {b} is not a stabilization point"
            )));
        }
        let chain = if b == 0 {
            self.right[0].clone()
        } else {
            self.right[b / self.n_stab].mul_adjoint(&self.left_adj)?
        };
        let (g, log_det) = chain.inverse_one_plus()?;
        Ok(GreenState {
            g,
            slice: b,
            log_det,
        })
    }
}
