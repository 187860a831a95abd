//! Single-particle machinery for the auxiliary-field weights.
//!
//! Species c evolves with `e^{K dt} = e^{-i w dt A}`, species d with its
//! complex conjugate, so for a field configuration `s`
//!
//! ```text
//! w(s) = N e^{-lambda S} |det(1 + Bd B)|^2,   B = E D_1 E D_2 ... E D_Nt
//! ```
//!
//! with `E = e^{K dt}`, `D_n = diag(e^{lambda s_n})` and `Bd` the boundary
//! matrix (identity for the purity, `e^{+i w t A}` for the echo).
//!
//! Internally the chain is rotated so each slice's diagonal leads its own
//! factor: `C_n = D_n E` for `n < Nt - 1` and `C_{Nt-1} = D_{Nt-1} Bd E`.
//! Then `det(1 + Bd B) = det(1 + C_0 C_1 ... C_{Nt-1})`, and the chain
//! "at slice n" is the cyclic product starting with `C_n`.

mod green;
mod qr;
mod udt;

pub use green::{flip_ratio, green_from_scratch, FlipRatio, GreenState, UdtStack};
pub use qr::{qr_col_pivot, PivotedQr};
pub use udt::{log_det, Udt};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{log_normalization_from_lambda, FieldConfig, Observable};
use crate::C64;

/// Largest entry modulus.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Default number of slices multiplied between QR re-factorizations.
pub const DEFAULT_N_STAB: usize = 10;

fn eigen(adj: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !adj.is_square() {
        return Err(Error::arg(format!(
            "hopping matrix must be square, got {}x{}",
            adj.nrows(),
            adj.ncols()
        )));
    }
    let asym = (adj - adj.transpose()).amax();
    if asym > 1e-12 {
        return Err(Error::arg(format!(
            "hopping matrix not symmetric (max asymmetry {asym:e})"
        )));
    }
    SymmetricEigen::try_new(adj.clone(), 1e-15, 0).ok_or_else(|| {
        Error::numerical(format!(
            "symmetric eigensolve did not converge ({}x{}, max |entry| {:e})",
            adj.nrows(),
            adj.ncols(),
            adj.amax()
        ))
    })
}

fn exp_from_eigen(eig: &SymmetricEigen<f64, nalgebra::Dyn>, theta: f64) -> DMatrix<C64> {
    let q = eig.eigenvectors.map(|x| C64::new(x, 0.0));
    let mut qd = q.clone();
    for (j, &e) in eig.eigenvalues.iter().enumerate() {
        let phase = C64::from_polar(1.0, -theta * e);
        for z in qd.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    qd * q.transpose()
}

/// `e^{-i theta A}` for real symmetric `A`.
pub fn exp_hopping(adj: &DMatrix<f64>, theta: f64) -> Result<DMatrix<C64>> {
    Ok(exp_from_eigen(&eigen(adj)?, theta))
}

/// Slice propagators for one hopping strength and Trotter grid.
#[derive(Debug, Clone)]
pub struct SlicePropagators {
    kind: Observable,
    n_t: usize,
    exp_k: DMatrix<C64>,
    exp_k_inv: DMatrix<C64>,
    boundary: DMatrix<C64>,
    last_hop: DMatrix<C64>,
    last_hop_inv: DMatrix<C64>,
}

impl SlicePropagators {
    pub fn new(adj: &DMatrix<f64>, w: f64, dt: f64, n_t: usize, kind: Observable) -> Result<Self> {
        if n_t == 0 {
            return Err(Error::arg("n_t must be >= 1"));
        }
        let eig = eigen(adj)?;
        let exp_k = exp_from_eigen(&eig, w * dt);
        let boundary = match kind {
            Observable::Purity => DMatrix::identity(adj.nrows(), adj.nrows()),
            Observable::Echo => exp_from_eigen(&eig, -w * dt * n_t as f64),
        };
        let last_hop = &boundary * &exp_k;
        Ok(Self {
            kind,
            n_t,
            exp_k_inv: exp_k.adjoint(),
            last_hop_inv: last_hop.adjoint(),
            exp_k,
            boundary,
            last_hop,
        })
    }

    pub fn kind(&self) -> Observable {
        self.kind
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn volume(&self) -> usize {
        self.exp_k.nrows()
    }

    /// `e^{K dt}` for species c.
    pub fn exp_k(&self) -> &DMatrix<C64> {
        &self.exp_k
    }

    /// `e^{K dt}` for species d, the entrywise conjugate.
    pub fn exp_k_conj(&self) -> DMatrix<C64> {
        self.exp_k.map(|z| z.conj())
    }

    pub fn boundary(&self) -> &DMatrix<C64> {
        &self.boundary
    }

    /// Hopping factor `E_n` of rotated slice `n`.
    pub fn hop(&self, n: usize) -> &DMatrix<C64> {
        if n + 1 == self.n_t {
            &self.last_hop
        } else {
            &self.exp_k
        }
    }

    pub fn hop_inv(&self, n: usize) -> &DMatrix<C64> {
        if n + 1 == self.n_t {
            &self.last_hop_inv
        } else {
            &self.exp_k_inv
        }
    }
}

fn check_shape(config: &FieldConfig, props: &SlicePropagators) -> Result<()> {
    if config.n_t() != props.n_t() || config.volume() != props.volume() {
        return Err(Error::arg(format!(
            "field is {}x{} but propagators are {}x{}",
            config.n_t(),
            config.volume(),
            props.n_t(),
            props.volume()
        )));
    }
    Ok(())
}

fn diag_factors(config: &FieldConfig, lambda: f64, n: usize) -> DVector<f64> {
    DVector::from_iterator(
        config.volume(),
        config.slice(n).iter().map(|&s| (lambda * s as f64).exp()),
    )
}

/// `C_n = D_n E_n`.
pub fn slice_matrix(
    config: &FieldConfig,
    props: &SlicePropagators,
    lambda: f64,
    n: usize,
) -> DMatrix<C64> {
    let mut m = props.hop(n).clone();
    for (x, f) in diag_factors(config, lambda, n).iter().enumerate() {
        m.row_mut(x).scale_mut(*f);
    }
    m
}

/// `C_n^{-1} = E_n^{-1} D_n^{-1}`.
pub fn slice_matrix_inv(
    config: &FieldConfig,
    props: &SlicePropagators,
    lambda: f64,
    n: usize,
) -> DMatrix<C64> {
    let mut m = props.hop_inv(n).clone();
    for (x, f) in diag_factors(config, lambda, n).iter().enumerate() {
        m.column_mut(x).unscale_mut(*f);
    }
    m
}

/// Plain product `C_a C_{a+1} ... C_{b-1}` (indices taken mod `n_t`).
pub fn slice_block(
    config: &FieldConfig,
    props: &SlicePropagators,
    lambda: f64,
    a: usize,
    b: usize,
) -> DMatrix<C64> {
    let n_t = props.n_t();
    let mut m = slice_matrix(config, props, lambda, a % n_t);
    for n in a + 1..b {
        m *= slice_matrix(config, props, lambda, n % n_t);
    }
    m
}

/// Stabilized product of the chain rotated to start at `start`, i.e.
/// `C_start ... C_{Nt-1} C_0 ... C_{start-1}`, re-factorized every
/// `n_stab` slices.
pub fn build_chain(
    config: &FieldConfig,
    props: &SlicePropagators,
    lambda: f64,
    start: usize,
    n_stab: usize,
) -> Result<Udt> {
    check_shape(config, props)?;
    if n_stab == 0 {
        return Err(Error::arg("n_stab must be >= 1"));
    }
    let n_t = props.n_t();
    let mut acc = Udt::identity(props.volume());
    // Blocks start at start + k * n_stab, the same grouping UdtStack uses.
    for k in (0..n_t.div_ceil(n_stab)).rev() {
        let lo = start + k * n_stab;
        let hi = (lo + n_stab).min(start + n_t);
        acc = acc.left_mul(&slice_block(config, props, lambda, lo, hi))?;
    }
    Ok(acc)
}

/// `ln w(s) = ln N(lambda) - lambda S + 2 Re ln det(1 + Bd B)`.
///
/// The imaginary part of the determinant's log cancels against species d.
/// Returns `-inf` for a zero-weight configuration.
pub fn log_weight(
    config: &FieldConfig,
    props: &SlicePropagators,
    lambda: f64,
    n_stab: usize,
) -> Result<f64> {
    let chain = build_chain(config, props, lambda, 0, n_stab)?;
    let ld = chain.log_det_one_plus();
    if ld.re == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(
        log_normalization_from_lambda(lambda, props.n_t(), props.volume())
            - lambda * config.sum() as f64
            + 2.0 * ld.re,
    )
}

/// Unstabilized `B = E D_1 E D_2 ... E D_Nt` for a given `E`, in the
/// written slice order. For reference checks only.
pub fn naive_b_matrix(config: &FieldConfig, exp_k: &DMatrix<C64>, lambda: f64) -> DMatrix<C64> {
    let v = config.volume();
    let mut b = DMatrix::<C64>::identity(v, v);
    for n in 0..config.n_t() {
        let mut slice = exp_k.clone();
        for (x, &s) in config.slice(n).iter().enumerate() {
            slice.column_mut(x).scale_mut((lambda * s as f64).exp());
        }
        b *= slice;
    }
    b
}
