//! UDT factorizations of long slice-matrix products.
//!
//! A product `P` is stored as `U D T` with `U` unitary, `D` a positive
//! diagonal carrying all the scales, and `T` well conditioned. `1 + P` is
//! never formed directly; inverses and determinants go through the split
//! `D = D_big * D_small` with `D_big = max(D, 1)` and `D_small = min(D, 1)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

use super::qr::qr_col_pivot;

#[derive(Debug, Clone)]
pub struct Udt {
    pub u: DMatrix<C64>,
    /// `det(u)`.
    pub u_det: C64,
    pub d: DVector<f64>,
    pub t: DMatrix<C64>,
}

fn check_finite(m: &DMatrix<C64>, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!(
            "non-finite entries in {what} ({}x{}, max |entry| {:e})",
            m.nrows(),
            m.ncols(),
            m.iter().map(|z| z.norm()).fold(0.0, f64::max)
        )))
    }
}

impl Udt {
    pub fn identity(n: usize) -> Self {
        Self {
            u: DMatrix::identity(n, n),
            u_det: C64::new(1.0, 0.0),
            d: DVector::from_element(n, 1.0),
            t: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        let n = m.nrows();
        Self::decompose(m, &DMatrix::identity(n, n))
    }

    /// Factorizes `x * t_right`, absorbing the triangular part into `t_right`.
    fn decompose(x: DMatrix<C64>, t_right: &DMatrix<C64>) -> Result<Self> {
        check_finite(&x, "UDT input")?;
        let n = x.nrows();
        let f = qr_col_pivot(x);
        let d = DVector::from_fn(n, |i, _| f.r[(i, i)].norm());
        if let Some(i) = d.iter().position(|&v| v == 0.0) {
            return Err(Error::numerical(format!(
                "singular slice product: zero scale at position {i} of {n}"
            )));
        }
        // D^{-1} R P^T
        let mut rp = DMatrix::zeros(n, n);
        for (j, &pj) in f.perm.iter().enumerate() {
            rp.set_column(pj, &f.r.column(j));
        }
        for i in 0..n {
            rp.row_mut(i).unscale_mut(d[i]);
        }
        Ok(Self {
            u: f.q,
            u_det: f.q_det,
            d,
            t: rp * t_right,
        })
    }

    /// Factorization of `m * self`.
    pub fn left_mul(&self, m: &DMatrix<C64>) -> Result<Self> {
        let mut x = m * &self.u;
        for (j, &dj) in self.d.iter().enumerate() {
            x.column_mut(j).scale_mut(dj);
        }
        Self::decompose(x, &self.t)
    }

    /// Factorization of `self * other_adjᴴ`, where `other_adj` holds the
    /// adjoint of the right factor (`U_o D_o T_o = Rᴴ`).
    pub fn mul_adjoint(&self, other_adj: &Udt) -> Result<Self> {
        let mut mid = &self.t * other_adj.t.adjoint();
        for (i, &di) in self.d.iter().enumerate() {
            mid.row_mut(i).scale_mut(di);
        }
        for (j, &dj) in other_adj.d.iter().enumerate() {
            mid.column_mut(j).scale_mut(dj);
        }
        let inner = Self::from_matrix(mid)?;
        Ok(Self {
            u: &self.u * inner.u,
            u_det: self.u_det * inner.u_det,
            d: inner.d,
            t: inner.t * other_adj.u.adjoint(),
        })
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut ud = self.u.clone();
        for (j, &dj) in self.d.iter().enumerate() {
            ud.column_mut(j).scale_mut(dj);
        }
        ud * &self.t
    }

    /// `(D_big^{-1} Uᴴ + D_small T, D_big^{-1} Uᴴ)`; then
    /// `1 + U D T = U D_big M` with `M` the first matrix.
    fn split(&self) -> (DMatrix<C64>, DMatrix<C64>) {
        let mut rhs = self.u.adjoint();
        let mut m = self.t.clone();
        for (i, &di) in self.d.iter().enumerate() {
            if di > 1.0 {
                rhs.row_mut(i).unscale_mut(di);
            } else {
                m.row_mut(i).scale_mut(di);
            }
        }
        (m + &rhs, rhs)
    }

    fn log_big(&self) -> f64 {
        self.d.iter().filter(|&&d| d > 1.0).map(|d| d.ln()).sum()
    }

    /// Complex `ln det(1 + U D T)`; real part `-inf` when singular.
    pub fn log_det_one_plus(&self) -> C64 {
        let (m, _) = self.split();
        let ld = log_det(m);
        if ld.re == f64::NEG_INFINITY {
            return ld;
        }
        self.u_det.ln() + self.log_big() + ld
    }

    /// `((1 + U D T)^{-1}, ln det(1 + U D T))`.
    pub fn inverse_one_plus(&self) -> Result<(DMatrix<C64>, C64)> {
        let (m, rhs) = self.split();
        let lu = m.lu();
        let ld = lu_log_det(&lu);
        if ld.re == f64::NEG_INFINITY {
            return Err(Error::numerical(
                "1 + B is singular (zero-weight configuration)",
            ));
        }
        let g = lu
            .solve(&rhs)
            .ok_or_else(|| Error::numerical("1 + B is singular (zero-weight configuration)"))?;
        check_finite(&g, "Green's function")?;
        Ok((g, self.u_det.ln() + self.log_big() + ld))
    }
}

type Lu = nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>;

fn lu_log_det(lu: &Lu) -> C64 {
    let u = lu.u();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..u.nrows() {
        let p = u[(i, i)];
        if p.norm() == 0.0 || !p.re.is_finite() || !p.im.is_finite() {
            return C64::new(f64::NEG_INFINITY, 0.0);
        }
        acc += p.ln();
    }
    if lu.p().determinant::<f64>() < 0.0 {
        acc += C64::new(0.0, std::f64::consts::PI);
    }
    acc
}

/// Complex `ln det m` via partial-pivot LU; `-inf` real part when singular.
pub fn log_det(m: DMatrix<C64>) -> C64 {
    lu_log_det(&m.lu())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bss::max_abs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng, scale: f64) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
        })
    }

    fn rel_err(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        max_abs(&(a - b)) / max_abs(b)
    }

    #[test]
    fn product_of_factors_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut dense = DMatrix::<C64>::identity(5, 5);
        let mut udt = Udt::identity(5);
        for _ in 0..6 {
            let m = random_matrix(5, &mut rng, 1.5);
            dense = &m * dense;
            udt = udt.left_mul(&m).unwrap();
        }
        assert!(rel_err(&udt.to_dense(), &dense) < 1e-12);
        let qq = udt.u.adjoint() * &udt.u;
        assert!(max_abs(&(qq - DMatrix::identity(5, 5))) < 1e-12);
        assert!(udt.d.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn inverse_and_log_det_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut udt = Udt::identity(4);
        for _ in 0..3 {
            udt = udt.left_mul(&random_matrix(4, &mut rng, 1.0)).unwrap();
        }
        let one_plus = DMatrix::<C64>::identity(4, 4) + udt.to_dense();
        let (g, ld) = udt.inverse_one_plus().unwrap();
        assert!(max_abs(&(&g * &one_plus - DMatrix::identity(4, 4))) < 1e-12);
        let det = one_plus.lu().determinant();
        let ld_dense = det.ln();
        assert!((ld.re - ld_dense.re).abs() < 1e-12);
        let dphase = (ld.im - ld_dense.im).rem_euclid(2.0 * std::f64::consts::PI);
        assert!(dphase < 1e-10 || (2.0 * std::f64::consts::PI - dphase) < 1e-10);
        assert!((udt.log_det_one_plus() - ld).norm() < 1e-14);
    }

    #[test]
    fn mul_adjoint_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Udt::from_matrix(random_matrix(6, &mut rng, 3.0)).unwrap();
        let b = random_matrix(6, &mut rng, 0.3);
        let b_adj = Udt::from_matrix(b.adjoint()).unwrap();
        let c = a.mul_adjoint(&b_adj).unwrap();
        assert!(rel_err(&c.to_dense(), &(a.to_dense() * b)) < 1e-12);
    }

    #[test]
    fn survives_wide_scale_range() {
        // diag(e^{±k}) products reach 1e±80 scales.
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut udt = Udt::identity(n);
        let mut log_scale = 0.0;
        for _ in 0..40 {
            let mut m = random_matrix(n, &mut rng, 0.1) + DMatrix::identity(n, n);
            let s: f64 = 4.5;
            m.row_mut(0).scale_mut(s.exp());
            m.row_mut(3).scale_mut((-s).exp());
            log_scale += s;
            udt = udt.left_mul(&m).unwrap();
        }
        assert!(udt.d.iter().all(|d| d.is_finite() && *d > 0.0));
        assert!(udt.d.max().ln() > 0.5 * log_scale);
        let (g, ld) = udt.inverse_one_plus().unwrap();
        assert!(g.iter().all(|z| z.re.is_finite()));
        assert!(ld.re.is_finite());
    }
}
