//! Householder QR with column pivoting for complex matrices.
//!
//! Columns are pivoted by largest remaining 2-norm, which orders `|diag R|`
//! non-increasingly and keeps the scale separation of long products in the
//! diagonal.

use nalgebra::DMatrix;

use crate::C64;

pub struct PivotedQr {
    /// Unitary `m x m` factor.
    pub q: DMatrix<C64>,
    /// Upper-triangular `m x n` factor of the permuted matrix.
    pub r: DMatrix<C64>,
    /// `a.column(perm[j]) == (q * r).column(j)`.
    pub perm: Vec<usize>,
    /// `det(q)`, a unit-modulus phase.
    pub q_det: C64,
}

pub fn qr_col_pivot(mut a: DMatrix<C64>) -> PivotedQr {
    let (m, n) = a.shape();
    let k = m.min(n);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors: Vec<(usize, Vec<C64>)> = Vec::with_capacity(k);
    let mut q_det = C64::new(1.0, 0.0);

    for j in 0..k {
        // Pivot on the largest trailing column norm.
        let mut best = j;
        let mut best_norm = -1.0;
        for c in j..n {
            let col = &a.as_slice()[c * m + j..(c + 1) * m];
            let nrm: f64 = col.iter().map(|z| z.norm_sqr()).sum();
            if nrm > best_norm {
                best_norm = nrm;
                best = c;
            }
        }
        if best != j {
            a.swap_columns(j, best);
            perm.swap(j, best);
        }

        let xnorm = best_norm.sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let data = a.as_mut_slice();
        let x0 = data[j * m + j];
        let phase = if x0.norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * xnorm;
        let mut v: Vec<C64> = data[j * m + j..(j + 1) * m].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let scale = 2.0 / vnorm2;
        for c in j..n {
            let col = &mut data[c * m + j..(c + 1) * m];
            let dot: C64 = v
                .iter()
                .zip(col.iter())
                .map(|(vi, ci)| vi.conj() * ci)
                .sum();
            let f = dot * scale;
            for (ci, vi) in col.iter_mut().zip(&v) {
                *ci -= vi * f;
            }
        }
        q_det = -q_det;
        reflectors.push((j, v));
    }

    let mut r = DMatrix::zeros(k, n);
    for c in 0..n {
        for i in 0..k.min(c + 1) {
            r[(i, c)] = a[(i, c)];
        }
    }

    // q = H_0 H_1 ... H_{k-1}, applied right-to-left onto the identity.
    let mut q = DMatrix::<C64>::identity(m, m);
    {
        let data = q.as_mut_slice();
        for (j, v) in reflectors.iter().rev() {
            let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let scale = 2.0 / vnorm2;
            for c in 0..m {
                let col = &mut data[c * m + j..(c + 1) * m];
                let dot: C64 = v
                    .iter()
                    .zip(col.iter())
                    .map(|(vi, ci)| vi.conj() * ci)
                    .sum();
                let f = dot * scale;
                for (ci, vi) in col.iter_mut().zip(v) {
                    *ci -= vi * f;
                }
            }
        }
    }

    PivotedQr { q, r, perm, q_det }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bss::max_abs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(m: usize, n: usize, seed: u64) -> DMatrix<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn reconstructs_and_is_unitary() {
        for (n, seed) in [(1, 1), (3, 2), (8, 3), (17, 4)] {
            let a = random_matrix(n, n, seed);
            let f = qr_col_pivot(a.clone());
            let qr = &f.q * &f.r;
            for j in 0..n {
                for i in 0..n {
                    assert!((qr[(i, j)] - a[(i, f.perm[j])]).norm() < 1e-12);
                }
            }
            let qq = f.q.adjoint() * &f.q;
            assert!(max_abs(&(qq - DMatrix::identity(n, n))) < 1e-12);
            for i in 0..n {
                for j in 0..i {
                    assert_eq!(f.r[(i, j)], C64::new(0.0, 0.0));
                }
            }
            let det = f.q.clone().lu().determinant();
            assert!((det - f.q_det).norm() < 1e-10);
        }
    }

    #[test]
    fn diagonal_is_non_increasing() {
        let mut a = random_matrix(10, 10, 9);
        for c in 0..10 {
            let s = 10f64.powi(c as i32 - 5);
            a.column_mut(c).scale_mut(s);
        }
        let f = qr_col_pivot(a);
        for j in 1..10 {
            assert!(f.r[(j, j)].norm() <= f.r[(j - 1, j - 1)].norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn handles_zero_column() {
        let mut a = random_matrix(4, 4, 5);
        a.column_mut(2).fill(C64::new(0.0, 0.0));
        let f = qr_col_pivot(a.clone());
        let qr = &f.q * &f.r;
        for j in 0..4 {
            for i in 0..4 {
                assert!((qr[(i, j)] - a[(i, f.perm[j])]).norm() < 1e-12);
            }
        }
        assert_eq!(f.perm[3], 2);
    }
}
