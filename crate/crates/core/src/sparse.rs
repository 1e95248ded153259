//! Sparse symmetric positive definite systems: triplet assembly and a
//! supernodal Cholesky solve (faer).

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Coordinate-format accumulator; duplicate entries are summed on build.
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletMatrix {
    pub fn new(n: usize) -> Self {
        TripletMatrix { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        TripletMatrix { n, entries: Vec::with_capacity(cap) }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, v: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push(Triplet::new(row, col, v));
    }

    pub fn build(&self) -> Result<CscMatrix> {
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &self.entries)
            .map_err(|e| Error::SolverBreakdown(format!("{e:?}")))?;
        Ok(CscMatrix { inner: m })
    }
}

/// Square compressed-column matrix.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    inner: SparseColMat<usize, f64>,
}

impl CscMatrix {
    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.inner.val().len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        let sym = self.inner.symbolic();
        let (cp, ri) = (sym.col_ptr(), sym.row_idx());
        let val = self.inner.val();
        for j in 0..n {
            let xj = x[j];
            for k in cp[j]..cp[j + 1] {
                y[ri[k]] += val[k] * xj;
            }
        }
        y
    }

    /// Value at (i, j), zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let sym = self.inner.symbolic();
        let (cp, ri) = (sym.col_ptr(), sym.row_idx());
        (cp[j]..cp[j + 1])
            .filter(|&k| ri[k] == i)
            .map(|k| self.inner.val()[k])
            .sum()
    }

    /// Largest |a_ij - a_ji| relative to the largest |a_ij|.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let sym = self.inner.symbolic();
        let (cp, ri) = (sym.col_ptr(), sym.row_idx());
        let val = self.inner.val();
        let mut amax: f64 = 0.0;
        let mut dmax: f64 = 0.0;
        for j in 0..n {
            for k in cp[j]..cp[j + 1] {
                amax = amax.max(val[k].abs());
                dmax = dmax.max((val[k] - self.get(j, ri[k])).abs());
            }
        }
        if amax == 0.0 {
            0.0
        } else {
            dmax / amax
        }
    }

    /// Cholesky solve of `self · x = b`. Fails with `SolverBreakdown` if the
    /// matrix is not positive definite or the residual check fails.
    pub fn solve_spd(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if n == 0 {
            return Ok(Vec::new());
        }
        let llt = self
            .inner
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::SolverBreakdown(format!("{e:?}")))?;
        let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        let sol = llt.solve(&rhs);
        let x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        let r = self.mul_vec(&x);
        let res = r.iter().zip(b).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !res.is_finite() || res > 1e-10 * bn.max(f64::MIN_POSITIVE) {
            return Err(Error::SolverBreakdown(format!("residual {res:e} for |b| = {bn:e}")));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_by_one() {
        let mut t = TripletMatrix::new(1);
        t.push(0, 0, 4.0);
        assert_eq!(t.build().unwrap().solve_spd(&[2.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn random_spd_matches_dense_factorisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 50;
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let spd = &a * a.transpose() + DMatrix::<f64>::identity(n, n) * 0.5;
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut t = TripletMatrix::new(n);
        for i in 0..n {
            for j in 0..n {
                t.push(i, j, spd[(i, j)]);
            }
        }
        let x = t.build().unwrap().solve_spd(&b).unwrap();
        let dense = spd.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b));
        for i in 0..n {
            assert!((x[i] - dense[i]).abs() < 1e-10 * dense.amax());
        }
    }

    #[test]
    fn indefinite_breaks_down() {
        let mut t = TripletMatrix::new(2);
        t.push(0, 0, 1.0);
        t.push(1, 1, -1.0);
        assert!(matches!(t.build().unwrap().solve_spd(&[1.0, 1.0]), Err(Error::SolverBreakdown(_))));
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletMatrix::new(2);
        t.push(0, 1, 1.0);
        t.push(0, 1, 2.0);
        t.push(1, 0, 3.0);
        let m = t.build().unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![3.0, 3.0]);
        assert_eq!(m.asymmetry(), 0.0);
    }
}
