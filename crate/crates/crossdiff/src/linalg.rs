//! Small dense linear algebra: row-major square matrices sized by the species
//! count, LU solves, Jacobi eigenvalues for symmetry/PSD audits, and the
//! block-tridiagonal sweep used by the implicit stepper.
//!
//! Species counts are tiny (n <= 4 in practice) while the sweep runs in the
//! innermost solver loop, so everything here works on flat slices with
//! preallocated workspaces instead of pulling in a general-purpose matrix
//! library.

use crate::error::{Error, Result};

/// Row-major n-by-n matrix of f64.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMat {
    n: usize,
    a: Vec<f64>,
}

impl SquareMat {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut a = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "ragged rows");
            a.extend_from_slice(r);
        }
        Self { n, a }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.a
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] += v;
    }

    pub fn matmul(&self, rhs: &SquareMat) -> SquareMat {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = SquareMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.a[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += aik * rhs.a[k * n + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.a[i * n + j] * v[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += v[i] * self.a[i * n + j] * v[j];
            }
        }
        s
    }

    pub fn transpose(&self) -> SquareMat {
        let n = self.n;
        let mut out = SquareMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.a[j * n + i] = self.a[i * n + j];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Largest |a_ij - a_ji|.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut m = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                m = m.max((self.a[i * n + j] - self.a[j * n + i]).abs());
            }
        }
        m
    }

    /// Solve `self * x = b` by LU with partial pivoting (copies `self`).
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut lu = self.a.clone();
        let mut piv = vec![0usize; n];
        lu_factor(&mut lu, &mut piv, n)?;
        let mut x = b.to_vec();
        lu_solve(&lu, &piv, &mut x, n);
        Ok(x)
    }

    /// Solve `self * X = B` column by column.
    pub fn solve_mat(&self, b: &SquareMat) -> Result<SquareMat> {
        assert_eq!(self.n, b.n);
        let n = self.n;
        let mut lu = self.a.clone();
        let mut piv = vec![0usize; n];
        lu_factor(&mut lu, &mut piv, n)?;
        let mut out = SquareMat::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = b.a[i * n + j];
            }
            lu_solve(&lu, &piv, &mut col, n);
            for i in 0..n {
                out.a[i * n + j] = col[i];
            }
        }
        Ok(out)
    }

    /// Eigenvalues of a symmetric matrix by the cyclic Jacobi method,
    /// ascending. The input is symmetrized first so audit call sites can pass
    /// matrices that are symmetric only up to round-off.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 0.5 * (self.a[i * n + j] + self.a[j * n + i]);
            }
        }
        let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
        for _sweep in 0..100 {
            let mut off = 0.0_f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(a[i * n + j].abs());
                }
            }
            if off <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = 0.5 * (aqq - app) / apq;
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        eig
    }

    pub fn min_sym_eigenvalue(&self) -> f64 {
        self.sym_eigenvalues()[0]
    }
}

/// LU factorization with partial pivoting, in place. `piv[k]` records the row
/// swapped into position k.
pub fn lu_factor(a: &mut [f64], piv: &mut [usize], n: usize) -> Result<()> {
    let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    for k in 0..n {
        let mut p = k;
        let mut pmax = a[k * n + k].abs();
        for r in (k + 1)..n {
            let v = a[r * n + k].abs();
            if v > pmax {
                pmax = v;
                p = r;
            }
        }
        if pmax <= 1e-14 * scale.max(1e-300) {
            return Err(Error::SingularSystem(format!(
                "pivot {pmax:.3e} at column {k} (scale {scale:.3e})"
            )));
        }
        piv[k] = p;
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
        }
        let akk = a[k * n + k];
        for r in (k + 1)..n {
            let f = a[r * n + k] / akk;
            a[r * n + k] = f;
            for j in (k + 1)..n {
                a[r * n + j] -= f * a[k * n + j];
            }
        }
    }
    Ok(())
}

/// Back-substitution for a factorization produced by [`lu_factor`].
pub fn lu_solve(lu: &[f64], piv: &[usize], b: &mut [f64], n: usize) {
    for k in 0..n {
        b.swap(k, piv[k]);
        for r in (k + 1)..n {
            b[r] -= lu[r * n + k] * b[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in (k + 1)..n {
            s -= lu[k * n + j] * b[j];
        }
        b[k] = s / lu[k * n + k];
    }
}

/// Block-tridiagonal system with `m` blocks of size `n`, solved by a block
/// Thomas sweep. Storage is flat and reused across solves; `solve` factors in
/// place and overwrites the right side with the solution.
pub struct BlockTridiag {
    pub n: usize,
    pub m: usize,
    /// m diagonal blocks, row-major each.
    pub diag: Vec<f64>,
    /// m-1 sub-diagonal blocks: block row j+1, column j.
    pub lower: Vec<f64>,
    /// m-1 super-diagonal blocks: block row j, column j+1.
    pub upper: Vec<f64>,
}

impl BlockTridiag {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            n,
            m,
            diag: vec![0.0; m * n * n],
            lower: vec![0.0; m.saturating_sub(1) * n * n],
            upper: vec![0.0; m.saturating_sub(1) * n * n],
        }
    }

    pub fn clear(&mut self) {
        self.diag.iter_mut().for_each(|x| *x = 0.0);
        self.lower.iter_mut().for_each(|x| *x = 0.0);
        self.upper.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn diag_mut(&mut self, j: usize) -> &mut [f64] {
        let nn = self.n * self.n;
        &mut self.diag[j * nn..(j + 1) * nn]
    }

    pub fn lower_mut(&mut self, j: usize) -> &mut [f64] {
        let nn = self.n * self.n;
        &mut self.lower[j * nn..(j + 1) * nn]
    }

    pub fn upper_mut(&mut self, j: usize) -> &mut [f64] {
        let nn = self.n * self.n;
        &mut self.upper[j * nn..(j + 1) * nn]
    }

    /// Solve in place. `rhs` has length `m * n` and is overwritten with the
    /// solution; the factor blocks are consumed.
    pub fn solve(&mut self, rhs: &mut [f64]) -> Result<()> {
        let n = self.n;
        let nn = n * n;
        let m = self.m;
        assert_eq!(rhs.len(), m * n);
        let mut piv = vec![0usize; n];
        let mut col = vec![0.0; n];

        // Forward sweep: factor D_j, overwrite U_j with D_j^{-1} U_j and
        // rhs_j with D_j^{-1} rhs_j, then eliminate from row j+1.
        for j in 0..m {
            {
                let d = &mut self.diag[j * nn..(j + 1) * nn];
                lu_factor(d, &mut piv, n)
                    .map_err(|e| Error::SingularSystem(format!("block {j}: {e}")))?;
                lu_solve(d, &piv, &mut rhs[j * n..(j + 1) * n], n);
            }
            if j + 1 < m {
                for c in 0..n {
                    for r in 0..n {
                        col[r] = self.upper[j * nn + r * n + c];
                    }
                    lu_solve(&self.diag[j * nn..(j + 1) * nn], &piv, &mut col, n);
                    for r in 0..n {
                        self.upper[j * nn + r * n + c] = col[r];
                    }
                }
                // D_{j+1} -= L_j * (D_j^{-1} U_j), rhs_{j+1} -= L_j * rhs_j
                for r in 0..n {
                    for c in 0..n {
                        let mut s = 0.0;
                        for k in 0..n {
                            s += self.lower[j * nn + r * n + k] * self.upper[j * nn + k * n + c];
                        }
                        self.diag[(j + 1) * nn + r * n + c] -= s;
                    }
                    let mut s = 0.0;
                    for k in 0..n {
                        s += self.lower[j * nn + r * n + k] * rhs[j * n + k];
                    }
                    rhs[(j + 1) * n + r] -= s;
                }
            }
        }

        // Back substitution: x_j = rhs_j - (D_j^{-1} U_j) x_{j+1}.
        for j in (0..m.saturating_sub(1)).rev() {
            for r in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.upper[j * nn + r * n + k] * rhs[(j + 1) * n + k];
                }
                rhs[j * n + r] -= s;
            }
        }
        Ok(())
    }
}
