//! Truncated singular value decomposition via one-sided Jacobi.
//!
//! The factorization drives the activation estimator: a weight matrix W is
//! replaced by the rank-r product U·V that minimizes Frobenius
//! reconstruction error, with V absorbing the singular values.
//!
//! The working matrix is the side whose implicit Gram matrix is smaller;
//! cyclic sweeps of Givens rotations orthogonalize its columns. A sweep's
//! accumulated off-diagonal mass sqrt(sum g_pq^2) must fall below
//! 1e-10 * ||A||_F within 100 sweeps, else the convergence error reports
//! the residual.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

const MAX_SWEEPS: usize = 100;
const TOL_FACTOR: f64 = 1e-10;
/// Pairs already orthogonal to roughly machine precision are not rotated.
const ROTATE_EPS: f64 = 1e-15;

/// Rank-r factors of a matrix: `u` is h1 x k, `v` is k x h2, and `v`
/// carries the singular values (V = Sigma_r V_r^T).
#[derive(Debug, Clone)]
pub struct LowRankFactors {
    u: Matrix,
    v: Matrix,
    rank: usize,
}

impl LowRankFactors {
    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Shape of the matrix these factors approximate.
    pub fn target_shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.cols())
    }

    /// The explicit product U·V.
    pub fn reconstruct(&self) -> Matrix {
        self.u.matmul(&self.v).expect("factor shapes chain by construction")
    }
}

/// Full thin SVD with diagnostics from the Jacobi iteration.
#[derive(Debug, Clone)]
pub struct Svd {
    u: Matrix,
    sigma: Vec<f64>,
    vt: Matrix,
    sweeps: usize,
    flops: u64,
}

impl Svd {
    /// Factorize `a` as U diag(sigma) V^T with sigma nonincreasing.
    pub fn compute(a: &Matrix) -> Result<Svd> {
        let (rows, cols) = a.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimensions {
                op: "svd",
                rows,
                cols,
            });
        }
        let transposed = rows < cols;
        let work = if transposed { a.transpose() } else { a.clone() };
        let (m, n) = work.shape();
        let mut flops: u64 = 0;

        // Column-major working copies: rotations touch contiguous memory.
        let mut b: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..m).map(|i| work.get(i, j)).collect())
            .collect();
        let mut jrot: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();

        let tolerance = TOL_FACTOR * a.frobenius_norm();
        let mut converged = false;
        let mut sweeps = 0;
        let mut off = 0.0;

        while sweeps < MAX_SWEEPS {
            sweeps += 1;
            let mut norms2: Vec<f64> = b.iter().map(|c| dot(c, c)).collect();
            flops += (n as u64) * (2 * m as u64 - 1);
            let mut off2 = 0.0;
            for p in 0..n.saturating_sub(1) {
                for q in p + 1..n {
                    let gpq = dot_pair(&b, p, q);
                    flops += 2 * m as u64 - 1;
                    off2 += gpq * gpq;
                    if gpq.abs() <= ROTATE_EPS * (norms2[p] * norms2[q]).sqrt() {
                        continue;
                    }
                    let zeta = (norms2[q] - norms2[p]) / (2.0 * gpq);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    rotate_pair(&mut b, p, q, c, s);
                    rotate_pair(&mut jrot, p, q, c, s);
                    flops += 6 * (m as u64 + n as u64);
                    norms2[p] -= t * gpq;
                    norms2[q] += t * gpq;
                }
            }
            off = off2.sqrt();
            if off <= tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SvdNotConverged {
                sweeps,
                residual: off,
                tolerance,
            });
        }

        // Singular values are the column norms; sort nonincreasing.
        let mut order: Vec<usize> = (0..n).collect();
        let sigmas: Vec<f64> = b.iter().map(|c| dot(c, c).sqrt()).collect();
        flops += (n as u64) * (2 * m as u64);
        order.sort_by(|&i, &j| sigmas[j].partial_cmp(&sigmas[i]).unwrap().then(i.cmp(&j)));

        let mut u_work = Matrix::zeros(m, n);
        let mut v_work = Matrix::zeros(n, n);
        let mut sigma = Vec::with_capacity(n);
        for (slot, &src) in order.iter().enumerate() {
            let s = sigmas[src];
            sigma.push(s);
            if s > 0.0 {
                for i in 0..m {
                    u_work.set(i, slot, b[src][i] / s);
                }
                flops += m as u64;
            }
            for i in 0..n {
                v_work.set(i, slot, jrot[src][i]);
            }
        }

        // work = U_w Sigma V_w^T. For the transposed case a = V_w Sigma U_w^T.
        let (u, vt) = if transposed {
            (v_work, u_work.transpose())
        } else {
            (u_work, v_work.transpose())
        };
        Ok(Svd {
            u,
            sigma,
            vt,
            sweeps,
            flops,
        })
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn vt(&self) -> &Matrix {
        &self.vt
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Floating point operations performed by the iteration, counted with
    /// the convention of one per multiply and one per add.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    /// Rank-r truncation; `v` rows are scaled by the singular values.
    pub fn truncate(&self, rank: usize) -> Result<LowRankFactors> {
        let q = self.sigma.len();
        let h1 = self.u.rows();
        let h2 = self.vt.cols();
        if rank == 0 || rank > q {
            return Err(Error::RankOutOfRange {
                rank,
                rows: h1,
                cols: h2,
            });
        }
        let mut u = Matrix::zeros(h1, rank);
        for i in 0..h1 {
            for j in 0..rank {
                u.set(i, j, self.u.get(i, j));
            }
        }
        let mut v = Matrix::zeros(rank, h2);
        for i in 0..rank {
            let s = self.sigma[i];
            for j in 0..h2 {
                v.set(i, j, s * self.vt.get(i, j));
            }
        }
        Ok(LowRankFactors { u, v, rank })
    }
}

/// Frobenius-optimal rank-r factors of `a`.
pub fn truncated_svd(a: &Matrix, rank: usize) -> Result<LowRankFactors> {
    if rank == 0 || rank > a.rows().min(a.cols()) {
        return Err(Error::RankOutOfRange {
            rank,
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    Svd::compute(a)?.truncate(rank)
}

#[inline]
fn dot_pair(cols: &[Vec<f64>], p: usize, q: usize) -> f64 {
    dot(&cols[p], &cols[q])
}

#[inline]
fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    debug_assert!(p < q);
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = c * *x - s * *y;
        let yq = s * *x + c * *y;
        *x = xp;
        *y = yq;
    }
}
