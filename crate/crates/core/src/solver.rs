//! Block-diagonal preconditioner, full GMRES and accuracy metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::compression::CompressedOperator;
use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::math::{dotc, neg_log10, rel_diff, sqrt, vec_norm, C64};

/// Square operator acting on complex vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Result<Vec<C64>>;
}

impl LinearOperator for Matrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.cols() {
            return Err(Error::DimensionMismatch { expected: self.cols(), found: x.len() });
        }
        Ok(self.matvec(x))
    }
}

impl LinearOperator for CompressedOperator {
    fn dim(&self) -> usize {
        self.dof_count()
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        CompressedOperator::apply(self, x)
    }
}

/// Approximate inverse applied on the left.
pub trait Preconditioner {
    fn apply(&self, x: &[C64]) -> Vec<C64>;
}

/// No preconditioning.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        x.to_vec()
    }
}

/// Inverse of the block diagonal: one LU per distinct diagonal block.
#[derive(Debug, Clone)]
pub struct BlockDiagonal {
    factors: Vec<Lu>,
    atom_factor: Vec<usize>,
    np: usize,
}

impl BlockDiagonal {
    /// Factors `distinct[k]`; atom `i` uses `distinct[map[i]]`.
    pub fn factor(distinct: &[Matrix], map: &[usize]) -> Result<Self> {
        let np = distinct.first().map_or(0, |d| d.rows());
        let mut factors = Vec::with_capacity(distinct.len());
        for (k, d) in distinct.iter().enumerate() {
            let block = map.iter().position(|&m| m == k).unwrap_or(k);
            factors.push(Lu::factor(d).map_err(|_| Error::PreconditionerBreakdown { block })?);
        }
        if map.iter().any(|&m| m >= factors.len()) {
            return Err(Error::InvalidInput("diagonal map out of range".into()));
        }
        Ok(BlockDiagonal { factors, atom_factor: map.to_vec(), np })
    }

    /// Factors the diagonal of a compressed operator.
    pub fn from_operator(op: &CompressedOperator) -> Result<Self> {
        Self::factor(op.distinct_diagonal(), op.diagonal_map())
    }

    /// Factors per-atom blocks, sharing factorizations of equal blocks.
    pub fn from_blocks(blocks: &[Matrix]) -> Result<Self> {
        let mut distinct: Vec<Matrix> = Vec::new();
        let mut map = Vec::with_capacity(blocks.len());
        for b in blocks {
            match distinct.iter().position(|d| d == b) {
                Some(k) => map.push(k),
                None => {
                    map.push(distinct.len());
                    distinct.push(b.clone());
                }
            }
        }
        Self::factor(&distinct, &map)
    }

    pub fn factorization_count(&self) -> usize {
        self.factors.len()
    }
}

impl Preconditioner for BlockDiagonal {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let np = self.np;
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        for (i, &k) in self.atom_factor.iter().enumerate() {
            self.factors[k].solve_into(&x[i * np..(i + 1) * np], &mut y[i * np..(i + 1) * np]);
        }
        y
    }
}

/// Outcome of a GMRES run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<C64>,
    /// Relative preconditioned residual, starting with the initial one.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖v₀ − Z I‖ / ‖v₀‖` at exit.
    pub true_residual: f64,
}

/// Full (unrestarted) GMRES on `M⁻¹ A x = M⁻¹ b` with modified Gram-Schmidt
/// and Givens rotations, from `x₀ = 0`.
pub fn gmres(
    a: &dyn LinearOperator,
    m: &dyn Preconditioner,
    b: &[C64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidInput("relative tolerance must lie in (0, 1)".into()));
    }
    let zero = C64::new(0.0, 0.0);
    let r0 = m.apply(b);
    let beta = vec_norm(&r0);
    if !beta.is_finite() {
        return Err(Error::Breakdown { iteration: 0 });
    }
    if beta == 0.0 {
        return Ok(SolveReport {
            solution: vec![zero; n],
            residual_history: vec![0.0],
            iterations: 0,
            converged: true,
            true_residual: 0.0,
        });
    }
    let mut basis: Vec<Vec<C64>> = vec![r0.iter().map(|v| v / beta).collect()];
    let mut hess: Vec<Vec<C64>> = Vec::new();
    let mut cs: Vec<(C64, C64)> = Vec::new();
    let mut g = vec![C64::new(beta, 0.0)];
    let mut history = vec![1.0];
    let mut converged = false;
    for j in 0..max_iter.min(n) {
        let mut w = m.apply(&a.apply(&basis[j])?);
        let mut h = vec![zero; j + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij = dotc(v, &w);
            h[i] = hij;
            for (wk, vk) in w.iter_mut().zip(v) {
                *wk -= hij * vk;
            }
        }
        let hn = vec_norm(&w);
        h[j + 1] = C64::new(hn, 0.0);
        for (i, &(c, s)) in cs.iter().enumerate() {
            let (x, y) = (h[i], h[i + 1]);
            h[i] = c.conj() * x + s.conj() * y;
            h[i + 1] = -s * x + c * y;
        }
        let (x, y) = (h[j], h[j + 1]);
        let den = sqrt(x.norm_sqr() + y.norm_sqr());
        let (c, s) = if den == 0.0 { (C64::new(1.0, 0.0), zero) } else { (x / den, y / den) };
        h[j] = C64::new(den, 0.0);
        h[j + 1] = zero;
        cs.push((c, s));
        let gj = g[j];
        g[j] = c.conj() * gj;
        g.push(-s * gj);
        hess.push(h);
        let res = g[j + 1].norm() / beta;
        if !res.is_finite() || !hn.is_finite() {
            return Err(Error::Breakdown { iteration: j + 1 });
        }
        history.push(res);
        if res <= rel_tol || hn <= f64::EPSILON * beta * 1e-3 {
            converged = res <= rel_tol || hn == 0.0;
            break;
        }
        basis.push(w.iter().map(|v| v / hn).collect());
    }
    let k = hess.len();
    let mut y = vec![zero; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for l in i + 1..k {
            s -= hess[l][i] * y[l];
        }
        if hess[i][i].norm() == 0.0 {
            return Err(Error::Breakdown { iteration: i + 1 });
        }
        y[i] = s / hess[i][i];
    }
    let mut x = vec![zero; n];
    for (yi, v) in y.iter().zip(&basis) {
        for (xk, vk) in x.iter_mut().zip(v) {
            *xk += yi * vk;
        }
    }
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Breakdown { iteration: k });
    }
    let ax = a.apply(&x)?;
    let rt: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let true_residual = vec_norm(&rt) / vec_norm(b);
    let last = *history.last().expect("history holds the initial residual");
    Ok(SolveReport {
        solution: x,
        iterations: history.len() - 1,
        converged: converged || last <= rel_tol,
        residual_history: history,
        true_residual,
    })
}

/// Direct dense solve, the reference path.
pub fn dense_solve(z: &Matrix, v0: &[C64]) -> Result<Vec<C64>> {
    if v0.len() != z.rows() {
        return Err(Error::DimensionMismatch { expected: z.rows(), found: v0.len() });
    }
    Ok(Lu::factor(z)?.solve(v0))
}

/// `ε_sol = ‖I − I_ref‖ / ‖I_ref‖`.
pub fn solution_error(i_qr: &[C64], i_ref: &[C64]) -> Result<f64> {
    if i_qr.len() != i_ref.len() {
        return Err(Error::DimensionMismatch { expected: i_ref.len(), found: i_qr.len() });
    }
    if vec_norm(i_ref) == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(rel_diff(i_qr, i_ref))
}

/// `A_s = -log₁₀ ε_sol`; infinite when the solutions agree exactly.
pub fn solution_accuracy(i_qr: &[C64], i_ref: &[C64]) -> Result<f64> {
    solution_error(i_qr, i_ref).map(neg_log10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64, shift: f64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Matrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        for i in 0..n {
            m[(i, i)] += shift;
        }
        m
    }

    fn random_vec(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let b = random_vec(9, 1);
        let r = gmres(&Matrix::identity(9), &Identity, &b, 1e-10, 100).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        assert!(rel_diff(&r.solution, &b) < 1e-14);
    }

    #[test]
    fn exact_block_preconditioner_needs_one_iteration() {
        let np = 4;
        let blocks: Vec<Matrix> = (0..3).map(|k| random_matrix(np, 10 + k, 3.0)).collect();
        let mut z = Matrix::zeros(3 * np, 3 * np);
        for (k, b) in blocks.iter().enumerate() {
            z.set_block(k * np, k * np, b);
        }
        let p = BlockDiagonal::from_blocks(&blocks).unwrap();
        assert_eq!(p.factorization_count(), 3);
        let r = gmres(&z, &p, &random_vec(3 * np, 2), 1e-10, 50).unwrap();
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn identical_blocks_share_one_factorization() {
        let b = random_matrix(5, 3, 2.0);
        let p = BlockDiagonal::from_blocks(&[b.clone(), b.clone(), b.clone()]).unwrap();
        assert_eq!(p.factorization_count(), 1);
        let mut z = Matrix::zeros(15, 15);
        for k in 0..3 {
            z.set_block(5 * k, 5 * k, &b);
        }
        let x = random_vec(15, 4);
        assert!(rel_diff(&p.apply(&z.matvec(&x)), &x) < 1e-10);
    }

    #[test]
    fn singular_block_breaks_preconditioner() {
        let good = random_matrix(3, 5, 2.0);
        let r = BlockDiagonal::from_blocks(&[good, Matrix::zeros(3, 3)]);
        assert!(matches!(r, Err(Error::PreconditionerBreakdown { block: 1 })));
    }

    #[test]
    fn history_is_monotone_and_matches_lu() {
        let z = random_matrix(30, 6, 4.0);
        let b = random_vec(30, 7);
        let r = gmres(&z, &Identity, &b, 1e-12, 200).unwrap();
        assert!(r.converged);
        assert!(r.residual_history.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert_eq!(r.iterations + 1, r.residual_history.len());
        let x = dense_solve(&z, &b).unwrap();
        assert!(rel_diff(&r.solution, &x) < 1e-10);
        assert!(r.true_residual < 1e-10);
    }

    #[test]
    fn left_preconditioning_keeps_the_fixed_point() {
        let np = 5;
        let z = random_matrix(4 * np, 8, 3.0);
        let blocks: Vec<Matrix> = (0..4).map(|k| z.block(k * np, k * np, np, np)).collect();
        let p = BlockDiagonal::from_blocks(&blocks).unwrap();
        let b = random_vec(4 * np, 9);
        let a = gmres(&z, &p, &b, 1e-12, 100).unwrap();
        let c = gmres(&z, &Identity, &b, 1e-12, 100).unwrap();
        assert!(rel_diff(&a.solution, &c.solution) < 1e-9);
    }

    #[test]
    fn max_iter_stops_unconverged() {
        let z = random_matrix(40, 12, 0.0);
        let r = gmres(&z, &Identity, &random_vec(40, 13), 1e-12, 3).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn non_finite_input_is_breakdown() {
        let mut b = random_vec(4, 1);
        b[2] = C64::new(f64::NAN, 0.0);
        assert!(matches!(gmres(&Matrix::identity(4), &Identity, &b, 1e-8, 10), Err(Error::Breakdown { .. })));
    }

    #[test]
    fn accuracy_metric() {
        let r = random_vec(6, 3);
        assert_eq!(solution_accuracy(&r, &r).unwrap(), f64::INFINITY);
        let s: Vec<C64> = r.iter().map(|v| v * 1.001).collect();
        assert!((solution_accuracy(&s, &r).unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(solution_accuracy(&r, &[C64::new(0.0, 0.0); 6]), Err(Error::ZeroReference));
    }
}
