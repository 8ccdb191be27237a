//! Low-rank QR factors of far blocks and the compressed operator.
//!
//! Every unordered pair of distinct atoms is covered exactly once, either by
//! a far block pair of some tree level or by a pair left near at the finest
//! level. Each pair stores the factor of the upper block `Z_{A,B}`; the
//! mirror block is its transpose (`Z` is complex symmetric), so a product
//! with a stored factor `QR` contributes `Q(R x_B)` to the rows of `A` and
//! `Rᵀ(Qᵀ x_A)` to the rows of `B`.

use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::Assembler;
use crate::error::{Error, Result};
use crate::geometry::BlockTree;
use crate::linalg::Matrix;
use crate::math::{neg_log10, rel_diff, sqrt, C64};
use crate::schedule::Schedule;

/// Access to atom-atom blocks `Z_ij`.
pub trait BlockSource {
    fn atom_count(&self) -> usize;
    fn dofs_per_atom(&self) -> usize;
    fn block(&self, i: usize, j: usize) -> Result<Matrix>;
}

impl BlockSource for Assembler {
    fn atom_count(&self) -> usize {
        Assembler::atom_count(self)
    }

    fn dofs_per_atom(&self) -> usize {
        Assembler::dofs_per_atom(self)
    }

    fn block(&self, i: usize, j: usize) -> Result<Matrix> {
        Assembler::block(self, i, j).map(|b| b.matrix)
    }
}

/// Blocks cut out of an explicit matrix in atom-block order.
#[derive(Debug, Clone)]
pub struct DenseSource {
    pub matrix: Matrix,
    pub dofs_per_atom: usize,
}

impl BlockSource for DenseSource {
    fn atom_count(&self) -> usize {
        self.matrix.rows() / self.dofs_per_atom
    }

    fn dofs_per_atom(&self) -> usize {
        self.dofs_per_atom
    }

    fn block(&self, i: usize, j: usize) -> Result<Matrix> {
        let n = self.dofs_per_atom;
        Ok(self.matrix.block(i * n, j * n, n, n))
    }
}

/// Truncated factorization `Z ≈ Q R` with `Q` orthonormal (conjugate inner
/// product) and `R` in the original column order.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRank {
    pub q: Matrix,
    pub r: Matrix,
}

impl LowRank {
    pub fn rank(&self) -> usize {
        self.q.cols()
    }

    pub fn rows(&self) -> usize {
        self.q.rows()
    }

    pub fn cols(&self) -> usize {
        self.r.cols()
    }

    pub fn to_dense(&self) -> Matrix {
        self.q.matmul(&self.r)
    }
}

/// Column-pivoted Householder QR of `a`, stopped as soon as the trailing
/// Frobenius norm drops to `stop` or below. Returns the factor and the
/// trailing norms after `0, 1, …, rank` steps.
fn pivoted_qr(a: &Matrix, stop: f64) -> (LowRank, Vec<f64>) {
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut vs: Vec<Vec<C64>> = Vec::new();
    let trailing = |w: &Matrix, k: usize| -> f64 {
        let mut s = 0.0;
        for j in k..n {
            s += w.col(j)[k..].iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        sqrt(s)
    };
    let mut residuals = vec![trailing(&w, 0)];
    for k in 0..m.min(n) {
        if residuals[k] <= stop {
            break;
        }
        let (mut p, mut best) = (k, -1.0);
        for j in k..n {
            let s: f64 = w.col(j)[k..].iter().map(|z| z.norm_sqr()).sum();
            if s > best {
                best = s;
                p = j;
            }
        }
        w.swap_cols(k, p);
        perm.swap(k, p);
        let x = &w.col(k)[k..];
        let alpha = sqrt(best);
        let x0 = x[0];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let beta = -phase * alpha;
        let mut v: Vec<C64> = x.to_vec();
        v[0] -= beta;
        let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vn > 0.0 {
            for j in k..n {
                let col = &mut w.col_mut(j)[k..];
                let s: C64 = v.iter().zip(col.iter()).map(|(a, b)| a.conj() * b).sum();
                let f = s * (2.0 / vn);
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
        }
        let col = &mut w.col_mut(k)[k..];
        col[0] = beta;
        col[1..].iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        vs.push(v);
        residuals.push(trailing(&w, k + 1));
    }
    let r = vs.len();
    let mut q = Matrix::zeros(m, r);
    for j in 0..r {
        q[(j, j)] = C64::new(1.0, 0.0);
    }
    for k in (0..r).rev() {
        let v = &vs[k];
        let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vn == 0.0 {
            continue;
        }
        for j in 0..r {
            let col = &mut q.col_mut(j)[k..];
            let s: C64 = v.iter().zip(col.iter()).map(|(a, b)| a.conj() * b).sum();
            let f = s * (2.0 / vn);
            for (c, vi) in col.iter_mut().zip(v) {
                *c -= f * vi;
            }
        }
    }
    let mut rm = Matrix::zeros(r, n);
    for (jp, &j) in perm.iter().enumerate() {
        for i in 0..r.min(jp + 1) {
            rm[(i, j)] = w[(i, jp)];
        }
    }
    (LowRank { q, r: rm }, residuals)
}

/// Smallest-rank pivoted QR with `‖Z − QR‖_F ≤ eps·‖Z‖_F`.
pub fn lowrank_qr(block: &Matrix, eps: f64) -> Result<LowRank> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput("tolerance must lie in (0, 1)".into()));
    }
    if !block.is_finite() {
        return Err(Error::InvalidInput("block has non-finite entries".into()));
    }
    Ok(pivoted_qr(block, eps * block.frobenius()).0)
}

/// Trailing Frobenius norms of the full pivoted QR: entry `r` is the error
/// of the rank-`r` truncation.
pub fn truncation_profile(block: &Matrix) -> Vec<f64> {
    pivoted_qr(block, 0.0).1
}

/// Stored representation of one block.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    LowRank(LowRank),
    Dense(Matrix),
}

impl Factor {
    /// Stored coefficients: `(m + n) r` or `m n`.
    pub fn storage(&self) -> usize {
        match self {
            Factor::LowRank(f) => (f.rows() + f.cols()) * f.rank(),
            Factor::Dense(d) => d.rows() * d.cols(),
        }
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            Factor::LowRank(f) => Some(f.rank()),
            Factor::Dense(_) => None,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            Factor::LowRank(f) => f.to_dense(),
            Factor::Dense(d) => d.clone(),
        }
    }
}

/// Block pair of the partition: rows of the atoms `rows`, columns of `cols`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    /// Tree level (0 = coarsest) of a far pair, `None` for a finest pair.
    pub level: Option<usize>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredBlock {
    pub spec: BlockSpec,
    pub factor: Factor,
    /// Truncated QR rank, `None` when factoring was skipped.
    pub rank: Option<usize>,
}

/// Build parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionOptions {
    /// QR truncation tolerance.
    pub eps: f64,
    /// Keep every block dense (exact products).
    pub force_dense: bool,
}

impl CompressionOptions {
    pub fn new(eps: f64) -> Self {
        CompressionOptions { eps, force_dense: false }
    }
}

/// Storage accounting in complex coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ledger {
    /// Far blocks of all levels, both orientations.
    pub n_far: usize,
    /// Finest-level pairs, both orientations, plus `N N_p²` for `Z_D`.
    pub n_near: usize,
    /// `n_far + n_near`.
    pub n_qr: usize,
    /// Coefficients actually held (mirrors shared, `Z_D` deduplicated).
    pub stored: usize,
    pub far_blocks: usize,
    pub finest_blocks: usize,
    /// Blocks kept dense because factoring did not save storage.
    pub dense_fallbacks: usize,
    /// Blocks whose truncated rank reached `min(m, n)`.
    pub full_rank_blocks: usize,
}

/// Block-pair plan of the partition defined by a classified tree.
pub fn plan_blocks(tree: &BlockTree) -> Result<Vec<BlockSpec>> {
    if !tree.is_classified() {
        return Err(Error::InvalidInput("block tree must be classified".into()));
    }
    let mut out = Vec::new();
    for (l, level) in tree.levels.iter().enumerate() {
        for p in tree.far_pairs(l) {
            out.push(BlockSpec {
                level: Some(l),
                rows: level.atoms(p.first).to_vec(),
                cols: level.atoms(p.second).to_vec(),
            });
        }
    }
    for (a, b) in tree.finest_unordered() {
        out.push(BlockSpec { level: None, rows: vec![a], cols: vec![b] });
    }
    Ok(out)
}

/// Assembles one block pair from atom blocks.
pub fn gather(spec: &BlockSpec, source: &dyn BlockSource) -> Result<Matrix> {
    let np = source.dofs_per_atom();
    let mut z = Matrix::zeros(spec.rows.len() * np, spec.cols.len() * np);
    for (bi, &i) in spec.rows.iter().enumerate() {
        for (bj, &j) in spec.cols.iter().enumerate() {
            z.set_block(bi * np, bj * np, &source.block(i, j)?);
        }
    }
    Ok(z)
}

/// Factor of one assembled block pair.
pub fn compress_block(spec: BlockSpec, z: Matrix, opts: CompressionOptions) -> Result<StoredBlock> {
    if opts.force_dense {
        return Ok(StoredBlock { spec, factor: Factor::Dense(z), rank: None });
    }
    let f = lowrank_qr(&z, opts.eps)?;
    let (m, n) = (z.rows(), z.cols());
    let rank = f.rank();
    let factor = if (m + n) * rank >= m * n { Factor::Dense(z) } else { Factor::LowRank(f) };
    Ok(StoredBlock { spec, factor, rank: Some(rank) })
}

/// `Z_D` plus the stored block pairs, with the storage ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedOperator {
    atoms: usize,
    np: usize,
    diag: Vec<Matrix>,
    atom_diag: Vec<usize>,
    blocks: Vec<StoredBlock>,
    ledger: Ledger,
    eps: f64,
}

impl CompressedOperator {
    /// Assembles the operator from its parts; identical diagonal blocks are
    /// stored once.
    pub fn from_parts(
        np: usize,
        diagonal: Vec<Matrix>,
        blocks: Vec<StoredBlock>,
        opts: CompressionOptions,
    ) -> Result<Self> {
        let atoms = diagonal.len();
        let mut diag: Vec<Matrix> = Vec::new();
        let mut atom_diag = Vec::with_capacity(atoms);
        for d in diagonal {
            if d.rows() != np || d.cols() != np {
                return Err(Error::DimensionMismatch { expected: np, found: d.rows() });
            }
            match diag.iter().position(|e| *e == d) {
                Some(k) => atom_diag.push(k),
                None => {
                    atom_diag.push(diag.len());
                    diag.push(d);
                }
            }
        }
        let mut seen = vec![false; atoms * atoms];
        let mut ledger = Ledger::default();
        for b in &blocks {
            for &i in &b.spec.rows {
                for &j in &b.spec.cols {
                    if i >= atoms || j >= atoms || i == j || seen[i * atoms + j] || seen[j * atoms + i] {
                        return Err(Error::InvalidInput("block pairs do not partition the atom pairs".into()));
                    }
                    seen[i * atoms + j] = true;
                }
            }
            let s = b.factor.storage();
            let (m, n) = (b.spec.rows.len() * np, b.spec.cols.len() * np);
            match b.spec.level {
                Some(_) => {
                    ledger.n_far += 2 * s;
                    ledger.far_blocks += 1;
                }
                None => {
                    ledger.n_near += 2 * s;
                    ledger.finest_blocks += 1;
                }
            }
            ledger.stored += s;
            if matches!(b.factor, Factor::Dense(_)) && b.rank.is_some() {
                ledger.dense_fallbacks += 1;
            }
            if b.rank == Some(m.min(n)) {
                ledger.full_rank_blocks += 1;
            }
        }
        let covered = (0..atoms).all(|i| (0..atoms).all(|j| i == j || seen[i * atoms + j] || seen[j * atoms + i]));
        if !covered {
            return Err(Error::InvalidInput("block pairs leave atom pairs uncovered".into()));
        }
        ledger.n_near += atoms * np * np;
        ledger.n_qr = ledger.n_far + ledger.n_near;
        ledger.stored += diag.len() * np * np;
        Ok(CompressedOperator { atoms, np, diag, atom_diag, blocks, ledger, eps: opts.eps })
    }

    pub fn atom_count(&self) -> usize {
        self.atoms
    }

    pub fn dofs_per_atom(&self) -> usize {
        self.np
    }

    pub fn dof_count(&self) -> usize {
        self.atoms * self.np
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn blocks(&self) -> &[StoredBlock] {
        &self.blocks
    }

    /// Distinct diagonal blocks.
    pub fn distinct_diagonal(&self) -> &[Matrix] {
        &self.diag
    }

    /// Index into [`Self::distinct_diagonal`] of each atom.
    pub fn diagonal_map(&self) -> &[usize] {
        &self.atom_diag
    }

    pub fn diagonal(&self, atom: usize) -> &Matrix {
        &self.diag[self.atom_diag[atom]]
    }

    /// Work items of one product: the `N` diagonal blocks first, then the
    /// stored pairs. Weights are `(m + n) r` for factors and `m n` for dense
    /// blocks; memory is the stored coefficient count.
    pub fn work_items(&self) -> (Vec<u64>, Vec<u64>) {
        let d = (self.np * self.np) as u64;
        let mut w = vec![d; self.atoms];
        w.extend(self.blocks.iter().map(|b| b.factor.storage() as u64));
        (w.clone(), w)
    }

    pub fn work_item_count(&self) -> usize {
        self.atoms + self.blocks.len()
    }

    fn check_len(&self, x: &[C64]) -> Result<()> {
        if x.len() != self.dof_count() {
            return Err(Error::DimensionMismatch { expected: self.dof_count(), found: x.len() });
        }
        Ok(())
    }

    fn gather_vec(&self, atoms: &[usize], x: &[C64]) -> Vec<C64> {
        atoms.iter().flat_map(|&a| x[a * self.np..(a + 1) * self.np].iter().copied()).collect()
    }

    fn scatter_add(&self, atoms: &[usize], src: &[C64], y: &mut [C64]) {
        for (k, &a) in atoms.iter().enumerate() {
            for (o, s) in y[a * self.np..(a + 1) * self.np].iter_mut().zip(&src[k * self.np..(k + 1) * self.np]) {
                *o += s;
            }
        }
    }

    /// Adds the contribution of work item `item` to `y`.
    pub fn apply_item(&self, item: usize, x: &[C64], y: &mut [C64]) {
        let np = self.np;
        if item < self.atoms {
            self.diagonal(item).gemv_acc(&x[item * np..(item + 1) * np], &mut y[item * np..(item + 1) * np]);
            return;
        }
        let b = &self.blocks[item - self.atoms];
        let xc = self.gather_vec(&b.spec.cols, x);
        let xr = self.gather_vec(&b.spec.rows, x);
        let mut yr = vec![C64::new(0.0, 0.0); xr.len()];
        let mut yc = vec![C64::new(0.0, 0.0); xc.len()];
        match &b.factor {
            Factor::LowRank(f) => {
                let mut t = vec![C64::new(0.0, 0.0); f.rank()];
                f.r.gemv_acc(&xc, &mut t);
                f.q.gemv_acc(&t, &mut yr);
                let mut s = vec![C64::new(0.0, 0.0); f.rank()];
                f.q.gemv_t_acc(&xr, &mut s);
                f.r.gemv_t_acc(&s, &mut yc);
            }
            Factor::Dense(d) => {
                d.gemv_acc(&xc, &mut yr);
                d.gemv_t_acc(&xr, &mut yc);
            }
        }
        self.scatter_add(&b.spec.rows, &yr, y);
        self.scatter_add(&b.spec.cols, &yc, y);
    }

    /// `y = Z x`, items in index order.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.check_len(x)?;
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        for item in 0..self.work_item_count() {
            self.apply_item(item, x, &mut y);
        }
        Ok(y)
    }

    /// Partial product of one worker's items.
    pub fn apply_partial(&self, items: &[usize], x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        for &i in items {
            self.apply_item(i, x, &mut y);
        }
        y
    }

    /// `y = Z x` with per-worker partial sums reduced in worker order, the
    /// same arithmetic as a parallel run of the schedule.
    pub fn apply_scheduled(&self, schedule: &Schedule, x: &[C64]) -> Result<Vec<C64>> {
        self.check_len(x)?;
        if schedule.owner.len() != self.work_item_count() {
            return Err(Error::DimensionMismatch { expected: self.work_item_count(), found: schedule.owner.len() });
        }
        let partials: Vec<Vec<C64>> = schedule.partition().iter().map(|p| self.apply_partial(p, x)).collect();
        Ok(reduce_partials(&partials, x.len()))
    }

    /// Dense reconstruction of the compressed matrix.
    pub fn reconstruct_dense(&self) -> Matrix {
        let np = self.np;
        let n = self.dof_count();
        let mut z = Matrix::zeros(n, n);
        for a in 0..self.atoms {
            z.set_block(a * np, a * np, self.diagonal(a));
        }
        for b in &self.blocks {
            let d = b.factor.to_dense();
            for (bi, &i) in b.spec.rows.iter().enumerate() {
                for (bj, &j) in b.spec.cols.iter().enumerate() {
                    let sub = d.block(bi * np, bj * np, np, np);
                    z.set_block(j * np, i * np, &sub.transpose());
                    z.set_block(i * np, j * np, &sub);
                }
            }
        }
        z
    }
}

/// Sum of per-worker partial vectors in worker order.
pub fn reduce_partials(partials: &[Vec<C64>], n: usize) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); n];
    for p in partials {
        for (o, v) in y.iter_mut().zip(p) {
            *o += v;
        }
    }
    y
}

/// Sequential build: plan, assemble and factor every block pair.
pub fn build_compressed_operator(
    tree: &BlockTree,
    source: &dyn BlockSource,
    opts: CompressionOptions,
) -> Result<CompressedOperator> {
    if tree.atom_count() != source.atom_count() {
        return Err(Error::DimensionMismatch { expected: source.atom_count(), found: tree.atom_count() });
    }
    let diag = (0..source.atom_count()).map(|i| source.block(i, i)).collect::<Result<Vec<_>>>()?;
    let blocks = plan_blocks(tree)?
        .into_iter()
        .map(|s| {
            let z = gather(&s, source)?;
            compress_block(s, z, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    CompressedOperator::from_parts(source.dofs_per_atom(), diag, blocks, opts)
}

/// `G = N_dof² / N_QR`.
pub fn compression_gain(op: &CompressedOperator) -> f64 {
    let n = op.dof_count() as f64;
    n * n / op.ledger().n_qr as f64
}

/// Test vector `(1 + j)[1, …, 1]ᵀ`.
pub fn probe_vector(n: usize) -> Vec<C64> {
    vec![C64::new(1.0, 1.0); n]
}

/// `P_c = -log₁₀(‖Z_QR u − Z u‖ / ‖Z u‖)`; infinite when the products agree.
pub fn product_precision(op: &CompressedOperator, dense: Option<&Matrix>) -> Result<f64> {
    let z = dense.ok_or(Error::OracleRequired)?;
    if z.rows() != op.dof_count() {
        return Err(Error::DimensionMismatch { expected: op.dof_count(), found: z.rows() });
    }
    let u = probe_vector(op.dof_count());
    Ok(neg_log10(rel_diff(&op.apply(&u)?, &z.matvec(&u))))
}

/// One row of the two-atom split comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPoint {
    /// Relative Frobenius error target.
    pub target: f64,
    pub rank: usize,
    pub error_no_split: f64,
    pub gain_no_split: f64,
    pub ranks_split: (usize, usize),
    pub error_split: f64,
    pub gain_split: f64,
}

fn gain(dense: usize, stored: usize) -> f64 {
    if stored == 0 {
        f64::INFINITY
    } else {
        dense as f64 / stored as f64
    }
}

/// Compresses `z` whole and as two column groups (`in_first[j]` selects the
/// group of column `j`), at matched error targets.
///
/// The whole block uses the smallest rank meeting the target. The split
/// uses the rank pair of least storage whose combined error
/// `√(e_a² + e_b²)` meets the same target.
pub fn split_experiment(z: &Matrix, in_first: &[bool], targets: &[f64]) -> Result<Vec<SplitPoint>> {
    if in_first.len() != z.cols() {
        return Err(Error::DimensionMismatch { expected: z.cols(), found: in_first.len() });
    }
    let ia: Vec<usize> = (0..z.cols()).filter(|&j| in_first[j]).collect();
    let ib: Vec<usize> = (0..z.cols()).filter(|&j| !in_first[j]).collect();
    let (za, zb) = (z.select_cols(&ia), z.select_cols(&ib));
    let (m, n) = (z.rows(), z.cols());
    let norm = z.frobenius();
    let (pw, pa, pb) = (truncation_profile(z), truncation_profile(&za), truncation_profile(&zb));
    let mut out = Vec::with_capacity(targets.len());
    for &t in targets {
        let bound = t * norm;
        let rank = pw.iter().position(|&e| e <= bound).unwrap_or(pw.len() - 1);
        let mut best: Option<(usize, usize, usize, f64)> = None;
        for (ra, ea) in pa.iter().enumerate() {
            for (rb, eb) in pb.iter().enumerate() {
                let e = sqrt(ea * ea + eb * eb);
                if e > bound {
                    continue;
                }
                let s = (m + ia.len()) * ra + (m + ib.len()) * rb;
                if best.is_none_or(|b| s < b.2) {
                    best = Some((ra, rb, s, e));
                }
            }
        }
        let (ra, rb, s, e) = best.unwrap_or((pa.len() - 1, pb.len() - 1, (m + ia.len()) * (pa.len() - 1) + (m + ib.len()) * (pb.len() - 1), 0.0));
        out.push(SplitPoint {
            target: t,
            rank,
            error_no_split: pw[rank] / norm,
            gain_no_split: gain(m * n, (m + n) * rank),
            ranks_split: (ra, rb),
            error_split: e / norm,
            gain_split: gain(m * n, s),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(m, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        let mut d = a.clone();
        d.add_scaled(C64::new(-1.0, 0.0), b);
        d.frobenius() / b.frobenius()
    }

    #[test]
    fn rank_one_is_exact() {
        let a: Vec<C64> = (0..7).map(|i| C64::new(i as f64 + 1.0, 0.5)).collect();
        let b: Vec<C64> = (0..5).map(|j| C64::new(-0.3, j as f64)).collect();
        let z = Matrix::from_fn(7, 5, |i, j| a[i] * b[j]);
        let f = lowrank_qr(&z, 1e-12).unwrap();
        assert_eq!(f.rank(), 1);
        assert!(rel_err(&f.to_dense(), &z) < 1e-14);
    }

    #[test]
    fn zero_block_has_rank_zero() {
        let f = lowrank_qr(&Matrix::zeros(4, 6), 1e-3).unwrap();
        assert_eq!(f.rank(), 0);
        assert_eq!(f.to_dense(), Matrix::zeros(4, 6));
    }

    #[test]
    fn q_is_orthonormal_and_r_keeps_column_order() {
        let z = random(10, 8, 3);
        let f = lowrank_qr(&z, 1e-14).unwrap();
        let qh = Matrix::from_fn(f.rank(), 10, |i, j| f.q[(j, i)].conj());
        let mut g = qh.matmul(&f.q);
        g.add_scaled(C64::new(-1.0, 0.0), &Matrix::identity(f.rank()));
        assert!(g.max_abs() <= 1e-12);
        assert!(rel_err(&f.to_dense(), &z) < 1e-13);
    }

    #[test]
    fn rank_agrees_with_singular_values() {
        // graded spectrum so the energy threshold is well separated
        let (m, n) = (12, 9);
        let u = random(m, n, 11);
        let v = random(n, n, 12);
        let s: Vec<f64> = (0..n).map(|k| 10f64.powi(-(k as i32))).collect();
        let z = Matrix::from_fn(m, n, |i, j| (0..n).map(|k| u[(i, k)] * s[k] * v[(k, j)]).sum());
        let eps = 1e-3;
        let f = lowrank_qr(&z, eps).unwrap();
        assert!(rel_err(&f.to_dense(), &z) <= eps);
        let dm = DMatrix::from_fn(m, n, |i, j| nalgebra::Complex::new(z[(i, j)].re, z[(i, j)].im));
        let sv = dm.singular_values();
        let total: f64 = sv.iter().map(|x| x * x).sum();
        // smallest r with tail energy ≤ eps²‖Z‖²
        let mut r = 0;
        while sv.iter().skip(r).map(|x| x * x).sum::<f64>() > eps * eps * total {
            r += 1;
        }
        assert!((f.rank() as i64 - r as i64).abs() <= 1, "qr {} svd {r}", f.rank());
    }

    #[test]
    fn rank_is_monotone_in_tolerance() {
        let z = Matrix::from_fn(20, 20, |i, j| C64::new(1.0 / (1.0 + (i as f64 - j as f64 - 30.0).abs()), 0.0));
        let a = lowrank_qr(&z, 1e-2).unwrap().rank();
        let b = lowrank_qr(&z, 1e-4).unwrap().rank();
        assert!(a <= b);
    }

    #[test]
    fn split_bookkeeping_and_exact_limit() {
        let z = random(8, 10, 5);
        let mask: Vec<bool> = (0..10).map(|j| j % 3 == 0).collect();
        let pts = split_experiment(&z, &mask, &[1e-12]).unwrap();
        assert!(pts[0].error_no_split <= 1e-12 && pts[0].error_split <= 1e-12);
        assert_eq!(pts[0].ranks_split.0 + pts[0].ranks_split.1, 4 + 6);
    }

    #[test]
    fn partition_is_validated() {
        let np = 2;
        let d = vec![Matrix::identity(np); 3];
        let b = StoredBlock {
            spec: BlockSpec { level: None, rows: vec![0], cols: vec![1] },
            factor: Factor::Dense(Matrix::zeros(np, np)),
            rank: None,
        };
        let opts = CompressionOptions::new(1e-3);
        assert!(CompressedOperator::from_parts(np, d.clone(), vec![b.clone()], opts).is_err());
        let mut rest = vec![b.clone()];
        for (i, j) in [(0, 2), (1, 2)] {
            rest.push(StoredBlock { spec: BlockSpec { level: None, rows: vec![i], cols: vec![j] }, ..b.clone() });
        }
        let op = CompressedOperator::from_parts(np, d.clone(), rest.clone(), opts).unwrap();
        assert_eq!(op.distinct_diagonal().len(), 1);
        rest.push(StoredBlock { spec: BlockSpec { level: None, rows: vec![1], cols: vec![0] }, ..b });
        assert!(CompressedOperator::from_parts(np, d, rest, opts).is_err());
    }
}
