//! Geometry → basis → assembly → compression → schedule → GMRES.

use std::time::{Duration, Instant};

use qrvie_core::assembly::Assembler;
use qrvie_core::basis::{build_loop_star, DofKind};
use qrvie_core::compression::{product_precision, CompressedOperator, CompressionOptions};
use qrvie_core::geometry::{build_block_tree, classify_interactions, BlockTree};
use qrvie_core::linalg::Matrix;
use qrvie_core::math::c;
use qrvie_core::schedule::Schedule;
use qrvie_core::solver::{dense_solve, gmres, solution_accuracy, solution_error, BlockDiagonal, Identity, SolveReport};

use crate::error::{CliResult, Stage};
use crate::parallel::{assemble_blocks, AssembledBlocks, Reduction, ScheduledOperator};
use crate::scenario::Scenario;

/// Assembler and classified tree of a scenario.
pub struct Problem {
    pub assembler: Assembler,
    pub tree: BlockTree,
}

impl Problem {
    pub fn new(s: &Scenario) -> CliResult<Problem> {
        let mesh = s.mesh()?;
        let basis = build_loop_star(&mesh);
        let layout = s.layout()?;
        let assembler =
            Assembler::new(&mesh, &basis, &layout, s.material(), s.excitation()?, s.quad()).stage("assembly")?;
        let mut tree = build_block_tree(&layout, s.level1).stage("geometry")?;
        classify_interactions(&mut tree);
        Ok(Problem { assembler, tree })
    }

    pub fn dof_kinds(&self) -> Vec<DofKind> {
        let b = self.assembler.basis();
        (0..b.dof_count()).map(|d| b.kind(d)).collect()
    }

    pub fn assemble(&self, workers: usize) -> CliResult<AssembledBlocks> {
        assemble_blocks(&self.tree, &self.assembler, workers).stage("assembly")
    }
}

/// Exact matrix rebuilt from uncompressed blocks.
pub fn dense_from_blocks(blocks: &AssembledBlocks) -> CliResult<Matrix> {
    let exact = CompressionOptions { eps: 1e-16, force_dense: true };
    Ok(blocks.compress(exact).stage("compression")?.reconstruct_dense())
}

/// Comparison against the dense LU solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMetrics {
    pub p_c: f64,
    pub a_s: f64,
    pub eps_sol: f64,
}

pub fn oracle_metrics(op: &CompressedOperator, z: &Matrix, v0: &[qrvie_core::C64], i_qr: &[qrvie_core::C64]) -> CliResult<OracleMetrics> {
    let i_ref = dense_solve(z, v0).stage("solver")?;
    Ok(OracleMetrics {
        p_c: product_precision(op, Some(z)).stage("compression")?,
        a_s: solution_accuracy(i_qr, &i_ref).stage("solver")?,
        eps_sol: solution_error(i_qr, &i_ref).stage("solver")?,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Timings {
    pub setup: Duration,
    pub assembly: Duration,
    pub compression: Duration,
    pub solve: Duration,
    pub oracle: Duration,
}

/// Everything a solve run produces.
pub struct RunOutcome {
    pub scenario: Scenario,
    pub atoms: usize,
    pub dofs_per_atom: usize,
    pub kinds: Vec<DofKind>,
    pub op: CompressedOperator,
    pub assembly_schedule: Schedule,
    pub product_schedule: Schedule,
    pub solve: SolveReport,
    pub oracle: Option<OracleMetrics>,
    pub timings: Timings,
}

/// GMRES on an operator with the scenario's preconditioner and schedule.
pub fn solve_operator(s: &Scenario, op: &CompressedOperator, v0: &[qrvie_core::C64], preconditioner: bool) -> CliResult<(SolveReport, Schedule)> {
    let reduction = if s.deterministic { Reduction::Ordered } else { Reduction::Unordered };
    let a = ScheduledOperator::new(op, s.workers, reduction).stage("parallel")?;
    let r = if preconditioner {
        let p = BlockDiagonal::from_operator(op).stage("solver")?;
        gmres(&a, &p, v0, s.rel_tol, s.max_iter)
    } else {
        gmres(&a, &Identity, v0, s.rel_tol, s.max_iter)
    }
    .stage("solver")?;
    Ok((r, a.schedule))
}

/// Full pipeline; the dense oracle runs when the DoF count is within the cap.
pub fn run_solve(s: &Scenario) -> CliResult<RunOutcome> {
    let mut timings = Timings::default();
    let t = Instant::now();
    let problem = Problem::new(s)?;
    timings.setup = t.elapsed();

    let t = Instant::now();
    let blocks = problem.assemble(s.workers)?;
    timings.assembly = t.elapsed();

    let t = Instant::now();
    let op = blocks.compress(s.compression()).stage("compression")?;
    timings.compression = t.elapsed();

    let t = Instant::now();
    let v0 = problem.assembler.excitation_vector();
    let (solve, product_schedule) = solve_operator(s, &op, &v0, s.preconditioner)?;
    timings.solve = t.elapsed();

    let t = Instant::now();
    let oracle = if op.dof_count() <= s.dense_cap {
        let z = problem.assembler.dense(s.dense_cap).stage("assembly")?;
        Some(oracle_metrics(&op, &z, &v0, &solve.solution)?)
    } else {
        None
    };
    timings.oracle = t.elapsed();

    Ok(RunOutcome {
        scenario: s.clone(),
        atoms: problem.assembler.atom_count(),
        dofs_per_atom: problem.assembler.dofs_per_atom(),
        kinds: problem.dof_kinds(),
        op,
        assembly_schedule: blocks.schedule,
        product_schedule,
        solve,
        oracle,
        timings,
    })
}

/// Checks beyond the solve: partition completeness, symmetry and shared
/// diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub eps_sol: f64,
    pub p_c: f64,
    pub a_s: f64,
    pub reconstruction_error: f64,
    pub symmetry_error: f64,
    pub diagonal_blocks_identical: bool,
    pub converged: bool,
    pub iterations: usize,
}

impl VerifyReport {
    /// Solution within `10·eps`, reconstruction within `2·eps`, symmetry
    /// within `1e-8`.
    pub fn passed(&self, eps: f64) -> bool {
        self.converged
            && self.eps_sol <= 10.0 * eps
            && self.reconstruction_error <= 2.0 * eps
            && self.symmetry_error <= 1e-8
            && self.diagonal_blocks_identical
    }
}

pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let mut d = a.clone();
    d.add_scaled(c(-1.0, 0.0), b);
    d.frobenius() / b.frobenius()
}

pub fn run_verify(s: &Scenario) -> CliResult<VerifyReport> {
    let problem = Problem::new(s)?;
    let asm = &problem.assembler;
    let z = asm.dense(s.dense_cap).stage("assembly")?;
    let blocks = problem.assemble(s.workers)?;
    let op = blocks.compress(s.compression()).stage("compression")?;
    let v0 = asm.excitation_vector();
    let (solve, _) = solve_operator(s, &op, &v0, s.preconditioner)?;
    let m = oracle_metrics(&op, &z, &v0, &solve.solution)?;
    let first = asm.block(0, 0).stage("assembly")?.matrix;
    let same = (1..asm.atom_count()).all(|i| asm.block(i, i).map(|b| b.matrix == first).unwrap_or(false));
    Ok(VerifyReport {
        eps_sol: m.eps_sol,
        p_c: m.p_c,
        a_s: m.a_s,
        reconstruction_error: rel_frobenius(&op.reconstruct_dense(), &z),
        symmetry_error: rel_frobenius(&z.transpose(), &z),
        diagonal_blocks_identical: same,
        converged: solve.converged,
        iterations: solve.iterations,
    })
}
