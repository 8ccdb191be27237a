//! Consistency, scaling and split experiments.

use std::fmt::Write as _;

use qrvie_core::compression::{compression_gain, split_experiment, SplitPoint};
use qrvie_core::linalg::Matrix;
use qrvie_core::Error;

use crate::error::{CliError, CliResult, Stage};
use crate::pipeline::{dense_from_blocks, oracle_metrics, solve_operator, Problem};
use crate::scenario::Scenario;

/// Number of adjacent pairs that break a nondecreasing order.
pub fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] < w[0]).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyRow {
    pub eps: f64,
    pub p_c: f64,
    pub a_s: f64,
    pub gain: f64,
    pub iterations: usize,
}

/// Product precision, solution accuracy and gain per tolerance against the
/// dense oracle. Blocks are assembled once and factored per tolerance.
pub fn consistency(s: &Scenario, eps_list: &[f64]) -> CliResult<Vec<ConsistencyRow>> {
    let problem = Problem::new(s)?;
    let n = problem.assembler.dof_count();
    if n > s.dense_cap {
        return Err(CliError::Stage { stage: "experiment", source: Error::DenseOracleDisabled { dofs: n, cap: s.dense_cap } });
    }
    let blocks = problem.assemble(s.workers)?;
    let z = dense_from_blocks(&blocks)?;
    let v0 = problem.assembler.excitation_vector();
    eps_list
        .iter()
        .map(|&eps| {
            let sc = s.with_eps(eps);
            let op = blocks.compress(sc.compression()).stage("compression")?;
            let (r, _) = solve_operator(&sc, &op, &v0, true)?;
            let m = oracle_metrics(&op, &z, &v0, &r.solution)?;
            Ok(ConsistencyRow { eps, p_c: m.p_c, a_s: m.a_s, gain: compression_gain(&op), iterations: r.iterations })
        })
        .collect()
}

pub fn consistency_table(rows: &[ConsistencyRow]) -> String {
    let mut s = String::from("# eps p_c a_s gain iterations\n");
    for r in rows {
        writeln!(s, "{:e} {:.6} {:.6} {:.6} {}", r.eps, r.p_c, r.a_s, r.gain, r.iterations).unwrap();
    }
    let a_s: Vec<f64> = rows.iter().map(|r| r.a_s).collect();
    let g: Vec<f64> = rows.iter().map(|r| -r.gain).collect();
    writeln!(s, "# a_s inversions: {}", inversions(&a_s)).unwrap();
    writeln!(s, "# gain inversions: {}", inversions(&g)).unwrap();
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub atoms: usize,
    pub dofs: usize,
    pub eps: f64,
    pub gain: f64,
    pub iterations: usize,
    /// Iterations without the preconditioner, when requested.
    pub iterations_unpreconditioned: Option<usize>,
}

/// Gain and iterations per atom count and tolerance.
pub fn scaling(s: &Scenario, atoms: &[usize], eps_list: &[f64], unpreconditioned: bool) -> CliResult<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for &n in atoms {
        let sn = s.with_atoms(n);
        let problem = Problem::new(&sn)?;
        let blocks = problem.assemble(sn.workers)?;
        let v0 = problem.assembler.excitation_vector();
        for &eps in eps_list {
            let sc = sn.with_eps(eps);
            let op = blocks.compress(sc.compression()).stage("compression")?;
            let (r, _) = solve_operator(&sc, &op, &v0, true)?;
            let plain = if unpreconditioned { Some(solve_operator(&sc, &op, &v0, false)?.0.iterations) } else { None };
            rows.push(ScalingRow {
                atoms: n,
                dofs: op.dof_count(),
                eps,
                gain: compression_gain(&op),
                iterations: r.iterations,
                iterations_unpreconditioned: plain,
            });
        }
    }
    Ok(rows)
}

pub fn scaling_table(rows: &[ScalingRow]) -> String {
    let mut s = String::from("# atoms dofs eps gain iterations iterations_unpreconditioned\n");
    for r in rows {
        let u = r.iterations_unpreconditioned.map_or("-".to_string(), |v| v.to_string());
        writeln!(s, "{} {} {:e} {:.6} {} {u}", r.atoms, r.dofs, r.eps, r.gain, r.iterations).unwrap();
    }
    s
}

/// Mutual block of a two-atom scenario and the spatial half of each column:
/// atom 2's DoFs are ordered by their generating edge's position along the
/// line between the atoms and split at the median.
pub fn two_atom_block(s: &Scenario) -> CliResult<(Matrix, Vec<bool>)> {
    let problem = Problem::new(&s.with_atoms(2))?;
    let asm = &problem.assembler;
    let z = asm.block(0, 1).stage("assembly")?.matrix;
    let c = asm.centers();
    let axis = [c[1][0] - c[0][0], c[1][1] - c[0][1], c[1][2] - c[0][2]];
    let basis = asm.basis();
    let mesh = asm.mesh();
    let key = |d: usize| {
        let p = basis.generating_edge(d).map(|e| mesh.edge_midpoint(e)).unwrap_or([0.0; 3]);
        p[0] * axis[0] + p[1] * axis[1] + p[2] * axis[2]
    };
    let mut order: Vec<usize> = (0..basis.dof_count()).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
    let mut in_first = vec![false; order.len()];
    for &d in &order[..order.len() / 2] {
        in_first[d] = true;
    }
    Ok((z, in_first))
}

/// Whole versus split compression of the mutual block at matched errors.
pub fn split(s: &Scenario, targets: &[f64]) -> CliResult<Vec<SplitPoint>> {
    let (z, in_first) = two_atom_block(s)?;
    split_experiment(&z, &in_first, targets).stage("compression")
}

pub fn split_table(points: &[SplitPoint]) -> String {
    let mut s = String::from("# target rank error_no_split gain_no_split rank_a rank_b error_split gain_split\n");
    for p in points {
        writeln!(
            s,
            "{:e} {} {:e} {:.6} {} {} {:e} {:.6}",
            p.target, p.rank, p.error_no_split, p.gain_no_split, p.ranks_split.0, p.ranks_split.1, p.error_split, p.gain_split
        )
        .unwrap();
    }
    s
}
