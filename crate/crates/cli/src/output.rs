//! Columnar tables and flat `key = value` reports.

use std::fmt::Write as _;
use std::path::Path;

use qrvie_core::basis::DofKind;
use qrvie_core::compression::compression_gain;
use qrvie_core::schedule::{balance_stats, BalanceStats, Schedule};

use crate::error::{io_err, CliError, CliResult};
use crate::pipeline::RunOutcome;

pub const CURRENTS_FILE: &str = "currents.txt";
pub const RESIDUALS_FILE: &str = "residuals.txt";
pub const REPORT_FILE: &str = "report.txt";

fn kind_name(k: DofKind) -> &'static str {
    match k {
        DofKind::Loop => "loop",
        DofKind::Star => "star",
    }
}

/// One row per DoF: atom, local DoF index, kind and complex coefficient.
pub fn current_table(out: &RunOutcome) -> String {
    let mut s = String::from("# atom dof kind re im\n");
    let np = out.dofs_per_atom;
    for (g, v) in out.solve.solution.iter().enumerate() {
        let (a, d) = (g / np, g % np);
        writeln!(s, "{a} {d} {} {:e} {:e}", kind_name(out.kinds[d]), v.re, v.im).unwrap();
    }
    s
}

pub fn residual_table(history: &[f64]) -> String {
    let mut s = String::from("# iteration relative_residual\n");
    for (i, r) in history.iter().enumerate() {
        writeln!(s, "{i} {r:e}").unwrap();
    }
    s
}

fn push_stats(s: &mut String, prefix: &str, b: &BalanceStats) {
    writeln!(s, "{prefix}_mean = {:e}", b.mean).unwrap();
    writeln!(s, "{prefix}_std = {:e}", b.std_dev).unwrap();
    match b.normalized {
        Some(v) => writeln!(s, "{prefix}_normalized = {v:e}").unwrap(),
        None => writeln!(s, "{prefix}_normalized = \"n/a\"").unwrap(),
    }
}

fn push_balance(s: &mut String, prefix: &str, sched: &Schedule) {
    let b = balance_stats(sched);
    writeln!(s, "{prefix}_items = {}", sched.owner.len()).unwrap();
    push_stats(s, &format!("{prefix}_load"), &b.load);
    push_stats(s, &format!("{prefix}_count"), &b.count);
    push_stats(s, &format!("{prefix}_memory"), &b.memory);
}

/// Metrics of a run. Wall-clock times are left out so that repeated runs
/// produce identical text.
pub fn report(out: &RunOutcome) -> String {
    let s0 = &out.scenario;
    let l = out.op.ledger();
    let loops = out.kinds.iter().filter(|&&k| k == DofKind::Loop).count();
    let mut s = String::new();
    writeln!(s, "atoms = {}", out.atoms).unwrap();
    writeln!(s, "dofs_per_atom = {}", out.dofs_per_atom).unwrap();
    writeln!(s, "loops_per_atom = {loops}").unwrap();
    writeln!(s, "stars_per_atom = {}", out.dofs_per_atom - loops).unwrap();
    writeln!(s, "dofs = {}", out.op.dof_count()).unwrap();
    writeln!(s, "eps = {:e}", s0.eps).unwrap();
    writeln!(s, "rel_tol = {:e}", s0.rel_tol).unwrap();
    writeln!(s, "workers = {}", s0.workers).unwrap();
    writeln!(s, "deterministic = {}", s0.deterministic).unwrap();
    writeln!(s, "preconditioner = {}", s0.preconditioner).unwrap();
    writeln!(s, "converged = {}", out.solve.converged).unwrap();
    writeln!(s, "iterations = {}", out.solve.iterations).unwrap();
    writeln!(s, "final_residual = {:e}", out.solve.residual_history.last().copied().unwrap_or(0.0)).unwrap();
    writeln!(s, "true_residual = {:e}", out.solve.true_residual).unwrap();
    let norm = out.solve.solution.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    writeln!(s, "current_norm = {norm:e}").unwrap();
    writeln!(s, "gain = {:e}", compression_gain(&out.op)).unwrap();
    writeln!(s, "n_qr = {}", l.n_qr).unwrap();
    writeln!(s, "n_far = {}", l.n_far).unwrap();
    writeln!(s, "n_near = {}", l.n_near).unwrap();
    writeln!(s, "stored_coefficients = {}", l.stored).unwrap();
    writeln!(s, "far_blocks = {}", l.far_blocks).unwrap();
    writeln!(s, "finest_blocks = {}", l.finest_blocks).unwrap();
    writeln!(s, "dense_fallbacks = {}", l.dense_fallbacks).unwrap();
    writeln!(s, "full_rank_blocks = {}", l.full_rank_blocks).unwrap();
    writeln!(s, "distinct_diagonal_blocks = {}", out.op.distinct_diagonal().len()).unwrap();
    push_balance(&mut s, "assembly", &out.assembly_schedule);
    push_balance(&mut s, "product", &out.product_schedule);
    if let Some(o) = &out.oracle {
        writeln!(s, "p_c = {:e}", o.p_c).unwrap();
        writeln!(s, "a_s = {:e}", o.a_s).unwrap();
        writeln!(s, "eps_sol = {:e}", o.eps_sol).unwrap();
    }
    s
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// Writes the current table, residual table and report into `dir`.
pub fn write_run(dir: &Path, out: &RunOutcome) -> CliResult<()> {
    write_file(&dir.join(CURRENTS_FILE), &current_table(out))?;
    write_file(&dir.join(RESIDUALS_FILE), &residual_table(&out.solve.residual_history))?;
    write_file(&dir.join(REPORT_FILE), &report(out))
}

/// Whitespace-separated cells of a table, skipping `#` and blank lines.
pub fn read_table(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

/// Quantities recomputed from a run directory's tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dofs: usize,
    pub loops: usize,
    pub iterations: usize,
    pub final_residual: f64,
    pub current_norm: f64,
}

fn num(cell: &str) -> CliResult<f64> {
    cell.parse().map_err(|_| CliError::Format(format!("`{cell}` is not a number")))
}

pub fn summarize(currents: &str, residuals: &str) -> CliResult<RunSummary> {
    let rows = read_table(currents);
    let mut norm2 = 0.0;
    let mut loops = 0;
    for r in &rows {
        if r.len() != 5 {
            return Err(CliError::Format(format!("current row has {} columns", r.len())));
        }
        loops += usize::from(r[2] == "loop");
        let (re, im) = (num(&r[3])?, num(&r[4])?);
        norm2 += re * re + im * im;
    }
    let res = read_table(residuals);
    let final_residual = match res.last() {
        Some(r) if r.len() == 2 => num(&r[1])?,
        _ => return Err(CliError::Format("residual table is empty or malformed".into())),
    };
    Ok(RunSummary { dofs: rows.len(), loops, iterations: res.len() - 1, final_residual, current_norm: norm2.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_recomputes_table_columns() {
        let cur = "# atom dof kind re im\n0 0 star 3e0 0e0\n0 1 loop 0e0 4e0\n";
        let res = "# iteration relative_residual\n0 1e0\n1 1e-3\n2 1e-9\n";
        let s = summarize(cur, res).unwrap();
        assert_eq!(s, RunSummary { dofs: 2, loops: 1, iterations: 2, final_residual: 1e-9, current_norm: 5.0 });
        assert!(summarize("0 0 star x 1\n", res).is_err());
        assert!(summarize(cur, "").is_err());
    }

    #[test]
    fn residual_table_round_trips() {
        let h = [1.0, 0.25, 1.0 / 3.0];
        let rows = read_table(&residual_table(&h));
        let back: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
        assert_eq!(back, h);
    }
}
