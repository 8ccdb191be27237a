//! Threaded execution of static schedules: block assembly, factoring and
//! products. Workers own disjoint items and meet only at the reduction.

use std::sync::Mutex;
use std::thread;

use qrvie_core::compression::{
    compress_block, gather, plan_blocks, reduce_partials, BlockSource, BlockSpec, CompressedOperator, CompressionOptions,
};
use qrvie_core::geometry::BlockTree;
use qrvie_core::linalg::Matrix;
use qrvie_core::schedule::{schedule, Schedule};
use qrvie_core::solver::LinearOperator;
use qrvie_core::{Result, C64};

/// How per-worker partial products are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// In worker order after all workers finish; bitwise reproducible.
    Ordered,
    /// Into a shared accumulator as workers finish.
    Unordered,
}

/// Runs `work` on every worker's items and gathers the outputs by item index.
fn run_items<T, F>(schedule: &Schedule, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let parts = schedule.partition();
    let mut slots: Vec<Option<T>> = (0..schedule.owner.len()).map(|_| None).collect();
    let done: Vec<Vec<(usize, T)>> = if parts.len() == 1 {
        vec![parts[0].iter().map(|&i| (i, work(i))).collect()]
    } else {
        thread::scope(|s| {
            let handles: Vec<_> = parts
                .iter()
                .map(|items| {
                    let work = &work;
                    s.spawn(move || items.iter().map(|&i| (i, work(i))).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    };
    for (i, v) in done.into_iter().flatten() {
        slots[i] = Some(v);
    }
    slots.into_iter().map(|s| s.expect("every item has an owner")).collect()
}

/// Assembly weights: `m n` per block pair, the dense size.
pub fn assembly_weights(specs: &[BlockSpec], np: usize) -> Vec<u64> {
    specs.iter().map(|s| (s.rows.len() * s.cols.len() * np * np) as u64).collect()
}

/// Assembled (uncompressed) block pairs of a tree.
pub struct AssembledBlocks {
    pub diagonal: Vec<Matrix>,
    pub specs: Vec<BlockSpec>,
    pub blocks: Vec<Matrix>,
    pub np: usize,
    pub schedule: Schedule,
}

/// Assembles every block pair of the partition on `workers` threads.
pub fn assemble_blocks<S: BlockSource + Sync>(tree: &BlockTree, source: &S, workers: usize) -> Result<AssembledBlocks> {
    let np = source.dofs_per_atom();
    let specs = plan_blocks(tree)?;
    let schedule = schedule(&assembly_weights(&specs, np), workers)?;
    let blocks = run_items(&schedule, |i| gather(&specs[i], source)).into_iter().collect::<Result<Vec<_>>>()?;
    let diagonal = (0..source.atom_count()).map(|i| source.block(i, i)).collect::<Result<Vec<_>>>()?;
    Ok(AssembledBlocks { diagonal, specs, blocks, np, schedule })
}

impl AssembledBlocks {
    /// Factors every block with the assembly schedule.
    pub fn compress(&self, opts: CompressionOptions) -> Result<CompressedOperator> {
        let stored = run_items(&self.schedule, |i| compress_block(self.specs[i].clone(), self.blocks[i].clone(), opts))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        CompressedOperator::from_parts(self.np, self.diagonal.clone(), stored, opts)
    }
}

/// A compressed operator whose products follow a fixed schedule.
pub struct ScheduledOperator<'a> {
    pub op: &'a CompressedOperator,
    pub schedule: Schedule,
    parts: Vec<Vec<usize>>,
    pub reduction: Reduction,
}

impl<'a> ScheduledOperator<'a> {
    /// Schedules the product work items of `op` over `workers`.
    pub fn new(op: &'a CompressedOperator, workers: usize, reduction: Reduction) -> Result<Self> {
        let (w, mem) = op.work_items();
        let schedule = qrvie_core::schedule::schedule_with_memory(&w, &mem, workers)?;
        let parts = schedule.partition();
        Ok(ScheduledOperator { op, schedule, parts, reduction })
    }

    fn product(&self, x: &[C64]) -> Vec<C64> {
        let n = x.len();
        if self.parts.len() == 1 {
            return reduce_partials(&[self.op.apply_partial(&self.parts[0], x)], n);
        }
        match self.reduction {
            Reduction::Ordered => {
                let partials: Vec<Vec<C64>> = thread::scope(|s| {
                    let hs: Vec<_> = self.parts.iter().map(|p| s.spawn(move || self.op.apply_partial(p, x))).collect();
                    hs.into_iter().map(|h| h.join().expect("worker panicked")).collect()
                });
                reduce_partials(&partials, n)
            }
            Reduction::Unordered => {
                let acc = Mutex::new(vec![C64::new(0.0, 0.0); n]);
                thread::scope(|s| {
                    for p in &self.parts {
                        let acc = &acc;
                        s.spawn(move || {
                            let y = self.op.apply_partial(p, x);
                            let mut a = acc.lock().expect("accumulator poisoned");
                            for (o, v) in a.iter_mut().zip(&y) {
                                *o += v;
                            }
                        });
                    }
                });
                acc.into_inner().expect("accumulator poisoned")
            }
        }
    }
}

impl LinearOperator for ScheduledOperator<'_> {
    fn dim(&self) -> usize {
        self.op.dof_count()
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.op.dof_count() {
            return Err(qrvie_core::Error::DimensionMismatch { expected: self.op.dof_count(), found: x.len() });
        }
        Ok(self.product(x))
    }
}
