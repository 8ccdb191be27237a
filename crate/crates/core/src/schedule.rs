//! Static greedy least-loaded assignment of weighted work items.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Assignment of work items to workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub weights: Vec<u64>,
    pub memory: Vec<u64>,
    /// Owner worker of each item.
    pub owner: Vec<usize>,
    pub loads: Vec<u64>,
    pub worker_memory: Vec<u64>,
    pub counts: Vec<usize>,
}

impl Schedule {
    pub fn worker_count(&self) -> usize {
        self.loads.len()
    }

    /// Items of `worker` in ascending index order.
    pub fn items_of(&self, worker: usize) -> Vec<usize> {
        (0..self.owner.len()).filter(|&i| self.owner[i] == worker).collect()
    }

    /// Items of every worker.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.worker_count()];
        for (i, &w) in self.owner.iter().enumerate() {
            out[w].push(i);
        }
        out
    }
}

/// Greedy schedule where each item's memory equals its weight.
pub fn schedule(weights: &[u64], n_workers: usize) -> Result<Schedule> {
    schedule_with_memory(weights, weights, n_workers)
}

/// Items are taken by decreasing weight (ties by index) and each goes to the
/// currently least-loaded worker (ties by lowest worker index).
pub fn schedule_with_memory(weights: &[u64], memory: &[u64], n_workers: usize) -> Result<Schedule> {
    if n_workers == 0 {
        return Err(Error::InvalidInput("at least one worker is required".into()));
    }
    if memory.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: memory.len() });
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].cmp(&weights[a]));

    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..n_workers).map(|w| Reverse((0, w))).collect();
    let mut owner = vec![0; weights.len()];
    let mut loads = vec![0u64; n_workers];
    let mut worker_memory = vec![0u64; n_workers];
    let mut counts = vec![0usize; n_workers];
    for i in order {
        let Reverse((load, w)) = heap.pop().expect("heap holds every worker");
        owner[i] = w;
        loads[w] = load + weights[i];
        worker_memory[w] += memory[i];
        counts[w] += 1;
        heap.push(Reverse((loads[w], w)));
    }
    Ok(Schedule { weights: weights.to_vec(), memory: memory.to_vec(), owner, loads, worker_memory, counts })
}

/// Population mean, standard deviation and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceStats {
    pub mean: f64,
    pub std_dev: f64,
    /// `σ/μ`, `None` when `μ = 0`.
    pub normalized: Option<f64>,
}

pub fn stats(values: &[f64]) -> BalanceStats {
    if values.is_empty() {
        return BalanceStats { mean: 0.0, std_dev: 0.0, normalized: None };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std_dev = sqrt(var);
    BalanceStats { mean, std_dev, normalized: (mean > 0.0).then(|| std_dev / mean) }
}

/// Balance of per-worker loads, item counts and memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleBalance {
    pub load: BalanceStats,
    pub count: BalanceStats,
    pub memory: BalanceStats,
}

pub fn balance_stats(s: &Schedule) -> ScheduleBalance {
    let f = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    ScheduleBalance {
        load: stats(&f(&s.loads)),
        count: stats(&s.counts.iter().map(|&c| c as f64).collect::<Vec<_>>()),
        memory: stats(&f(&s.worker_memory)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_simulated_greedy() {
        let s = schedule(&[9, 7, 5, 3], 2).unwrap();
        assert_eq!(s.owner, vec![0, 1, 1, 0]);
        assert_eq!(s.loads, vec![12, 12]);
        assert_eq!(balance_stats(&s).load.normalized, Some(0.0));
    }

    #[test]
    fn single_worker_takes_everything() {
        let w = [4, 1, 8, 8, 2];
        let s = schedule(&w, 1).unwrap();
        assert_eq!(s.loads, vec![23]);
        assert!(s.owner.iter().all(|&o| o == 0));
    }

    #[test]
    fn equal_weights_spread_evenly() {
        let s = schedule(&[5; 6], 6).unwrap();
        assert_eq!(s.counts, vec![1; 6]);
        assert_eq!(balance_stats(&s).load.normalized, Some(0.0));
    }

    #[test]
    fn two_point_statistics() {
        let b = stats(&[10.0, 20.0]);
        assert_eq!(b.mean, 15.0);
        assert_eq!(b.std_dev, 5.0);
        assert!((b.normalized.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(stats(&[0.0, 0.0]).normalized, None);
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(schedule(&[1], 0).is_err());
    }

    proptest! {
        #[test]
        fn greedy_bound_and_conservation(w in proptest::collection::vec(0u64..10_000, 0..300), n in 1usize..40) {
            let s = schedule(&w, n).unwrap();
            prop_assert_eq!(s.loads.iter().sum::<u64>(), w.iter().sum::<u64>());
            let max_w = w.iter().copied().max().unwrap_or(0);
            let (lo, hi) = (*s.loads.iter().min().unwrap(), *s.loads.iter().max().unwrap());
            prop_assert!(hi <= lo + max_w);
            prop_assert_eq!(s.counts.iter().sum::<usize>(), w.len());
            prop_assert_eq!(&schedule(&w, n).unwrap(), &s);
        }
    }
}
