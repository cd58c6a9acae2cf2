//! Coalition-game AP association: single-device switches accepted on a
//! strict total-throughput gain that keeps every pinned device at target.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{rate, sinr, Association, Demand};
use crate::topology::ChannelMatrix;

/// Relative margin a switch must clear to count as a strict improvement.
pub const IMPROVEMENT_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoalitionStructure {
    partition: Vec<BTreeSet<usize>>,
}

impl CoalitionStructure {
    pub fn from_association(assoc: &Association) -> Self {
        let mut partition = vec![BTreeSet::new(); assoc.num_aps()];
        for (n, &k) in assoc.serving().iter().enumerate() {
            partition[k].insert(n);
        }
        Self { partition }
    }

    pub fn to_association(&self) -> Association {
        let n_dev = self.partition.iter().map(BTreeSet::len).sum();
        let mut serving = vec![0; n_dev];
        for (k, set) in self.partition.iter().enumerate() {
            for &n in set {
                serving[n] = k;
            }
        }
        Association::new(self.partition.len(), serving).expect("partition covers every device")
    }

    pub fn partition(&self) -> &[BTreeSet<usize>] {
        &self.partition
    }

    pub fn coalition_of(&self, n: usize) -> Option<usize> {
        self.partition.iter().position(|s| s.contains(&n))
    }

    /// The structure with `n` moved to AP `j`; `None` when `n` already sits
    /// there.
    pub fn propose_switch(&self, n: usize, j: usize) -> Result<Option<Self>> {
        let k = self
            .coalition_of(n)
            .ok_or_else(|| Error::Domain(format!("device {n} is in no coalition")))?;
        if j >= self.partition.len() {
            return Err(Error::Domain(format!("AP {j} does not exist")));
        }
        if j == k {
            return Ok(None);
        }
        let mut next = self.clone();
        next.partition[k].remove(&n);
        next.partition[j].insert(n);
        Ok(Some(next))
    }
}

fn total_rate(assoc: &Association, p: &[f64], chan: &ChannelMatrix, noise: f64) -> f64 {
    (0..p.len()).map(|n| rate(sinr(assoc, p, chan, noise, n))).sum()
}

fn pinned_hold(
    assoc: &Association,
    p: &[f64],
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
    q_set: &BTreeSet<usize>,
) -> bool {
    q_set
        .iter()
        .all(|&n| rate(sinr(assoc, p, chan, noise, n)) >= demand.xi(n))
}

/// Whether moving from `curr` to `temp` under fixed powers keeps every
/// pinned device at `xi` and strictly raises total throughput.
pub fn accept_switch(
    curr: &Association,
    temp: &Association,
    p: &[f64],
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
    q_set: &BTreeSet<usize>,
) -> bool {
    if !pinned_hold(temp, p, chan, noise, demand, q_set) {
        return false;
    }
    let before = total_rate(curr, p, chan, noise);
    total_rate(temp, p, chan, noise) > before + IMPROVEMENT_MARGIN * before.abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgConfig {
    pub max_passes: usize,
    /// Reject switches that push the receiving AP over its budget.
    pub check_budgets: bool,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_passes: 1_000,
            check_budgets: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub association: Association,
    pub switches: usize,
    pub passes: usize,
    /// False when the pass cap stopped the search.
    pub converged: bool,
    /// Total throughput before the first and after every accepted switch.
    pub rate_trace: Vec<f64>,
    /// Accepted switches in order, as `(device, new AP)`.
    pub moves: Vec<(usize, usize)>,
}

#[allow(clippy::too_many_arguments)]
pub fn cg_apa(
    assoc_init: &Association,
    p: &[f64],
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
    q_set: &BTreeSet<usize>,
    budgets: &[f64],
    cfg: &CgConfig,
) -> CgOutcome {
    let n_dev = assoc_init.num_devices();
    let k_aps = assoc_init.num_aps();
    let mut curr = assoc_init.clone();
    let mut current_rate = total_rate(&curr, p, chan, noise);
    let mut loads = curr.loads(p);
    let mut rate_trace = vec![current_rate];
    let mut moves = Vec::new();
    let mut switches = 0;
    let mut passes = 0;
    let mut converged = k_aps < 2;

    while !converged && passes < cfg.max_passes {
        passes += 1;
        let mut moved = false;
        for n in 0..n_dev {
            let k = curr.serving_ap(n);
            for j in (0..k_aps).filter(|&j| j != k) {
                if cfg.check_budgets && loads[j] + p[n] > budgets[j] {
                    continue;
                }
                let mut temp = curr.clone();
                temp.set(n, j);
                if !pinned_hold(&temp, p, chan, noise, demand, q_set) {
                    continue;
                }
                let candidate = total_rate(&temp, p, chan, noise);
                if candidate > current_rate + IMPROVEMENT_MARGIN * current_rate.abs() {
                    loads[k] -= p[n];
                    loads[j] += p[n];
                    curr = temp;
                    current_rate = candidate;
                    rate_trace.push(candidate);
                    moves.push((n, j));
                    switches += 1;
                    moved = true;
                    break;
                }
            }
        }
        converged = !moved;
    }
    CgOutcome {
        association: curr,
        switches,
        passes,
        converged,
        rate_trace,
        moves,
    }
}
