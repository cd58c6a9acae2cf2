//! Level-wise branch-and-bound admission of devices.
//!
//! Devices are admitted one at a time in a fixed order. Level `n` of the tree
//! holds every surviving association of the first `n` devices; each survivor
//! spawns one child per AP, and a child survives only if its equality-target
//! minimum-power solve is feasible and fits all AP budgets. The search stops
//! at the last level or at the first level where every child is pruned.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{Association, Demand, PowerVector};
use crate::minpower::{build_target_system_with, solve_min_power};
use crate::topology::ChannelMatrix;

/// Relative lift applied to SINR targets so that admitted devices land at or
/// just above their thresholds after floating-point round-off.
pub const TARGET_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbConfig {
    /// Maximum survivors kept per level (lowest total power first); `None`
    /// keeps the whole tree.
    pub frontier_cap: Option<usize>,
}

impl Default for BbConfig {
    fn default() -> Self {
        Self {
            frontier_cap: Some(10_000),
        }
    }
}

impl BbConfig {
    pub fn uncapped() -> Self {
        Self { frontier_cap: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BbNode {
    pub level: usize,
    /// Serving AP of `ordering[i]` for `i < level`.
    pub partial_assoc: Vec<usize>,
    /// Powers aligned with `partial_assoc`.
    pub power: Vec<f64>,
    pub total_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BbResult {
    pub n_star: usize,
    /// Admitted devices in admission order.
    pub admitted: Vec<usize>,
    /// Full association; devices that were not admitted sit on their
    /// strongest large-scale AP with zero power.
    pub association: Association,
    pub power: PowerVector,
    pub feasible_all: bool,
    /// Surviving nodes per level, starting at level 1.
    pub level_counts: Vec<usize>,
}

/// How the admission order is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceOrdering {
    Identity,
    Seeded(u64),
    Explicit(Vec<usize>),
}

impl DeviceOrdering {
    pub fn resolve(&self, n: usize) -> Vec<usize> {
        match self {
            Self::Identity => (0..n).collect(),
            Self::Seeded(seed) => default_ordering(n, *seed),
            Self::Explicit(order) => order.clone(),
        }
    }
}

/// Seeded random permutation of `0..n`.
pub fn default_ordering(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

fn is_permutation(ordering: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    ordering.len() == n
        && ordering
            .iter()
            .all(|&d| d < n && !std::mem::replace(&mut seen[d], true))
}

pub fn bb_maximize_admitted(
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
    budgets: &[f64],
    ordering: &[usize],
    cfg: &BbConfig,
) -> Result<BbResult> {
    let (k_aps, n_dev) = (chan.num_aps(), chan.num_devices());
    if !is_permutation(ordering, n_dev) {
        return Err(crate::Error::Config(format!(
            "ordering {ordering:?} is not a permutation of 0..{n_dev}"
        )));
    }
    let gammas: Vec<f64> = ordering
        .iter()
        .map(|&n| demand.gamma_thr(n) * (1.0 + TARGET_GUARD))
        .collect();

    let mut frontier = vec![BbNode {
        level: 0,
        partial_assoc: Vec::new(),
        power: Vec::new(),
        total_power: 0.0,
    }];
    let mut level_counts = Vec::new();
    let mut scratch = Association::uniform(k_aps, n_dev, 0)?;

    for level in 0..n_dev {
        let active = &ordering[..=level];
        let mut children = Vec::with_capacity(frontier.len() * k_aps);
        for node in &frontier {
            for (i, &ap) in node.partial_assoc.iter().enumerate() {
                scratch.set(ordering[i], ap);
            }
            for k in 0..k_aps {
                scratch.set(ordering[level], k);
                let sys = build_target_system_with(active, &scratch, chan, noise, &gammas[..=level])?;
                let Ok(power) = solve_min_power(&sys) else {
                    continue;
                };
                let mut loads = vec![0.0; k_aps];
                for (&n, &pn) in active.iter().zip(&power) {
                    loads[scratch.serving_ap(n)] += pn;
                }
                if loads.iter().zip(budgets).any(|(l, b)| l > b) {
                    continue;
                }
                let mut partial_assoc = node.partial_assoc.clone();
                partial_assoc.push(k);
                children.push(BbNode {
                    level: level + 1,
                    partial_assoc,
                    total_power: power.iter().sum(),
                    power,
                });
            }
        }
        if children.is_empty() {
            break;
        }
        if let Some(cap) = cfg.frontier_cap {
            if children.len() > cap {
                children.sort_by(|a, b| a.total_power.total_cmp(&b.total_power));
                children.truncate(cap);
            }
        }
        log::trace!("bb level {}: {} surviving nodes", level + 1, children.len());
        level_counts.push(children.len());
        frontier = children;
    }

    let best = frontier
        .into_iter()
        .min_by(|a, b| a.total_power.total_cmp(&b.total_power))
        .expect("frontier always holds the root or a survivor");

    let n_star = best.level;
    let mut serving: Vec<usize> = (0..n_dev).map(|n| chan.best_large_scale_ap(n)).collect();
    let mut power = vec![0.0; n_dev];
    for (i, (&ap, &pn)) in best.partial_assoc.iter().zip(&best.power).enumerate() {
        serving[ordering[i]] = ap;
        power[ordering[i]] = pn;
    }
    Ok(BbResult {
        n_star,
        admitted: ordering[..n_star].to_vec(),
        association: Association::new(k_aps, serving)?,
        power: PowerVector::new(power)?,
        feasible_all: n_star == n_dev,
        level_counts,
    })
}

/// True when the admission tree fails to reach its last level, i.e. no
/// association serves every device within budget under this ordering.
pub fn detect_infeasibility(
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
    budgets: &[f64],
    ordering: &[usize],
    cfg: &BbConfig,
) -> Result<bool> {
    Ok(!bb_maximize_admitted(chan, noise, demand, budgets, ordering, cfg)?.feasible_all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{rate, sinr, Association};
    use crate::minpower::build_target_system;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn random_chan(rng: &mut ChaCha8Rng, k: usize, n: usize) -> ChannelMatrix {
        let gains = (0..k * n).map(|_| rng.random_range(0.05..1.0)).collect();
        ChannelMatrix::from_gains(k, n, gains, None, 1.0).unwrap()
    }

    /// Largest admissible set over every association tuple and subset.
    fn exhaustive_max(chan: &ChannelMatrix, noise: f64, demand: &Demand, budgets: &[f64]) -> usize {
        let (k, n) = (chan.num_aps(), chan.num_devices());
        let mut best = 0;
        for code in 0..k.pow(n as u32) {
            let serving: Vec<usize> = (0..n).map(|i| code / k.pow(i as u32) % k).collect();
            let assoc = Association::new(k, serving).unwrap();
            for mask in 1u32..(1 << n) {
                let active: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                if active.len() <= best {
                    continue;
                }
                let sys = build_target_system(&active, &assoc, chan, noise, demand).unwrap();
                if let Ok(p) = solve_min_power(&sys) {
                    let mut full = vec![0.0; n];
                    for (&d, &v) in active.iter().zip(&p) {
                        full[d] = v;
                    }
                    if assoc.within_budgets(&full, budgets) {
                        best = active.len();
                    }
                }
            }
        }
        best
    }

    #[test]
    fn lone_device_admitted() {
        let chan = ChannelMatrix::from_gains(1, 1, vec![1.0], None, 1.0).unwrap();
        let demand = Demand::uniform(1, 0.5).unwrap();
        let res = bb_maximize_admitted(&chan, 0.1, &demand, &[1.0], &[0], &BbConfig::default()).unwrap();
        assert_eq!(res.n_star, 1);
        assert!(res.feasible_all);
        assert!(!detect_infeasibility(&chan, 0.1, &demand, &[1.0], &[0], &BbConfig::default()).unwrap());
    }

    #[test]
    fn unattainable_targets_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chan = random_chan(&mut rng, 2, 3);
        let demand = Demand::uniform(3, 1e6).unwrap();
        let res = bb_maximize_admitted(&chan, 0.1, &demand, &[1.0, 1.0], &[0, 1, 2], &BbConfig::default()).unwrap();
        assert_eq!(res.n_star, 0);
        assert_eq!(res.power.total(), 0.0);
        assert!(detect_infeasibility(&chan, 0.1, &demand, &[1.0, 1.0], &[0, 1, 2], &BbConfig::default()).unwrap());
    }

    #[test]
    fn pair_with_single_admissible_device() {
        // Devices sit on top of each other: gains equal from both APs, so at
        // most one of the two can reach SINR 3 (2 bits/s/Hz) at any power.
        let chan = ChannelMatrix::from_gains(2, 2, vec![1.0, 1.0, 1.0, 1.0], None, 1.0).unwrap();
        let demand = Demand::uniform(2, 2.0).unwrap();
        let budgets = [10.0, 10.0];
        assert_eq!(exhaustive_max(&chan, 0.1, &demand, &budgets), 1);
        for order in [[0, 1], [1, 0]] {
            let res = bb_maximize_admitted(&chan, 0.1, &demand, &budgets, &order, &BbConfig::uncapped()).unwrap();
            assert_eq!(res.n_star, 1);
            assert_eq!(res.admitted, vec![order[0]]);
        }
    }

    #[test]
    fn survivors_meet_targets_and_budgets() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let chan = random_chan(&mut rng, 3, 6);
            let demand = Demand::uniform(6, 0.6).unwrap();
            let budgets = [2.0, 2.0, 2.0];
            let order = default_ordering(6, rng.random());
            let res = bb_maximize_admitted(&chan, 0.05, &demand, &budgets, &order, &BbConfig::default()).unwrap();
            assert!(res.association.within_budgets(&res.power, &budgets));
            let mut total = 0.0;
            for n in 0..6 {
                let r = rate(sinr(&res.association, &res.power, &chan, 0.05, n));
                total += r;
                if res.admitted.contains(&n) {
                    assert!(r >= 0.6);
                    assert_relative_eq!(r, 0.6, max_relative = 1e-7);
                } else {
                    assert_eq!(r, 0.0);
                }
            }
            assert_relative_eq!(total, 0.6 * res.n_star as f64, max_relative = 1e-7);
            assert_eq!(res.level_counts.len(), res.n_star);
        }
    }

    #[test]
    fn never_beats_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..40 {
            let chan = random_chan(&mut rng, 2, 4);
            let demand = Demand::uniform(4, 0.8).unwrap();
            let budgets = [1.0, 1.0];
            let best = exhaustive_max(&chan, 0.2, &demand, &budgets);
            let order = default_ordering(4, rng.random());
            let res = bb_maximize_admitted(&chan, 0.2, &demand, &budgets, &order, &BbConfig::uncapped()).unwrap();
            assert!(res.n_star <= best);
            assert_eq!(
                detect_infeasibility(&chan, 0.2, &demand, &budgets, &order, &BbConfig::uncapped()).unwrap(),
                best < 4
            );
        }
    }

    #[test]
    fn orderings() {
        assert_eq!(default_ordering(3, 7), default_ordering(3, 7));
        let mut sorted = default_ordering(10, 7);
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert_ne!(default_ordering(10, 1), default_ordering(10, 2));
        assert_eq!(DeviceOrdering::Identity.resolve(4), vec![0, 1, 2, 3]);
        let chan = ChannelMatrix::from_gains(1, 2, vec![1.0, 1.0], None, 1.0).unwrap();
        let demand = Demand::uniform(2, 0.5).unwrap();
        assert!(bb_maximize_admitted(&chan, 0.1, &demand, &[1.0], &[0, 0], &BbConfig::default()).is_err());
    }
}
