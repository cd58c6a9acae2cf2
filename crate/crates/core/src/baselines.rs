//! Reference strategies and the exhaustive admission oracle.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bb::{BbResult, TARGET_GUARD};
use crate::error::{Error, Result};
use crate::logapprox::equal_split;
use crate::metrics::{Association, Demand, PowerVector};
use crate::minpower::{build_target_system_with, solve_min_power};
use crate::topology::{ChannelMatrix, Topology};

/// Association tuples the brute-force oracle will enumerate by default.
pub const DEFAULT_TUPLE_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyId {
    DifPaCgApa,
    DifPaNearest,
    EqualPaCgApa,
    EqualPaNearest,
    ModifiedBb,
    BruteForce,
}

impl StrategyId {
    pub const ALL: [StrategyId; 6] = [
        Self::DifPaCgApa,
        Self::DifPaNearest,
        Self::EqualPaCgApa,
        Self::EqualPaNearest,
        Self::ModifiedBb,
        Self::BruteForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DifPaCgApa => "DifPaCgApa",
            Self::DifPaNearest => "DifPaNearest",
            Self::EqualPaCgApa => "EqualPaCgApa",
            Self::EqualPaNearest => "EqualPaNearest",
            Self::ModifiedBb => "ModifiedBb",
            Self::BruteForce => "BruteForce",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|id| id.name()).collect();
                Error::Config(format!("unknown strategy {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Each device on its geometrically closest AP (lower index on ties).
pub fn nearest_apa(topology: &Topology) -> Association {
    let serving = (0..topology.num_devices())
        .map(|n| {
            (0..topology.num_aps())
                .min_by(|&a, &b| {
                    topology
                        .distance_m(a, n)
                        .total_cmp(&topology.distance_m(b, n))
                        .then(a.cmp(&b))
                })
                .expect("at least one AP")
        })
        .collect();
    Association::new(topology.num_aps(), serving).expect("indices come from the topology")
}

/// Every AP splits its budget equally over its own devices.
pub fn equal_pa(assoc: &Association, budgets: &[f64]) -> PowerVector {
    equal_split(assoc, budgets)
}

fn decode(mut code: u128, k: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let d = (code % k as u128) as usize;
            code /= k as u128;
            d
        })
        .collect()
}

/// Maximal admissible sets for one association, grown level by level: a set
/// is tested only when every one-smaller subset was admissible, since the
/// minimum powers of a superset dominate those of its subsets.
fn admissible_levels(
    assoc: &Association,
    chan: &ChannelMatrix,
    noise: f64,
    gammas: &[f64],
    budgets: &[f64],
) -> Result<Vec<Vec<(u64, Vec<f64>)>>> {
    let n_dev = chan.num_devices();
    let mut levels: Vec<Vec<(u64, Vec<f64>)>> = Vec::new();
    let mut prev: Vec<(u64, Vec<f64>)> = vec![(0, Vec::new())];
    let mut prev_masks: HashSet<u64> = HashSet::from([0]);
    loop {
        let mut next = Vec::new();
        let mut next_masks = HashSet::new();
        for (mask, _) in &prev {
            let start = if *mask == 0 { 0 } else { 64 - mask.leading_zeros() as usize };
            for d in start..n_dev {
                let cand = mask | 1 << d;
                let all_subsets = (0..n_dev)
                    .filter(|&i| cand >> i & 1 == 1)
                    .all(|i| prev_masks.contains(&(cand & !(1 << i))));
                if !all_subsets {
                    continue;
                }
                let active: Vec<usize> = (0..n_dev).filter(|&i| cand >> i & 1 == 1).collect();
                let g: Vec<f64> = active.iter().map(|&i| gammas[i]).collect();
                let sys = build_target_system_with(&active, assoc, chan, noise, &g)?;
                let Ok(p) = solve_min_power(&sys) else { continue };
                let mut loads = vec![0.0; budgets.len()];
                for (&i, &v) in active.iter().zip(&p) {
                    loads[assoc.serving_ap(i)] += v;
                }
                if loads.iter().zip(budgets).all(|(l, b)| l <= b) {
                    next_masks.insert(cand);
                    next.push((cand, p));
                }
            }
        }
        if next.is_empty() {
            return Ok(levels);
        }
        levels.push(next.clone());
        prev = next;
        prev_masks = next_masks;
    }
}

/// Exhaustive search over every association and admitted subset.
pub fn brute_force_max_satisfied(
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
    budgets: &[f64],
    tuple_cap: u128,
) -> Result<BbResult> {
    let (k_aps, n_dev) = (chan.num_aps(), chan.num_devices());
    if n_dev > 63 {
        return Err(Error::Config("brute force supports at most 63 devices".into()));
    }
    let tuples = (k_aps as u128).checked_pow(n_dev as u32).unwrap_or(u128::MAX);
    if tuples > tuple_cap {
        return Err(Error::SearchTooLarge { tuples, cap: tuple_cap });
    }
    let gammas: Vec<f64> = (0..n_dev)
        .map(|n| demand.gamma_thr(n) * (1.0 + TARGET_GUARD))
        .collect();

    let mut best: Option<(usize, f64, Vec<usize>, u64, Vec<f64>, Vec<usize>)> = None;
    for code in 0..tuples {
        let serving = decode(code, k_aps, n_dev);
        let assoc = Association::new(k_aps, serving.clone())?;
        let levels = admissible_levels(&assoc, chan, noise, &gammas, budgets)?;
        let size = levels.len();
        let Some(top) = levels.last() else {
            if best.is_none() {
                best = Some((0, 0.0, serving, 0, Vec::new(), Vec::new()));
            }
            continue;
        };
        let (mask, p) = top
            .iter()
            .min_by(|a, b| a.1.iter().sum::<f64>().total_cmp(&b.1.iter().sum::<f64>()))
            .expect("non-empty level");
        let total: f64 = p.iter().sum();
        let better = match &best {
            None => true,
            Some((s, t, ..)) => size > *s || size == *s && total < *t,
        };
        if better {
            let counts = levels.iter().map(Vec::len).collect();
            best = Some((size, total, serving, *mask, p.clone(), counts));
        }
    }

    let (n_star, _, serving, mask, p, level_counts) = best.expect("at least one tuple");
    let admitted: Vec<usize> = (0..n_dev).filter(|&i| mask >> i & 1 == 1).collect();
    let mut power = vec![0.0; n_dev];
    for (&i, &v) in admitted.iter().zip(&p) {
        power[i] = v;
    }
    let mut serving = serving;
    for n in (0..n_dev).filter(|n| !admitted.contains(n)) {
        serving[n] = chan.best_large_scale_ap(n);
    }
    Ok(BbResult {
        n_star,
        admitted,
        association: Association::new(k_aps, serving)?,
        power: PowerVector::new(power)?,
        feasible_all: n_star == n_dev,
        level_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bb::{bb_maximize_admitted, BbConfig};
    use crate::topology::{generate_topology, realize_channels, NetworkConfig, Point};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn topo(aps: Vec<(f64, f64)>, devices: Vec<(f64, f64)>) -> Topology {
        let pt = |(x, y)| Point { x, y };
        Topology {
            ap_positions: aps.into_iter().map(pt).collect(),
            device_positions: devices.into_iter().map(pt).collect(),
        }
    }

    #[test]
    fn nearest_rules() {
        let t = topo(vec![(0.0, 0.0), (100.0, 0.0), (0.0, 100.0)], vec![(0.0, 100.0), (50.0, 0.0), (1.0, 1.0)]);
        assert_eq!(nearest_apa(&t).serving(), &[2, 0, 0]);
    }

    #[test]
    fn nearest_matches_path_loss_without_shadowing() {
        let cfg = NetworkConfig {
            shadowing_std_db: 0.0,
            rng_seed: 11,
            ..Default::default()
        };
        let t = generate_topology(&cfg).unwrap();
        let chan = realize_channels(&t, &cfg).unwrap();
        let near = nearest_apa(&t);
        for n in 0..cfg.num_devices {
            assert_eq!(near.serving_ap(n), chan.best_large_scale_ap(n));
        }
    }

    #[test]
    fn equal_split_values() {
        let assoc = Association::new(2, vec![0, 0]).unwrap();
        assert_eq!(equal_pa(&assoc, &[200.0, 200.0]).as_slice(), &[100.0, 100.0]);
        let assoc = Association::new(3, vec![0, 1, 2]).unwrap();
        assert_eq!(equal_pa(&assoc, &[5.0, 6.0, 7.0]).as_slice(), &[5.0, 6.0, 7.0]);
        let assoc = Association::new(3, vec![2, 0, 2, 2]).unwrap();
        let p = equal_pa(&assoc, &[3.0, 3.0, 3.0]);
        assert_eq!(assoc.loads(&p), vec![3.0, 0.0, 3.0]);
    }

    #[test]
    fn strategy_names_parse() {
        for id in StrategyId::ALL {
            assert_eq!(id.name().parse::<StrategyId>().unwrap(), id);
        }
        assert_eq!("modifiedbb".parse::<StrategyId>().unwrap(), StrategyId::ModifiedBb);
        assert!("bogus".parse::<StrategyId>().is_err());
    }

    #[test]
    fn lone_device() {
        let chan = ChannelMatrix::from_gains(2, 1, vec![1.0, 0.5], None, 1.0).unwrap();
        let ok = Demand::uniform(1, 1.0).unwrap();
        assert_eq!(brute_force_max_satisfied(&chan, 0.1, &ok, &[1.0, 1.0], DEFAULT_TUPLE_CAP).unwrap().n_star, 1);
        // Needs SINR 2^5 - 1 = 31 -> 3.1 at the best AP; budgets of 1 fail.
        let hard = Demand::uniform(1, 5.0).unwrap();
        assert_eq!(brute_force_max_satisfied(&chan, 0.1, &hard, &[1.0, 1.0], DEFAULT_TUPLE_CAP).unwrap().n_star, 0);
        assert_eq!(brute_force_max_satisfied(&chan, 0.1, &hard, &[4.0, 4.0], DEFAULT_TUPLE_CAP).unwrap().n_star, 1);
    }

    #[test]
    fn refuses_large_searches() {
        let chan = ChannelMatrix::from_gains(3, 13, vec![1.0; 39], None, 1.0).unwrap();
        let demand = Demand::uniform(13, 0.5).unwrap();
        assert!(matches!(
            brute_force_max_satisfied(&chan, 0.1, &demand, &[1.0; 3], DEFAULT_TUPLE_CAP),
            Err(Error::SearchTooLarge { .. })
        ));
    }

    #[test]
    fn dominates_branch_and_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let n = rng.random_range(2..=6);
            let gains: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.02..1.0)).collect();
            let chan = ChannelMatrix::from_gains(2, n, gains, None, 1.0).unwrap();
            let demand = Demand::uniform(n, 0.7).unwrap();
            let budgets = [1.0, 1.0];
            let oracle = brute_force_max_satisfied(&chan, 0.1, &demand, &budgets, DEFAULT_TUPLE_CAP).unwrap();
            let order: Vec<usize> = (0..n).collect();
            let bb = bb_maximize_admitted(&chan, 0.1, &demand, &budgets, &order, &BbConfig::uncapped()).unwrap();
            assert!(oracle.n_star >= bb.n_star);
            assert!(oracle.association.within_budgets(&oracle.power, &budgets));
            for &d in &oracle.admitted {
                let r = crate::metrics::rate(crate::metrics::sinr(&oracle.association, &oracle.power, &chan, 0.1, d));
                assert!(r >= 0.7);
            }
        }
    }
}
