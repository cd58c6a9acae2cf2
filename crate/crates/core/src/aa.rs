//! Alternating power allocation and association that grows the satisfied
//! set and then polishes total throughput.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cgapa::{cg_apa, CgConfig};
use crate::difpa::{dif_pa, kkt_residuals, DifPaConfig, KktResiduals};
use crate::error::{Error, Result};
use crate::logapprox::{empty_set_rescue, equal_split, maximize_unconstrained_throughput};
use crate::metrics::{AllocationState, Association, Demand, PowerVector, SinrView};
use crate::topology::ChannelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerRule {
    DifPa,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationRule {
    CoalitionGame,
    /// Keep the starting association throughout.
    Fixed,
}

/// Where each power-allocation solve starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// The previous iteration's powers.
    Previous,
    /// A fresh per-AP equal split.
    EqualSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AaConfig {
    pub eps2: f64,
    pub warm_start: WarmStart,
    pub max_iterations: usize,
    pub power: PowerRule,
    pub association: AssociationRule,
    pub difpa: DifPaConfig,
    pub cg: CgConfig,
}

impl Default for AaConfig {
    fn default() -> Self {
        Self {
            eps2: 1e-4,
            warm_start: WarmStart::EqualSplit,
            max_iterations: 100,
            power: PowerRule::DifPa,
            association: AssociationRule::CoalitionGame,
            difpa: DifPaConfig::default(),
            cg: CgConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaRecord {
    pub iteration: usize,
    pub n_satisfied: usize,
    pub total_rate: f64,
    pub nabla: f64,
    /// Devices dropped from the pinned set during this iteration.
    #[serde(skip)]
    pub shrunk: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AaTrace {
    pub records: Vec<AaRecord>,
}

impl AaTrace {
    /// Writes `iteration,n_satisfied,total_rate,nabla` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for r in &self.records {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Checks the growth invariants: the satisfied count never falls, and
    /// with the count unchanged the total rate never falls by more than
    /// `tol`. Iterations that shrank the pinned set are exempt.
    pub fn invariants_hold(&self, tol: f64) -> bool {
        self.records.windows(2).all(|w| {
            let (a, b) = (&w[0], &w[1]);
            !b.shrunk.is_empty()
                || b.n_satisfied > a.n_satisfied
                || b.n_satisfied == a.n_satisfied && b.total_rate >= a.total_rate - tol
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AaOutcome {
    /// Final allocation evaluated on the known channel.
    pub state: AllocationState,
    pub trace: AaTrace,
    pub iterations: usize,
    pub converged: bool,
    /// Residuals at every power-allocation solve whose inner loops settled.
    pub kkt: Vec<KktResiduals>,
}

/// Starting association: each device on its strongest large-scale AP.
pub fn best_gain_association(chan: &ChannelMatrix) -> Association {
    let serving = (0..chan.num_devices()).map(|n| chan.best_large_scale_ap(n)).collect();
    Association::new(chan.num_aps(), serving).expect("indices come from the channel")
}

/// Initial allocation: log-bound throughput maximization on `assoc`, with
/// the single-link rescue when nobody ends up satisfied.
pub fn initialize(
    assoc: &Association,
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
    budgets: &[f64],
    cfg: &DifPaConfig,
) -> Result<AllocationState> {
    let start = equal_split(assoc, budgets);
    let p = maximize_unconstrained_throughput(assoc, chan, noise, budgets, &start, cfg)?.power;
    let state = AllocationState::evaluate(assoc.clone(), p, chan, noise, demand, SinrView::Known);
    if !state.satisfied.is_empty() {
        return Ok(state);
    }
    log::debug!("no device satisfied after initialization; applying the single-link rescue");
    let p = empty_set_rescue(assoc, chan, budgets);
    Ok(AllocationState::evaluate(assoc.clone(), p, chan, noise, demand, SinrView::Known))
}

fn nabla(current: f64, previous: f64) -> f64 {
    if previous > 0.0 {
        (current - previous) / previous
    } else if current > previous {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Runs the alternating loop from `assoc_init`.
pub fn aa_solve(
    assoc_init: &Association,
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
    budgets: &[f64],
    cfg: &AaConfig,
) -> Result<AaOutcome> {
    let evaluate = |a: &Association, p: PowerVector| {
        AllocationState::evaluate(a.clone(), p, chan, noise, demand, SinrView::Known)
    };
    let mut state = match cfg.power {
        PowerRule::DifPa => initialize(assoc_init, chan, noise, demand, budgets, &cfg.difpa)?,
        PowerRule::Equal => evaluate(assoc_init, equal_split(assoc_init, budgets)),
    };
    let mut q_set = state.satisfied.clone();
    let mut banned = BTreeSet::new();
    let mut trace = AaTrace {
        records: vec![AaRecord {
            iteration: 0,
            n_satisfied: q_set.len(),
            total_rate: state.total_throughput,
            nabla: f64::NAN,
            shrunk: Vec::new(),
        }],
    };
    let mut kkt = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let assoc = state.association.clone();
        let mut shrunk = Vec::new();

        let power = match cfg.power {
            PowerRule::Equal => equal_split(&assoc, budgets),
            PowerRule::DifPa => loop {
                let start = match cfg.warm_start {
                    WarmStart::Previous => state.power.clone(),
                    WarmStart::EqualSplit => equal_split(&assoc, budgets),
                };
                match dif_pa(&assoc, chan, noise, demand, budgets, &q_set, &start, &cfg.difpa) {
                    Ok(out) => {
                        if out.settled {
                            kkt.push(kkt_residuals(&out, &assoc, chan, noise, budgets, &q_set));
                        }
                        break out.power;
                    }
                    Err(Error::Divergence { costliest: Some(n), reason, .. }) => {
                        log::info!("pinned set infeasible ({reason}); releasing device {n}");
                        q_set.remove(&n);
                        banned.insert(n);
                        shrunk.push(n);
                    }
                    Err(e) => return Err(e),
                }
            },
        };

        let assoc = match cfg.association {
            AssociationRule::Fixed => assoc,
            AssociationRule::CoalitionGame => {
                let cg = CgConfig {
                    check_budgets: cfg.cg.check_budgets && cfg.power == PowerRule::DifPa,
                    ..cfg.cg.clone()
                };
                let out = cg_apa(&assoc, &power, chan, noise, demand, &q_set, budgets, &cg);
                if !out.converged {
                    log::warn!("association search hit its pass cap ({})", out.passes);
                }
                out.association
            }
        };
        let power = match cfg.power {
            PowerRule::Equal => equal_split(&assoc, budgets),
            PowerRule::DifPa => power,
        };

        let previous_rate = state.total_throughput;
        let previous_count = q_set.len();
        let candidate = evaluate(&assoc, power);
        let candidate_q: BTreeSet<usize> = candidate.satisfied.difference(&banned).copied().collect();
        let regressed = shrunk.is_empty()
            && (candidate_q.len() < previous_count
                || candidate_q.len() == previous_count && candidate.total_throughput < previous_rate);
        if regressed {
            log::debug!(
                "iteration {iterations} would fall to {} satisfied at rate {:.4}; keeping the previous allocation",
                candidate_q.len(),
                candidate.total_throughput
            );
            converged = true;
            break;
        }
        state = candidate;
        q_set = candidate_q;
        let step = nabla(state.total_throughput, previous_rate);
        trace.records.push(AaRecord {
            iteration: iterations,
            n_satisfied: q_set.len(),
            total_rate: state.total_throughput,
            nabla: step,
            shrunk,
        });
        if q_set.len() == previous_count && step <= cfg.eps2 {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("alternating loop stopped at the iteration cap ({})", cfg.max_iterations);
    }
    Ok(AaOutcome {
        state,
        trace,
        iterations,
        converged,
        kkt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{realize, NetworkConfig};

    #[test]
    fn lone_device_converges_fast() {
        let chan = ChannelMatrix::from_gains(1, 1, vec![1e-9], None, 1.0).unwrap();
        let demand = Demand::uniform(1, 0.5).unwrap();
        let assoc = best_gain_association(&chan);
        let out = aa_solve(&assoc, &chan, 1e-12, &demand, &[200.0], &AaConfig::default()).unwrap();
        assert_eq!(out.state.num_satisfied(), 1);
        assert!(out.iterations <= 2);
        assert!(out.converged);
    }

    #[test]
    fn one_ap_takes_everyone() {
        let chan = ChannelMatrix::from_gains(1, 3, vec![1.0, 2.0, 3.0], None, 1.0).unwrap();
        assert_eq!(best_gain_association(&chan).serving(), &[0, 0, 0]);
    }

    #[test]
    fn ties_go_to_the_lower_ap() {
        let chan = ChannelMatrix::from_gains(2, 1, vec![0.5, 0.5], Some(vec![1.0, 1.0]), 1.0).unwrap();
        assert_eq!(best_gain_association(&chan).serving(), &[0]);
    }

    #[test]
    fn initial_set_matches_recomputed_rates() {
        let cfg = NetworkConfig { rng_seed: 5, ..Default::default() };
        let (_, chan) = realize(&cfg).unwrap();
        let demand = Demand::uniform(cfg.num_devices, 0.5).unwrap();
        let noise = crate::topology::noise_power(&cfg);
        let assoc = best_gain_association(&chan);
        let st = initialize(&assoc, &chan, noise, &demand, &cfg.budgets_mw(), &DifPaConfig::default()).unwrap();
        let rates = crate::metrics::rates(&st.association, &st.power, &chan, noise, SinrView::Known);
        assert_eq!(st.satisfied, crate::metrics::satisfied_set(&rates, &demand));
    }

    #[test]
    fn traces_keep_their_invariants() {
        for seed in 0..10 {
            let cfg = NetworkConfig { rng_seed: seed, num_aps: 3, ..Default::default() };
            let (_, chan) = realize(&cfg).unwrap();
            let demand = Demand::uniform(cfg.num_devices, 0.5).unwrap();
            let noise = crate::topology::noise_power(&cfg);
            let budgets = cfg.budgets_mw();
            let out = aa_solve(&best_gain_association(&chan), &chan, noise, &demand, &budgets, &AaConfig::default()).unwrap();
            assert!(out.trace.invariants_hold(1e-9), "{:?}", out.trace);
            assert!(out.state.association.within_budgets(&out.state.power, &budgets.iter().map(|b| b * (1.0 + 1e-6)).collect::<Vec<_>>()));
            for &n in &out.state.satisfied {
                assert!(out.state.rates[n] >= demand.threshold(n));
            }
        }
    }
}
