//! Logarithmic lower bound on the rate and the successive approximation
//! loop that maximizes total throughput without rate constraints.

use std::collections::BTreeSet;

use crate::difpa::{dif_pa_traced, DifPaConfig};
use crate::error::{Error, Result};
use crate::metrics::{sinr, total_throughput, Association, Demand, PowerVector};
use crate::topology::ChannelMatrix;

/// SINR values below this use the guarded factors.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// Objective drops smaller than this (relative) are treated as solver noise:
/// the loop stops at the previous iterate instead of failing.
pub const STALL_TOLERANCE: f64 = 1e-6;

/// Factors of the bound `log2(1 + z) >= alpha * log2(z) + beta`, tight at the
/// SINR they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFactors {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LogFactors {
    /// Guarded factors for every device at the given SINRs.
    pub fn from_sinrs(gammas: &[f64]) -> Self {
        let (alpha, beta) = gammas.iter().map(|&g| guarded_factors(g)).unzip();
        Self { alpha, beta }
    }

    /// Factors tight at the known-channel SINRs of `p`.
    pub fn at(assoc: &Association, p: &[f64], chan: &ChannelMatrix, noise: f64) -> Self {
        let gammas: Vec<f64> = (0..p.len()).map(|n| sinr(assoc, p, chan, noise, n)).collect();
        Self::from_sinrs(&gammas)
    }

    pub fn alpha_mean(&self) -> f64 {
        if self.alpha.is_empty() {
            return 0.0;
        }
        self.alpha.iter().sum::<f64>() / self.alpha.len() as f64
    }
}

pub fn log_factors(gamma: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("log factors need a positive SINR, got {gamma}")));
    }
    let alpha = gamma / (1.0 + gamma);
    Ok((alpha, gamma.ln_1p() / std::f64::consts::LN_2 - alpha * gamma.log2()))
}

/// Like [`log_factors`] but finite at zero SINR.
pub fn guarded_factors(gamma: f64) -> (f64, f64) {
    if gamma < GAMMA_FLOOR {
        (GAMMA_FLOOR, gamma.max(0.0).ln_1p() / std::f64::consts::LN_2)
    } else {
        log_factors(gamma).expect("gamma above the floor")
    }
}

pub fn lower_bound_rate(
    assoc: &Association,
    p: &[f64],
    chan: &ChannelMatrix,
    noise: f64,
    factors: &LogFactors,
    n: usize,
) -> Result<f64> {
    let gamma = sinr(assoc, p, chan, noise, n);
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("device {n} has zero SINR; the bound is undefined")));
    }
    Ok(factors.alpha[n] * gamma.log2() + factors.beta[n])
}

/// Equal split of each AP budget over its devices.
pub fn equal_split(assoc: &Association, budgets: &[f64]) -> PowerVector {
    let counts: Vec<usize> = (0..assoc.num_aps()).map(|k| assoc.members(k).len()).collect();
    let p = assoc
        .serving()
        .iter()
        .map(|&k| budgets[k] / counts[k] as f64)
        .collect();
    PowerVector::new(p).expect("budgets are positive")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogApproxOutcome {
    pub power: PowerVector,
    /// Total throughput at the start point and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Successive log-bound maximization of the total throughput, started from
/// `p_init` and stopped once consecutive iterates are within `cfg.eps1`.
pub fn maximize_unconstrained_throughput(
    assoc: &Association,
    chan: &ChannelMatrix,
    noise: f64,
    budgets: &[f64],
    p_init: &[f64],
    cfg: &DifPaConfig,
) -> Result<LogApproxOutcome> {
    if !assoc.within_budgets(p_init, budgets) {
        return Err(Error::Domain("initial powers exceed an AP budget".into()));
    }
    let n = p_init.len();
    let demand = Demand::uniform(n, 1.0)?;
    let rate_of = |p: &[f64]| {
        let r: Vec<f64> = (0..n)
            .map(|i| crate::metrics::rate(sinr(assoc, p, chan, noise, i)))
            .collect();
        total_throughput(&r)
    };

    let mut current = p_init.to_vec();
    let mut trace = vec![rate_of(&current)];
    let mut iterations = 0;
    let mut stalled = None;
    dif_pa_traced(
        assoc,
        chan,
        noise,
        &demand,
        budgets,
        &BTreeSet::new(),
        p_init,
        cfg,
        |iteration, p| {
            let objective = rate_of(p);
            let previous = *trace.last().expect("trace starts non-empty");
            if objective < previous {
                let drop = (previous - objective) / previous.abs().max(f64::MIN_POSITIVE);
                if drop > STALL_TOLERANCE {
                    stalled = Some(Error::IterationStall {
                        iteration,
                        previous,
                        current: objective,
                    });
                }
                return false;
            }
            trace.push(objective);
            current.copy_from_slice(p);
            iterations = iteration;
            true
        },
    )?;
    if let Some(err) = stalled {
        return Err(err);
    }
    Ok(LogApproxOutcome {
        power: PowerVector::new(current)?,
        objective_trace: trace,
        iterations,
    })
}

/// Fallback when nobody is satisfied: the strongest large-scale link gets its
/// AP's whole budget and every other device is silenced.
pub fn empty_set_rescue(assoc: &Association, chan: &ChannelMatrix, budgets: &[f64]) -> PowerVector {
    let n_dev = assoc.num_devices();
    let best = (0..n_dev)
        .max_by(|&a, &b| {
            let ga = chan.large_scale(assoc.serving_ap(a), a);
            let gb = chan.large_scale(assoc.serving_ap(b), b);
            ga.total_cmp(&gb).then(b.cmp(&a))
        })
        .expect("at least one device");
    let mut p = vec![0.0; n_dev];
    p[best] = budgets[assoc.serving_ap(best)];
    PowerVector::new(p).expect("budgets are positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::rate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn factor_values() {
        let (a, b) = log_factors(1.0).unwrap();
        assert_relative_eq!(a, 0.5, epsilon = 1e-15);
        assert_relative_eq!(b, 1.0, epsilon = 1e-15);
        let (a, b) = log_factors(3.0).unwrap();
        assert_relative_eq!(a, 0.75, epsilon = 1e-15);
        assert_relative_eq!(b, 2.0 - 0.75 * 3f64.log2(), epsilon = 1e-15);
        assert_relative_eq!(b, 0.81128, epsilon = 1e-5);
        assert!(log_factors(0.0).is_err());
        assert!(log_factors(-1.0).is_err());
        let (a, b) = guarded_factors(0.0);
        assert_eq!((a, b), (GAMMA_FLOOR, 0.0));
    }

    #[test]
    fn bound_gap_vanishes_at_high_sinr() {
        let (a, b) = log_factors(1e9).unwrap();
        assert!(1.0 - a < 1e-8);
        assert!(b.abs() < 1e-7);
    }

    #[test]
    fn bound_on_a_network() {
        let chan = ChannelMatrix::from_gains(2, 3, vec![1.0, 0.2, 0.3, 0.1, 0.9, 0.4], None, 1.0).unwrap();
        let assoc = Association::new(2, vec![0, 1, 0]).unwrap();
        let p0 = [1.0, 2.0, 0.5];
        let f = LogFactors::at(&assoc, &p0, &chan, 0.1);
        for n in 0..3 {
            let exact = rate(sinr(&assoc, &p0, &chan, 0.1, n));
            assert_relative_eq!(lower_bound_rate(&assoc, &p0, &chan, 0.1, &f, n).unwrap(), exact, epsilon = 1e-12);
            let p1 = [0.3, 4.0, 2.0];
            assert!(lower_bound_rate(&assoc, &p1, &chan, 0.1, &f, n).unwrap() <= rate(sinr(&assoc, &p1, &chan, 0.1, n)) + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn bound_is_tight_and_below(z0 in 1e-6f64..1e6, z in 1e-6f64..1e6) {
            let (a, b) = log_factors(z0).unwrap();
            prop_assert!((a * z0.log2() + b - z0.ln_1p() / std::f64::consts::LN_2).abs() <= 1e-12 * (1.0 + z0.log2().abs()));
            prop_assert!(a * z.log2() + b <= z.ln_1p() / std::f64::consts::LN_2 + 1e-12);
        }
    }

    #[test]
    fn lone_device_takes_whole_budget() {
        let chan = ChannelMatrix::from_gains(1, 1, vec![1e-9], None, 1.0).unwrap();
        let assoc = Association::new(1, vec![0]).unwrap();
        let out = maximize_unconstrained_throughput(&assoc, &chan, 1e-12, &[200.0], &[50.0], &DifPaConfig::default()).unwrap();
        assert_relative_eq!(out.power[0], 200.0, max_relative = 1e-9);
    }

    #[test]
    fn matches_grid_search_on_two_devices() {
        // One AP, device 0 much stronger than device 1.
        let chan = ChannelMatrix::from_gains(1, 2, vec![1.0, 0.05], None, 1.0).unwrap();
        let assoc = Association::new(1, vec![0, 0]).unwrap();
        let noise = 0.01;
        let budget = 1.0;
        let total = |p: &[f64]| (0..2).map(|n| rate(sinr(&assoc, p, &chan, noise, n))).sum::<f64>();
        let mut best: f64 = 0.0;
        for i in 0..=1000 {
            let x = budget * i as f64 / 1000.0;
            best = best.max(total(&[x, budget - x]));
        }
        let init = equal_split(&assoc, &[budget]);
        let out = maximize_unconstrained_throughput(&assoc, &chan, noise, &[budget], &init, &DifPaConfig::default()).unwrap();
        let got = total(&out.power);
        assert!(got >= best * 0.99, "got {got}, grid {best}");
        assert!(assoc.within_budgets(&out.power, &[budget * (1.0 + 1e-9)]));
        assert!(out.objective_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rescue_picks_strongest_link() {
        let chan = ChannelMatrix::from_gains(2, 3, vec![1.0, 5.0, 2.0, 4.0, 1.0, 3.0], None, 1.0).unwrap();
        let assoc = Association::new(2, vec![0, 0, 1]).unwrap();
        let p = empty_set_rescue(&assoc, &chan, &[7.0, 9.0]);
        assert_eq!(p.as_slice(), &[0.0, 7.0, 0.0]);
    }

    #[test]
    fn equal_split_meets_budgets() {
        let assoc = Association::new(3, vec![0, 0, 2]).unwrap();
        let p = equal_split(&assoc, &[200.0, 200.0, 200.0]);
        assert_eq!(p.as_slice(), &[100.0, 100.0, 200.0]);
    }
}
