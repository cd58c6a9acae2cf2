//! Dual fixed-point power allocation with equality-of-service pinning.
//!
//! Devices in the pinned set are held at the surrogate rate `xi`; everyone
//! else follows the stationarity fixed point of the log-bound objective. The
//! per-AP budget enters through Lagrange multipliers `theta`.

use std::collections::BTreeSet;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logapprox::LogFactors;
use crate::metrics::{Association, Demand, PowerVector};
use crate::minpower::{build_target_system_with, solve_min_power};
use crate::topology::ChannelMatrix;

/// Sweeps producing a power above this multiple of the largest budget are
/// treated as diverging.
/// Floor for the relaxation weight applied to oscillating sweeps.
pub const MIN_DAMPING: f64 = 1.0 / 64.0;

pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// How the budget multipliers are driven.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierRule {
    /// Per AP, the multiplier is solved so the AP spends exactly its budget
    /// (or zero when the budget is slack) before the AP's powers are written.
    Exact,
    /// Projected subgradient step after every sweep.
    Subgradient { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    GaussSeidel,
    Jacobi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifPaConfig {
    /// Outer stop: Euclidean change of the power vector (mW).
    pub eps1: f64,
    pub multiplier: MultiplierRule,
    pub order: SweepOrder,
    /// Inner stop: largest per-device relative change between sweeps.
    pub inner_tol: f64,
    /// Sweep cap for one inner loop.
    pub max_sweeps: usize,
    pub max_outer: usize,
    /// Sweep cap across all inner loops of one solve; the outer loop stops
    /// once it is spent.
    pub max_total_sweeps: usize,
}

impl Default for DifPaConfig {
    fn default() -> Self {
        Self {
            eps1: 1e-4,
            multiplier: MultiplierRule::Exact,
            order: SweepOrder::GaussSeidel,
            inner_tol: 1e-6,
            max_sweeps: 10_000,
            max_outer: 500,
            max_total_sweeps: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub p: Vec<f64>,
    pub theta: Vec<f64>,
    pub factors: LogFactors,
    pub q_set: BTreeSet<usize>,
}

impl DualState {
    /// Fresh state at `p`: factors tight at `p` and the default multipliers.
    pub fn new(
        assoc: &Association,
        chan: &ChannelMatrix,
        noise: f64,
        budgets: &[f64],
        p: &[f64],
        q_set: BTreeSet<usize>,
    ) -> Self {
        let factors = LogFactors::at(assoc, p, chan, noise);
        let theta = initial_theta(&factors, budgets);
        Self {
            p: p.to_vec(),
            theta,
            factors,
            q_set,
        }
    }
}

pub fn initial_theta(factors: &LogFactors, budgets: &[f64]) -> Vec<f64> {
    let a = factors.alpha_mean();
    budgets.iter().map(|b| a / (LN_2 * b)).collect()
}

/// Interference-plus-noise seen by every device on the known channel.
fn interference_all(assoc: &Association, p: &[f64], chan: &ChannelMatrix, noise: f64) -> Vec<f64> {
    let n_dev = p.len();
    let mut out = vec![noise; n_dev];
    for (j, &pj) in p.iter().enumerate() {
        if pj == 0.0 {
            continue;
        }
        let kj = assoc.serving_ap(j);
        for (n, o) in out.iter_mut().enumerate() {
            if n != j {
                *o += chan.known_gain(kj, n) * pj;
            }
        }
    }
    out
}

/// `sum_{n' != n} alpha_{n'} g_{k, n'} / I_{n'}` with `k` the AP serving `n`.
fn price(
    n: usize,
    k: usize,
    alpha: &[f64],
    interference: &[f64],
    chan: &ChannelMatrix,
) -> f64 {
    (0..alpha.len())
        .filter(|&m| m != n)
        .map(|m| alpha[m] * chan.known_gain(k, m) / interference[m])
        .sum()
}

fn unsatisfied_power(alpha: f64, price: f64, theta: f64, cap: f64) -> f64 {
    let denom = price + LN_2 * theta;
    if denom > 0.0 {
        alpha / denom
    } else {
        cap
    }
}

fn pinned_gamma(factors: &LogFactors, demand: &Demand, n: usize) -> f64 {
    ((demand.xi(n) - factors.beta[n]) / factors.alpha[n]).exp2()
}

/// Stationarity fixed point for an unpinned device. Infinite when neither a
/// price nor a multiplier holds it back.
pub fn fixed_point_unsatisfied(
    state: &DualState,
    chan: &ChannelMatrix,
    assoc: &Association,
    noise: f64,
    n: usize,
) -> f64 {
    let k = assoc.serving_ap(n);
    let interference = interference_all(assoc, &state.p, chan, noise);
    unsatisfied_power(
        state.factors.alpha[n],
        price(n, k, &state.factors.alpha, &interference, chan),
        state.theta[k],
        f64::INFINITY,
    )
}

pub fn fixed_point_satisfied(
    state: &DualState,
    chan: &ChannelMatrix,
    assoc: &Association,
    noise: f64,
    demand: &Demand,
    n: usize,
) -> Result<f64> {
    let direct = chan.known_gain(assoc.serving_ap(n), n);
    if !(direct > 0.0) {
        return Err(Error::SingularInstance { device: n });
    }
    let interference = interference_all(assoc, &state.p, chan, noise);
    Ok(pinned_gamma(&state.factors, demand, n) * interference[n] / direct)
}

/// Jacobi application of the fixed-point map at fixed multipliers and
/// factors.
pub fn standard_map(
    state: &DualState,
    chan: &ChannelMatrix,
    assoc: &Association,
    noise: f64,
    demand: &Demand,
    p: &[f64],
) -> Result<Vec<f64>> {
    let interference = interference_all(assoc, p, chan, noise);
    let cap = f64::INFINITY;
    (0..p.len())
        .map(|n| {
            let k = assoc.serving_ap(n);
            if state.q_set.contains(&n) {
                let direct = chan.known_gain(k, n);
                if !(direct > 0.0) {
                    return Err(Error::SingularInstance { device: n });
                }
                Ok(pinned_gamma(&state.factors, demand, n) * interference[n] / direct)
            } else {
                Ok(unsatisfied_power(
                    state.factors.alpha[n],
                    price(n, k, &state.factors.alpha, &interference, chan),
                    state.theta[k],
                    cap,
                ))
            }
        })
        .collect()
}

pub fn multiplier_update(
    theta: &[f64],
    p: &[f64],
    assoc: &Association,
    budgets: &[f64],
    eps_theta: f64,
) -> Vec<f64> {
    let loads = assoc.loads(p);
    theta
        .iter()
        .zip(loads.iter().zip(budgets))
        .map(|(t, (l, b))| (t + eps_theta * (l - b)).max(0.0))
        .collect()
}

/// Smallest `theta >= 0` with `fixed + sum alpha_i / (price_i + ln2 theta) <= budget`.
fn solve_theta(fixed: f64, terms: &[(f64, f64)], budget: f64) -> f64 {
    let room = budget - fixed;
    let load = |theta: f64| -> f64 {
        terms
            .iter()
            .map(|&(a, c)| {
                let d = c + LN_2 * theta;
                if d > 0.0 {
                    a / d
                } else {
                    f64::INFINITY
                }
            })
            .sum()
    };
    if load(0.0) <= room {
        return 0.0;
    }
    let mut hi = terms.iter().map(|t| t.0).sum::<f64>() / (LN_2 * room);
    let mut lo = 0.0;
    while load(hi) > room {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if load(mid) > room {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifPaOutcome {
    pub power: PowerVector,
    pub theta: Vec<f64>,
    /// Factors the final inner solve was run with.
    pub factors: LogFactors,
    pub outer_iterations: usize,
    pub sweeps: usize,
    /// Every inner loop settled before its sweep cap.
    pub settled: bool,
}

struct Solver<'a> {
    assoc: &'a Association,
    chan: &'a ChannelMatrix,
    noise: f64,
    demand: &'a Demand,
    budgets: &'a [f64],
    q_set: &'a BTreeSet<usize>,
    cfg: &'a DifPaConfig,
    members: Vec<Vec<usize>>,
    cap: f64,
}

impl Solver<'_> {
    fn costliest(&self, p: &[f64], factors: &LogFactors) -> Option<usize> {
        let interference = interference_all(self.assoc, p, self.chan, self.noise);
        self.q_set.iter().copied().max_by(|&a, &b| {
            let cost = |n: usize| {
                pinned_gamma(factors, self.demand, n) * interference[n]
                    / self.chan.known_gain(self.assoc.serving_ap(n), n)
            };
            cost(a).total_cmp(&cost(b))
        })
    }

    fn diverged(&self, sweeps: usize, reason: String, p: &[f64], factors: &LogFactors) -> Error {
        Error::Divergence {
            sweeps,
            reason,
            costliest: self.costliest(p, factors),
        }
    }

    /// Sets the pinned powers to hit their targets jointly, holding the
    /// unpinned powers fixed. Left alone when that block has no positive
    /// solution; the per-device updates then decide.
    fn solve_pinned_block(&self, p: &mut [f64], factors: &LogFactors) {
        if self.q_set.is_empty() {
            return;
        }
        let active: Vec<usize> = self.q_set.iter().copied().collect();
        let mut background = p.to_vec();
        for &n in &active {
            background[n] = 0.0;
        }
        let interference = interference_all(self.assoc, &background, self.chan, self.noise);
        let gammas: Vec<f64> = active.iter().map(|&n| pinned_gamma(factors, self.demand, n)).collect();
        let Ok(mut sys) = build_target_system_with(&active, self.assoc, self.chan, self.noise, &gammas) else {
            return;
        };
        for (i, &n) in active.iter().enumerate() {
            sys.u[i] = gammas[i] * interference[n] / self.chan.known_gain(self.assoc.serving_ap(n), n);
        }
        if let Ok(block) = solve_min_power(&sys) {
            for (&n, v) in active.iter().zip(block) {
                p[n] = v;
            }
        }
    }

    /// With no budget binding, interference-limited networks drift
    /// slowly along a ray of growing powers. When every power grew, jump
    /// along that ray until the first AP budget binds.
    fn ray_jump(&self, p: &mut [f64], prev: &[f64]) -> bool {
        let grew = p.iter().zip(prev).all(|(a, b)| *b == 0.0 && *a == 0.0 || *a > *b);
        if !grew || p.iter().all(|v| *v == 0.0) {
            return false;
        }
        let loads = self.assoc.loads(p);
        let factor = loads
            .iter()
            .zip(self.budgets)
            .filter(|(l, _)| **l > 0.0)
            .map(|(l, b)| b / l)
            .fold(f64::INFINITY, f64::min);
        if factor.is_finite() && factor > 1.0 {
            for v in p.iter_mut() {
                *v *= factor;
            }
            return true;
        }
        false
    }

    /// One sweep with the exact multiplier rule, AP by AP. Returns whether
    /// some AP could not fit its pinned devices.
    fn exact_sweep(&self, p: &mut [f64], theta: &mut [f64], factors: &LogFactors) -> bool {
        let mut over = false;
        let jacobi = self.cfg.order == SweepOrder::Jacobi;
        let frozen = jacobi.then(|| interference_all(self.assoc, p, self.chan, self.noise));
        if !jacobi {
            self.solve_pinned_block(p, factors);
        }
        let mut next = p.to_vec();
        for (k, members) in self.members.iter().enumerate() {
            let interference = match &frozen {
                Some(i) => i.clone(),
                None => interference_all(self.assoc, p, self.chan, self.noise),
            };
            let mut fixed = 0.0;
            let mut terms = Vec::new();
            for &n in members {
                if self.q_set.contains(&n) {
                    let target = pinned_gamma(factors, self.demand, n) * interference[n]
                        / self.chan.known_gain(k, n);
                    next[n] = target;
                    fixed += target;
                } else {
                    terms.push((n, factors.alpha[n], price(n, k, &factors.alpha, &interference, self.chan)));
                }
            }
            if fixed >= self.budgets[k] && !terms.is_empty() || fixed > self.budgets[k] {
                over |= fixed > self.budgets[k] * (1.0 + 1e-9);
                theta[k] = 0.0;
                for &(n, _, _) in &terms {
                    next[n] = 0.0;
                }
            } else if !terms.is_empty() {
                let ac: Vec<(f64, f64)> = terms.iter().map(|&(_, a, c)| (a, c)).collect();
                theta[k] = solve_theta(fixed, &ac, self.budgets[k]);
                for &(n, a, c) in &terms {
                    next[n] = unsatisfied_power(a, c, theta[k], self.cap);
                }
            } else {
                theta[k] = 0.0;
            }
            if !jacobi {
                for &n in members {
                    p[n] = next[n];
                }
            }
        }
        if jacobi {
            p.copy_from_slice(&next);
        }
        over
    }

    fn subgradient_sweep(&self, p: &mut [f64], theta: &mut [f64], factors: &LogFactors, step: f64) -> Result<()> {
        let n_dev = p.len();
        let frozen = (self.cfg.order == SweepOrder::Jacobi).then(|| p.to_vec());
        for n in 0..n_dev {
            let src: &[f64] = frozen.as_deref().unwrap_or(p);
            let interference = interference_all(self.assoc, src, self.chan, self.noise);
            let k = self.assoc.serving_ap(n);
            let value = if self.q_set.contains(&n) {
                pinned_gamma(factors, self.demand, n) * interference[n] / self.chan.known_gain(k, n)
            } else {
                unsatisfied_power(
                    factors.alpha[n],
                    price(n, k, &factors.alpha, &interference, self.chan),
                    theta[k],
                    self.cap,
                )
            };
            p[n] = value;
        }
        let updated = multiplier_update(theta, p, self.assoc, self.budgets, step);
        theta.copy_from_slice(&updated);
        Ok(())
    }

    /// Inner loop: sweeps at fixed factors until the powers settle. Returns
    /// `false` when the sweep cap is hit with a feasible iterate.
    fn inner(&self, p: &mut Vec<f64>, theta: &mut [f64], factors: &LogFactors, sweeps: &mut usize) -> Result<bool> {
        let start = *sweeps;
        let mut weight: f64 = 1.0;
        let mut last_step: Option<Vec<f64>> = None;
        loop {
            let prev = p.clone();
            let over = match self.cfg.multiplier {
                MultiplierRule::Exact => self.exact_sweep(p, theta, factors),
                MultiplierRule::Subgradient { step } => {
                    self.subgradient_sweep(p, theta, factors, step)?;
                    false
                }
            };
            *sweeps += 1;
            let step: Vec<f64> = p.iter().zip(&prev).map(|(a, b)| a - b).collect();
            // Relax only when the iterates swing back and forth.
            if let Some(last) = &last_step {
                if step.iter().zip(last).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
                    weight = (weight * 0.5).max(MIN_DAMPING);
                }
            }
            if weight < 1.0 {
                for (v, (old, d)) in p.iter_mut().zip(prev.iter().zip(&step)) {
                    *v = old + weight * d;
                }
            }
            if theta.iter().all(|&t| t == 0.0) {
                self.ray_jump(p, &prev);
            }
            last_step = Some(step);
            if p.iter().any(|v| !v.is_finite() || *v > self.cap) {
                return Err(self.diverged(*sweeps, "power blew past the divergence cap".into(), &prev, factors));
            }
            // Per-device relative change, undoing the relaxation so a damped
            // step is not mistaken for convergence.
            let change = p.iter().zip(&prev).fold(0.0f64, |m, (a, b)| {
                let d = (a - b).abs();
                m.max(if d == 0.0 { 0.0 } else { d / (weight * a.abs().max(b.abs())) })
            });
            log::trace!("sweep {}: relative change {change:.3e}, weight {weight}", *sweeps);
            let settled = change <= self.cfg.inner_tol;
            if settled || *sweeps - start >= self.cfg.max_sweeps {
                if over {
                    return Err(self.diverged(*sweeps, "pinned devices exceed an AP budget".into(), p, factors));
                }
                if !settled {
                    log::debug!("inner sweeps hit the cap ({}) at relative change {change:.3e}", self.cfg.max_sweeps);
                }
                return Ok(settled);
            }
        }
    }
}

/// Power allocation for fixed association and pinned set `q_set`.
#[allow(clippy::too_many_arguments)]
pub fn dif_pa(
    assoc: &Association,
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
    budgets: &[f64],
    q_set: &BTreeSet<usize>,
    p_init: &[f64],
    cfg: &DifPaConfig,
) -> Result<DifPaOutcome> {
    dif_pa_traced(assoc, chan, noise, demand, budgets, q_set, p_init, cfg, |_, _| true)
}

/// As [`dif_pa`], calling `observe(iteration, p)` after every outer
/// iteration; returning `false` stops the loop early.
#[allow(clippy::too_many_arguments)]
pub fn dif_pa_traced(
    assoc: &Association,
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
    budgets: &[f64],
    q_set: &BTreeSet<usize>,
    p_init: &[f64],
    cfg: &DifPaConfig,
    mut observe: impl FnMut(usize, &[f64]) -> bool,
) -> Result<DifPaOutcome> {
    let n_dev = chan.num_devices();
    if p_init.len() != n_dev || budgets.len() != chan.num_aps() {
        return Err(Error::Config("power or budget vector has the wrong length".into()));
    }
    if q_set.iter().any(|&n| n >= n_dev) {
        return Err(Error::Config("pinned set names an unknown device".into()));
    }
    let solver = Solver {
        assoc,
        chan,
        noise,
        demand,
        budgets,
        q_set,
        cfg,
        members: (0..chan.num_aps()).map(|k| assoc.members(k)).collect(),
        cap: DIVERGENCE_FACTOR * budgets.iter().fold(0.0f64, |m, b| m.max(*b)),
    };

    // The pinned targets alone must be attainable within budget.
    let mut factors = LogFactors::at(assoc, p_init, chan, noise);
    if !q_set.is_empty() {
        let active: Vec<usize> = q_set.iter().copied().collect();
        let gammas: Vec<f64> = active.iter().map(|&n| demand.xi(n).exp2() - 1.0).collect();
        let sys = build_target_system_with(&active, assoc, chan, noise, &gammas)?;
        let fits = solve_min_power(&sys).ok().is_some_and(|p| {
            let mut full = vec![0.0; n_dev];
            for (&n, &v) in active.iter().zip(&p) {
                full[n] = v;
            }
            assoc.within_budgets(&full, budgets)
        });
        if !fits {
            return Err(solver.diverged(0, "pinned targets cannot fit the budgets".into(), p_init, &factors));
        }
    }

    let mut p = p_init.to_vec();
    let mut theta = initial_theta(&factors, budgets);
    let mut sweeps = 0;
    let mut outer = 0;
    let mut settled = true;
    while outer < cfg.max_outer {
        // Refreshed here rather than after the tests, so the returned
        // factors are always the ones the returned powers were solved at.
        if outer > 0 {
            factors = LogFactors::at(assoc, &p, chan, noise);
        }
        let prev = p.clone();
        settled &= solver.inner(&mut p, &mut theta, &factors, &mut sweeps)?;
        outer += 1;
        let keep_going = observe(outer, &p);
        let moved = p.iter().zip(&prev).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        log::trace!("dif-pa outer {outer}: moved {moved:.3e} after {sweeps} sweeps");
        if !keep_going || moved <= cfg.eps1 {
            break;
        }
        if sweeps >= cfg.max_total_sweeps {
            log::debug!("dif-pa spent its sweep budget ({sweeps}) after {outer} outer iterations");
            settled = false;
            break;
        }
    }
    if outer == cfg.max_outer {
        log::debug!("dif-pa stopped at the outer iteration cap ({outer})");
    }
    Ok(DifPaOutcome {
        power: PowerVector::new(p.iter().map(|v| v.max(0.0)).collect())?,
        theta,
        factors,
        outer_iterations: outer,
        sweeps,
        settled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Largest stationarity residual over unpinned devices.
    pub stationarity: f64,
    /// Largest `|theta_k (P_k^max - load_k)|`.
    pub slackness: f64,
}

/// Optimality residuals of an outcome against the factors it was solved with.
pub fn kkt_residuals(
    outcome: &DifPaOutcome,
    assoc: &Association,
    chan: &ChannelMatrix,
    noise: f64,
    budgets: &[f64],
    q_set: &BTreeSet<usize>,
) -> KktResiduals {
    let p = outcome.power.as_slice();
    let alpha = &outcome.factors.alpha;
    let interference = interference_all(assoc, p, chan, noise);
    let stationarity = (0..p.len())
        .filter(|n| !q_set.contains(n))
        .map(|n| {
            let k = assoc.serving_ap(n);
            let c = price(n, k, alpha, &interference, chan);
            (alpha[n] / LN_2 - p[n] * c / LN_2 - outcome.theta[k] * p[n]).abs()
        })
        .fold(0.0, f64::max);
    let slackness = assoc
        .loads(p)
        .iter()
        .zip(budgets)
        .zip(&outcome.theta)
        .map(|((l, b), t)| (t * (b - l)).abs())
        .fold(0.0, f64::max);
    KktResiduals {
        stationarity,
        slackness,
    }
}
