//! Minimum-power solve for a set of devices held at fixed SINR targets.
//!
//! With every active device driven to equality at its target, the minimum
//! total power problem reduces to `(I - F) p = u`, where `F` is the
//! normalized interference coupling. A non-negative solution exists iff the
//! spectral radius of `F` is below one, and then it is the component-wise
//! smallest power vector meeting the targets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metrics::{Association, Demand};
use crate::topology::ChannelMatrix;

/// Systems larger than this are solved by fixed-point iteration.
pub const DIRECT_SOLVE_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSystem {
    pub active: Vec<usize>,
    pub gamma_thr: Vec<f64>,
    /// Row-major `n x n` coupling matrix with zero diagonal.
    pub f: Vec<f64>,
    pub u: Vec<f64>,
}

impl TargetSystem {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    #[inline]
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.f[i * self.active.len() + j]
    }
}

/// The SINR targets are jointly unattainable at any power level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Infeasible;

/// Target system for the raw demands `2^{R_thr} - 1` of the active devices.
pub fn build_target_system(
    active: &[usize],
    assoc: &Association,
    chan: &ChannelMatrix,
    noise: f64,
    demand: &Demand,
) -> Result<TargetSystem> {
    let gammas: Vec<f64> = active.iter().map(|&n| demand.gamma_thr(n)).collect();
    build_target_system_with(active, assoc, chan, noise, &gammas)
}

/// Target system with explicit per-device SINR targets (aligned with `active`).
pub fn build_target_system_with(
    active: &[usize],
    assoc: &Association,
    chan: &ChannelMatrix,
    noise: f64,
    gammas: &[f64],
) -> Result<TargetSystem> {
    assert_eq!(active.len(), gammas.len(), "one target per active device");
    let m = active.len();
    let mut f = vec![0.0; m * m];
    let mut u = Vec::with_capacity(m);
    for (i, (&ni, &gi)) in active.iter().zip(gammas).enumerate() {
        let direct = chan.known_gain(assoc.serving_ap(ni), ni);
        if !(direct > 0.0) {
            return Err(Error::SingularInstance { device: ni });
        }
        for (j, &nj) in active.iter().enumerate() {
            if i != j {
                f[i * m + j] = gi * chan.known_gain(assoc.serving_ap(nj), ni) / direct;
            }
        }
        u.push(gi * noise / direct);
    }
    Ok(TargetSystem {
        active: active.to_vec(),
        gamma_thr: gammas.to_vec(),
        f,
        u,
    })
}

/// Minimal powers (aligned with `sys.active`) meeting every target with equality.
pub fn solve_min_power(sys: &TargetSystem) -> Result<Vec<f64>, Infeasible> {
    let m = sys.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let p = if m <= DIRECT_SOLVE_LIMIT {
        direct_solve(sys)?
    } else {
        iterative_solve(sys)?
    };
    // For non-negative F and positive u a positive solution of (I - F) p = u
    // exists exactly when rho(F) < 1.
    if p.iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(p)
    } else {
        Err(Infeasible)
    }
}

fn direct_solve(sys: &TargetSystem) -> Result<Vec<f64>, Infeasible> {
    let m = sys.len();
    let a = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else {
            -sys.coupling(i, j)
        }
    });
    let b = DVector::from_column_slice(&sys.u);
    let x = a.lu().solve(&b).ok_or(Infeasible)?;
    Ok(x.iter().copied().collect())
}

fn iterative_solve(sys: &TargetSystem) -> Result<Vec<f64>, Infeasible> {
    if spectral_radius(&sys.f, sys.len()) >= 1.0 {
        return Err(Infeasible);
    }
    let mut p = sys.u.clone();
    for _ in 0..100_000 {
        let next = standard_map(sys, &p);
        let delta = next
            .iter()
            .zip(&p)
            .map(|(a, b)| ((a - b) / a).abs())
            .fold(0.0, f64::max);
        p = next;
        if delta < 1e-13 {
            return Ok(p);
        }
    }
    Err(Infeasible)
}

/// One application of `p -> F p + u`.
pub fn standard_map(sys: &TargetSystem, p: &[f64]) -> Vec<f64> {
    let m = sys.len();
    (0..m)
        .map(|i| sys.u[i] + (0..m).map(|j| sys.coupling(i, j) * p[j]).sum::<f64>())
        .collect()
}

/// Perron root of a non-negative square matrix (row-major).
///
/// Power iteration on `I + F`, which shares the Perron vector of `F` but is
/// aperiodic, stopped once the Collatz-Wielandt bounds agree to `1e-10` or
/// after 200 steps.
pub fn spectral_radius(f: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![1.0; n];
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..200 {
        let y: Vec<f64> = (0..n)
            .map(|i| x[i] + (0..n).map(|j| f[i * n + j] * x[j]).sum::<f64>())
            .collect();
        lo = f64::INFINITY;
        hi = 0.0;
        for i in 0..n {
            let ratio = y[i] / x[i];
            lo = f64::min(lo, ratio);
            hi = f64::max(hi, ratio);
        }
        let scale = y.iter().copied().fold(0.0, f64::max);
        if !(scale > 0.0) {
            return 0.0;
        }
        x = y.iter().map(|v| (v / scale).max(f64::MIN_POSITIVE)).collect();
        if hi - lo <= 1e-10 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi) - 1.0
}

/// True iff each AP's summed power stays within its budget (inclusive).
pub fn check_budgets(p: &[f64], assoc: &Association, p_max: &[f64]) -> bool {
    assoc.within_budgets(p, p_max)
}
