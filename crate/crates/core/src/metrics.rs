//! Association/power data model and the SINR, rate and satisfied-set metrics.

use std::collections::BTreeSet;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::ChannelMatrix;

/// One serving AP per device. Column `n` of the binary `K x N` matrix has its
/// single one at row `serving[n]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Association {
    num_aps: usize,
    serving: Vec<usize>,
}

impl Association {
    pub fn new(num_aps: usize, serving: Vec<usize>) -> Result<Self> {
        if num_aps == 0 {
            return Err(Error::Config("association needs at least one AP".into()));
        }
        if let Some((n, k)) = serving.iter().enumerate().find(|(_, k)| **k >= num_aps) {
            return Err(Error::Config(format!(
                "device {n} is assigned to AP {k} but only {num_aps} APs exist"
            )));
        }
        Ok(Self { num_aps, serving })
    }

    /// Every device on the same AP.
    pub fn uniform(num_aps: usize, num_devices: usize, ap: usize) -> Result<Self> {
        Self::new(num_aps, vec![ap; num_devices])
    }

    /// Builds an association from a binary `K x N` matrix.
    pub fn from_matrix(matrix: &[Vec<u8>]) -> Result<Self> {
        let num_aps = matrix.len();
        let num_devices = matrix.first().map_or(0, Vec::len);
        let mut serving = Vec::with_capacity(num_devices);
        for n in 0..num_devices {
            let rows: Vec<usize> = (0..num_aps).filter(|&k| matrix[k][n] == 1).collect();
            if rows.len() != 1 || (0..num_aps).any(|k| matrix[k][n] > 1) {
                return Err(Error::Config(format!(
                    "column {n} of the association matrix must contain exactly one 1"
                )));
            }
            serving.push(rows[0]);
        }
        Self::new(num_aps, serving)
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.num_aps)
            .map(|k| self.serving.iter().map(|&s| u8::from(s == k)).collect())
            .collect()
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn num_devices(&self) -> usize {
        self.serving.len()
    }

    #[inline]
    pub fn serving_ap(&self, n: usize) -> usize {
        self.serving[n]
    }

    pub fn serving(&self) -> &[usize] {
        &self.serving
    }

    /// Devices served by AP `k`, in index order.
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.serving.len()).filter(|&n| self.serving[n] == k).collect()
    }

    pub(crate) fn set(&mut self, n: usize, k: usize) {
        debug_assert!(k < self.num_aps);
        self.serving[n] = k;
    }

    /// Power drawn from each AP.
    pub fn loads(&self, p: &[f64]) -> Vec<f64> {
        let mut loads = vec![0.0; self.num_aps];
        for (n, &k) in self.serving.iter().enumerate() {
            loads[k] += p[n];
        }
        loads
    }

    /// True iff every AP stays within its budget, up to a relative
    /// round-off allowance of [`BUDGET_TOLERANCE`].
    pub fn within_budgets(&self, p: &[f64], budgets: &[f64]) -> bool {
        self.loads(p)
            .iter()
            .zip(budgets)
            .all(|(l, b)| *l <= b * (1.0 + BUDGET_TOLERANCE))
    }
}

/// Relative slack allowed on AP budgets when checking finished allocations.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// Non-negative transmit powers in milliwatts, one per device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some((n, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("power of device {n} is {v}")));
        }
        Ok(Self(p))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for PowerVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-device rate demands (bits/s/Hz) plus the relative slack used when a
/// satisfied device is pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    r_thr: Vec<f64>,
    tau: f64,
}

/// Default pinning slack: pinned devices are held 1% above their demand.
pub const DEFAULT_TAU: f64 = 0.01;

impl Demand {
    pub fn new(r_thr: Vec<f64>, tau: f64) -> Result<Self> {
        if let Some((n, r)) = r_thr.iter().enumerate().find(|(_, r)| !(**r > 0.0) || !r.is_finite()) {
            return Err(Error::Config(format!("rate threshold of device {n} must be positive, got {r}")));
        }
        if !(tau >= 0.0) {
            return Err(Error::Config(format!("tau must be non-negative, got {tau}")));
        }
        Ok(Self { r_thr, tau })
    }

    pub fn uniform(num_devices: usize, r_thr: f64) -> Result<Self> {
        Self::new(vec![r_thr; num_devices], DEFAULT_TAU)
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(Error::Config(format!("tau must be non-negative, got {tau}")));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.r_thr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_thr.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn threshold(&self, n: usize) -> f64 {
        self.r_thr[n]
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.r_thr
    }

    /// Pinned rate `R_thr * (1 + tau)`.
    #[inline]
    pub fn xi(&self, n: usize) -> f64 {
        self.r_thr[n] * (1.0 + self.tau)
    }

    /// SINR needed to reach the raw threshold.
    #[inline]
    pub fn gamma_thr(&self, n: usize) -> f64 {
        self.r_thr[n].exp2() - 1.0
    }
}

/// Which channel the SINR is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SinrView {
    /// The estimate every allocator optimizes against.
    #[default]
    Known,
    /// What the device actually experiences under imperfect CSI.
    Realized,
}

/// Interference at device `n` from every other device's serving link.
#[inline]
fn interference(
    assoc: &Association,
    p: &[f64],
    n: usize,
    gain: impl Fn(usize, usize) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for (j, &pj) in p.iter().enumerate() {
        if j != n && pj > 0.0 {
            acc += gain(assoc.serving_ap(j), n) * pj;
        }
    }
    acc
}

/// SINR of device `n` on the known channel.
pub fn sinr(assoc: &Association, p: &[f64], chan: &ChannelMatrix, noise: f64, n: usize) -> f64 {
    let k = assoc.serving_ap(n);
    let signal = chan.known_gain(k, n) * p[n];
    if signal == 0.0 {
        return 0.0;
    }
    signal / (interference(assoc, p, n, |k, n| chan.known_gain(k, n)) + noise)
}

/// SINR of device `n` under imperfect CSI: the desired link is scaled by
/// `rho^2`, interference arrives through the true gains, and the estimation
/// error adds `(1 - rho^2) * theta_{k(n),n}` to the denominator.
pub fn imperfect_sinr(
    assoc: &Association,
    p: &[f64],
    chan: &ChannelMatrix,
    noise: f64,
    n: usize,
) -> f64 {
    let k = assoc.serving_ap(n);
    let rho2 = chan.rho() * chan.rho();
    let signal = rho2 * chan.gain(k, n) * p[n];
    if signal == 0.0 {
        return 0.0;
    }
    let error = (1.0 - rho2) * chan.large_scale(k, n);
    signal / (interference(assoc, p, n, |k, n| chan.gain(k, n)) + error + noise)
}

pub fn sinr_all(
    assoc: &Association,
    p: &[f64],
    chan: &ChannelMatrix,
    noise: f64,
    view: SinrView,
) -> Vec<f64> {
    (0..assoc.num_devices())
        .map(|n| match view {
            SinrView::Known => sinr(assoc, p, chan, noise, n),
            SinrView::Realized => imperfect_sinr(assoc, p, chan, noise, n),
        })
        .collect()
}

#[inline]
pub fn rate(gamma: f64) -> f64 {
    gamma.ln_1p() / std::f64::consts::LN_2
}

pub fn rates(
    assoc: &Association,
    p: &[f64],
    chan: &ChannelMatrix,
    noise: f64,
    view: SinrView,
) -> Vec<f64> {
    sinr_all(assoc, p, chan, noise, view)
        .into_iter()
        .map(rate)
        .collect()
}

pub fn total_throughput(rates: &[f64]) -> f64 {
    rates.iter().sum()
}

/// Devices whose rate meets or exceeds their raw threshold.
pub fn satisfied_set(rates: &[f64], demand: &Demand) -> BTreeSet<usize> {
    debug_assert_eq!(rates.len(), demand.len());
    rates
        .iter()
        .enumerate()
        .filter(|(n, r)| **r >= demand.threshold(*n))
        .map(|(n, _)| n)
        .collect()
}

/// Snapshot of an allocation together with its derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationState {
    pub association: Association,
    pub power: PowerVector,
    pub rates: Vec<f64>,
    pub total_throughput: f64,
    pub satisfied: BTreeSet<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DeviceRow {
    device_id: usize,
    serving_ap: usize,
    power_mw: f64,
    rate: f64,
    satisfied_flag: u8,
}

impl AllocationState {
    pub fn evaluate(
        association: Association,
        power: PowerVector,
        chan: &ChannelMatrix,
        noise: f64,
        demand: &Demand,
        view: SinrView,
    ) -> Self {
        let rates = rates(&association, &power, chan, noise, view);
        let total_throughput = total_throughput(&rates);
        let satisfied = satisfied_set(&rates, demand);
        Self {
            association,
            power,
            rates,
            total_throughput,
            satisfied,
        }
    }

    pub fn num_satisfied(&self) -> usize {
        self.satisfied.len()
    }

    /// Writes `device_id,serving_ap,power_mw,rate,satisfied_flag` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for row in self.device_rows() {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn device_rows(&self) -> impl Iterator<Item = DeviceRow> + '_ {
        (0..self.rates.len()).map(|n| DeviceRow {
            device_id: n,
            serving_ap: self.association.serving_ap(n),
            power_mw: self.power[n],
            rate: self.rates[n],
            satisfied_flag: u8::from(self.satisfied.contains(&n)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_device_instance() -> (Association, ChannelMatrix) {
        // One AP, device 0 with gain 4, device 1 with gain 1.
        let chan = ChannelMatrix::from_gains(1, 2, vec![4.0, 1.0], None, 1.0).unwrap();
        (Association::uniform(1, 2, 0).unwrap(), chan)
    }

    #[test]
    fn sinr_single_link() {
        let chan = ChannelMatrix::from_gains(1, 1, vec![1.0], None, 1.0).unwrap();
        let assoc = Association::uniform(1, 1, 0).unwrap();
        assert_eq!(sinr(&assoc, &[1.0], &chan, 1.0, 0), 1.0);
        assert_eq!(sinr(&assoc, &[0.0], &chan, 1.0, 0), 0.0);
    }

    #[test]
    fn sinr_hand_built_pair() {
        let (assoc, chan) = two_device_instance();
        // Device 0 hears device 1's stream through its own gain 4: 4 / (4 + 1).
        assert_relative_eq!(sinr(&assoc, &[1.0, 1.0], &chan, 1.0, 0), 0.8, epsilon = 1e-15);
        // Cross-AP gather: two APs, device 0 served by AP 0 (g=4), device 1 by
        // AP 1 whose gain towards device 0 is 1.
        let chan = ChannelMatrix::from_gains(2, 2, vec![4.0, 0.5, 1.0, 3.0], None, 1.0).unwrap();
        let assoc = Association::new(2, vec![0, 1]).unwrap();
        assert_relative_eq!(sinr(&assoc, &[1.0, 1.0], &chan, 1.0, 0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn imperfect_matches_perfect_at_unit_rho() {
        let chan = ChannelMatrix::from_gains(2, 3, vec![1.0, 0.2, 0.3, 0.4, 2.0, 0.7], None, 1.0).unwrap();
        let assoc = Association::new(2, vec![0, 1, 1]).unwrap();
        let p = [1.0, 2.0, 0.5];
        for n in 0..3 {
            assert_eq!(sinr(&assoc, &p, &chan, 0.1, n), imperfect_sinr(&assoc, &p, &chan, 0.1, n));
        }
        let degraded = chan.with_rho(1e-4).unwrap();
        for n in 0..3 {
            assert!(imperfect_sinr(&assoc, &p, &degraded, 0.1, n) < 1e-6);
        }
    }

    #[test]
    fn imperfect_error_term() {
        let chan = ChannelMatrix::from_gains(1, 1, vec![2.0], Some(vec![1.0]), 0.5f64.sqrt()).unwrap();
        let assoc = Association::uniform(1, 1, 0).unwrap();
        // 0.5 * 2 * 3 / (0.5 * 1 + 1)
        assert_relative_eq!(imperfect_sinr(&assoc, &[3.0], &chan, 1.0, 0), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rate_values() {
        assert_relative_eq!(rate(1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(rate(3.0), 2.0, epsilon = 1e-15);
        assert_relative_eq!(rate(2f64.sqrt() - 1.0), 0.5, epsilon = 1e-15);
        assert_eq!(rate(0.0), 0.0);
    }

    #[test]
    fn throughput_and_satisfied() {
        assert_eq!(total_throughput(&[0.0; 4]), 0.0);
        assert_eq!(total_throughput(&[0.5, 0.5, 1.0]), 2.0);

        let d = Demand::uniform(2, 0.5).unwrap();
        assert_eq!(satisfied_set(&[0.6, 0.4], &d), BTreeSet::from([0]));
        assert!(satisfied_set(&[0.1, 0.4], &d).is_empty());
        assert_eq!(satisfied_set(&[0.5, 0.5], &d), BTreeSet::from([0, 1]));
    }

    #[test]
    fn state_matches_recomputation() {
        let chan = ChannelMatrix::from_gains(2, 3, vec![1.0, 0.2, 0.3, 0.4, 2.0, 0.7], None, 1.0).unwrap();
        let assoc = Association::new(2, vec![0, 1, 1]).unwrap();
        let p = PowerVector::new(vec![1.0, 2.0, 0.5]).unwrap();
        let demand = Demand::uniform(3, 0.5).unwrap();
        let state = AllocationState::evaluate(assoc.clone(), p.clone(), &chan, 0.1, &demand, SinrView::Known);
        let manual: f64 = (0..3).map(|n| rate(sinr(&assoc, &p, &chan, 0.1, n))).sum();
        assert_relative_eq!(state.total_throughput, manual, epsilon = 1e-12);
        assert_eq!(state.satisfied, satisfied_set(&state.rates, &demand));
    }

    #[test]
    fn association_matrix_round_trip_and_loads() {
        let assoc = Association::new(3, vec![2, 0, 2, 1]).unwrap();
        let m = assoc.to_matrix();
        for n in 0..4 {
            assert_eq!(m.iter().map(|row| row[n] as usize).sum::<usize>(), 1);
        }
        assert_eq!(Association::from_matrix(&m).unwrap(), assoc);
        assert_eq!(assoc.loads(&[1.0, 2.0, 3.0, 4.0]), vec![2.0, 4.0, 4.0]);
        assert!(assoc.within_budgets(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 4.0]));
        assert!(!assoc.within_budgets(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.9, 4.0]));
        assert!(Association::new(2, vec![0, 2]).is_err());
        assert!(Association::from_matrix(&[vec![1, 1], vec![0, 1]]).is_err());
    }

    #[test]
    fn validation_errors() {
        assert!(PowerVector::new(vec![1.0, -0.1]).is_err());
        assert!(PowerVector::new(vec![f64::NAN]).is_err());
        assert!(Demand::new(vec![0.5, 0.0], 0.01).is_err());
        assert!(Demand::new(vec![0.5], -1.0).is_err());
        let d = Demand::uniform(1, 0.5).unwrap();
        assert_relative_eq!(d.xi(0), 0.505, epsilon = 1e-15);
        assert_relative_eq!(d.gamma_thr(0), 2f64.sqrt() - 1.0, epsilon = 1e-15);
    }

    fn random_instance() -> impl Strategy<Value = (usize, Vec<usize>, Vec<f64>, Vec<f64>)> {
        (1usize..4, 2usize..6).prop_flat_map(|(k, n)| {
            (
                Just(k),
                proptest::collection::vec(0..k, n),
                proptest::collection::vec(0.01f64..10.0, k * n),
                proptest::collection::vec(0.01f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn sinr_monotone_and_homogeneous((k, serving, gains, p) in random_instance(), c in 0.1f64..10.0) {
            let n_dev = serving.len();
            let chan = ChannelMatrix::from_gains(k, n_dev, gains, None, 1.0).unwrap();
            let assoc = Association::new(k, serving).unwrap();
            let noise = 0.3;
            for n in 0..n_dev {
                let base = sinr(&assoc, &p, &chan, noise, n);
                let mut up = p.clone();
                up[n] *= 1.5;
                prop_assert!(sinr(&assoc, &up, &chan, noise, n) > base);
                for m in (0..n_dev).filter(|&m| m != n) {
                    let mut louder = p.clone();
                    louder[m] *= 1.5;
                    prop_assert!(sinr(&assoc, &louder, &chan, noise, n) < base);
                }
                let scaled: Vec<f64> = p.iter().map(|v| v * c).collect();
                let s = sinr(&assoc, &scaled, &chan, noise * c, n);
                prop_assert!((s - base).abs() <= 1e-12 * base.max(1.0));
            }
        }

        #[test]
        fn satisfied_set_is_monotone(rates in proptest::collection::vec(0.0f64..2.0, 1..8), bump in 0.0f64..1.0, idx in 0usize..8) {
            let d = Demand::uniform(rates.len(), 0.5).unwrap();
            let before = satisfied_set(&rates, &d);
            let mut raised = rates.clone();
            let i = idx % rates.len();
            raised[i] += bump;
            prop_assert!(before.is_subset(&satisfied_set(&raised, &d)));
        }
    }
}
