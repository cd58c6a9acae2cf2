//! Random network geometry and channel realizations.
//!
//! Devices are dropped uniformly in a disc of radius `cell_radius_m`; APs are
//! rejection-sampled in the same disc until every pair is at least
//! `min_ap_separation_m` apart. Channel power gains follow Rayleigh fading on
//! top of a log-distance path loss with log-normal shadowing.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Retry budget for AP placement before the geometry is declared unsatisfiable.
pub const AP_PLACEMENT_RETRIES: usize = 10_000;

/// Distances below this are clamped before evaluating the path loss (km).
const MIN_DISTANCE_KM: f64 = 1e-3;

const TOPOLOGY_STREAM: u64 = 0;
const CHANNEL_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_aps: usize,
    pub num_devices: usize,
    pub cell_radius_m: f64,
    pub min_ap_separation_m: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub max_power_dbm: f64,
    pub shadowing_std_db: f64,
    /// Channel estimation error `1 - rho^2`, in `[0, 1)`.
    pub csi_error: f64,
    pub rng_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_aps: 5,
            num_devices: 15,
            cell_radius_m: 300.0,
            min_ap_separation_m: 30.0,
            bandwidth_hz: 180e3,
            noise_psd_dbm_hz: -174.0,
            max_power_dbm: 23.0,
            shadowing_std_db: 7.0,
            csi_error: 0.0,
            rng_seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_aps == 0 {
            return fail("num_aps must be at least 1".into());
        }
        if self.num_devices == 0 {
            return fail("num_devices must be at least 1".into());
        }
        if !(self.cell_radius_m > 0.0) || !self.cell_radius_m.is_finite() {
            return fail(format!("cell_radius_m must be positive, got {}", self.cell_radius_m));
        }
        if !(self.min_ap_separation_m >= 0.0) {
            return fail(format!(
                "min_ap_separation_m must be non-negative, got {}",
                self.min_ap_separation_m
            ));
        }
        if !(0.0..1.0).contains(&self.csi_error) {
            return fail(format!("csi_error must lie in [0, 1), got {}", self.csi_error));
        }
        if !(self.bandwidth_hz > 0.0) || !self.noise_psd_dbm_hz.is_finite() {
            return fail("bandwidth_hz and noise_psd_dbm_hz must give a positive noise power".into());
        }
        if !self.max_power_dbm.is_finite() || !(self.shadowing_std_db >= 0.0) {
            return fail("max_power_dbm must be finite and shadowing_std_db non-negative".into());
        }
        if !(noise_power(self) > 0.0) {
            return fail("derived noise power is not positive".into());
        }
        Ok(())
    }

    /// Per-AP power budget in milliwatts.
    pub fn max_power_mw(&self) -> f64 {
        dbm_to_mw(self.max_power_dbm)
    }

    /// Budget vector with one entry per AP.
    pub fn budgets_mw(&self) -> Vec<f64> {
        vec![self.max_power_mw(); self.num_aps]
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Thermal noise power `B * N0` in milliwatts.
pub fn noise_power(cfg: &NetworkConfig) -> f64 {
    cfg.bandwidth_hz * dbm_to_mw(cfg.noise_psd_dbm_hz)
}

/// Path loss in dB for a distance in kilometres.
pub fn path_loss_db(distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0) || !distance_km.is_finite() {
        return Err(Error::Domain(format!(
            "path loss needs a positive distance, got {distance_km}"
        )));
    }
    Ok(-(120.9 + 37.6 * distance_km.log10()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub ap_positions: Vec<Point>,
    pub device_positions: Vec<Point>,
}

fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform_in_disc<R: Rng>(rng: &mut R, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    Point {
        x: r * phi.cos(),
        y: r * phi.sin(),
    }
}

pub fn generate_topology(cfg: &NetworkConfig) -> Result<Topology> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.rng_seed, TOPOLOGY_STREAM);
    let radius = cfg.cell_radius_m;

    let mut aps: Vec<Point> = Vec::with_capacity(cfg.num_aps);
    let mut retries = 0usize;
    while aps.len() < cfg.num_aps {
        let candidate = uniform_in_disc(&mut rng, radius);
        if aps
            .iter()
            .all(|ap| ap.distance(&candidate) >= cfg.min_ap_separation_m)
        {
            aps.push(candidate);
            continue;
        }
        retries += 1;
        if retries > AP_PLACEMENT_RETRIES {
            return Err(Error::Config(format!(
                "could not place {} APs at least {} m apart inside a {} m disc after {} retries",
                cfg.num_aps, cfg.min_ap_separation_m, radius, AP_PLACEMENT_RETRIES
            )));
        }
    }

    let devices = (0..cfg.num_devices)
        .map(|_| uniform_in_disc(&mut rng, radius))
        .collect();

    Ok(Topology {
        ap_positions: aps,
        device_positions: devices,
    })
}

impl Topology {
    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_devices(&self) -> usize {
        self.device_positions.len()
    }

    /// Distance in metres between AP `k` and device `n`.
    pub fn distance_m(&self, k: usize, n: usize) -> f64 {
        self.ap_positions[k].distance(&self.device_positions[n])
    }

    /// Writes one row per node: `node,id,x,y` with `node` in `{ap, device}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["node", "id", "x", "y"]).map_err(csv_err)?;
        let rows = self
            .ap_positions
            .iter()
            .enumerate()
            .map(|(i, p)| ("ap", i, p))
            .chain(
                self.device_positions
                    .iter()
                    .enumerate()
                    .map(|(i, p)| ("device", i, p)),
            );
        for (kind, id, p) in rows {
            w.write_record([kind.to_string(), id.to_string(), p.x.to_string(), p.y.to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Channel power gains between every AP and device, stored row-major (`K x N`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    num_aps: usize,
    num_devices: usize,
    gains: Vec<f64>,
    large_scale: Vec<f64>,
    rho: f64,
}

impl ChannelMatrix {
    /// Builds a matrix from explicit row-major gains. Large-scale coefficients
    /// default to the gains themselves when not supplied.
    pub fn from_gains(
        num_aps: usize,
        num_devices: usize,
        gains: Vec<f64>,
        large_scale: Option<Vec<f64>>,
        rho: f64,
    ) -> Result<Self> {
        let len = num_aps * num_devices;
        if num_aps == 0 || num_devices == 0 || gains.len() != len {
            return Err(Error::Config(format!(
                "expected {num_aps}x{num_devices} gains, got {}",
                gains.len()
            )));
        }
        let large_scale = large_scale.unwrap_or_else(|| gains.clone());
        if large_scale.len() != len {
            return Err(Error::Config("large-scale matrix has the wrong shape".into()));
        }
        if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::Domain("channel gains must be finite and non-negative".into()));
        }
        if large_scale.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain("large-scale coefficients must be finite and positive".into()));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Domain(format!("rho must lie in (0, 1], got {rho}")));
        }
        Ok(Self {
            num_aps,
            num_devices,
            gains,
            large_scale,
            rho,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn num_devices(&self) -> usize {
        self.num_devices
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// True channel power gain `|h_{k,n}|^2`.
    #[inline]
    pub fn gain(&self, k: usize, n: usize) -> f64 {
        self.gains[k * self.num_devices + n]
    }

    /// Gain as seen through the channel estimate, `rho^2 |h_{k,n}|^2`.
    /// Every optimizer works on these values.
    #[inline]
    pub fn known_gain(&self, k: usize, n: usize) -> f64 {
        self.rho * self.rho * self.gain(k, n)
    }

    #[inline]
    pub fn large_scale(&self, k: usize, n: usize) -> f64 {
        self.large_scale[k * self.num_devices + n]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn large_scale_all(&self) -> &[f64] {
        &self.large_scale
    }

    /// Copy of this matrix with a different estimation quality.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::from_gains(
            self.num_aps,
            self.num_devices,
            self.gains.clone(),
            Some(self.large_scale.clone()),
            rho,
        )
    }

    /// AP with the strongest large-scale coefficient for device `n`; ties go
    /// to the lower index.
    pub fn best_large_scale_ap(&self, n: usize) -> usize {
        let mut best = 0;
        for k in 1..self.num_aps {
            if self.large_scale(k, n) > self.large_scale(best, n) {
                best = k;
            }
        }
        best
    }
}

pub fn realize_channels(topology: &Topology, cfg: &NetworkConfig) -> Result<ChannelMatrix> {
    cfg.validate()?;
    let (k_aps, n_dev) = (topology.num_aps(), topology.num_devices());
    if k_aps != cfg.num_aps || n_dev != cfg.num_devices {
        return Err(Error::Config(format!(
            "topology is {k_aps}x{n_dev} but configuration asks for {}x{}",
            cfg.num_aps, cfg.num_devices
        )));
    }
    let mut rng = seeded_rng(cfg.rng_seed, CHANNEL_STREAM);
    let mut gains = Vec::with_capacity(k_aps * n_dev);
    let mut large_scale = Vec::with_capacity(k_aps * n_dev);
    for k in 0..k_aps {
        for n in 0..n_dev {
            let d_km = (topology.distance_m(k, n) / 1000.0).max(MIN_DISTANCE_KM);
            let zeta = dbm_to_mw(path_loss_db(d_km)?);
            let shadow: f64 = StandardNormal.sample(&mut rng);
            let theta = zeta * 10f64.powf(cfg.shadowing_std_db * shadow / 10.0);
            let fading: f64 = Exp1.sample(&mut rng);
            large_scale.push(theta);
            gains.push(theta * fading);
        }
    }
    let rho = (1.0 - cfg.csi_error).sqrt();
    ChannelMatrix::from_gains(k_aps, n_dev, gains, Some(large_scale), rho)
}

/// Topology and channels for one seeded realization.
pub fn realize(cfg: &NetworkConfig) -> Result<(Topology, ChannelMatrix)> {
    let topology = generate_topology(cfg)?;
    let channels = realize_channels(&topology, cfg)?;
    Ok((topology, channels))
}
