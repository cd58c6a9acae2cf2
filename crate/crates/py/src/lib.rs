//! Python bindings for `iotalloc`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use iotalloc::baselines::StrategyId;
use iotalloc::harness::{self, DemandSpec, RunConfig};
use iotalloc::topology::{self, ChannelMatrix, NetworkConfig, Topology};

fn py_err(e: iotalloc::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_strategy(name: &str) -> PyResult<StrategyId> {
    name.parse().map_err(py_err)
}

/// Network parameters in the units used by the library (metres, Hz, dBm).
#[pyclass(name = "NetworkConfig", module = "pyiotalloc")]
struct PyNetworkConfig {
    inner: NetworkConfig,
}

#[pymethods]
impl PyNetworkConfig {
    #[new]
    #[pyo3(signature = (num_aps=5, num_devices=15, csi_error=0.0, seed=0, cell_radius_m=None, max_power_dbm=None, shadowing_std_db=None))]
    fn new(
        num_aps: usize,
        num_devices: usize,
        csi_error: f64,
        seed: u64,
        cell_radius_m: Option<f64>,
        max_power_dbm: Option<f64>,
        shadowing_std_db: Option<f64>,
    ) -> PyResult<Self> {
        let base = NetworkConfig::default();
        let inner = NetworkConfig {
            num_aps,
            num_devices,
            csi_error,
            rng_seed: seed,
            cell_radius_m: cell_radius_m.unwrap_or(base.cell_radius_m),
            max_power_dbm: max_power_dbm.unwrap_or(base.max_power_dbm),
            shadowing_std_db: shadowing_std_db.unwrap_or(base.shadowing_std_db),
            ..base
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_aps(&self) -> usize {
        self.inner.num_aps
    }

    #[getter]
    fn num_devices(&self) -> usize {
        self.inner.num_devices
    }

    #[getter]
    fn csi_error(&self) -> f64 {
        self.inner.csi_error
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.rng_seed
    }

    /// Noise power per device in mW.
    #[getter]
    fn noise_mw(&self) -> f64 {
        topology::noise_power(&self.inner)
    }

    #[getter]
    fn budgets_mw(&self) -> Vec<f64> {
        self.inner.budgets_mw()
    }

    /// Draws positions and channel gains for this seed.
    fn realize(&self) -> PyResult<PyRealization> {
        let (topology, chan) = topology::realize(&self.inner).map_err(py_err)?;
        Ok(PyRealization {
            network: self.inner.clone(),
            topology,
            chan,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "NetworkConfig(num_aps={}, num_devices={}, csi_error={}, seed={})",
            self.inner.num_aps, self.inner.num_devices, self.inner.csi_error, self.inner.rng_seed
        )
    }
}

/// One drawn topology and its channel.
#[pyclass(name = "Realization", module = "pyiotalloc")]
struct PyRealization {
    network: NetworkConfig,
    topology: Topology,
    chan: ChannelMatrix,
}

#[pymethods]
impl PyRealization {
    /// Realized gains as rows per AP.
    fn gains(&self) -> Vec<Vec<f64>> {
        self.chan.gains().chunks(self.chan.num_devices()).map(<[f64]>::to_vec).collect()
    }

    /// Gains the transmitter knows (equal to `gains()` with perfect CSI).
    fn known_gains(&self) -> Vec<Vec<f64>> {
        (0..self.chan.num_aps())
            .map(|k| (0..self.chan.num_devices()).map(|n| self.chan.known_gain(k, n)).collect())
            .collect()
    }

    fn ap_positions(&self) -> Vec<(f64, f64)> {
        self.topology.ap_positions.iter().map(|p| (p.x, p.y)).collect()
    }

    fn device_positions(&self) -> Vec<(f64, f64)> {
        self.topology.device_positions.iter().map(|p| (p.x, p.y)).collect()
    }

    /// Runs one strategy with a uniform rate threshold (bits/s/Hz).
    #[pyo3(signature = (strategy, thr=0.5))]
    fn solve(&self, strategy: &str, thr: f64) -> PyResult<PyAllocation> {
        let id = parse_strategy(strategy)?;
        let cfg = RunConfig {
            network: self.network.clone(),
            demand: DemandSpec::Uniform(thr),
            ..Default::default()
        };
        let demand = cfg.demand.build(self.network.num_devices, cfg.tau).map_err(py_err)?;
        let run = harness::run_strategy(id, &cfg, &self.network, &self.topology, &self.chan, &demand, self.network.rng_seed)
            .map_err(py_err)?;
        let s = run.state;
        Ok(PyAllocation {
            strategy: id.name().to_string(),
            association: s.association.serving().to_vec(),
            power: s.power.as_slice().to_vec(),
            rates: s.rates.clone(),
            satisfied: s.satisfied.iter().copied().collect(),
            throughput: s.total_throughput,
            iterations: run.iterations,
        })
    }
}

/// Result of one strategy on one realization, scored on the realized channel.
#[pyclass(name = "Allocation", module = "pyiotalloc", get_all)]
struct PyAllocation {
    strategy: String,
    /// Serving AP per device.
    association: Vec<usize>,
    /// Transmit power per device in mW.
    power: Vec<f64>,
    rates: Vec<f64>,
    satisfied: Vec<usize>,
    throughput: f64,
    iterations: usize,
}

#[pymethods]
impl PyAllocation {
    fn __repr__(&self) -> String {
        format!(
            "Allocation(strategy={}, satisfied={}, throughput={:.4})",
            self.strategy,
            self.satisfied.len(),
            self.throughput
        )
    }
}

/// Per-strategy means over a campaign.
#[pyclass(name = "Summary", module = "pyiotalloc", get_all)]
struct PySummary {
    strategy: String,
    num_aps: usize,
    num_devices: usize,
    thr: f64,
    csi_error: f64,
    realizations: usize,
    failures: usize,
    mean_satisfied: f64,
    mean_throughput: f64,
    at_least: Vec<(usize, f64)>,
    median_iterations: f64,
    mean_wall_ms: f64,
}

#[pymethods]
impl PySummary {
    fn __repr__(&self) -> String {
        format!(
            "Summary(strategy={}, satisfied={:.3}, throughput={:.3})",
            self.strategy, self.mean_satisfied, self.mean_throughput
        )
    }
}

/// Runs a Monte-Carlo campaign. `config` is TOML text in the CLI's schema;
/// keyword arguments override it.
#[pyfunction]
#[pyo3(signature = (config=None, realizations=None, seed=None, strategies=None, workers=None))]
fn run_campaign(
    py: Python<'_>,
    config: Option<&str>,
    realizations: Option<usize>,
    seed: Option<u64>,
    strategies: Option<Vec<String>>,
    workers: Option<usize>,
) -> PyResult<Vec<PySummary>> {
    let mut cfg = match config {
        Some(text) => RunConfig::from_toml_str(text).map_err(py_err)?,
        None => RunConfig::default(),
    };
    if let Some(r) = realizations {
        cfg.realizations = r;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(names) = strategies {
        cfg.strategies = names.iter().map(|n| parse_strategy(n)).collect::<PyResult<_>>()?;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    cfg.validate().map_err(py_err)?;
    let result = py.detach(|| harness::run_campaign(&cfg)).map_err(py_err)?;
    Ok(result
        .aggregates
        .into_iter()
        .map(|a| PySummary {
            strategy: a.strategy.name().to_string(),
            num_aps: a.num_aps,
            num_devices: a.num_devices,
            thr: a.thr,
            csi_error: a.csi_error,
            realizations: a.realizations,
            failures: a.failures,
            mean_satisfied: a.mean_satisfied,
            mean_throughput: a.mean_throughput,
            at_least: a.at_least,
            median_iterations: a.median_iterations,
            mean_wall_ms: a.mean_wall_ms,
        })
        .collect())
}

/// Slope and intercept of the tight log lower bound at SINR `gamma`.
#[pyfunction]
fn log_factors(gamma: f64) -> PyResult<(f64, f64)> {
    iotalloc::logapprox::log_factors(gamma).map_err(py_err)
}

/// Spectral efficiency `log2(1 + gamma)`.
#[pyfunction]
fn rate(gamma: f64) -> f64 {
    iotalloc::metrics::rate(gamma)
}

#[pyfunction]
fn strategies() -> Vec<&'static str> {
    StrategyId::ALL.iter().map(|s| s.name()).collect()
}

#[pymodule]
fn pyiotalloc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetworkConfig>()?;
    m.add_class::<PyRealization>()?;
    m.add_class::<PyAllocation>()?;
    m.add_class::<PySummary>()?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(log_factors, m)?)?;
    m.add_function(wrap_pyfunction!(rate, m)?)?;
    m.add_function(wrap_pyfunction!(strategies, m)?)?;
    Ok(())
}
