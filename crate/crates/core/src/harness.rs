//! Monte-Carlo campaigns: every selected strategy on the same seeded
//! channel draws, with raw per-realization rows and per-cell aggregates.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aa::{aa_solve, best_gain_association, AaConfig, AssociationRule, PowerRule};
use crate::baselines::{brute_force_max_satisfied, nearest_apa, StrategyId, DEFAULT_TUPLE_CAP};
use crate::bb::{bb_maximize_admitted, default_ordering, BbConfig};
use crate::difpa::KktResiduals;
use crate::error::{Error, Result};
use crate::metrics::{AllocationState, Association, Demand, PowerVector, SinrView, DEFAULT_TAU};
use crate::topology::{noise_power, realize, NetworkConfig};

/// Per-device thresholds or one value for everyone (bits/s/Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DemandSpec {
    Uniform(f64),
    PerDevice(Vec<f64>),
}

impl DemandSpec {
    pub fn build(&self, num_devices: usize, tau: f64) -> Result<Demand> {
        let thresholds = match self {
            Self::Uniform(t) => vec![*t; num_devices],
            Self::PerDevice(v) if v.len() == num_devices => v.clone(),
            Self::PerDevice(v) => {
                return Err(Error::Config(format!(
                    "{} thresholds given for {num_devices} devices",
                    v.len()
                )))
            }
        };
        Demand::new(thresholds, tau)
    }

    fn label(&self) -> f64 {
        match self {
            Self::Uniform(t) => *t,
            Self::PerDevice(v) => v.iter().sum::<f64>() / v.len().max(1) as f64,
        }
    }
}

/// Parameter grid for `sweep`; empty axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub num_aps: Vec<usize>,
    pub num_devices: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub csi_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub demand: DemandSpec,
    pub tau: f64,
    pub strategies: Vec<StrategyId>,
    pub realizations: usize,
    pub master_seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    /// Values of `m` for the `P(satisfied >= m)` columns.
    pub at_least: Vec<usize>,
    /// Measure wall time. Turned off, `wall_ms` is written as 0 and the raw
    /// file is byte-for-byte reproducible.
    pub timing: bool,
    pub sweep: Option<SweepGrid>,
    pub output_dir: PathBuf,
    pub aa: AaConfig,
    pub bb: BbConfig,
    pub brute_force_cap: u128,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            demand: DemandSpec::Uniform(0.5),
            tau: DEFAULT_TAU,
            strategies: vec![
                StrategyId::DifPaCgApa,
                StrategyId::DifPaNearest,
                StrategyId::EqualPaCgApa,
                StrategyId::EqualPaNearest,
                StrategyId::ModifiedBb,
            ],
            realizations: 1000,
            master_seed: 0,
            workers: 0,
            at_least: vec![5],
            timing: true,
            sweep: None,
            output_dir: PathBuf::from("results"),
            aa: AaConfig::default(),
            bb: BbConfig::default(),
            brute_force_cap: DEFAULT_TUPLE_CAP,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        self.demand.build(self.network.num_devices, self.tau)?;
        if let Some(grid) = &self.sweep {
            if grid.thresholds.iter().any(|t| !(*t > 0.0)) {
                return Err(Error::Config("sweep thresholds must be positive".into()));
            }
            if !grid.num_devices.is_empty() && matches!(self.demand, DemandSpec::PerDevice(_)) {
                return Err(Error::Config("per-device thresholds cannot be swept over device counts".into()));
            }
        }
        Ok(())
    }

    /// One config per grid cell, in axis order K, N, thr, csi_error.
    pub fn cells(&self) -> Vec<RunConfig> {
        let grid = self.sweep.clone().unwrap_or_default();
        let or_base = |v: &Vec<usize>, base: usize| if v.is_empty() { vec![base] } else { v.clone() };
        let thresholds: Vec<Option<f64>> = if grid.thresholds.is_empty() {
            vec![None]
        } else {
            grid.thresholds.iter().copied().map(Some).collect()
        };
        let csi = if grid.csi_errors.is_empty() {
            vec![self.network.csi_error]
        } else {
            grid.csi_errors.clone()
        };
        let mut out = Vec::new();
        for &k in &or_base(&grid.num_aps, self.network.num_aps) {
            for &n in &or_base(&grid.num_devices, self.network.num_devices) {
                for &thr in &thresholds {
                    for &e in &csi {
                        let mut cell = self.clone();
                        cell.sweep = None;
                        cell.network.num_aps = k;
                        cell.network.num_devices = n;
                        cell.network.csi_error = e;
                        if let Some(t) = thr {
                            cell.demand = DemandSpec::Uniform(t);
                        }
                        out.push(cell);
                    }
                }
            }
        }
        out
    }
}

/// Counter-based seed for realization `r` (SplitMix64 finalizer over the
/// pair), so any worker can produce any realization's streams.
pub fn realization_seed(master: u64, r: u64) -> u64 {
    let mut z = master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(r.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub strategy: StrategyId,
    #[serde(rename = "K")]
    pub num_aps: usize,
    #[serde(rename = "N")]
    pub num_devices: usize,
    pub thr: f64,
    pub csi_error: f64,
    pub realization: usize,
    pub satisfied: Option<usize>,
    pub throughput: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_ms: f64,
    /// Empty unless the strategy failed on this realization.
    pub error: String,
}

impl RawRow {
    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub strategy: StrategyId,
    pub num_aps: usize,
    pub num_devices: usize,
    pub thr: f64,
    pub csi_error: f64,
    pub realizations: usize,
    pub failures: usize,
    pub mean_satisfied: f64,
    pub mean_throughput: f64,
    /// `(m, P(satisfied >= m))`.
    pub at_least: Vec<(usize, f64)>,
    pub mean_iterations: f64,
    pub median_iterations: f64,
    pub mean_wall_ms: f64,
    pub median_wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunResult {
    pub aggregates: Vec<Aggregate>,
    pub raw: Vec<RawRow>,
    /// Residuals at every settled power-allocation solve of the AA runs.
    pub kkt: Vec<KktResiduals>,
}

impl RunResult {
    pub fn aggregate(&self, strategy: StrategyId) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.strategy == strategy)
    }
}

/// Final state of one strategy plus its iteration count.
pub struct StrategyRun {
    pub state: AllocationState,
    pub iterations: usize,
    pub kkt: Vec<KktResiduals>,
}

/// Runs `strategy` on one realization and scores it on the channel the
/// devices actually see.
#[allow(clippy::too_many_arguments)]
pub fn run_strategy(
    strategy: StrategyId,
    cfg: &RunConfig,
    network: &NetworkConfig,
    topology: &crate::topology::Topology,
    chan: &crate::topology::ChannelMatrix,
    demand: &Demand,
    seed: u64,
) -> Result<StrategyRun> {
    let noise = noise_power(network);
    let budgets = network.budgets_mw();
    let score = |assoc: Association, p: PowerVector| {
        AllocationState::evaluate(assoc, p, chan, noise, demand, SinrView::Realized)
    };
    let alternating = |start: Association, power, association| -> Result<StrategyRun> {
        let aa = AaConfig {
            power,
            association,
            ..cfg.aa.clone()
        };
        let out = aa_solve(&start, chan, noise, demand, &budgets, &aa)?;
        Ok(StrategyRun {
            state: score(out.state.association, out.state.power),
            iterations: out.iterations,
            kkt: out.kkt,
        })
    };
    let admission = |res: crate::bb::BbResult| StrategyRun {
        iterations: res.level_counts.len(),
        state: score(res.association, res.power),
        kkt: Vec::new(),
    };
    match strategy {
        StrategyId::DifPaCgApa => alternating(best_gain_association(chan), PowerRule::DifPa, AssociationRule::CoalitionGame),
        StrategyId::DifPaNearest => alternating(nearest_apa(topology), PowerRule::DifPa, AssociationRule::Fixed),
        StrategyId::EqualPaCgApa => alternating(best_gain_association(chan), PowerRule::Equal, AssociationRule::CoalitionGame),
        StrategyId::EqualPaNearest => alternating(nearest_apa(topology), PowerRule::Equal, AssociationRule::Fixed),
        StrategyId::ModifiedBb => {
            let order = default_ordering(network.num_devices, realization_seed(seed, u64::MAX));
            bb_maximize_admitted(chan, noise, demand, &budgets, &order, &cfg.bb).map(admission)
        }
        StrategyId::BruteForce => {
            brute_force_max_satisfied(chan, noise, demand, &budgets, cfg.brute_force_cap).map(admission)
        }
    }
}

fn run_realization(cfg: &RunConfig, demand: &Demand, r: usize) -> (Vec<RawRow>, Vec<KktResiduals>) {
    let seed = realization_seed(cfg.master_seed, r as u64);
    let network = NetworkConfig {
        rng_seed: seed,
        ..cfg.network.clone()
    };
    let base = |strategy| RawRow {
        strategy,
        num_aps: network.num_aps,
        num_devices: network.num_devices,
        thr: cfg.demand.label(),
        csi_error: network.csi_error,
        realization: r,
        satisfied: None,
        throughput: None,
        iterations: None,
        wall_ms: 0.0,
        error: String::new(),
    };
    let (topology, chan) = match realize(&network) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("realization {r}: {e}");
            let rows = cfg
                .strategies
                .iter()
                .map(|&s| RawRow {
                    error: e.to_string(),
                    ..base(s)
                })
                .collect();
            return (rows, Vec::new());
        }
    };
    let mut kkt = Vec::new();
    let rows = cfg
        .strategies
        .iter()
        .map(|&strategy| {
            let started = Instant::now();
            let outcome = run_strategy(strategy, cfg, &network, &topology, &chan, demand, seed);
            let wall_ms = if cfg.timing {
                started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            match outcome {
                Ok(run) => {
                    kkt.extend(run.kkt);
                    RawRow {
                        satisfied: Some(run.state.num_satisfied()),
                        throughput: Some(run.state.total_throughput),
                        iterations: Some(run.iterations),
                        wall_ms,
                        ..base(strategy)
                    }
                }
                Err(e) => {
                    log::warn!("realization {r}, {strategy}: {e}");
                    RawRow {
                        wall_ms,
                        error: e.to_string(),
                        ..base(strategy)
                    }
                }
            }
        })
        .collect();
    (rows, kkt)
}

pub fn run_campaign(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let demand = cfg.demand.build(cfg.network.num_devices, cfg.tau)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start the worker pool: {e}")))?;
    let per_realization: Vec<(Vec<RawRow>, Vec<KktResiduals>)> = pool.install(|| {
        (0..cfg.realizations)
            .into_par_iter()
            .map(|r| run_realization(cfg, &demand, r))
            .collect()
    });
    let mut raw = Vec::with_capacity(cfg.realizations * cfg.strategies.len());
    let mut kkt = Vec::new();
    for (rows, residuals) in per_realization {
        raw.extend(rows);
        kkt.extend(residuals);
    }
    Ok(RunResult {
        aggregates: aggregate(&raw, &cfg.at_least),
        raw,
        kkt,
    })
}

/// Every grid cell in turn, rows concatenated.
pub fn run_sweep(cfg: &RunConfig) -> Result<RunResult> {
    let mut out = RunResult::default();
    for cell in cfg.cells() {
        log::info!(
            "cell K={} N={} thr={} csi_error={}",
            cell.network.num_aps,
            cell.network.num_devices,
            cell.demand.label(),
            cell.network.csi_error
        );
        let res = run_campaign(&cell)?;
        out.aggregates.extend(res.aggregates);
        out.raw.extend(res.raw);
        out.kkt.extend(res.kkt);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub thr: f64,
    pub strategy: StrategyId,
    pub mean_satisfied: f64,
    pub mean_throughput: f64,
}

/// Reruns the campaign at each threshold.
pub fn sweep_thresholds(cfg: &RunConfig, thresholds: &[f64]) -> Result<(Vec<ThresholdRow>, RunResult)> {
    let mut table = Vec::new();
    let mut all = RunResult::default();
    for &thr in thresholds {
        let cell = RunConfig {
            demand: DemandSpec::Uniform(thr),
            sweep: None,
            ..cfg.clone()
        };
        let res = run_campaign(&cell)?;
        table.extend(res.aggregates.iter().map(|a| ThresholdRow {
            thr,
            strategy: a.strategy,
            mean_satisfied: a.mean_satisfied,
            mean_throughput: a.mean_throughput,
        }));
        all.aggregates.extend(res.aggregates);
        all.raw.extend(res.raw);
        all.kkt.extend(res.kkt);
    }
    Ok((table, all))
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Per-cell, per-strategy aggregates over the successful rows, in order of
/// first appearance.
pub fn aggregate(raw: &[RawRow], at_least: &[usize]) -> Vec<Aggregate> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&RawRow>> = BTreeMap::new();
    let mut index: Vec<(StrategyId, usize, usize, u64, u64)> = Vec::new();
    for row in raw {
        let key = (row.strategy, row.num_aps, row.num_devices, row.thr.to_bits(), row.csi_error.to_bits());
        let slot = match index.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                index.push(key);
                order.push(index.len() - 1);
                index.len() - 1
            }
        };
        groups.entry(slot).or_default().push(row);
    }
    order
        .into_iter()
        .map(|slot| {
            let rows = &groups[&slot];
            let first = rows[0];
            let ok: Vec<&RawRow> = rows.iter().copied().filter(|r| !r.failed()).collect();
            let count = ok.len() as f64;
            let mean = |f: &dyn Fn(&RawRow) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / count
                }
            };
            let satisfied = |r: &RawRow| r.satisfied.unwrap_or(0) as f64;
            let mut iterations: Vec<f64> = ok.iter().map(|r| r.iterations.unwrap_or(0) as f64).collect();
            let mut walls: Vec<f64> = rows.iter().map(|r| r.wall_ms).collect();
            Aggregate {
                strategy: first.strategy,
                num_aps: first.num_aps,
                num_devices: first.num_devices,
                thr: first.thr,
                csi_error: first.csi_error,
                realizations: rows.len(),
                failures: rows.len() - ok.len(),
                mean_satisfied: mean(&satisfied),
                mean_throughput: mean(&|r| r.throughput.unwrap_or(0.0)),
                at_least: at_least
                    .iter()
                    .map(|&m| (m, mean(&|r| f64::from(u8::from(r.satisfied.unwrap_or(0) >= m)))))
                    .collect(),
                mean_iterations: mean(&|r| r.iterations.unwrap_or(0) as f64),
                median_iterations: median(&mut iterations),
                mean_wall_ms: walls.iter().sum::<f64>() / walls.len() as f64,
                median_wall_ms: median(&mut walls),
            }
        })
        .collect()
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_raw_csv(rows: &[RawRow], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_error(path))?;
    w.write_record(RAW_HEADER).map_err(csv_error(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_error(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

const RAW_HEADER: [&str; 11] = [
    "strategy",
    "K",
    "N",
    "thr",
    "csi_error",
    "realization",
    "satisfied",
    "throughput",
    "iterations",
    "wall_ms",
    "error",
];

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error(path))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_error(path))
}

const AGGREGATE_LEADING: [&str; 7] = ["strategy", "K", "N", "thr", "csi_error", "realizations", "failures"];
const AGGREGATE_TRAILING: [&str; 6] = [
    "mean_satisfied",
    "mean_throughput",
    "mean_iterations",
    "median_iterations",
    "mean_wall_ms",
    "median_wall_ms",
];

/// One row per strategy and cell; the `p_ge_<m>` columns follow the means.
pub fn write_aggregate_csv(aggregates: &[Aggregate], at_least: &[usize], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    let mut header: Vec<String> = AGGREGATE_LEADING.iter().map(|s| s.to_string()).collect();
    header.extend(AGGREGATE_TRAILING.iter().map(|s| s.to_string()));
    header.extend(at_least.iter().map(|m| format!("p_ge_{m}")));
    w.write_record(&header).map_err(csv_error(path))?;
    for a in aggregates {
        let mut rec = vec![
            a.strategy.to_string(),
            a.num_aps.to_string(),
            a.num_devices.to_string(),
            a.thr.to_string(),
            a.csi_error.to_string(),
            a.realizations.to_string(),
            a.failures.to_string(),
            a.mean_satisfied.to_string(),
            a.mean_throughput.to_string(),
            a.mean_iterations.to_string(),
            a.median_iterations.to_string(),
            a.mean_wall_ms.to_string(),
            a.median_wall_ms.to_string(),
        ];
        for &m in at_least {
            let p = a.at_least.iter().find(|(mm, _)| *mm == m).map_or(f64::NAN, |(_, p)| *p);
            rec.push(p.to_string());
        }
        w.write_record(&rec).map_err(csv_error(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<Aggregate>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error(path))?;
    let header = r.headers().map_err(csv_error(path))?.clone();
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let fixed = AGGREGATE_LEADING.len() + AGGREGATE_TRAILING.len();
    let ms: Vec<usize> = header
        .iter()
        .skip(fixed)
        .map(|h| {
            h.strip_prefix("p_ge_")
                .and_then(|m| m.parse().ok())
                .ok_or_else(|| parse_err(format!("unexpected column {h:?}")))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error(path))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| parse_err(format!("row has no column {i}")));
        let num = |i: usize| -> Result<f64> {
            field(i)?.parse().map_err(|e| parse_err(format!("column {i}: {e}")))
        };
        let int = |i: usize| -> Result<usize> {
            field(i)?.parse().map_err(|e| parse_err(format!("column {i}: {e}")))
        };
        out.push(Aggregate {
            strategy: field(0)?.parse()?,
            num_aps: int(1)?,
            num_devices: int(2)?,
            thr: num(3)?,
            csi_error: num(4)?,
            realizations: int(5)?,
            failures: int(6)?,
            mean_satisfied: num(7)?,
            mean_throughput: num(8)?,
            mean_iterations: num(9)?,
            median_iterations: num(10)?,
            mean_wall_ms: num(11)?,
            median_wall_ms: num(12)?,
            at_least: ms
                .iter()
                .enumerate()
                .map(|(j, &m)| Ok((m, num(fixed + j)?)))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

pub fn write_threshold_csv(rows: &[ThresholdRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_error(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `raw.csv` and `aggregate.csv` under `dir`.
pub fn emit_csv(result: &RunResult, at_least: &[usize], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_raw_csv(&result.raw, &dir.join("raw.csv"))?;
    write_aggregate_csv(&result.aggregates, at_least, &dir.join("aggregate.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_realization_and_master() {
        let a: Vec<u64> = (0..100).map(|r| realization_seed(7, r)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(realization_seed(0, 0), realization_seed(1, 0));
        assert_eq!(realization_seed(3, 9), realization_seed(3, 9));
    }

    #[test]
    fn grid_expands_in_axis_order() {
        let cfg = RunConfig {
            sweep: Some(SweepGrid {
                num_aps: vec![3, 5],
                thresholds: vec![0.3, 1.0],
                ..Default::default()
            }),
            ..Default::default()
        };
        let cells: Vec<(usize, f64)> = cfg.cells().iter().map(|c| (c.network.num_aps, c.demand.label())).collect();
        assert_eq!(cells, vec![(3, 0.3), (3, 1.0), (5, 0.3), (5, 1.0)]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig { realizations: 0, ..Default::default() }.validate().is_err());
        assert!(RunConfig { strategies: vec![], ..Default::default() }.validate().is_err());
        assert!(RunConfig { demand: DemandSpec::PerDevice(vec![0.5; 3]), ..Default::default() }.validate().is_err());
        assert!(RunConfig { demand: DemandSpec::Uniform(-1.0), ..Default::default() }.validate().is_err());
        assert!(RunConfig::from_toml_str("realisations = 3").is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
