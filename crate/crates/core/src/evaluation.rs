//! Monte Carlo sweeps, interference post-analysis and result tables.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::mbs_distance;
use crate::audit::audit;
use crate::channel::{in_los_cone, path_loss_linear, ChannelParams, PathLossKind};
use crate::error::{Error, Result};
use crate::orchestrator::{baseline, link_demand, optimize, Solution, SolverConfig};
use crate::scenario::{PointProcessConfig, Scenario, ScenarioSpec};

/// Version of the CSV columns and the JSON summary layout.
pub const TABLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserAntenna {
    Omni,
    /// Ideal beam steering: no cross-tier leakage.
    Directional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterfererSet {
    /// Nearest user of the other tier only.
    #[default]
    Nearest,
    /// Every user of the other tier.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InterferenceMode {
    /// Every other ABS leaks into ABS-served users at linear gain `g_side`.
    AbsSidelobe { g_side: f64 },
    /// Uplink users of the other tier leak into downlink users.
    UserToUser {
        antenna: UserAntenna,
        #[serde(default)]
        interferers: InterfererSet,
    },
}

/// Achieved downlink rates (bit/s) under `mode`, keeping the solution's
/// powers and bandwidths fixed.
pub fn interference_rates(
    solution: &Solution,
    scenario: &Scenario,
    params: &ChannelParams,
    mode: InterferenceMode,
) -> Result<Vec<f64>> {
    let n = scenario.user_count();
    if solution.serving.len() != n || solution.beta.len() != n || solution.link_power.len() != n {
        return Err(Error::invalid("solution does not match the scenario"));
    }
    let positions = &solution.abs_positions;
    let noise = params.effective_n0() * params.b_access;
    let mut abs_power = vec![0.0; positions.len()];
    for (&s, &p) in solution.serving.iter().zip(&solution.link_power) {
        if s > 0 {
            abs_power[s - 1] += p;
        }
    }
    let geom = params.geometry();

    (0..n)
        .map(|i| {
            let s = solution.serving[i];
            let beta = solution.beta[i];
            let link = link_demand(scenario, params, positions, i, s)?;
            let signal = solution.link_power[i] / link.path_factor;
            let u = &scenario.users[i];
            let interference = match mode {
                InterferenceMode::AbsSidelobe { g_side } => {
                    if s == 0 || g_side == 0.0 {
                        0.0
                    } else {
                        let mut total = 0.0;
                        for (k, p) in positions.iter().enumerate() {
                            if k + 1 == s || abs_power[k] == 0.0 {
                                continue;
                            }
                            let kind = if in_los_cone(p, &u.position, &geom) {
                                PathLossKind::AbsLos
                            } else {
                                PathLossKind::AbsNlos
                            };
                            let h = path_loss_linear(kind, p.dist_ground(&u.position), params)?;
                            // transmit PSD averaged over the band, fully overlapping
                            total += abs_power[k] * beta * g_side / h;
                        }
                        total
                    }
                }
                InterferenceMode::UserToUser { antenna: UserAntenna::Directional, .. } => 0.0,
                InterferenceMode::UserToUser { antenna: UserAntenna::Omni, interferers } => {
                    let tier = s > 0;
                    let others = (0..n).filter(|&k| k != i && (solution.serving[k] > 0) != tier);
                    let leak = |k: usize| -> Result<f64> {
                        let d = mbs_distance(&scenario.users[k].position, &u.position);
                        let h = path_loss_linear(PathLossKind::UserUser, d, params)?;
                        let overlap = (beta / solution.beta[k]).min(1.0);
                        Ok(params.ue_tx_power * overlap / h)
                    };
                    match interferers {
                        InterfererSet::All => {
                            let mut total = 0.0;
                            for k in others {
                                total += leak(k)?;
                            }
                            total
                        }
                        InterfererSet::Nearest => {
                            let nearest = others.min_by(|&a, &b| {
                                let da = scenario.users[a].position.dist_sq(&u.position);
                                let db = scenario.users[b].position.dist_sq(&u.position);
                                da.total_cmp(&db).then(a.cmp(&b))
                            });
                            match nearest {
                                Some(k) => leak(k)?,
                                None => 0.0,
                            }
                        }
                    }
                }
            };
            let sinr = signal / (noise * beta + interference);
            Ok(params.b_access * beta * (1.0 + sinr).log2())
        })
        .collect()
}

/// Right-continuous empirical CDF as `(value, P[X <= value])` at each
/// distinct value.
pub fn empirical_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::invalid("empirical CDF needs at least one value"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("empirical CDF input contains NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, v) in sorted.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    Ok(out)
}

/// Quantile function of an empirical sample: the smallest value whose CDF
/// reaches `q`.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    let cdf = empirical_cdf(values)?;
    Ok(cdf
        .iter()
        .find(|(_, f)| *f >= q - 1e-12)
        .map(|(v, _)| *v)
        .unwrap_or(cdf[cdf.len() - 1].0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringCell {
    pub point_process: PointProcessConfig,
    #[serde(default)]
    pub cov_target: Option<f64>,
}

/// Axes of the sweep. An empty axis keeps the base value; the cells are the
/// Cartesian product of the non-empty axes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub n_users: Vec<usize>,
    pub clustering: Vec<ClusteringCell>,
    /// Cache size as a fraction of the catalog.
    pub cache_fractions: Vec<f64>,
    pub delay_sensitive_fractions: Vec<f64>,
    pub backhaul_bandwidths_hz: Vec<f64>,
    pub access_bandwidths_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub base_seed: u64,
    pub run_baseline: bool,
    pub sweep: Sweep,
    /// When set, achieved-rate CDFs of the optimised solutions are recorded.
    pub interference: Option<InterferenceMode>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            base_seed: 1,
            run_baseline: true,
            sweep: Sweep::default(),
            interference: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::config("experiment.runs", "must be at least 1"));
        }
        let s = &self.sweep;
        if s.cache_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::config("experiment.sweep.cache_fractions", "entries must lie in [0, 1]"));
        }
        if s.delay_sensitive_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::config(
                "experiment.sweep.delay_sensitive_fractions",
                "entries must lie in [0, 1]",
            ));
        }
        if s.backhaul_bandwidths_hz.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config("experiment.sweep.backhaul_bandwidths_hz", "entries must be positive"));
        }
        if s.access_bandwidths_hz.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config("experiment.sweep.access_bandwidths_hz", "entries must be positive"));
        }
        for c in &s.clustering {
            c.point_process.validate()?;
        }
        if let Some(InterferenceMode::AbsSidelobe { g_side }) = self.interference {
            if !(g_side >= 0.0 && g_side.is_finite()) {
                return Err(Error::config("experiment.interference.g_side", "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Parameters of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub n_users: usize,
    pub point_process: PointProcessConfig,
    pub cov_target: Option<f64>,
    pub cache_capacity: usize,
    pub delay_sensitive_fraction: f64,
    pub w_backhaul: f64,
    pub b_access: f64,
}

impl Cell {
    pub fn spec(&self, base: &ScenarioSpec) -> ScenarioSpec {
        ScenarioSpec {
            n_users: self.n_users,
            point_process: self.point_process,
            cov_target: self.cov_target,
            cache_capacity: self.cache_capacity,
            delay_sensitive_fraction: self.delay_sensitive_fraction,
            ..base.clone()
        }
    }

    pub fn channel(&self, base: &ChannelParams) -> ChannelParams {
        ChannelParams { w_backhaul: self.w_backhaul, b_access: self.b_access, ..base.clone() }
    }
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Cells in row-major order of (users, clustering, cache, delay, backhaul,
/// access bandwidth).
pub fn expand_cells(sweep: &Sweep, spec: &ScenarioSpec, params: &ChannelParams) -> Vec<Cell> {
    let base_cluster = ClusteringCell { point_process: spec.point_process, cov_target: spec.cov_target };
    let caches: Vec<usize> = if sweep.cache_fractions.is_empty() {
        vec![spec.cache_capacity]
    } else {
        sweep
            .cache_fractions
            .iter()
            .map(|f| (f * spec.catalog_size as f64).round() as usize)
            .collect()
    };
    let mut cells = Vec::new();
    for n in axis(&sweep.n_users, spec.n_users) {
        for cl in axis(&sweep.clustering, base_cluster.clone()) {
            for &cache in &caches {
                for ds in axis(&sweep.delay_sensitive_fractions, spec.delay_sensitive_fraction) {
                    for w in axis(&sweep.backhaul_bandwidths_hz, params.w_backhaul) {
                        for b in axis(&sweep.access_bandwidths_hz, params.b_access) {
                            cells.push(Cell {
                                index: cells.len(),
                                n_users: n,
                                point_process: cl.point_process,
                                cov_target: cl.cov_target,
                                cache_capacity: cache,
                                delay_sensitive_fraction: ds,
                                w_backhaul: w,
                                b_access: b,
                            });
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Seed of run `run`; shared by every cell so sweeps are paired.
pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    base_seed.wrapping_add(run as u64)
}

/// Outcome of one method on one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub total_power: f64,
    pub abs_power: f64,
    pub abs_users: usize,
    /// Mean uncached backhaul traffic per ABS (bit/s).
    pub backhaul_usage: f64,
    pub iterations: usize,
    pub converged: bool,
    pub audit_violations: usize,
}

impl MethodMetrics {
    pub fn of(solution: &Solution, scenario: &Scenario, params: &ChannelParams) -> Self {
        Self {
            total_power: solution.total_power,
            abs_power: solution.abs_total_power,
            abs_users: solution.abs_users(),
            backhaul_usage: solution.mean_backhaul_usage(),
            iterations: solution.iterations,
            converged: solution.converged,
            audit_violations: audit(solution, scenario, params).violations.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: usize,
    pub run: usize,
    pub seed: u64,
    pub cov: Option<f64>,
    pub optimized: Option<MethodMetrics>,
    pub baseline: Option<MethodMetrics>,
    pub error: Option<String>,
    #[serde(skip)]
    pub achieved_rates: Vec<f64>,
    #[serde(skip)]
    pub target_rates: Vec<f64>,
}

/// One row of the per-run CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub cell: usize,
    pub run: usize,
    pub seed: u64,
    pub n_users: usize,
    pub cov_target: Option<f64>,
    pub cov: Option<f64>,
    pub cache_capacity: usize,
    pub delay_sensitive_fraction: f64,
    pub w_backhaul_hz: f64,
    pub b_access_hz: f64,
    pub opt_total_power_w: Option<f64>,
    pub opt_abs_power_w: Option<f64>,
    pub opt_abs_users: Option<usize>,
    pub opt_backhaul_usage_bps: Option<f64>,
    pub opt_iterations: Option<usize>,
    pub opt_converged: Option<bool>,
    pub opt_audit_violations: Option<usize>,
    pub base_total_power_w: Option<f64>,
    pub base_abs_power_w: Option<f64>,
    pub base_abs_users: Option<usize>,
    pub base_backhaul_usage_bps: Option<f64>,
    pub base_audit_violations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, count: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, std: var.sqrt(), count: n }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub total_power: Stat,
    pub abs_power: Stat,
    pub abs_users: Stat,
    pub backhaul_usage: Stat,
    pub audit_failures: usize,
}

impl MethodSummary {
    fn of(metrics: &[MethodMetrics]) -> Self {
        let pick = |f: fn(&MethodMetrics) -> f64| Stat::of(&metrics.iter().map(f).collect::<Vec<_>>());
        Self {
            total_power: pick(|m| m.total_power),
            abs_power: pick(|m| m.abs_power),
            abs_users: pick(|m| m.abs_users as f64),
            backhaul_usage: pick(|m| m.backhaul_usage),
            audit_failures: metrics.iter().filter(|m| m.audit_violations > 0).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub runs: usize,
    pub failed_runs: usize,
    pub optimized: MethodSummary,
    pub baseline: Option<MethodSummary>,
    /// `iteration_histogram[k]`: optimised runs that stopped after `k` outer
    /// iterations.
    pub iteration_histogram: Vec<usize>,
    pub converged_runs: usize,
    /// Pooled achieved-rate CDF, when an interference mode was configured.
    pub achieved_rate_cdf: Option<Vec<(f64, f64)>>,
    pub target_rate_cdf: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub schema_version: u32,
    pub runs_per_cell: usize,
    pub base_seed: u64,
    pub cells: Vec<CellSummary>,
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

impl MetricsTable {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.records
            .iter()
            .map(|r| {
                let c = &self.cells[r.cell].cell;
                let o = r.optimized.as_ref();
                let b = r.baseline.as_ref();
                CsvRow {
                    cell: r.cell,
                    run: r.run,
                    seed: r.seed,
                    n_users: c.n_users,
                    cov_target: c.cov_target,
                    cov: r.cov,
                    cache_capacity: c.cache_capacity,
                    delay_sensitive_fraction: c.delay_sensitive_fraction,
                    w_backhaul_hz: c.w_backhaul,
                    b_access_hz: c.b_access,
                    opt_total_power_w: o.map(|m| m.total_power),
                    opt_abs_power_w: o.map(|m| m.abs_power),
                    opt_abs_users: o.map(|m| m.abs_users),
                    opt_backhaul_usage_bps: o.map(|m| m.backhaul_usage),
                    opt_iterations: o.map(|m| m.iterations),
                    opt_converged: o.map(|m| m.converged),
                    opt_audit_violations: o.map(|m| m.audit_violations),
                    base_total_power_w: b.map(|m| m.total_power),
                    base_abs_power_w: b.map(|m| m.abs_power),
                    base_abs_users: b.map(|m| m.abs_users),
                    base_backhaul_usage_bps: b.map(|m| m.backhaul_usage),
                    base_audit_violations: b.map(|m| m.audit_violations),
                    error: r.error.clone(),
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.csv_rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

fn run_one(
    cell: &Cell,
    run: usize,
    spec: &ScenarioSpec,
    params: &ChannelParams,
    solver: &SolverConfig,
    config: &ExperimentConfig,
) -> RunRecord {
    let seed = run_seed(config.base_seed, run);
    let mut record = RunRecord {
        cell: cell.index,
        run,
        seed,
        cov: None,
        optimized: None,
        baseline: None,
        error: None,
        achieved_rates: Vec::new(),
        target_rates: Vec::new(),
    };
    let params = cell.channel(params);
    let outcome = (|| -> Result<()> {
        let scenario = cell.spec(spec).generate(&mut ChaCha8Rng::seed_from_u64(seed))?.with_seed(seed);
        if cell.cov_target.is_some() {
            record.cov = crate::scenario::compute_cov(&scenario.positions(), scenario.region_side).ok();
        }
        let solver = SolverConfig { seed, ..solver.clone() };
        let sol = optimize(&scenario, &params, &solver)?;
        record.optimized = Some(MethodMetrics::of(&sol, &scenario, &params));
        if let Some(mode) = config.interference {
            record.achieved_rates = interference_rates(&sol, &scenario, &params, mode)?;
            record.target_rates = scenario.users.iter().map(|u| u.rate_demand).collect();
        }
        if config.run_baseline && scenario.abs_count > 0 {
            let base = baseline(&scenario, &params, &solver)?;
            record.baseline = Some(MethodMetrics::of(&base, &scenario, &params));
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("cell {} run {run}: {e}", cell.index);
        record.error = Some(e.to_string());
    }
    record
}

/// Runs every cell `config.runs` times on `workers` threads (all cores
/// when `None`).
pub fn run_monte_carlo(
    spec: &ScenarioSpec,
    params: &ChannelParams,
    solver: &SolverConfig,
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<MetricsTable> {
    spec.validate()?;
    params.validate()?;
    solver.validate()?;
    config.validate()?;
    let cells = expand_cells(&config.sweep, spec, params);
    for c in &cells {
        c.channel(params).validate()?;
        c.spec(spec).validate()?;
    }
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..config.runs).map(move |r| (c, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
    let mut records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| run_one(&cells[c], r, spec, params, solver, config))
            .collect()
    });
    records.sort_by_key(|r| (r.cell, r.run));

    let summaries = cells
        .iter()
        .map(|cell| summarize(cell, &records, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsTable {
        schema_version: TABLE_SCHEMA_VERSION,
        runs_per_cell: config.runs,
        base_seed: config.base_seed,
        cells: summaries,
        records,
    })
}

fn summarize(cell: &Cell, records: &[RunRecord], config: &ExperimentConfig) -> Result<CellSummary> {
    let mine: Vec<&RunRecord> = records.iter().filter(|r| r.cell == cell.index).collect();
    let opt: Vec<MethodMetrics> = mine.iter().filter_map(|r| r.optimized).collect();
    let base: Vec<MethodMetrics> = mine.iter().filter_map(|r| r.baseline).collect();
    let max_iter = opt.iter().map(|m| m.iterations).max().unwrap_or(0);
    let mut hist = vec![0; max_iter + 1];
    for m in &opt {
        hist[m.iterations] += 1;
    }
    let (achieved, target) = if config.interference.is_some() {
        let a: Vec<f64> = mine.iter().flat_map(|r| r.achieved_rates.iter().copied()).collect();
        let t: Vec<f64> = mine.iter().flat_map(|r| r.target_rates.iter().copied()).collect();
        if a.is_empty() {
            (None, None)
        } else {
            (Some(empirical_cdf(&a)?), Some(empirical_cdf(&t)?))
        }
    } else {
        (None, None)
    };
    Ok(CellSummary {
        cell: cell.clone(),
        runs: mine.len(),
        failed_runs: mine.iter().filter(|r| r.error.is_some()).count(),
        optimized: MethodSummary::of(&opt),
        baseline: (config.run_baseline && !base.is_empty()).then(|| MethodSummary::of(&base)),
        iteration_histogram: hist,
        converged_runs: opt.iter().filter(|m| m.converged).count(),
        achieved_rate_cdf: achieved,
        target_rate_cdf: target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> (ScenarioSpec, ChannelParams, SolverConfig) {
        (ScenarioSpec { n_users: 20, ..Default::default() }, ChannelParams::default(), SolverConfig::default())
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(empirical_cdf(&[4.0]).unwrap(), vec![(4.0, 1.0)]);
        let c = empirical_cdf(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.iter().map(|p| p.1).collect::<Vec<_>>(), vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(empirical_cdf(&[1.0, 1.0, 2.0]).unwrap(), vec![(1.0, 2.0 / 3.0), (2.0, 1.0)]);
        assert!(empirical_cdf(&[]).is_err());
    }

    #[test]
    fn cdf_of_uniform_draws_is_close_to_identity() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let cdf = empirical_cdf(&v).unwrap();
        let mut dev: f64 = 0.0;
        let mut prev = 0.0;
        for (x, f) in cdf {
            dev = dev.max((f - x).abs()).max((x - prev).abs());
            prev = f;
        }
        assert!(dev <= 0.06, "{dev}");
    }

    #[test]
    fn zero_interference_recovers_targets() {
        let (spec, p, c) = small();
        let s = spec.generate(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let sol = optimize(&s, &p, &c).unwrap();
        for mode in [
            InterferenceMode::AbsSidelobe { g_side: 0.0 },
            InterferenceMode::UserToUser { antenna: UserAntenna::Directional, interferers: InterfererSet::Nearest },
        ] {
            let rates = interference_rates(&sol, &s, &p, mode).unwrap();
            for (r, u) in rates.iter().zip(&s.users) {
                assert!((r - u.rate_demand).abs() <= 1e-9 * u.rate_demand, "{r} vs {}", u.rate_demand);
            }
        }
    }

    #[test]
    fn leakage_only_lowers_rates() {
        let (spec, p, c) = small();
        let s = spec.generate(&mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let sol = optimize(&s, &p, &c).unwrap();
        let g0 = p.geometry().g0;
        let side = interference_rates(&sol, &s, &p, InterferenceMode::AbsSidelobe { g_side: 0.01 * g0 }).unwrap();
        let omni = interference_rates(
            &sol,
            &s,
            &p,
            InterferenceMode::UserToUser { antenna: UserAntenna::Omni, interferers: InterfererSet::All },
        )
        .unwrap();
        for i in 0..s.user_count() {
            let eta = s.users[i].rate_demand;
            assert!(side[i] <= eta * (1.0 + 1e-9));
            assert!(omni[i] <= eta * (1.0 + 1e-9));
        }
    }

    #[test]
    fn single_run_table_matches_solution() {
        let (spec, p, c) = small();
        let config = ExperimentConfig { runs: 1, base_seed: 5, ..Default::default() };
        let table = run_monte_carlo(&spec, &p, &c, &config, Some(2)).unwrap();
        assert_eq!(table.cells.len(), 1);
        let s = spec.generate(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let sol = optimize(&s, &p, &SolverConfig { seed: 5, ..c }).unwrap();
        let summary = &table.cells[0];
        assert_eq!(summary.optimized.total_power.mean, sol.total_power);
        assert_eq!(summary.optimized.abs_users.mean, sol.abs_users() as f64);
        assert_eq!(summary.optimized.total_power.std, 0.0);
        assert_eq!(summary.iteration_histogram[sol.iterations], 1);
    }

    #[test]
    fn tables_reproducible_and_worker_independent() {
        let (spec, p, c) = small();
        let config = ExperimentConfig {
            runs: 3,
            sweep: Sweep { cache_fractions: vec![0.0, 0.5], ..Default::default() },
            ..Default::default()
        };
        let a = run_monte_carlo(&spec, &p, &c, &config, Some(1)).unwrap();
        let b = run_monte_carlo(&spec, &p, &c, &config, Some(4)).unwrap();
        let (mut ja, mut jb) = (Vec::new(), Vec::new());
        a.write_json(&mut ja).unwrap();
        b.write_json(&mut jb).unwrap();
        assert_eq!(ja, jb);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.records.len(), 6);
        assert_eq!(String::from_utf8(ca).unwrap().lines().count(), 7);
    }

    #[test]
    fn failed_runs_are_recorded() {
        let (spec, p, c) = small();
        let spec = ScenarioSpec { cov_target: Some(5.0), cov_tolerance: 0.01, max_cov_attempts: 2, ..spec };
        let config = ExperimentConfig { runs: 2, ..Default::default() };
        let t = run_monte_carlo(&spec, &p, &c, &config, Some(1)).unwrap();
        assert_eq!(t.cells[0].failed_runs, 2);
        assert!(t.records.iter().all(|r| r.error.is_some()));
    }

    #[test]
    fn expansion_is_cartesian() {
        let (spec, p, _) = small();
        let sweep = Sweep {
            cache_fractions: vec![0.0, 0.2, 0.5],
            delay_sensitive_fractions: vec![0.1, 0.9],
            ..Default::default()
        };
        let cells = expand_cells(&sweep, &spec, &p);
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[2].cache_capacity, 2);
        assert_eq!(cells[5].cache_capacity, 5);
    }

    proptest! {
        #[test]
        fn cdf_is_monotone_and_ends_at_one(v in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let c = empirical_cdf(&v).unwrap();
            prop_assert!((c.last().unwrap().1 - 1.0).abs() < 1e-12);
            for w in c.windows(2) {
                prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
            }
        }
    }
}
