//! Seeded Monte-Carlo sweep over landmark counts and neighbor densities.
//!
//! Every `(N, d_neig)` cell draws its own independent topologies. A trial's
//! seed is [`trial_seed`] of the plan's base seed, the cell and the trial
//! index, so any single trial can be re-run on its own. Trials run in
//! parallel; results are folded in `(N, d_neig, trial)` order so output
//! never depends on scheduling.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::{relative_energy_curve, write_energy_csv, EnergyModelParams, EnergyRow};
use crate::error::{JumpsError, Result};
use crate::protocol::{run_full_protocol, CoordinateMatrix};
use crate::topology::{generate_topology, NodeId, TopologyConfig};
use crate::zones::{partition_zones, summarize, zone_metrics, NetworkZoneSummary, SizeWeighting, ZoneMetrics};

pub const PLAN_SCHEMA_VERSION: u32 = 1;
pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// Two-sided 99.9% standard normal quantile.
pub const Z_999: f64 = 3.290_527;

/// Mixed into the base seed so refinement-check topologies never coincide
/// with sweep trials.
const REFINEMENT_SEED_TAG: u64 = 0x7265_6669_6e65_0001;

/// Share of exhausted trials above which a cell is flagged unreliable.
pub const UNRELIABLE_EXHAUSTED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ZoneSize,
    MaxZoneSize,
    IntraZoneDistance,
    NodesPerZone,
    ZoneCount,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::ZoneSize,
        Metric::MaxZoneSize,
        Metric::IntraZoneDistance,
        Metric::NodesPerZone,
        Metric::ZoneCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ZoneSize => "zone_size",
            Metric::MaxZoneSize => "max_zone_size",
            Metric::IntraZoneDistance => "intra_zone_distance",
            Metric::NodesPerZone => "nodes_per_zone",
            Metric::ZoneCount => "zone_count",
        }
    }

    /// Per-trial value fed to the confidence interval.
    pub fn of_summary(self, s: &NetworkZoneSummary) -> Option<f64> {
        match self {
            Metric::ZoneSize => s.mean_zone_size,
            Metric::MaxZoneSize => s.max_zone_size,
            Metric::IntraZoneDistance => s.mean_intra_zone_distance,
            Metric::NodesPerZone => s.mean_population,
            Metric::ZoneCount => Some(s.zone_count as f64),
        }
    }

    fn integer_valued(self) -> bool {
        matches!(self, Metric::NodesPerZone | Metric::ZoneCount)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub schema_version: u32,
    pub landmark_counts: Vec<usize>,
    pub densities: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub field_radius: f64,
    pub radio_range: f64,
    pub max_connectivity_retries: u32,
    pub initiator: NodeId,
    pub metrics: Vec<Metric>,
    /// Histogram bin width for distance metrics, radio-range units.
    pub bin_width: f64,
    pub size_weighting: SizeWeighting,
    /// Topologies per density used for the nested-landmark refinement check.
    pub refinement_check_trials: usize,
    pub energy: EnergyModelParams,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan::desk_scale()
    }
}

impl ExperimentPlan {
    /// R = 500 m, r = 50 m, 100 trials per cell.
    pub fn desk_scale() -> Self {
        ExperimentPlan {
            schema_version: PLAN_SCHEMA_VERSION,
            landmark_counts: (3..=10).collect(),
            densities: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            trials: 100,
            base_seed: 2007,
            field_radius: 500.0,
            radio_range: 50.0,
            max_connectivity_retries: 1000,
            initiator: 0,
            metrics: Metric::ALL.to_vec(),
            bin_width: 0.1,
            size_weighting: SizeWeighting::PerZone,
            refinement_check_trials: 2,
            energy: EnergyModelParams::default(),
        }
    }

    /// R = 1000 m, r = 50 m, 1000 trials per cell.
    pub fn paper_scale() -> Self {
        ExperimentPlan {
            trials: 1000,
            field_radius: 1000.0,
            ..ExperimentPlan::desk_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != PLAN_SCHEMA_VERSION {
            return Err(JumpsError::Validation(format!(
                "unsupported plan schema version {}",
                self.schema_version
            )));
        }
        if self.landmark_counts.is_empty() || self.densities.is_empty() {
            return Err(JumpsError::Validation("plan grid must be non-empty".into()));
        }
        if self.trials < 2 {
            return Err(JumpsError::Validation("at least two trials per cell are required".into()));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(JumpsError::Validation(format!("bin width must be positive, got {}", self.bin_width)));
        }
        if self.metrics.is_empty() {
            return Err(JumpsError::Validation("no metric selected".into()));
        }
        for &n in &self.landmark_counts {
            for &d in &self.densities {
                self.topology_config(n, d, 0).validate()?;
            }
        }
        self.energy.validate()
    }

    pub fn topology_config(&self, landmarks: usize, density: f64, seed: u64) -> TopologyConfig {
        TopologyConfig {
            field_radius: self.field_radius,
            radio_range: self.radio_range,
            neighbor_density: density,
            landmark_count: landmarks,
            landmark_angle_offset: 0.0,
            seed,
            max_connectivity_retries: self.max_connectivity_retries,
            node_count: None,
        }
    }

    /// First 16 hex digits of the SHA-256 of the plan's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("plan serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| JumpsError::io(path, e))?;
        let plan: ExperimentPlan = serde_json::from_str(&text)?;
        plan.validate()?;
        Ok(plan)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one trial: SplitMix64 chained over the base seed, the landmark
/// count, the bit pattern of the density and the trial index.
pub fn trial_seed(base_seed: u64, landmarks: usize, density: f64, trial: usize) -> u64 {
    [landmarks as u64, density.to_bits(), trial as u64]
        .into_iter()
        .fold(splitmix64(base_seed), |h, x| splitmix64(h ^ x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    /// Half-width of the normal-approximation 99.9% confidence interval.
    pub ci_halfwidth: f64,
}

/// Sample mean and `Z_999 * s / sqrt(n)`.
pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.len() < 2 {
        return Err(JumpsError::Validation(format!(
            "a confidence interval needs at least two values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    // shifted by the first value: exact for constant input
    let shift = values[0];
    let offset = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let mean = shift + offset;
    let var = values.iter().map(|v| (v - shift - offset).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Aggregate {
        mean,
        ci_halfwidth: Z_999 * var.sqrt() / n.sqrt(),
    })
}

/// Reduction of `mean` relative to the three-landmark `baseline`, percent.
/// `None` for a non-positive baseline.
pub fn relative_benefit(mean: f64, baseline: f64) -> Option<f64> {
    (baseline > 0.0 && baseline.is_finite()).then(|| 100.0 * (baseline - mean) / baseline)
}

/// Counts over left-closed bins `[k*w, (k+1)*w)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Bin index `k` to count.
    pub counts: BTreeMap<i64, u64>,
}

impl Histogram {
    pub fn new(bin_width: f64) -> Self {
        Histogram {
            bin_width,
            counts: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, x: f64) {
        let w = self.bin_width;
        let mut k = (x / w).floor() as i64;
        if (k as f64 + 1.0) * w <= x {
            k += 1;
        } else if k as f64 * w > x {
            k -= 1;
        }
        *self.counts.entry(k).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn bin_left(&self, k: i64) -> f64 {
        k as f64 * self.bin_width
    }

    /// Share of the mass in bins lying entirely below `threshold`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let below: u64 = self
            .counts
            .iter()
            .filter(|(&k, _)| self.bin_left(k + 1) <= threshold + 1e-12)
            .map(|(_, &c)| c)
            .sum();
        below as f64 / total as f64
    }
}

pub fn histogram(samples: &[f64], bin_width: f64) -> Histogram {
    let mut h = Histogram::new(bin_width);
    for &x in samples {
        h.add(x);
    }
    h
}

/// Outcome of one successful trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub connectivity_retries: u32,
    pub summary: NetworkZoneSummary,
}

/// Raw output of one cell.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub landmarks: usize,
    pub neighbor_density: f64,
    pub trials_planned: usize,
    pub records: Vec<TrialRecord>,
    /// Per-zone metrics pooled over all trials, in trial order.
    pub pooled_zones: Vec<ZoneMetrics>,
    /// `(trial, error)` for trials that produced no record.
    pub failures: Vec<(usize, String)>,
    pub exhausted: usize,
}

fn run_trial(plan: &ExperimentPlan, landmarks: usize, density: f64, trial: usize) -> Result<(TrialRecord, Vec<ZoneMetrics>)> {
    let seed = trial_seed(plan.base_seed, landmarks, density, trial);
    let topo = generate_topology(&plan.topology_config(landmarks, density, seed))?;
    let (coords, _) = run_full_protocol(&topo, plan.initiator)?;
    let partition = partition_zones(&coords);
    let zones: Vec<ZoneMetrics> = partition
        .zones()
        .iter()
        .map(|z| zone_metrics(z, &topo))
        .collect::<Result<_>>()?;
    let summary = summarize(&zones, partition.singleton_count(), plan.size_weighting);
    Ok((
        TrialRecord {
            trial,
            seed,
            connectivity_retries: topo.connectivity_retries(),
            summary,
        },
        zones,
    ))
}

/// Runs `trials` seeded trials of one `(N, d_neig)` cell.
pub fn run_cell(plan: &ExperimentPlan, landmarks: usize, density: f64, trials: usize) -> CellRun {
    let outcomes: Vec<Result<(TrialRecord, Vec<ZoneMetrics>)>> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(plan, landmarks, density, t))
        .collect();
    let mut run = CellRun {
        landmarks,
        neighbor_density: density,
        trials_planned: trials,
        records: Vec::with_capacity(trials),
        pooled_zones: Vec::new(),
        failures: Vec::new(),
        exhausted: 0,
    };
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((record, zones)) => {
                run.records.push(record);
                run.pooled_zones.extend(zones);
            }
            Err(e) => {
                if matches!(e, JumpsError::ConnectivityExhausted { .. }) {
                    run.exhausted += 1;
                }
                run.failures.push((t, e.to_string()));
            }
        }
    }
    run
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricStat {
    /// Trials contributing a value.
    pub samples: usize,
    pub mean: Option<f64>,
    pub ci999: Option<f64>,
    pub benefit_vs_3_pct: Option<f64>,
}

/// Aggregated view of one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub landmarks: usize,
    pub neighbor_density: f64,
    pub trials_planned: usize,
    pub trials_used: usize,
    pub exhausted: usize,
    /// Rejected disconnected draws summed over the cell's trials.
    pub connectivity_rejections: u64,
    pub unreliable: bool,
    pub metrics: BTreeMap<Metric, MetricStat>,
    pub histograms: BTreeMap<Metric, Histogram>,
    pub failures: Vec<(usize, String)>,
}

impl CellResult {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.metrics.get(&metric).and_then(|m| m.mean)
    }
}

/// Aggregates a cell run: per-trial confidence intervals and pooled histograms.
pub fn summarize_cell(run: &CellRun, plan: &ExperimentPlan) -> CellResult {
    let mut metrics = BTreeMap::new();
    let mut histograms = BTreeMap::new();
    for &metric in &plan.metrics {
        let values: Vec<f64> = run.records.iter().filter_map(|r| metric.of_summary(&r.summary)).collect();
        let (mean, ci999) = match values.len() {
            0 => (None, None),
            1 => (Some(values[0]), None),
            _ => {
                let a = aggregate(&values).expect("two or more values");
                (Some(a.mean), Some(a.ci_halfwidth))
            }
        };
        metrics.insert(
            metric,
            MetricStat {
                samples: values.len(),
                mean,
                ci999,
                benefit_vs_3_pct: None,
            },
        );
        let width = if metric.integer_valued() { 1.0 } else { plan.bin_width };
        let samples: Vec<f64> = match metric {
            Metric::ZoneSize => run.pooled_zones.iter().map(|z| z.zone_size).collect(),
            Metric::IntraZoneDistance => run.pooled_zones.iter().map(|z| z.intra_zone_distance).collect(),
            Metric::NodesPerZone => run.pooled_zones.iter().map(|z| z.population as f64).collect(),
            Metric::MaxZoneSize | Metric::ZoneCount => values,
        };
        histograms.insert(metric, histogram(&samples, width));
    }
    CellResult {
        landmarks: run.landmarks,
        neighbor_density: run.neighbor_density,
        trials_planned: run.trials_planned,
        trials_used: run.records.len(),
        exhausted: run.exhausted,
        connectivity_rejections: run.records.iter().map(|r| r.connectivity_retries as u64).sum(),
        unreliable: run.exhausted as f64 > UNRELIABLE_EXHAUSTED_FRACTION * run.trials_planned as f64,
        metrics,
        histograms,
        failures: run.failures.clone(),
    }
}

/// Fills `benefit_vs_3_pct` from the same-density three-landmark cell.
pub fn attach_benefits(cells: &mut [CellResult]) {
    let baselines: HashMap<(u64, Metric), f64> = cells
        .iter()
        .filter(|c| c.landmarks == 3)
        .flat_map(|c| {
            c.metrics
                .iter()
                .filter_map(move |(&m, s)| s.mean.map(|v| ((c.neighbor_density.to_bits(), m), v)))
        })
        .collect();
    for cell in cells {
        let key = cell.neighbor_density.to_bits();
        for (&m, stat) in cell.metrics.iter_mut() {
            stat.benefit_vs_3_pct = match (stat.mean, baselines.get(&(key, m))) {
                (Some(v), Some(&b)) => relative_benefit(v, b),
                _ => None,
            };
        }
    }
}

/// Outcome of the nested-landmark refinement check on one topology.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub neighbor_density: f64,
    pub seed: u64,
    pub max_landmarks: usize,
    /// Nodes whose zone population grew when a landmark was appended.
    pub population_increases: usize,
    /// Zones under `n + 1` landmarks not contained in a zone under `n`.
    pub split_violations: usize,
    /// Levels where the singleton count dropped.
    pub singleton_decreases: usize,
}

impl RefinementReport {
    pub fn holds(&self) -> bool {
        self.population_increases == 0 && self.split_violations == 0 && self.singleton_decreases == 0
    }
}

/// Checks that appending landmark columns `min..=max` to one coordinate
/// matrix only ever refines its zones.
pub fn check_refinement(coords: &CoordinateMatrix, min_landmarks: usize) -> (usize, usize, usize) {
    let max = coords.landmark_count();
    let class_of = |n: usize| -> (Vec<usize>, Vec<usize>, usize) {
        let part = partition_zones(&coords.truncated(n));
        let mut class = vec![usize::MAX; coords.node_count()];
        let mut pop = vec![1usize; coords.node_count()];
        for (z, members) in part.zones().iter().enumerate() {
            for &i in members {
                class[i] = z;
                pop[i] = members.len();
            }
        }
        (class, pop, part.singleton_count())
    };
    let (mut pop_up, mut splits, mut single_down) = (0, 0, 0);
    let (mut prev_class, mut prev_pop, mut prev_single) = class_of(min_landmarks.min(max));
    for n in (min_landmarks + 1)..=max {
        let (class, pop, single) = class_of(n);
        pop_up += pop.iter().zip(&prev_pop).filter(|(now, before)| now > before).count();
        let mut parent: HashMap<usize, usize> = HashMap::new();
        for (i, &c) in class.iter().enumerate() {
            if c == usize::MAX {
                continue;
            }
            let p = prev_class[i];
            match parent.get(&c) {
                _ if p == usize::MAX => splits += 1,
                Some(&q) if q != p => splits += 1,
                Some(_) => {}
                None => {
                    parent.insert(c, p);
                }
            }
        }
        if single < prev_single {
            single_down += 1;
        }
        prev_class = class;
        prev_pop = pop;
        prev_single = single;
    }
    (pop_up, splits, single_down)
}

/// Nested-landmark check on a fresh topology with `max_landmarks` landmarks:
/// the `n`-landmark coordinates are the first `n` columns.
pub fn nested_refinement_check(
    plan: &ExperimentPlan,
    density: f64,
    max_landmarks: usize,
    trial: usize,
) -> Result<RefinementReport> {
    let seed = trial_seed(plan.base_seed ^ REFINEMENT_SEED_TAG, max_landmarks, density, trial);
    let topo = generate_topology(&plan.topology_config(max_landmarks, density, seed))?;
    let (coords, _) = run_full_protocol(&topo, plan.initiator)?;
    let min = plan.landmark_counts.iter().copied().min().unwrap_or(1).min(max_landmarks);
    let (population_increases, split_violations, singleton_decreases) = check_refinement(&coords, min);
    Ok(RefinementReport {
        neighbor_density: density,
        seed,
        max_landmarks,
        population_increases,
        split_violations,
        singleton_decreases,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    pub plan: ExperimentPlan,
    pub plan_hash: String,
    pub cells: Vec<CellResult>,
    pub refinement: Vec<RefinementReport>,
    pub refinement_errors: Vec<String>,
    pub energy: Vec<EnergyRow>,
}

impl PlanResult {
    pub fn cell(&self, landmarks: usize, density: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.landmarks == landmarks && c.neighbor_density == density)
    }

    pub fn unreliable_cells(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.unreliable)
    }

    fn provenance(&self, what: &str) -> String {
        format!(
            "# jumps {what} schema_version={RESULTS_SCHEMA_VERSION} plan_hash={} base_seed={}",
            self.plan_hash, self.plan.base_seed
        )
    }

    /// `N,d_neig,trials,metric,mean,ci999,benefit_vs_3_pct`
    pub fn write_results_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.provenance("results"))?;
        writeln!(out, "N,d_neig,trials,metric,mean,ci999,benefit_vs_3_pct")?;
        for c in &self.cells {
            for (m, s) in &c.metrics {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    c.landmarks,
                    c.neighbor_density,
                    c.trials_used,
                    m,
                    fmt_opt(s.mean),
                    fmt_opt(s.ci999),
                    fmt_opt(s.benefit_vs_3_pct)
                )?;
            }
        }
        Ok(())
    }

    /// `N,d_neig,bin_left,count`
    pub fn write_histogram_csv<W: Write>(&self, metric: Metric, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.provenance(&format!("hist_{metric}")))?;
        writeln!(out, "N,d_neig,bin_left,count")?;
        for c in &self.cells {
            if let Some(h) = c.histograms.get(&metric) {
                for (&k, &count) in &h.counts {
                    writeln!(out, "{},{},{:.6},{}", c.landmarks, c.neighbor_density, h.bin_left(k), count)?;
                }
            }
        }
        Ok(())
    }

    /// Per-cell bookkeeping: trial accounting and connectivity rejections.
    pub fn write_cells_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.provenance("cells"))?;
        writeln!(out, "N,d_neig,trials_planned,trials_used,exhausted,connectivity_rejections,unreliable")?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.landmarks,
                c.neighbor_density,
                c.trials_planned,
                c.trials_used,
                c.exhausted,
                c.connectivity_rejections,
                c.unreliable
            )?;
        }
        Ok(())
    }

    pub fn write_energy_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.provenance("energy"))?;
        write_energy_csv(&self.energy, out)
    }

    /// Writes `results.csv`, `cells.csv`, `energy.csv` and one
    /// `hist_<metric>.csv` per selected metric into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| JumpsError::io(dir, e))?;
        let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
            let path = dir.join(name);
            let mut buf = Vec::new();
            f(&mut buf).map_err(|e| JumpsError::io(&path, e))?;
            std::fs::write(&path, buf).map_err(|e| JumpsError::io(&path, e))
        };
        write("results.csv", &|b| self.write_results_csv(b))?;
        write("cells.csv", &|b| self.write_cells_csv(b))?;
        write("energy.csv", &|b| self.write_energy_csv(b))?;
        for &m in &self.plan.metrics {
            write(&format!("hist_{m}.csv"), &|b| self.write_histogram_csv(m, b))?;
        }
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Runs every cell of the plan, the refinement checks and the energy table.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanResult> {
    run_plan_with_progress(plan, |_, _, _| {})
}

/// As [`run_plan`], calling `progress(done, total, cell)` after each cell.
pub fn run_plan_with_progress<F>(plan: &ExperimentPlan, progress: F) -> Result<PlanResult>
where
    F: Fn(usize, usize, &CellResult),
{
    plan.validate()?;
    let total = plan.landmark_counts.len() * plan.densities.len();
    let mut cells = Vec::with_capacity(total);
    for &n in &plan.landmark_counts {
        for &d in &plan.densities {
            let run = run_cell(plan, n, d, plan.trials);
            let cell = summarize_cell(&run, plan);
            progress(cells.len() + 1, total, &cell);
            cells.push(cell);
        }
    }
    attach_benefits(&mut cells);

    let max_landmarks = plan.landmark_counts.iter().copied().max().unwrap_or(1);
    let checks: Vec<(f64, usize)> = plan
        .densities
        .iter()
        .flat_map(|&d| (0..plan.refinement_check_trials).map(move |t| (d, t)))
        .collect();
    let outcomes: Vec<Result<RefinementReport>> = checks
        .par_iter()
        .map(|&(d, t)| nested_refinement_check(plan, d, max_landmarks, t))
        .collect();
    let mut refinement = Vec::new();
    let mut refinement_errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => refinement.push(r),
            Err(e) => refinement_errors.push(e.to_string()),
        }
    }

    let mut energy_landmarks: Vec<usize> = vec![1];
    energy_landmarks.extend(plan.landmark_counts.iter().copied().filter(|&n| n != 1));
    let energy = relative_energy_curve(&energy_landmarks, &plan.densities, &plan.energy)?;

    Ok(PlanResult {
        plan: plan.clone(),
        plan_hash: plan.hash(),
        cells,
        refinement,
        refinement_errors,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn aggregate_hand_values() {
        let a = aggregate(&[0.0, 1.0]).unwrap();
        assert_relative_eq!(a.mean, 0.5);
        // s = 0.7071, 3.2905 * 0.7071 / sqrt(2) = 1.645
        assert_relative_eq!(a.ci_halfwidth, 1.645, epsilon = 1e-3);
        let c = aggregate(&[4.2; 10]).unwrap();
        assert_relative_eq!(c.mean, 4.2, epsilon = 1e-12);
        assert_eq!(c.ci_halfwidth, 0.0);
        assert_eq!(aggregate(&[-3.5, 3.5]).unwrap().mean, 0.0);
        assert!(aggregate(&[1.0]).is_err());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn benefit_arithmetic() {
        assert_eq!(relative_benefit(2.0, 2.0), Some(0.0));
        assert_relative_eq!(relative_benefit(0.35, 1.0).unwrap(), 65.0, epsilon = 1e-9);
        assert_eq!(relative_benefit(1.0, 0.0), None);
    }

    #[test]
    fn histogram_bins() {
        assert!(histogram(&[], 0.1).counts.is_empty());
        let h = histogram(&[0.05, 0.15, 0.15], 0.1);
        assert_eq!(h.counts, BTreeMap::from([(0, 1), (1, 2)]));
        assert_eq!(h.total(), 3);
        let ints = histogram(&[2.0, 2.0, 3.0, 7.0], 1.0);
        assert_eq!(ints.counts, BTreeMap::from([(2, 2), (3, 1), (7, 1)]));
        assert_relative_eq!(ints.fraction_below(3.0), 0.5);
    }

    #[test]
    fn seeds_differ_across_cells_and_trials() {
        let a = trial_seed(1, 3, 10.0, 0);
        assert_eq!(a, trial_seed(1, 3, 10.0, 0));
        assert_ne!(a, trial_seed(1, 3, 10.0, 1));
        assert_ne!(a, trial_seed(1, 4, 10.0, 0));
        assert_ne!(a, trial_seed(1, 3, 20.0, 0));
        assert_ne!(a, trial_seed(2, 3, 10.0, 0));
    }

    #[test]
    fn plan_validation() {
        assert!(ExperimentPlan::desk_scale().validate().is_ok());
        let one_trial = ExperimentPlan {
            trials: 1,
            ..ExperimentPlan::desk_scale()
        };
        assert!(one_trial.validate().is_err());
        let empty = ExperimentPlan {
            densities: vec![],
            ..ExperimentPlan::desk_scale()
        };
        assert!(empty.validate().is_err());
        let paper = ExperimentPlan::paper_scale();
        assert_eq!(paper.field_radius, 1000.0);
        assert_eq!(paper.trials, 1000);
    }

    #[test]
    fn benefits_are_zero_for_the_baseline() {
        let plan = ExperimentPlan {
            landmark_counts: vec![3, 4],
            densities: vec![10.0],
            trials: 3,
            field_radius: 200.0,
            refinement_check_trials: 0,
            ..ExperimentPlan::desk_scale()
        };
        let result = run_plan(&plan).unwrap();
        let base = result.cell(3, 10.0).unwrap();
        for stat in base.metrics.values() {
            if stat.mean.is_some_and(|m| m > 0.0) {
                assert_eq!(stat.benefit_vs_3_pct, Some(0.0));
            }
        }
        assert!(result.cell(4, 10.0).unwrap().metrics[&Metric::ZoneSize].benefit_vs_3_pct.is_some());
    }
}
