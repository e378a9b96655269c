//! Command-line front end: `generate`, `run`, `sweep` and `energy`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::energy::{power_table, relative_energy_curve, write_energy_csv, EnergyModelParams};
use crate::error::{JumpsError, Result};
use crate::harness::{run_plan_with_progress, ExperimentPlan};
use crate::protocol::{run_full_protocol_traced, CoordinateMatrix};
use crate::topology::{generate_topology, Topology, TopologyConfig};
use crate::zones::{network_zone_summary_weighted, partition_zones, write_zone_report_csv, zone_reports, SizeWeighting};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_CONNECTIVITY: u8 = 3;
pub const EXIT_IO: u8 = 4;
pub const EXIT_UNRELIABLE: u8 = 5;
pub const EXIT_INTERNAL: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "jumps", version, about = "Multi-landmark hop-count virtual coordinates for sensor networks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Seed; overrides the seed of the configuration file.
    #[arg(long, global = true, env = "JUMPS_SEED")]
    pub seed: Option<u64>,

    /// Output directory (default: a timestamped directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for the sweep.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Write into an existing, non-empty output directory.
    #[arg(long, global = true)]
    pub force: bool,

    /// Suppress progress output.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a connected random topology and save it as JSON.
    Generate {
        /// Topology configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the protocol and the zone analysis on one topology.
    Run {
        /// Topology document produced by `generate`.
        #[arg(long, conflicts_with = "config")]
        topology: Option<PathBuf>,
        /// Topology configuration to draw from instead.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Node that starts the WAKE flood.
        #[arg(long, default_value_t = 0)]
        initiator: usize,
        /// Average zone sizes with node weight instead of zone weight.
        #[arg(long)]
        node_weighted: bool,
        /// Also write the per-round flood event log.
        #[arg(long)]
        trace: bool,
    },
    /// Run the landmark-count x density experiment grid.
    Sweep {
        /// Experiment plan (JSON); defaults to the desk-scale plan.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the R = 1000 m, 1000-trial plan as the starting point.
        #[arg(long)]
        paper_scale: bool,
        /// Histogram bin width in radio-range units.
        #[arg(long)]
        bin_width: Option<f64>,
        /// Override the number of trials per cell.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Tabulate the relative energy of landmarks versus density.
    Energy {
        /// Energy model parameters (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Largest landmark count in the table.
        #[arg(long, default_value_t = 10)]
        max_landmarks: usize,
        /// Neighbor densities in the table.
        #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 20.0, 30.0, 40.0, 50.0])]
        densities: Vec<f64>,
    },
}

fn exit_code_for(err: &JumpsError) -> u8 {
    match err {
        JumpsError::Validation(_) | JumpsError::Domain(_) | JumpsError::Json(_) => EXIT_VALIDATION,
        JumpsError::ConnectivityExhausted { .. } => EXIT_CONNECTIVITY,
        JumpsError::Io { .. } => EXIT_IO,
        JumpsError::Unreachable { .. } => EXIT_INTERNAL,
    }
}

/// Runs a parsed command line and maps the outcome to a process exit code.
pub fn run(cli: Cli) -> ExitCode {
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    if let Some(jobs) = cli.global.jobs {
        // only fails if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    match &cli.command {
        Command::Generate { config } => cmd_generate(&cli.global, config.as_deref()).map(|_| 0),
        Command::Run {
            topology,
            config,
            initiator,
            node_weighted,
            trace,
        } => {
            let weighting = if *node_weighted {
                SizeWeighting::PerNode
            } else {
                SizeWeighting::PerZone
            };
            cmd_run(&cli.global, topology.as_deref(), config.as_deref(), *initiator, weighting, *trace).map(|_| 0)
        }
        Command::Sweep {
            config,
            paper_scale,
            bin_width,
            trials,
        } => cmd_sweep(&cli.global, config.as_deref(), *paper_scale, *bin_width, *trials),
        Command::Energy {
            config,
            max_landmarks,
            densities,
        } => cmd_energy(&cli.global, config.as_deref(), *max_landmarks, densities).map(|_| 0),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| JumpsError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Creates the output directory, refusing to reuse a non-empty one without `--force`.
fn prepare_out(global: &GlobalOpts, what: &str) -> Result<PathBuf> {
    let dir = match &global.out {
        Some(d) => d.clone(),
        None => {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            PathBuf::from(format!("jumps-{what}-{secs}"))
        }
    };
    if !global.force {
        if let Ok(mut entries) = std::fs::read_dir(&dir) {
            if entries.next().is_some() {
                return Err(JumpsError::Validation(format!(
                    "output directory {} is not empty (use --force to overwrite)",
                    dir.display()
                )));
            }
        }
    }
    std::fs::create_dir_all(&dir).map_err(|e| JumpsError::io(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| JumpsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| JumpsError::io(path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| JumpsError::io(path, e))
}

fn load_topology_config(global: &GlobalOpts, path: Option<&Path>) -> Result<TopologyConfig> {
    let mut config: TopologyConfig = match path {
        Some(p) => read_json(p)?,
        None => TopologyConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

pub fn cmd_generate(global: &GlobalOpts, config: Option<&Path>) -> Result<PathBuf> {
    let config = load_topology_config(global, config)?;
    let topo = generate_topology(&config)?;
    let dir = prepare_out(global, "generate")?;
    let path = dir.join("topology.json");
    topo.save(&path)?;
    println!(
        "nodes={} edges={} mean_degree={:.3} connectivity_retries={} -> {}",
        topo.node_count(),
        topo.edge_count(),
        topo.mean_degree(),
        topo.connectivity_retries(),
        path.display()
    );
    Ok(path)
}

pub fn cmd_run(
    global: &GlobalOpts,
    topology: Option<&Path>,
    config: Option<&Path>,
    initiator: usize,
    weighting: SizeWeighting,
    trace: bool,
) -> Result<PathBuf> {
    let topo = match topology {
        Some(p) => Topology::load(p)?,
        None => generate_topology(&load_topology_config(global, config)?)?,
    };
    let (coords, flood_trace) = run_full_protocol_traced(&topo, initiator)?;
    let partition = partition_zones(&coords);
    let reports = zone_reports(&partition, &topo);
    let summary = network_zone_summary_weighted(&partition, &topo, weighting);

    let dir = prepare_out(global, "run")?;
    write_coordinates(&dir.join("coordinates.csv"), &coords, &topo)?;
    write_file(&dir.join("zones.csv"), |w| write_zone_report_csv(&reports, w))?;
    if trace {
        write_file(&dir.join("trace.csv"), |w| flood_trace.write_event_log(w))?;
    }
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
    println!(
        "zone_count={} mean_zone_size={} max_zone_size={} emissions={} receptions={}",
        summary.zone_count,
        fmt(summary.mean_zone_size),
        fmt(summary.max_zone_size),
        flood_trace.traffic.total_emissions(),
        flood_trace.traffic.total_receptions()
    );
    Ok(dir)
}

fn write_coordinates(path: &Path, coords: &CoordinateMatrix, topo: &Topology) -> Result<()> {
    write_file(path, |w| coords.write_csv(topo, w))
}

pub fn cmd_sweep(
    global: &GlobalOpts,
    config: Option<&Path>,
    paper_scale: bool,
    bin_width: Option<f64>,
    trials: Option<usize>,
) -> Result<u8> {
    let mut plan = match (config, paper_scale) {
        (Some(p), _) => read_json::<ExperimentPlan>(p)?,
        (None, true) => ExperimentPlan::paper_scale(),
        (None, false) => ExperimentPlan::desk_scale(),
    };
    if paper_scale {
        let paper = ExperimentPlan::paper_scale();
        plan.field_radius = paper.field_radius;
        plan.trials = paper.trials;
    }
    if let Some(w) = bin_width {
        plan.bin_width = w;
    }
    if let Some(t) = trials {
        plan.trials = t;
    }
    if let Some(seed) = global.seed {
        plan.base_seed = seed;
    }
    plan.validate()?;
    let dir = prepare_out(global, "sweep")?;
    let quiet = global.quiet;
    let result = run_plan_with_progress(&plan, |done, total, cell| {
        if !quiet {
            eprintln!(
                "[{done}/{total}] N={} d_neig={} trials={}/{} zone_size={}",
                cell.landmarks,
                cell.neighbor_density,
                cell.trials_used,
                cell.trials_planned,
                cell.mean(crate::harness::Metric::ZoneSize)
                    .map_or_else(|| "NA".into(), |v| format!("{v:.4}"))
            );
        }
    })?;
    result.write_all(&dir)?;
    if !quiet {
        eprintln!("plan_hash={} -> {}", result.plan_hash, dir.display());
    }
    for report in result.refinement.iter().filter(|r| !r.holds()) {
        eprintln!("refinement violation: {report:?}");
    }
    let unreliable: Vec<_> = result.unreliable_cells().collect();
    if unreliable.is_empty() {
        return Ok(0);
    }
    eprintln!("{} cell(s) unreliable:", unreliable.len());
    for c in unreliable {
        eprintln!(
            "  N={} d_neig={}: {} of {} trials exhausted connectivity retries",
            c.landmarks, c.neighbor_density, c.exhausted, c.trials_planned
        );
        for (t, e) in &c.failures {
            eprintln!("    trial {t}: {e}");
        }
    }
    Ok(EXIT_UNRELIABLE)
}

pub fn cmd_energy(global: &GlobalOpts, config: Option<&Path>, max_landmarks: usize, densities: &[f64]) -> Result<PathBuf> {
    let params: EnergyModelParams = match config {
        Some(p) => read_json(p)?,
        None => EnergyModelParams::default(),
    };
    params.validate()?;
    if max_landmarks == 0 || densities.is_empty() {
        return Err(JumpsError::Validation("energy table needs landmarks and densities".into()));
    }
    let landmarks: Vec<usize> = (1..=max_landmarks).collect();
    let rows = relative_energy_curve(&landmarks, densities, &params)?;
    let dir = prepare_out(global, "energy")?;
    write_file(&dir.join("energy.csv"), |w| write_energy_csv(&rows, w))?;

    println!("dBm    I_Tx(table)  I_Tx(model)  range     coverage");
    for check in power_table(&params)? {
        println!(
            "{:>4}   {:>6.1}       {:>6.2}       {:>7.2}   {:>8.2}",
            check.level.output_dbm,
            check.level.itx_ma,
            check.model_itx_ma,
            check.model_range_factor,
            check.model_coverage_factor
        );
    }
    Ok(dir)
}
