//! Command-line harness for the terrain navigation stack: map generation,
//! scenario generation, batch benchmarks, single episodes, plots and
//! merged report tables.
//!
//! Exit codes: 0 on completion, 2 on configuration errors, 3 when scenario
//! generation fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use terrain_nav::bench::{
    self, course_scenario, BenchError, BenchmarkSuite, ComparisonReport, MetricsReport,
};
use terrain_nav::grid::{self, ElevationGrid, MapSpec};
use terrain_nav::mapping::MeasurementModel;
use terrain_nav::mppi::{CostVariant, MppiConfig};
use terrain_nav::sim::{self, DepthCameraConfig, MappingMode, Scenario};
use terrain_nav::terrain::TraversabilityConfig;

#[derive(Parser)]
#[command(name = "terrain-nav", version, about = "2.5D uneven-terrain navigation benchmark harness")]
struct Cli {
    /// Size of the worker pool for batch runs (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON config file with defaults for mppi/traversability/camera/etc.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapName {
    Cone,
    Ramp,
    Pits,
    Course,
    /// Load the map from an EGRD file passed via --map-file.
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    St,
    Sr,
    Both,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long, value_enum)]
    map: MapName,
    /// EGRD file when --map file is selected.
    #[arg(long)]
    map_file: Option<PathBuf>,
    /// Grid resolution in meters for generated maps.
    #[arg(long)]
    resolution: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a terrain and write it as an EGRD file.
    GenMap {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the human-readable JSON header + CSV heights.
        #[arg(long)]
        csv: bool,
    },
    /// Generate seeded benchmark scenarios as a JSON file.
    GenScenarios {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "st")]
        variant: VariantArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full benchmark suite and emit its reports.
    RunSuite {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, value_enum, default_value = "both")]
        variant: VariantArg,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "online_mapping")]
        ground_truth_map: bool,
        #[arg(long)]
        online_mapping: bool,
    },
    /// Run one scenario from a JSON file (or the built-in course tour).
    RunEpisode {
        /// Scenario JSON (a single scenario or an array).
        #[arg(long, required_unless_present = "course")]
        scenario: Option<PathBuf>,
        /// Index into a scenario array file.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Run the built-in obstacle-course integration tour instead.
        #[arg(long)]
        course: bool,
        #[arg(long, value_enum, default_value = "st")]
        variant: VariantArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "online_mapping")]
        ground_truth_map: bool,
        #[arg(long)]
        online_mapping: bool,
    },
    /// Render an SVG overhead plot from a suite summary JSON.
    Plot {
        /// Suite summary JSON written by run-suite.
        #[arg(long)]
        summary: PathBuf,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge per-map ST/SR summaries into one Markdown comparison table.
    Report {
        /// Summary JSON files, in (st, sr) pairs per map.
        #[arg(long, num_args = 2.., required = true)]
        inputs: Vec<PathBuf>,
        /// One label per (st, sr) pair.
        #[arg(long, num_args = 1..)]
        labels: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Optional defaults loaded from --config.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct CliConfig {
    mppi: Option<MppiConfig>,
    traversability: Option<TraversabilityConfig>,
    camera: Option<DepthCameraConfig>,
    sensor_model: Option<MeasurementModel>,
    resolution: Option<f64>,
    max_steps: Option<usize>,
    position_tolerance: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<BenchError>()
                .map(|e| match e {
                    BenchError::GenerationFailure(_) => 3u8,
                    _ => 2u8,
                })
                .unwrap_or(2u8);
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("worker pool already initialized")?;
    }
    let config: CliConfig = match &cli.config {
        Some(path) => serde_json::from_str(
            &std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?,
        )
        .context("parsing config file")?,
        None => CliConfig::default(),
    };

    match cli.command {
        Command::GenMap { map, out, csv } => {
            let grid = load_or_generate(&map, &config)?;
            grid::save_grid(&grid, &out).context("writing EGRD file")?;
            println!("wrote {} ({}x{} cells)", out.display(), grid.rows(), grid.cols());
            if csv {
                let json = out.with_extension("json");
                let csv_path = out.with_extension("csv");
                grid::export_csv(&grid, &json, &csv_path)?;
                println!("wrote {} and {}", json.display(), csv_path.display());
            }
            Ok(())
        }
        Command::GenScenarios { map, count, seed, variant, out } => {
            let scenarios = match map.map {
                MapName::Course => {
                    let v = single_variant(variant)?;
                    vec![course_scenario(v, seed)]
                }
                _ => {
                    let v = single_variant(variant)?;
                    let suite = build_suite(&map, v, count, seed, MappingMode::GroundTruth, &config)?;
                    bench::generate_scenarios(&suite)?
                }
            };
            std::fs::write(&out, serde_json::to_string_pretty(&scenarios)?)?;
            println!("wrote {} scenarios to {}", scenarios.len(), out.display());
            Ok(())
        }
        Command::RunSuite {
            map,
            variant,
            count,
            seed,
            out,
            ground_truth_map: _,
            online_mapping,
        } => {
            let mapping =
                if online_mapping { MappingMode::OnlineMapping } else { MappingMode::GroundTruth };
            std::fs::create_dir_all(&out)?;
            let grid = load_or_generate(&map, &config)?;
            let variants: Vec<CostVariant> = match variant {
                VariantArg::St => vec![CostVariant::SlopeTraversability],
                VariantArg::Sr => vec![CostVariant::SlopeRoughness],
                VariantArg::Both => {
                    vec![CostVariant::SlopeTraversability, CostVariant::SlopeRoughness]
                }
            };
            let mut reports = Vec::new();
            for v in &variants {
                let suite = build_suite(&map, *v, count, seed, mapping, &config)?;
                let report = bench::run_suite(&suite)?;
                println!(
                    "{} {}: success rate {:.1}% ({}/{}), mean path {:.2} m, mean step {:.2} ms",
                    suite.name,
                    v.short_name(),
                    report.success_rate,
                    report.success_count,
                    report.task_count,
                    report.mean_path_length,
                    report.mean_step_ms
                );
                bench::emit_report(&report, Some(&grid), &out)?;
                reports.push(report);
            }
            if let [st, sr] = &reports[..] {
                let label = map_label(&map);
                let cmp = bench::compare(st.clone(), sr.clone())?;
                let md = bench::comparison_markdown(&[(label.as_str(), &cmp)]);
                let md_path = out.join(format!("{label}_comparison.md"));
                std::fs::write(&md_path, md)?;
                let json_path = out.join(format!("{label}_comparison.json"));
                std::fs::write(&json_path, serde_json::to_string_pretty(&cmp)?)?;
                println!("wrote {}", md_path.display());
            }
            Ok(())
        }
        Command::RunEpisode {
            scenario,
            index,
            course,
            variant,
            seed,
            out,
            ground_truth_map,
            online_mapping,
        } => {
            let mut sc: Scenario = if course {
                course_scenario(single_variant(variant)?, seed)
            } else {
                let path = scenario.unwrap();
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parse_scenario(&text, index)?
            };
            if ground_truth_map {
                sc.mapping = MappingMode::GroundTruth;
            } else if online_mapping {
                sc.mapping = MappingMode::OnlineMapping;
            }
            apply_config_to_scenario(&mut sc, &config);
            std::fs::create_dir_all(&out)?;
            let result = sim::run_episode(&sc).map_err(BenchError::Sim)?;
            println!(
                "{}: {:?} after {} steps ({:.1} s), path {:.2} m, mean step {:.2} ms",
                sc.name, result.outcome, result.steps, result.sim_time, result.path_length,
                result.mean_step_ms
            );
            std::fs::write(
                out.join("result.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "name": sc.name,
                    "outcome": result.outcome,
                    "path_length": result.path_length,
                    "steps": result.steps,
                    "sim_time": result.sim_time,
                    "mean_step_ms": result.mean_step_ms,
                    "final_state": result.final_state,
                }))?,
            )?;
            sim::write_episode_jsonl(&result, out.join("episode.jsonl"))?;
            sim::write_trajectory_csv(&result, out.join("trajectory.csv"))?;
            Ok(())
        }
        Command::Plot { summary, map, out } => {
            let report: MetricsReport = serde_json::from_str(
                &std::fs::read_to_string(&summary)
                    .with_context(|| format!("reading {}", summary.display()))?,
            )
            .context("parsing summary JSON")?;
            let grid = load_or_generate(&map, &config)?;
            let trajectories: Vec<&[(f64, f64)]> =
                report.tasks.iter().map(|t| t.trajectory.as_slice()).collect();
            let color = match report.variant {
                CostVariant::SlopeTraversability => "#2a9d2a",
                CostVariant::SlopeRoughness => "#d03030",
            };
            std::fs::write(&out, bench::render_svg(&grid, &trajectories, color))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Report { inputs, labels, out } => {
            if inputs.len() % 2 != 0 {
                bail!("--inputs expects (st, sr) summary pairs");
            }
            let pairs = inputs.len() / 2;
            if labels.len() != pairs {
                bail!("need exactly {pairs} labels for {pairs} input pairs");
            }
            let mut comparisons = Vec::new();
            for pair in inputs.chunks(2) {
                let load = |p: &Path| -> Result<MetricsReport> {
                    serde_json::from_str(
                        &std::fs::read_to_string(p)
                            .with_context(|| format!("reading {}", p.display()))?,
                    )
                    .with_context(|| format!("parsing {}", p.display()))
                };
                comparisons.push(bench::compare(load(&pair[0])?, load(&pair[1])?)?);
            }
            let entries: Vec<(&str, &ComparisonReport)> =
                labels.iter().map(String::as_str).zip(comparisons.iter()).collect();
            std::fs::write(&out, bench::comparison_markdown(&entries))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn single_variant(v: VariantArg) -> Result<CostVariant> {
    match v {
        VariantArg::St => Ok(CostVariant::SlopeTraversability),
        VariantArg::Sr => Ok(CostVariant::SlopeRoughness),
        VariantArg::Both => Err(anyhow!("this command needs a single --variant (st or sr)")),
    }
}

fn map_spec(map: &MapArgs) -> Result<Option<MapSpec>> {
    Ok(match map.map {
        MapName::Cone => Some(MapSpec::cone()),
        MapName::Ramp => Some(MapSpec::ramp()),
        MapName::Pits => Some(MapSpec::pits()),
        MapName::Course => Some(MapSpec::course()),
        MapName::File => None,
    })
}

fn map_label(map: &MapArgs) -> String {
    match map.map {
        MapName::Cone => "cone".into(),
        MapName::Ramp => "ramp".into(),
        MapName::Pits => "pits".into(),
        MapName::Course => "course".into(),
        MapName::File => map
            .map_file
            .as_ref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "map".into()),
    }
}

fn load_or_generate(map: &MapArgs, config: &CliConfig) -> Result<ElevationGrid> {
    match map_spec(map)? {
        Some(spec) => {
            let resolution = map.resolution.or(config.resolution).unwrap_or(0.05);
            Ok(grid::generate_map(&spec, resolution)?)
        }
        None => {
            let path = map
                .map_file
                .as_ref()
                .ok_or_else(|| anyhow!("--map file requires --map-file PATH"))?;
            Ok(grid::load_grid(path)?)
        }
    }
}

fn build_suite(
    map: &MapArgs,
    variant: CostVariant,
    count: usize,
    seed: u64,
    mapping: MappingMode,
    config: &CliConfig,
) -> Result<BenchmarkSuite> {
    let spec = map_spec(map)?
        .ok_or_else(|| anyhow!("benchmark suites need a generated map (cone/ramp/pits)"))?;
    let mut suite = BenchmarkSuite {
        name: map_label(map),
        map: spec,
        count,
        variant,
        mapping,
        master_seed: seed,
        ..Default::default()
    };
    if let Some(r) = map.resolution.or(config.resolution) {
        suite.resolution = r;
    }
    if let Some(m) = &config.mppi {
        suite.mppi = m.clone();
    }
    if let Some(t) = &config.traversability {
        suite.trav = t.clone();
    }
    if let Some(n) = config.max_steps {
        suite.max_steps = n;
    }
    if let Some(tol) = config.position_tolerance {
        suite.position_tolerance = tol;
    }
    Ok(suite)
}

fn parse_scenario(text: &str, index: usize) -> Result<Scenario> {
    if let Ok(single) = serde_json::from_str::<Scenario>(text) {
        return Ok(single);
    }
    let list: Vec<Scenario> = serde_json::from_str(text).context("parsing scenario JSON")?;
    list.into_iter()
        .nth(index)
        .ok_or_else(|| anyhow!("scenario index {index} out of range"))
}

fn apply_config_to_scenario(sc: &mut Scenario, config: &CliConfig) {
    if let Some(m) = &config.mppi {
        let variant = sc.mppi.cost.variant;
        let seed = sc.mppi.seed;
        sc.mppi = m.clone();
        sc.mppi.cost.variant = variant;
        sc.mppi.seed = seed;
    }
    if let Some(t) = &config.traversability {
        sc.trav = t.clone();
    }
    if let Some(c) = &config.camera {
        sc.camera = c.clone();
    }
    if let Some(s) = &config.sensor_model {
        sc.sensor_model = *s;
    }
    if let Some(n) = config.max_steps {
        sc.max_steps = n;
    }
    if let Some(tol) = config.position_tolerance {
        sc.position_tolerance = tol;
    }
}
