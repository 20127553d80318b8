use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bodyscan::cspace::ConfigDictionary;
use bodyscan::geometry::ply::{read_point_cloud, write_point_cloud, PlyFormat};
use bodyscan::metrics::{coverage, mean_surface_distance, CoverageReport};
use bodyscan::robot::BasePose;
use bodyscan::workflow::{parse_value, run_monte_carlo, run_sweep, ScenarioConfig, Scenario, StartPose};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bodyscan", version, about = "Plan, simulate and evaluate full-body surface scans")]
struct Cli {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// TOML scenario file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sets the sampling, jitter and noise seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_parser = ["full", "narrow", "one-side", "one_side"])]
    workspace: Option<String>,
    /// Couch top height, meters.
    #[arg(long, global = true)]
    couch_height: Option<f64>,
    /// Base position budget.
    #[arg(long, global = true)]
    bases: Option<usize>,
    /// Views per base position.
    #[arg(long, global = true)]
    views: Option<usize>,
    /// Planning resolution, meters.
    #[arg(long, global = true)]
    resolution: Option<f64>,
    /// Any config key, e.g. `camera.noise_sigma=0`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Text,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configuration dictionary.
    Analyze,
    /// Select bases and views from a dictionary.
    Plan {
        /// Previously saved dictionary; refused if built from other settings.
        #[arg(long)]
        dictionary: Option<PathBuf>,
    },
    /// Explorative scan, plan, simulated capture, stitching and report.
    Simulate {
        /// Start pose `x,y,heading`; random from the sampling seed if absent.
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        start: Option<BasePose>,
        /// Monte-Carlo runs from random starts.
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// One row per value of a config axis.
    Sweep {
        /// Dotted config key or alias (couch_height, workspace, bases, views, resolution, body).
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Coverage and mean distance of a scan against a reference, both PLY.
    Evaluate {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Coverage voxel, meters.
        #[arg(long, default_value_t = 0.01)]
        voxel: f64,
    },
    /// Render a saved report.json as csv, text or svg.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn parse_pose(s: &str) -> Result<BasePose, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, heading] => Ok(BasePose::new(x, y, heading)),
        _ => Err(format!("expected x,y,heading, got '{s}'")),
    }
}

impl ScenarioArgs {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::from_file(p).with_context(|| format!("loading {}", p.display()))?,
            None => ScenarioConfig::default(),
        };
        let mut set = |key: &str, value: String| -> Result<()> {
            cfg = cfg.with_override(key, parse_value(&value)).with_context(|| format!("setting {key}"))?;
            Ok(())
        };
        if let Some(s) = self.seed {
            set("seed", s.to_string())?;
        }
        if let Some(w) = &self.workspace {
            set("workspace", format!("\"{w}\""))?;
        }
        if let Some(h) = self.couch_height {
            set("couch_height", format!("{h:?}"))?;
        }
        if let Some(b) = self.bases {
            set("bases", b.to_string())?;
        }
        if let Some(v) = self.views {
            set("views", v.to_string())?;
        }
        if let Some(r) = self.resolution {
            set("resolution", format!("{r:?}"))?;
        }
        for o in &self.overrides {
            let (k, v) = o.split_once('=').with_context(|| format!("override '{o}' is not KEY=VALUE"))?;
            set(k.trim(), v.to_string())?;
        }
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn render(report: &CoverageReport, format: Format) -> String {
    match format {
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
        Format::Svg => report.to_svg(),
    }
}

fn write_report(dir: &Path, report: &CoverageReport) -> Result<()> {
    write(dir, "report.csv", report.to_csv())?;
    write(dir, "coverage.svg", report.to_svg())?;
    write(dir, "report.json", serde_json::to_string_pretty(report)?)
}

fn run(cli: Cli) -> Result<()> {
    let args = &cli.scenario;
    let cfg = args.config()?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        bail!("no command given; see --help");
    };
    let out = &args.out;
    let needs_out = !matches!(command, Command::Report { .. } | Command::Evaluate { .. });
    if needs_out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write(out, "effective-config.txt", cfg.to_toml())?;
    }
    match command {
        Command::Analyze => {
            let scenario = Scenario::new(cfg)?;
            let dict = scenario.analyze()?;
            dict.save(out.join("dictionary.json"))?;
            write(out, "timing.csv", format!("phase,seconds\nanalysis_per_base,{:.6}\n", dict.analysis_time_per_base))?;
            println!(
                "{} bases, {} records over {} samples, hash {}",
                dict.bases.len(),
                dict.len(),
                dict.n_samples,
                dict.params_hash
            );
        }
        Command::Plan { dictionary } => {
            let scenario = Scenario::new(cfg)?;
            let dict = match dictionary {
                Some(p) => ConfigDictionary::load(p, &scenario.params_hash()).with_context(|| format!("loading {}", p.display()))?,
                None => scenario.analyze()?,
            };
            let (plan, report) = scenario.plan_curve(&dict)?;
            write(out, "plan.txt", plan.to_text(&dict))?;
            write(out, "gains.csv", plan.gains_csv(&dict))?;
            write_report(out, &report)?;
            print!("{}", render(&report, args.format));
        }
        Command::Simulate { start, runs } => {
            if *runs == 0 {
                bail!("--runs must be at least 1");
            }
            if *runs > 1 {
                if start.is_some() {
                    bail!("--start cannot be combined with --runs");
                }
                let mc = run_monte_carlo(&cfg, *runs)?;
                write(out, "monte_carlo.csv", mc.to_csv())?;
                println!("{} runs: coverage {:.2} +/- {:.2} %", mc.runs.len(), mc.mean_coverage(), mc.std_coverage());
                return Ok(());
            }
            let scenario = Scenario::new(cfg)?;
            let t = Instant::now();
            let dict = scenario.analyze()?;
            let analysis = t.elapsed().as_secs_f64();
            let start = start.map_or(StartPose::Random, StartPose::At);
            let mut r = scenario.run(&dict, start)?;
            r.timing.analysis = analysis;
            write_point_cloud(out.join("stitched.ply"), &r.stitch.cloud, PlyFormat::BinaryLittleEndian)?;
            write(out, "plan.txt", r.plan.to_text(&dict))?;
            write(out, "gains.csv", r.plan.gains_csv(&dict))?;
            write(out, "corrections.csv", r.stitch.corrections_csv())?;
            write(out, "timing.csv", r.timing.to_csv())?;
            write_report(out, &r.report)?;
            print!("{}", render(&r.report, args.format));
        }
        Command::Sweep { axis, values } => {
            let r = run_sweep(&cfg, axis, values)?;
            write(out, "sweep.csv", &r.csv)?;
            write(out, "sweep_timing.csv", &r.timing_csv)?;
            if let Some(k) = r.knee {
                write(out, "knee.txt", format!("{k}\n"))?;
            }
            print!("{}", r.csv);
            if let Some(k) = r.knee {
                println!("knee resolution {k} m");
            }
        }
        Command::Evaluate { scan, reference, voxel } => {
            let scan_cloud = read_point_cloud(scan).with_context(|| format!("reading {}", scan.display()))?;
            let ref_cloud = read_point_cloud(reference).with_context(|| format!("reading {}", reference.display()))?;
            let cov = coverage(&scan_cloud, &ref_cloud, *voxel)?;
            let dist = mean_surface_distance(&scan_cloud, &ref_cloud)?;
            let text = match args.format {
                Format::Csv => format!("coverage_pct,mean_distance_mm\n{cov:.4},{:.4}\n", dist * 1000.0),
                _ => format!("coverage {cov:.2} %\nmean distance {:.2} mm\n", dist * 1000.0),
            };
            print!("{text}");
        }
        Command::Report { input } => {
            let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
            let report: CoverageReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
            print!("{}", render(&report, args.format));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
