use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use hjb_planner::io::{
    load_or_solve, read_trajectory_csv, render_frames, run_solve, run_trace, run_verify, slice_csv, PlotSpec,
    RunConfig,
};
use hjb_planner::{Configuration, Error, SceneFile};

/// Time-optimal planning for a rectangular car among moving obstacles.
#[derive(Parser, Debug)]
#[command(name = "hjb-planner", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the travel-time function and dump its slices.
    Solve(Common),
    /// Trace every start through a solved (or freshly solved) dump.
    Trace(Common),
    /// Run the property checks and write verify_report.json.
    Verify(Common),
    /// Draw frames of the scene with previously traced trajectories.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Scene JSON file.
    scene: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Cell counts I,J,K.
    #[arg(long, value_parser = parse_resolution)]
    resolution: Option<(usize, usize, usize)>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Target as x,y,theta.
    #[arg(long, value_parser = parse_config, allow_hyphen_values = true)]
    target: Option<Configuration>,
    /// Start as x,y,theta; repeat for several. Replaces the scene's starts.
    #[arg(long = "start", value_parser = parse_config, allow_hyphen_values = true)]
    starts: Vec<Configuration>,
    /// Safety clearance added around obstacles.
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    cfl_safety: Option<f64>,
    /// Keep every n-th slice.
    #[arg(long)]
    stride: Option<usize>,
    /// Memory for stored slices, in MiB.
    #[arg(long)]
    memory_mb: Option<usize>,
    /// Tracer time step.
    #[arg(long)]
    delta: Option<f64>,
    /// Collision checks per tracer step during validation.
    #[arg(long)]
    oversample: Option<usize>,
    /// Frames written by `trace`.
    #[arg(long)]
    frames: Option<usize>,
    /// Frame width in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// `solve` also writes the t = 0 plane at this heading index as CSV.
    #[arg(long)]
    csv_heading: Option<usize>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    scene: PathBuf,
    #[arg(short, long, default_value = "out/frames")]
    out: PathBuf,
    /// Trajectory CSV; repeat for several.
    #[arg(long = "trajectory")]
    trajectories: Vec<PathBuf>,
    /// Comma-separated frame times.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    times: Vec<f64>,
    #[arg(long, default_value_t = 400)]
    size: usize,
    /// Leave out the path lines.
    #[arg(long)]
    no_paths: bool,
    /// Leave out the car footprints.
    #[arg(long)]
    no_footprints: bool,
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> Result<(T, T, T), String>
where
    T::Err: std::fmt::Display,
{
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    }
    let p = |v: &str| v.parse::<T>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(parts[0])?, p(parts[1])?, p(parts[2])?))
}

fn parse_resolution(s: &str) -> Result<(usize, usize, usize), String> {
    parse_triple(s)
}

fn parse_config(s: &str) -> Result<Configuration, String> {
    let (x, y, theta) = parse_triple::<f64>(s)?;
    Ok(Configuration::new(x, y, theta))
}

fn config(c: &Common) -> hjb_planner::Result<RunConfig> {
    let mut cfg = RunConfig::load(&c.scene, &c.out)?;
    if let Some(r) = c.resolution {
        cfg.resolution = r;
    }
    if let Some(h) = c.horizon {
        cfg.horizon = h;
    }
    if let Some(t) = c.target {
        cfg.scene.target = t;
    }
    if !c.starts.is_empty() {
        cfg.starts = c.starts.clone();
    }
    if let Some(m) = c.margin {
        cfg.scene.margin = m;
    }
    if let Some(s) = c.cfl_safety {
        cfg.solver.cfl_safety = s;
    }
    cfg.solver.stride = c.stride.or(cfg.solver.stride);
    if let Some(mb) = c.memory_mb {
        cfg.solver.memory_budget = mb << 20;
    }
    cfg.tracer.delta = c.delta;
    cfg.oversample = c.oversample.unwrap_or(cfg.oversample);
    cfg.frames = c.frames.unwrap_or(cfg.frames);
    cfg.image_size = c.size.unwrap_or(cfg.image_size);
    cfg.validate()?;
    Ok(cfg)
}

fn render(a: &RenderArgs) -> hjb_planner::Result<()> {
    let sf = SceneFile::load(&a.scene)?;
    let paths = a
        .trajectories
        .iter()
        .map(|p| read_trajectory_csv(p))
        .collect::<hjb_planner::Result<Vec<_>>>()?;
    let mut spec = PlotSpec::new(a.times.clone(), a.size);
    spec.trajectories = !a.no_paths;
    spec.footprints = !a.no_footprints;
    for p in render_frames(&a.out, &sf, &paths, &spec)? {
        println!("{}", p.display());
    }
    Ok(())
}

/// `Ok(false)` means the run finished but something failed a check.
fn run(cli: &Cli) -> hjb_planner::Result<bool> {
    match &cli.command {
        Command::Solve(c) => {
            let cfg = config(c)?;
            let (vf, m) = run_solve(&cfg)?;
            if let Some(k) = c.csv_heading {
                let path = cfg.out_dir.join(format!("slice_k{k:03}_n000000.csv"));
                fs::write(&path, slice_csv(&vf, k, 0)?).map_err(|e| Error::io(&path, e))?;
            }
            println!(
                "{} x {} x {} cells, {} steps, dt {:.6}, {:.2}s, reachable {:.4}",
                m.nx, m.ny, m.ntheta, m.nt, m.dt, m.wall_seconds, m.reachable_fraction
            );
            Ok(true)
        }
        Command::Trace(c) => {
            let cfg = config(c)?;
            let (vf, _) = load_or_solve(&cfg)?;
            let outcomes = run_trace(&cfg, &vf)?;
            for o in &outcomes {
                println!(
                    "start {}: arrival {}, valid {}{}",
                    o.index,
                    o.arrival_time.map_or("none".to_string(), |t| format!("{t:.4}")),
                    o.valid,
                    o.note.as_ref().map_or(String::new(), |n| format!(" ({n})"))
                );
            }
            Ok(outcomes.iter().all(|o| o.ok()))
        }
        Command::Verify(c) => {
            let rep = run_verify(&config(c)?)?;
            for check in &rep.checks {
                println!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
            }
            Ok(rep.passed)
        }
        Command::Render(a) => render(a).map(|()| true),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Schema { .. } | Error::Json(_) => 3,
        Error::Io { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
