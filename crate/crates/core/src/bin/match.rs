//! Command-line frontend: stereo and flow matching plus a convergence
//! benchmark over the discrete solvers.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use dcmatch::minorant::MinorantKind;
use dcmatch::pipeline::{run_bench, run_flow, run_stereo, Mode, RunConfig};
use dcmatch::PenaltyParams;

#[derive(Parser)]
#[command(
    name = "match",
    about = "Dense stereo and optical-flow matching by discrete-continuous optimization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stereo disparity from a rectified image pair.
    Stereo(StereoArgs),
    /// Optical flow from an image pair.
    Flow(FlowArgs),
    /// Convergence benchmark of the dual solvers.
    Bench(BenchArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Penalty slope near zero (0..1).
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    /// Penalty knee location in label units.
    #[arg(long, default_value_t = 2.0)]
    delta: f64,
    /// Penalty truncation value.
    #[arg(long, default_value_t = 4.0)]
    trunc: f64,
    /// Minorant construction: naive, uniform, iterative, hierarchical,
    /// single-node.
    #[arg(long, default_value = "hierarchical")]
    minorant: String,
    /// Full iterations of the discrete dual solver.
    #[arg(long = "dmm-iters", default_value_t = 4)]
    dmm_iters: usize,
    /// Warps of the continuous refinement (0 disables refinement).
    #[arg(long, default_value_t = 5)]
    warps: usize,
    /// Primal-dual iterations per warp.
    #[arg(long = "pd-iters", default_value_t = 40)]
    pd_iters: usize,
    /// Trust radius of the data-term approximation, in label steps.
    #[arg(long = "h", default_value_t = 0.5)]
    trust_radius: f64,
    /// Census window (odd, >= 3).
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Edge-weight falloff `exp(-a |dI|^b)`.
    #[arg(long = "edge-a", default_value_t = 5.0)]
    edge_a: f64,
    #[arg(long = "edge-b", default_value_t = 1.0)]
    edge_b: f64,
    /// Lower clamp of the edge-aware weight.
    #[arg(long = "edge-wmin", default_value_t = 0.05)]
    edge_wmin: f64,
    /// Global multiplier on the regularization weights.
    #[arg(long = "reg-strength", default_value_t = 4.0)]
    reg_strength: f64,
    /// Convergence log CSV path.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Colorized output path (defaults next to --out).
    #[arg(long = "color-out")]
    color_out: Option<PathBuf>,
    /// Report zero in CSV timing columns for byte-reproducible output.
    #[arg(long = "fixed-timing", default_value_t = false)]
    fixed_timing: bool,
}

#[derive(Args)]
struct StereoArgs {
    /// Left (reference) image, binary PGM/PPM.
    #[arg(long)]
    left: PathBuf,
    /// Right image.
    #[arg(long)]
    right: PathBuf,
    /// Smallest disparity.
    #[arg(long, default_value_t = 0)]
    dmin: i64,
    /// Largest disparity.
    #[arg(long, default_value_t = 127)]
    dmax: i64,
    /// Enable the two-side consistency check (solves both views).
    #[arg(long = "lr-check", default_value_t = false)]
    lr_check: bool,
    /// Consistency threshold in disparity units.
    #[arg(long = "lr-threshold", default_value_t = 1.0)]
    lr_threshold: f64,
    /// Output disparity PFM.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct FlowArgs {
    /// First image.
    #[arg(long)]
    left: PathBuf,
    /// Second image.
    #[arg(long)]
    right: PathBuf,
    /// Horizontal displacement range.
    #[arg(long = "fx-min", default_value_t = -8, allow_hyphen_values = true)]
    fx_min: i64,
    #[arg(long = "fx-max", default_value_t = 8, allow_hyphen_values = true)]
    fx_max: i64,
    /// Vertical displacement range.
    #[arg(long = "fy-min", default_value_t = -8, allow_hyphen_values = true)]
    fy_min: i64,
    #[arg(long = "fy-max", default_value_t = 8, allow_hyphen_values = true)]
    fy_max: i64,
    /// Output .flo field.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Optional stereo pair; the built-in synthetic crop is used otherwise.
    #[arg(long)]
    left: Option<PathBuf>,
    #[arg(long)]
    right: Option<PathBuf>,
    /// Crop rectangle `x,y,w,h` on the provided images.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    crop: Option<Vec<usize>>,
    /// Label count for the benchmark cost volume.
    #[arg(long, default_value_t = 16)]
    labels: usize,
    /// Iterations per solver (equal per-pixel update budgets).
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Comma-separated minorant kinds to benchmark.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "naive,uniform,iterative,hierarchical"
    )]
    minorants: Vec<String>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

fn apply_common(cfg: &mut RunConfig, c: &CommonArgs) -> dcmatch::Result<()> {
    cfg.penalty = PenaltyParams::new(c.eps, c.delta, c.trunc)?;
    cfg.minorant = MinorantKind::parse(&c.minorant)?;
    cfg.dmm_iters = c.dmm_iters;
    cfg.warps = c.warps;
    cfg.pd_iters = c.pd_iters;
    cfg.trust_radius = c.trust_radius;
    cfg.census_window = c.window;
    cfg.edge_a = c.edge_a;
    cfg.edge_b = c.edge_b;
    cfg.edge_wmin = c.edge_wmin;
    cfg.reg_strength = c.reg_strength;
    cfg.log = c.log.clone();
    cfg.color_out = c.color_out.clone();
    cfg.fixed_timing = c.fixed_timing;
    Ok(())
}

fn build_config(command: &Command) -> dcmatch::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    match command {
        Command::Stereo(a) => {
            cfg.mode = Mode::Stereo;
            cfg.left = a.left.clone();
            cfg.right = a.right.clone();
            cfg.dmin = a.dmin;
            cfg.dmax = a.dmax;
            cfg.lr_check = a.lr_check;
            cfg.lr_threshold = a.lr_threshold;
            cfg.out = a.out.clone();
            apply_common(&mut cfg, &a.common)?;
        }
        Command::Flow(a) => {
            cfg.mode = Mode::Flow;
            cfg.left = a.left.clone();
            cfg.right = a.right.clone();
            cfg.fx = (a.fx_min, a.fx_max);
            cfg.fy = (a.fy_min, a.fy_max);
            cfg.out = a.out.clone();
            apply_common(&mut cfg, &a.common)?;
        }
        Command::Bench(a) => {
            cfg.mode = Mode::Bench;
            if let (Some(l), Some(r)) = (&a.left, &a.right) {
                cfg.left = l.clone();
                cfg.right = r.clone();
            }
            if let Some(c) = &a.crop {
                cfg.crop = Some((c[0], c[1], c[2], c[3]));
            }
            cfg.bench_labels = a.labels;
            cfg.bench_iters = a.iters;
            cfg.bench_minorants = a
                .minorants
                .iter()
                .map(|s| MinorantKind::parse(s))
                .collect::<dcmatch::Result<_>>()?;
            cfg.out = a.out.clone();
            apply_common(&mut cfg, &a.common)?;
            // default to the figure instance's truncated linear penalty when
            // the generic penalty flags were left untouched
            if a.common.eps == 0.25 && a.common.delta == 2.0 && a.common.trunc == 4.0 {
                cfg.penalty = PenaltyParams::truncated_linear(2.0);
            }
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let cfg = match build_config(&cli.command) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let outcome = match cfg.mode {
        Mode::Stereo => run_stereo(&cfg),
        Mode::Flow => run_flow(&cfg),
        Mode::Bench => run_bench(&cfg).map(|_| ()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
