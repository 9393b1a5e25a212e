//! End-to-end stereo, flow and benchmark runs behind the `match` binary:
//! data-cost construction, discrete solve, continuous refinement, output
//! files and convergence logs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::census::{apply_edge_weights, census_transform, flow_cost_volume, hamming_cost_volume};
use crate::energy::{
    build_grid_graph, decouple_flow_costs, CostVolume, GridGraph, PenaltyParams,
};
use crate::error::{Error, Result};
use crate::io::{
    colorize_disparity, colorize_flow, read_image, write_flo, write_pfm, write_pgm, write_ppm,
    GrayImage,
};
use crate::minorant::{MinorantKind, MinorantParams};
use crate::refine::{refine, DataTerm, RefineOptions};
use crate::solver::{solve, GridProblem, Method, RoundingPolicy, SolverConfig, Solution};

/// Pipeline mode selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Stereo,
    Flow,
    Bench,
}

/// Full configuration of one pipeline run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub left: PathBuf,
    pub right: PathBuf,
    /// Disparity range for stereo (inclusive).
    pub dmin: i64,
    pub dmax: i64,
    /// Flow displacement ranges per component (inclusive).
    pub fx: (i64, i64),
    pub fy: (i64, i64),
    pub penalty: PenaltyParams,
    /// Edge-weight map `strength * max(w_min, exp(-a |dI|^b))`.
    pub edge_a: f64,
    pub edge_b: f64,
    pub edge_wmin: f64,
    pub reg_strength: f64,
    pub census_window: usize,
    pub dmm_iters: usize,
    pub minorant: MinorantKind,
    pub warps: usize,
    pub pd_iters: usize,
    pub trust_radius: f64,
    pub lr_check: bool,
    pub lr_threshold: f64,
    pub out: PathBuf,
    pub color_out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    /// Benchmark instance: crop rectangle on provided images.
    pub crop: Option<(usize, usize, usize, usize)>,
    pub bench_labels: usize,
    pub bench_iters: usize,
    pub bench_minorants: Vec<MinorantKind>,
    /// Report zero in the CSV timing column for byte-reproducible output.
    pub fixed_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Stereo,
            left: PathBuf::new(),
            right: PathBuf::new(),
            dmin: 0,
            dmax: 63,
            fx: (-8, 8),
            fy: (-8, 8),
            penalty: PenaltyParams {
                epsilon: 0.25,
                delta: 2.0,
                trunc: 4.0,
            },
            edge_a: 5.0,
            edge_b: 1.0,
            edge_wmin: 0.05,
            reg_strength: 4.0,
            census_window: 5,
            dmm_iters: 4,
            minorant: MinorantKind::Hierarchical,
            warps: 5,
            pd_iters: 40,
            trust_radius: 0.5,
            lr_check: false,
            lr_threshold: 1.0,
            out: PathBuf::from("out.pfm"),
            color_out: None,
            log: None,
            crop: None,
            bench_labels: 16,
            bench_iters: 20,
            bench_minorants: vec![
                MinorantKind::Naive,
                MinorantKind::Uniform,
                MinorantKind::Iterative,
                MinorantKind::Hierarchical,
            ],
            fixed_timing: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        if self.dmax < self.dmin {
            return Err(Error::Argument(format!(
                "empty disparity range [{}, {}]",
                self.dmin, self.dmax
            )));
        }
        if self.fx.1 < self.fx.0 || self.fy.1 < self.fy.0 {
            return Err(Error::Argument("empty flow range".into()));
        }
        if self.dmm_iters == 0 {
            return Err(Error::Argument("discrete iterations must be >= 1".into()));
        }
        if self.mode == Mode::Bench && self.bench_iters == 0 {
            return Err(Error::Argument("bench iterations must be >= 1".into()));
        }
        if self.trust_radius <= 0.0 {
            return Err(Error::Argument("trust radius must be > 0".into()));
        }
        Ok(())
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            method: Method::DualMM,
            iterations: self.dmm_iters,
            minorant: self.minorant,
            minorant_params: MinorantParams::default(),
            stop_tol: None,
            rounding: RoundingPolicy::BestEnergy,
        }
    }

    fn refine_options(&self) -> RefineOptions {
        RefineOptions {
            warps: self.warps,
            iters_per_warp: self.pd_iters,
            trust_radius: self.trust_radius,
            power_iters: 20,
        }
    }
}

/// One row of the convergence log.
#[derive(Debug, Clone)]
pub struct CsvRow {
    pub solver: String,
    pub iter: usize,
    pub lower_bound: f64,
    pub primal_energy: f64,
    pub millis: u64,
}

pub const CSV_HEADER: &str = "solver,iter,lower_bound,primal_energy,millis";

fn rows_from_solution(name: &str, sol: &Solution, fixed_timing: bool) -> Vec<CsvRow> {
    (0..sol.bound_history.len())
        .map(|i| CsvRow {
            solver: name.to_string(),
            iter: i + 1,
            lower_bound: sol.bound_history[i],
            primal_energy: sol.energy_history[i],
            millis: if fixed_timing { 0 } else { sol.iter_millis[i] },
        })
        .collect()
}

/// Render rows under the fixed header.
pub fn csv_string(rows: &[CsvRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.solver, r.iter, r.lower_bound, r.primal_energy, r.millis
        );
    }
    s
}

fn write_log(path: &Path, rows: &[CsvRow]) -> Result<()> {
    std::fs::write(path, csv_string(rows)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    let mut p = path.to_path_buf();
    p.set_extension(ext);
    p
}

fn build_graph_with_weights(cfg: &RunConfig, reference: &GrayImage) -> Result<GridGraph> {
    let mut graph = build_grid_graph(reference.width, reference.height)?;
    apply_edge_weights(&mut graph, reference, cfg.edge_a, cfg.edge_b, cfg.edge_wmin);
    for w in graph.edge_weights.iter_mut() {
        *w *= cfg.reg_strength;
    }
    Ok(graph)
}

/// Discrete solve plus continuous refinement of one stereo view.
/// Disparities are the `label_values` of the volume; the continuous result
/// is returned in those units.
fn stereo_view(
    cfg: &RunConfig,
    reference: &GrayImage,
    other: &GrayImage,
    disparities: &[f64],
    solver_label: &str,
) -> Result<(Vec<f64>, Vec<CsvRow>)> {
    let cl = census_transform(reference, cfg.census_window)?;
    let cr = census_transform(other, cfg.census_window)?;
    let volume = hamming_cost_volume(&cl, &cr, disparities)?;
    let graph = build_graph_with_weights(cfg, reference)?;
    let problem = GridProblem::new(&volume, &graph, &cfg.penalty)?;
    let sol = solve(&problem, &cfg.solver_config())?;
    let rows = rows_from_solution(solver_label, &sol, cfg.fixed_timing);
    let mut u: Vec<f64> = sol
        .labeling
        .iter()
        .map(|&l| volume.label_values[l])
        .collect();
    if cfg.warps > 0 && cfg.pd_iters > 0 {
        u = refine(
            &u,
            &DataTerm::Stereo(&volume),
            &graph,
            &cfg.penalty,
            &cfg.refine_options(),
        )?;
    }
    Ok((u, rows))
}

/// Stereo pipeline: Census costs, dual solve, refinement, optional
/// left-right consistency check, PFM + colorized + CSV outputs.
pub fn run_stereo(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let left = read_image(&cfg.left)?;
    let right = read_image(&cfg.right)?;
    if left.width != right.width || left.height != right.height {
        return Err(Error::Dimension(format!(
            "left {}x{} vs right {}x{}",
            left.width, left.height, right.width, right.height
        )));
    }
    let disparities: Vec<f64> = (cfg.dmin..=cfg.dmax).map(|d| d as f64).collect();
    let name = format!("dmm-{}", cfg.minorant.name());
    let (d_left, mut rows) = stereo_view(cfg, &left, &right, &disparities, &name)?;

    let mut field: Vec<f32> = d_left.iter().map(|&v| v as f32).collect();
    if cfg.lr_check {
        // right-reference disparities are negated so that label values stay
        // increasing; d_right = -u_right
        let neg: Vec<f64> = (cfg.dmin..=cfg.dmax).rev().map(|d| -(d as f64)).collect();
        let (u_right, rows_r) = stereo_view(cfg, &right, &left, &neg, &format!("{name}-right"))?;
        rows.extend(rows_r);
        let w = left.width as i64;
        for y in 0..left.height {
            for x in 0..left.width {
                let i = y * left.width + x;
                let dl = d_left[i];
                let xr = (x as f64 - dl).round() as i64;
                let ok = xr >= 0 && xr < w && {
                    let dr = -u_right[y * left.width + xr as usize];
                    (dl - dr).abs() <= cfg.lr_threshold
                };
                if !ok {
                    field[i] = f32::NEG_INFINITY;
                }
            }
        }
    }

    write_pfm(&cfg.out, left.width, left.height, &field)?;
    let color_path = cfg
        .color_out
        .clone()
        .unwrap_or_else(|| with_extension(&cfg.out, "pgm"));
    let gray = colorize_disparity(&field, cfg.dmin as f64, cfg.dmax as f64);
    write_pgm(&color_path, left.width, left.height, &gray)?;
    if let Some(log) = &cfg.log {
        write_log(log, &rows)?;
    }
    Ok(())
}

/// Flow pipeline: 2-D Census cost table, per-component decoupled discrete
/// solves, joint continuous refinement, `.flo` + color-wheel + CSV outputs.
pub fn run_flow(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let first = read_image(&cfg.left)?;
    let second = read_image(&cfg.right)?;
    if first.width != second.width || first.height != second.height {
        return Err(Error::Dimension(format!(
            "first {}x{} vs second {}x{}",
            first.width, first.height, second.width, second.height
        )));
    }
    let range1: Vec<f64> = (cfg.fx.0..=cfg.fx.1).map(|d| d as f64).collect();
    let range2: Vec<f64> = (cfg.fy.0..=cfg.fy.1).map(|d| d as f64).collect();
    let c1 = census_transform(&first, cfg.census_window)?;
    let c2 = census_transform(&second, cfg.census_window)?;
    let table = flow_cost_volume(&c1, &c2, &range1, &range2)?;
    let (vol_x, vol_y) = decouple_flow_costs(&table);
    let graph = build_graph_with_weights(cfg, &first)?;

    let scfg = cfg.solver_config();
    let name = format!("dmm-{}", cfg.minorant.name());
    let problem_x = GridProblem::new(&vol_x, &graph, &cfg.penalty)?;
    let sol_x = solve(&problem_x, &scfg)?;
    let problem_y = GridProblem::new(&vol_y, &graph, &cfg.penalty)?;
    let sol_y = solve(&problem_y, &scfg)?;
    let mut rows = rows_from_solution(&format!("{name}-u1"), &sol_x, cfg.fixed_timing);
    rows.extend(rows_from_solution(&format!("{name}-u2"), &sol_y, cfg.fixed_timing));

    let n = first.width * first.height;
    let mut u = vec![0.0f64; 2 * n];
    for i in 0..n {
        u[i] = vol_x.label_values[sol_x.labeling[i]];
        u[n + i] = vol_y.label_values[sol_y.labeling[i]];
    }
    if cfg.warps > 0 && cfg.pd_iters > 0 {
        u = refine(
            &u,
            &DataTerm::Flow(&table),
            &graph,
            &cfg.penalty,
            &cfg.refine_options(),
        )?;
    }
    let uf: Vec<f32> = u[..n].iter().map(|&v| v as f32).collect();
    let vf: Vec<f32> = u[n..].iter().map(|&v| v as f32).collect();
    write_flo(&cfg.out, first.width, first.height, &uf, &vf)?;
    let color_path = cfg
        .color_out
        .clone()
        .unwrap_or_else(|| with_extension(&cfg.out, "ppm"));
    let max_mag = (cfg.fx.0.abs().max(cfg.fx.1.abs()) as f64)
        .hypot(cfg.fy.0.abs().max(cfg.fy.1.abs()) as f64)
        .max(1.0);
    let rgb = colorize_flow(&uf, &vf, max_mag);
    write_ppm(&color_path, first.width, first.height, &rgb)?;
    if let Some(log) = &cfg.log {
        write_log(log, &rows)?;
    }
    Ok(())
}

/// Benchmark instance: Census cost volume, weighted graph and penalty.
pub struct BenchInstance {
    pub volume: CostVolume,
    pub graph: GridGraph,
    pub params: PenaltyParams,
}

/// The built-in convergence instance: a synthetic stereo crop of 40x40
/// pixels with 16 labels under truncated linear regularization.
pub fn bench_default_instance(seed: u64) -> BenchInstance {
    let (left, right, _gt) = synthetic_stereo_pair(48, 48, seed, (4.0, 0.12, 0.05));
    let cl = census_transform(&left, 5).expect("valid window");
    let cr = census_transform(&right, 5).expect("valid window");
    let disparities: Vec<f64> = (0..16).map(|d| d as f64).collect();
    let volume = hamming_cost_volume(&cl, &cr, &disparities).expect("same size");
    let volume = crop_volume(&volume, 4, 4, 40, 40);
    let mut graph = build_grid_graph(40, 40).expect("valid dims");
    let cropped = crop_image(&left, 4, 4, 40, 40);
    apply_edge_weights(&mut graph, &cropped, 5.0, 1.0, 0.05);
    for w in graph.edge_weights.iter_mut() {
        *w *= 4.0;
    }
    BenchInstance {
        volume,
        graph,
        params: PenaltyParams::truncated_linear(2.0),
    }
}

fn crop_image(img: &GrayImage, x0: usize, y0: usize, w: usize, h: usize) -> GrayImage {
    let mut out = GrayImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, img.get(x0 + x, y0 + y));
        }
    }
    out
}

fn crop_volume(vol: &CostVolume, x0: usize, y0: usize, w: usize, h: usize) -> CostVolume {
    let mut out = CostVolume::new(w, h, vol.labels).expect("valid dims");
    out.label_values = vol.label_values.clone();
    for y in 0..h {
        for x in 0..w {
            let src = (y0 + y) * vol.width + (x0 + x);
            let dst = y * w + x;
            out.costs[dst * vol.labels..(dst + 1) * vol.labels]
                .copy_from_slice(&vol.costs[src * vol.labels..(src + 1) * vol.labels]);
        }
    }
    out
}

/// Benchmark: run TRW-S and DMM with each configured minorant for the same
/// per-pixel update budget and emit the convergence CSV to `cfg.out`.
pub fn run_bench(cfg: &RunConfig) -> Result<Vec<CsvRow>> {
    cfg.validate()?;
    let instance = if cfg.left.as_os_str().is_empty() {
        bench_default_instance(7)
    } else {
        let left = read_image(&cfg.left)?;
        let right = read_image(&cfg.right)?;
        if left.width != right.width || left.height != right.height {
            return Err(Error::Dimension("bench image sizes differ".into()));
        }
        let cl = census_transform(&left, cfg.census_window)?;
        let cr = census_transform(&right, cfg.census_window)?;
        let disparities: Vec<f64> = (0..cfg.bench_labels as i64).map(|d| d as f64).collect();
        let volume = hamming_cost_volume(&cl, &cr, &disparities)?;
        let (x0, y0, w, h) = cfg
            .crop
            .unwrap_or((0, 0, left.width, left.height));
        if x0 + w > left.width || y0 + h > left.height {
            return Err(Error::Argument("crop rectangle exceeds the image".into()));
        }
        let volume = crop_volume(&volume, x0, y0, w, h);
        let cropped = crop_image(&left, x0, y0, w, h);
        let mut graph = build_grid_graph(w, h)?;
        apply_edge_weights(&mut graph, &cropped, cfg.edge_a, cfg.edge_b, cfg.edge_wmin);
        for wgt in graph.edge_weights.iter_mut() {
            *wgt *= cfg.reg_strength;
        }
        BenchInstance {
            volume,
            graph,
            params: cfg.penalty,
        }
    };
    let problem = GridProblem::new(&instance.volume, &instance.graph, &instance.params)?;
    let mut rows = Vec::new();
    let trws = solve(
        &problem,
        &SolverConfig {
            method: Method::Trws,
            iterations: cfg.bench_iters,
            ..Default::default()
        },
    )?;
    rows.extend(rows_from_solution("trws", &trws, cfg.fixed_timing));
    for &kind in &cfg.bench_minorants {
        let sol = solve(
            &problem,
            &SolverConfig {
                method: Method::DualMM,
                iterations: cfg.bench_iters,
                minorant: kind,
                ..Default::default()
            },
        )?;
        rows.extend(rows_from_solution(
            &format!("dmm-{}", kind.name()),
            &sol,
            cfg.fixed_timing,
        ));
    }
    write_log(&cfg.out, &rows)?;
    Ok(rows)
}

/// Smooth random texture in `[0, 1]`: two bilinearly upsampled noise
/// octaves, deterministic in the seed.
pub fn synthetic_texture(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = GrayImage::new(width, height);
    let octave = |rng: &mut ChaCha8Rng, cell: usize| -> Vec<f32> {
        let gw = width / cell + 3;
        let gh = height / cell + 3;
        let grid: Vec<f32> = (0..gw * gh).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut out = vec![0.0f32; width * height];
        for y in 0..height {
            for x in 0..width {
                let fx = x as f32 / cell as f32;
                let fy = y as f32 / cell as f32;
                let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
                let (tx, ty) = (fx - ix as f32, fy - iy as f32);
                let g = |gx: usize, gy: usize| grid[gy * gw + gx];
                let top = g(ix, iy) * (1.0 - tx) + g(ix + 1, iy) * tx;
                let bot = g(ix, iy + 1) * (1.0 - tx) + g(ix + 1, iy + 1) * tx;
                out[y * width + x] = top * (1.0 - ty) + bot * ty;
            }
        }
        out
    };
    let coarse = octave(&mut rng, 7);
    let fine = octave(&mut rng, 2);
    for i in 0..width * height {
        img.pixels[i] = (0.55 * coarse[i] + 0.45 * fine[i]).clamp(0.0, 1.0);
    }
    img
}

/// Bilinear sample with border replication.
pub fn sample_bilinear(img: &GrayImage, x: f64, y: f64) -> f32 {
    let ix = x.floor();
    let iy = y.floor();
    let tx = (x - ix) as f32;
    let ty = (y - iy) as f32;
    let (ix, iy) = (ix as i64, iy as i64);
    let g = |dx: i64, dy: i64| img.get_clamped(ix + dx, iy + dy);
    let top = g(0, 0) * (1.0 - tx) + g(1, 0) * tx;
    let bot = g(0, 1) * (1.0 - tx) + g(1, 1) * tx;
    top * (1.0 - ty) + bot * ty
}

/// Rectified synthetic stereo pair over a slanted disparity plane
/// `d(x, y) = a + b*x + c*y` with non-integer disparities.  The right image
/// is the texture itself; the left image samples it shifted by the plane.
/// Returns `(left, right, ground_truth)`.
pub fn synthetic_stereo_pair(
    width: usize,
    height: usize,
    seed: u64,
    plane: (f64, f64, f64),
) -> (GrayImage, GrayImage, Vec<f64>) {
    let right = synthetic_texture(width, height, seed);
    let mut left = GrayImage::new(width, height);
    let mut gt = vec![0.0f64; width * height];
    for y in 0..height {
        for x in 0..width {
            let d = plane.0 + plane.1 * x as f64 + plane.2 * y as f64;
            gt[y * width + x] = d;
            left.set(x, y, sample_bilinear(&right, x as f64 - d, y as f64));
        }
    }
    (left, right, gt)
}
