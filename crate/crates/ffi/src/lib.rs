//! C ABI for the dcmatch library: an opaque matcher handle configured once
//! and reused across frames, plus status codes for error reporting.
//!
//! The generated header lands in `include/dcmatch.h`.  Images are passed as
//! row-major `float` buffers with intensities in `[0, 1]`; disparity and
//! flow results are written into caller-provided buffers of the same
//! layout.
#![allow(clippy::needless_range_loop)]

use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use dcmatch::census::{apply_edge_weights, census_transform, flow_cost_volume, hamming_cost_volume};
use dcmatch::energy::{build_grid_graph, decouple_flow_costs, PenaltyParams};
use dcmatch::io::GrayImage;
use dcmatch::minorant::MinorantKind;
use dcmatch::refine::{refine, DataTerm, RefineOptions};
use dcmatch::solver::{solve, GridProblem, SolverConfig};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcmStatus {
    DcmOk = 0,
    DcmNullArgument = 1,
    DcmInvalidArgument = 2,
    DcmSizeMismatch = 3,
    DcmNumericalFailure = 4,
    DcmPanic = 5,
}

/// Minorant construction used by the discrete solver.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcmMinorant {
    DcmMinorantNaive = 0,
    DcmMinorantUniform = 1,
    DcmMinorantIterative = 2,
    DcmMinorantHierarchical = 3,
}

/// Matcher configuration; fill with `dcm_options_default` first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DcmOptions {
    /// Smallest and largest stereo disparity (inclusive).
    pub disparity_min: i32,
    pub disparity_max: i32,
    /// Flow displacement ranges (inclusive).
    pub flow_x_min: i32,
    pub flow_x_max: i32,
    pub flow_y_min: i32,
    pub flow_y_max: i32,
    /// Truncated penalty: slope near zero, knee location, truncation value.
    pub penalty_epsilon: f64,
    pub penalty_delta: f64,
    pub penalty_trunc: f64,
    /// Census window (odd, >= 3).
    pub census_window: u32,
    /// Full iterations of the dual solver.
    pub discrete_iterations: u32,
    pub minorant: DcmMinorant,
    /// Continuous refinement: warps and iterations per warp (0 disables).
    pub warps: u32,
    pub iterations_per_warp: u32,
    /// Trust radius of the data approximation, in label steps.
    pub trust_radius: f64,
    /// Edge-aware weights `strength * max(w_min, exp(-a |dI|^b))`.
    pub edge_a: f64,
    pub edge_b: f64,
    pub edge_w_min: f64,
    pub regularization_strength: f64,
}

impl DcmOptions {
    fn defaults() -> Self {
        DcmOptions {
            disparity_min: 0,
            disparity_max: 63,
            flow_x_min: -8,
            flow_x_max: 8,
            flow_y_min: -8,
            flow_y_max: 8,
            penalty_epsilon: 0.25,
            penalty_delta: 2.0,
            penalty_trunc: 4.0,
            census_window: 5,
            discrete_iterations: 4,
            minorant: DcmMinorant::DcmMinorantHierarchical,
            warps: 5,
            iterations_per_warp: 40,
            trust_radius: 0.5,
            edge_a: 5.0,
            edge_b: 1.0,
            edge_w_min: 0.05,
            regularization_strength: 4.0,
        }
    }
}

/// Opaque matcher; create with `dcm_matcher_new`, destroy with
/// `dcm_matcher_free`.
pub struct DcmMatcher {
    options: DcmOptions,
    penalty: PenaltyParams,
}

fn minorant_kind(m: DcmMinorant) -> MinorantKind {
    match m {
        DcmMinorant::DcmMinorantNaive => MinorantKind::Naive,
        DcmMinorant::DcmMinorantUniform => MinorantKind::Uniform,
        DcmMinorant::DcmMinorantIterative => MinorantKind::Iterative,
        DcmMinorant::DcmMinorantHierarchical => MinorantKind::Hierarchical,
    }
}

/// Fill `out` with the default configuration.
///
/// # Safety
/// `out` must be null or point to writable memory for one `DcmOptions`.
#[no_mangle]
pub unsafe extern "C" fn dcm_options_default(out: *mut DcmOptions) -> DcmStatus {
    if out.is_null() {
        return DcmStatus::DcmNullArgument;
    }
    unsafe { out.write(DcmOptions::defaults()) };
    DcmStatus::DcmOk
}

/// Validate the options and allocate a matcher.  Returns null when the
/// options are invalid.
///
/// # Safety
/// `options` must be null or point to a valid `DcmOptions`.
#[no_mangle]
pub unsafe extern "C" fn dcm_matcher_new(options: *const DcmOptions) -> *mut DcmMatcher {
    let options = if options.is_null() {
        DcmOptions::defaults()
    } else {
        unsafe { *options }
    };
    let penalty = match PenaltyParams::new(
        options.penalty_epsilon,
        options.penalty_delta,
        options.penalty_trunc,
    ) {
        Ok(p) => p,
        Err(_) => return std::ptr::null_mut(),
    };
    if options.disparity_max < options.disparity_min
        || options.flow_x_max < options.flow_x_min
        || options.flow_y_max < options.flow_y_min
        || options.discrete_iterations == 0
        || options.census_window < 3
        || options.census_window % 2 == 0
        || options.trust_radius <= 0.0
    {
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(DcmMatcher { options, penalty }))
}

/// Release a matcher created by `dcm_matcher_new`.
///
/// # Safety
/// `matcher` must be null or a pointer returned by `dcm_matcher_new` that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn dcm_matcher_free(matcher: *mut DcmMatcher) {
    if !matcher.is_null() {
        drop(unsafe { Box::from_raw(matcher) });
    }
}

unsafe fn image_from_raw(data: *const f32, width: usize, height: usize) -> GrayImage {
    let pixels = unsafe { std::slice::from_raw_parts(data, width * height) };
    GrayImage {
        width,
        height,
        pixels: pixels.to_vec(),
    }
}

fn run_stereo_match(
    m: &DcmMatcher,
    left: &GrayImage,
    right: &GrayImage,
    out: &mut [f32],
) -> Result<(), DcmStatus> {
    let o = &m.options;
    let disparities: Vec<f64> = (o.disparity_min..=o.disparity_max)
        .map(|d| d as f64)
        .collect();
    let cl = census_transform(left, o.census_window as usize)
        .map_err(|_| DcmStatus::DcmInvalidArgument)?;
    let cr = census_transform(right, o.census_window as usize)
        .map_err(|_| DcmStatus::DcmInvalidArgument)?;
    let volume =
        hamming_cost_volume(&cl, &cr, &disparities).map_err(|_| DcmStatus::DcmSizeMismatch)?;
    let mut graph =
        build_grid_graph(left.width, left.height).map_err(|_| DcmStatus::DcmInvalidArgument)?;
    apply_edge_weights(&mut graph, left, o.edge_a, o.edge_b, o.edge_w_min);
    for w in graph.edge_weights.iter_mut() {
        *w *= o.regularization_strength;
    }
    let problem =
        GridProblem::new(&volume, &graph, &m.penalty).map_err(|_| DcmStatus::DcmSizeMismatch)?;
    let sol = solve(
        &problem,
        &SolverConfig {
            iterations: o.discrete_iterations as usize,
            minorant: minorant_kind(o.minorant),
            ..Default::default()
        },
    )
    .map_err(|_| DcmStatus::DcmNumericalFailure)?;
    let mut u: Vec<f64> = sol
        .labeling
        .iter()
        .map(|&l| volume.label_values[l])
        .collect();
    if o.warps > 0 && o.iterations_per_warp > 0 {
        u = refine(
            &u,
            &DataTerm::Stereo(&volume),
            &graph,
            &m.penalty,
            &RefineOptions {
                warps: o.warps as usize,
                iters_per_warp: o.iterations_per_warp as usize,
                trust_radius: o.trust_radius,
                power_iters: 20,
            },
        )
        .map_err(|_| DcmStatus::DcmNumericalFailure)?;
    }
    for (dst, &src) in out.iter_mut().zip(u.iter()) {
        *dst = src as f32;
    }
    Ok(())
}

/// Dense stereo matching.  `left`, `right` and `disparity` are row-major
/// `width * height` buffers; intensities in `[0, 1]`; the disparity of the
/// left view is written in pixels.
///
/// # Safety
/// All pointers must be valid for `width * height` floats; `matcher` must
/// come from `dcm_matcher_new`.
#[no_mangle]
pub unsafe extern "C" fn dcm_matcher_stereo(
    matcher: *const DcmMatcher,
    left: *const f32,
    right: *const f32,
    width: usize,
    height: usize,
    disparity: *mut f32,
) -> DcmStatus {
    if matcher.is_null() || left.is_null() || right.is_null() || disparity.is_null() {
        return DcmStatus::DcmNullArgument;
    }
    if width == 0 || height == 0 {
        return DcmStatus::DcmInvalidArgument;
    }
    let result = catch_unwind(AssertUnwindSafe(|| {
        let m = unsafe { &*matcher };
        let left = unsafe { image_from_raw(left, width, height) };
        let right = unsafe { image_from_raw(right, width, height) };
        let out = unsafe { std::slice::from_raw_parts_mut(disparity, width * height) };
        run_stereo_match(m, &left, &right, out)
    }));
    match result {
        Ok(Ok(())) => DcmStatus::DcmOk,
        Ok(Err(status)) => status,
        Err(_) => DcmStatus::DcmPanic,
    }
}

fn run_flow_match(
    m: &DcmMatcher,
    first: &GrayImage,
    second: &GrayImage,
    out_u: &mut [f32],
    out_v: &mut [f32],
) -> Result<(), DcmStatus> {
    let o = &m.options;
    let range1: Vec<f64> = (o.flow_x_min..=o.flow_x_max).map(|d| d as f64).collect();
    let range2: Vec<f64> = (o.flow_y_min..=o.flow_y_max).map(|d| d as f64).collect();
    let c1 = census_transform(first, o.census_window as usize)
        .map_err(|_| DcmStatus::DcmInvalidArgument)?;
    let c2 = census_transform(second, o.census_window as usize)
        .map_err(|_| DcmStatus::DcmInvalidArgument)?;
    let table =
        flow_cost_volume(&c1, &c2, &range1, &range2).map_err(|_| DcmStatus::DcmSizeMismatch)?;
    let (vol_x, vol_y) = decouple_flow_costs(&table);
    let mut graph =
        build_grid_graph(first.width, first.height).map_err(|_| DcmStatus::DcmInvalidArgument)?;
    apply_edge_weights(&mut graph, first, o.edge_a, o.edge_b, o.edge_w_min);
    for w in graph.edge_weights.iter_mut() {
        *w *= o.regularization_strength;
    }
    let scfg = SolverConfig {
        iterations: o.discrete_iterations as usize,
        minorant: minorant_kind(o.minorant),
        ..Default::default()
    };
    let px = GridProblem::new(&vol_x, &graph, &m.penalty).map_err(|_| DcmStatus::DcmSizeMismatch)?;
    let sx = solve(&px, &scfg).map_err(|_| DcmStatus::DcmNumericalFailure)?;
    let py = GridProblem::new(&vol_y, &graph, &m.penalty).map_err(|_| DcmStatus::DcmSizeMismatch)?;
    let sy = solve(&py, &scfg).map_err(|_| DcmStatus::DcmNumericalFailure)?;
    let n = first.width * first.height;
    let mut u = vec![0.0f64; 2 * n];
    for i in 0..n {
        u[i] = vol_x.label_values[sx.labeling[i]];
        u[n + i] = vol_y.label_values[sy.labeling[i]];
    }
    if o.warps > 0 && o.iterations_per_warp > 0 {
        u = refine(
            &u,
            &DataTerm::Flow(&table),
            &graph,
            &m.penalty,
            &RefineOptions {
                warps: o.warps as usize,
                iters_per_warp: o.iterations_per_warp as usize,
                trust_radius: o.trust_radius,
                power_iters: 20,
            },
        )
        .map_err(|_| DcmStatus::DcmNumericalFailure)?;
    }
    for i in 0..n {
        out_u[i] = u[i] as f32;
        out_v[i] = u[n + i] as f32;
    }
    Ok(())
}

/// Dense optical flow.  Buffers are row-major `width * height` floats; the
/// two flow components are written separately.
///
/// # Safety
/// All pointers must be valid for `width * height` floats; `matcher` must
/// come from `dcm_matcher_new`.
#[no_mangle]
pub unsafe extern "C" fn dcm_matcher_flow(
    matcher: *const DcmMatcher,
    first: *const f32,
    second: *const f32,
    width: usize,
    height: usize,
    flow_x: *mut f32,
    flow_y: *mut f32,
) -> DcmStatus {
    if matcher.is_null()
        || first.is_null()
        || second.is_null()
        || flow_x.is_null()
        || flow_y.is_null()
    {
        return DcmStatus::DcmNullArgument;
    }
    if width == 0 || height == 0 {
        return DcmStatus::DcmInvalidArgument;
    }
    let result = catch_unwind(AssertUnwindSafe(|| {
        let m = unsafe { &*matcher };
        let first = unsafe { image_from_raw(first, width, height) };
        let second = unsafe { image_from_raw(second, width, height) };
        let out_u = unsafe { std::slice::from_raw_parts_mut(flow_x, width * height) };
        let out_v = unsafe { std::slice::from_raw_parts_mut(flow_y, width * height) };
        run_flow_match(m, &first, &second, out_u, out_v)
    }));
    match result {
        Ok(Ok(())) => DcmStatus::DcmOk,
        Ok(Err(status)) => status,
        Err(_) => DcmStatus::DcmPanic,
    }
}

/// Human-readable description of a status code (static storage).
#[no_mangle]
pub extern "C" fn dcm_status_message(status: DcmStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        DcmStatus::DcmOk => b"ok\0",
        DcmStatus::DcmNullArgument => b"null argument\0",
        DcmStatus::DcmInvalidArgument => b"invalid argument\0",
        DcmStatus::DcmSizeMismatch => b"size mismatch\0",
        DcmStatus::DcmNumericalFailure => b"numerical failure\0",
        DcmStatus::DcmPanic => b"internal panic\0",
    };
    s.as_ptr() as *const c_char
}

/// Library version (static storage).
#[no_mangle]
pub extern "C" fn dcm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted_pair(w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
        // deterministic texture with a 2-pixel shift
        let tex = |x: i64, y: i64| -> f32 {
            let x = x.clamp(0, w as i64 - 1) as f64;
            let y = y.clamp(0, h as i64 - 1) as f64;
            ((x * 12.9898 + y * 78.233).sin() * 43758.5453).fract().abs() as f32
        };
        let mut right = vec![0.0f32; w * h];
        let mut left = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                right[y * w + x] = tex(x as i64, y as i64);
                left[y * w + x] = tex(x as i64 - 2, y as i64);
            }
        }
        (left, right)
    }

    #[test]
    fn default_options_round_trip() {
        let mut opts = std::mem::MaybeUninit::<DcmOptions>::uninit();
        assert_eq!(
            unsafe { dcm_options_default(opts.as_mut_ptr()) },
            DcmStatus::DcmOk
        );
        let opts = unsafe { opts.assume_init() };
        assert_eq!(opts.disparity_max, 63);
        assert_eq!(
            unsafe { dcm_options_default(std::ptr::null_mut()) },
            DcmStatus::DcmNullArgument
        );
    }

    #[test]
    fn invalid_options_yield_null_matcher() {
        let mut opts = DcmOptions::defaults();
        opts.penalty_epsilon = 2.0;
        assert!(unsafe { dcm_matcher_new(&opts) }.is_null());
        let mut opts = DcmOptions::defaults();
        opts.disparity_max = -1;
        assert!(unsafe { dcm_matcher_new(&opts) }.is_null());
        let mut opts = DcmOptions::defaults();
        opts.census_window = 4;
        assert!(unsafe { dcm_matcher_new(&opts) }.is_null());
    }

    #[test]
    fn stereo_via_ffi_recovers_shift() {
        let mut opts = DcmOptions::defaults();
        opts.disparity_min = 0;
        opts.disparity_max = 4;
        opts.discrete_iterations = 3;
        opts.warps = 2;
        opts.iterations_per_warp = 10;
        let m = unsafe { dcm_matcher_new(&opts) };
        assert!(!m.is_null());
        let (w, h) = (32usize, 20usize);
        let (left, right) = shifted_pair(w, h);
        let mut disp = vec![0.0f32; w * h];
        let status = unsafe {
            dcm_matcher_stereo(m, left.as_ptr(), right.as_ptr(), w, h, disp.as_mut_ptr())
        };
        assert_eq!(status, DcmStatus::DcmOk);
        let mut errs: Vec<f32> = (4..h - 4)
            .flat_map(|y| (8..w - 4).map(move |x| (y, x)))
            .map(|(y, x)| (disp[y * w + x] - 2.0).abs())
            .collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(errs[errs.len() / 2] < 0.75, "median {}", errs[errs.len() / 2]);
        unsafe { dcm_matcher_free(m) };
    }

    #[test]
    fn flow_via_ffi_runs() {
        let mut opts = DcmOptions::defaults();
        opts.flow_x_min = -3;
        opts.flow_x_max = 3;
        opts.flow_y_min = -2;
        opts.flow_y_max = 2;
        opts.discrete_iterations = 2;
        opts.warps = 1;
        opts.iterations_per_warp = 5;
        let m = unsafe { dcm_matcher_new(&opts) };
        let (w, h) = (20usize, 16usize);
        let (a, b) = shifted_pair(w, h);
        let mut fu = vec![0.0f32; w * h];
        let mut fv = vec![0.0f32; w * h];
        let status = unsafe {
            dcm_matcher_flow(m, a.as_ptr(), b.as_ptr(), w, h, fu.as_mut_ptr(), fv.as_mut_ptr())
        };
        assert_eq!(status, DcmStatus::DcmOk);
        assert!(fu.iter().all(|v| v.is_finite()));
        unsafe { dcm_matcher_free(m) };
    }

    #[test]
    fn null_and_status_paths() {
        let status = unsafe {
            dcm_matcher_stereo(
                std::ptr::null(),
                std::ptr::null(),
                std::ptr::null(),
                4,
                4,
                std::ptr::null_mut(),
            )
        };
        assert_eq!(status, DcmStatus::DcmNullArgument);
        let msg = dcm_status_message(DcmStatus::DcmSizeMismatch);
        let text = unsafe { std::ffi::CStr::from_ptr(msg) }.to_str().unwrap();
        assert_eq!(text, "size mismatch");
        let v = unsafe { std::ffi::CStr::from_ptr(dcm_version()) }
            .to_str()
            .unwrap();
        assert!(!v.is_empty());
        unsafe { dcm_matcher_free(std::ptr::null_mut()) };
    }
}
