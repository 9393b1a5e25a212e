//! Continuous refinement of the discrete solution.
//!
//! The truncated penalty is split into a difference of convex ramps,
//! `r = r_plus - r_minus`, and the energy is minimized by a primal-dual
//! scheme with a non-linear operator: the bilinear coupling `<Au, q>` moves
//! into the operator alongside a dummy dual variable fixed at 1.  Primal
//! variables are the solution `u` and the minus-part dual `q`; the dual
//! variable is the plus-part dual `p` (box-constrained per edge).  Data
//! terms enter through pointwise proximal maps of local convex models
//! rebuilt at every warp.

use crate::energy::{CostVolume, FlowCostVolume2D, GridGraph, PenaltyParams};
use crate::error::{Error, Result};

/// One convex ramp `r_{alpha,beta}`: slope `alpha` up to `beta`, slope 1
/// beyond (continuous at the knee).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampParams {
    pub alpha: f64,
    pub beta: f64,
}

impl RampParams {
    pub fn value(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= self.beta {
            self.alpha * a
        } else {
            a - self.beta * (1.0 - self.alpha)
        }
    }

    /// Convex conjugate of `omega * r_{alpha,beta}` at `s`:
    /// `0` on `|s| <= omega*alpha`, `beta*(|s| - omega*alpha)` up to
    /// `|s| = omega`, infinite beyond.
    pub fn conjugate(&self, omega: f64, s: f64) -> f64 {
        let a = s.abs();
        if a > omega + 1e-12 {
            f64::INFINITY
        } else {
            (self.beta * (a - omega * self.alpha)).max(0.0)
        }
    }
}

/// Difference-of-convex split of the truncated penalty:
/// `r = r_{eps,delta} - r_{0, C + delta - eps*delta}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcSplit {
    pub plus: RampParams,
    pub minus: RampParams,
}

/// Split the truncated penalty into its two convex ramps.
pub fn dc_decompose(params: &PenaltyParams) -> DcSplit {
    DcSplit {
        plus: RampParams {
            alpha: params.epsilon,
            beta: params.delta,
        },
        minus: RampParams {
            alpha: 0.0,
            beta: params.saturation_point(),
        },
    }
}

/// Proximal point of the `step`-scaled conjugate of `omega * r_{alpha,beta}`:
/// identity inside `|t| <= alpha*omega`, soft shrink by `beta*step` toward
/// that plateau, then clamp to `[-omega, omega]`.
pub fn prox_conjugate_ramp(t_hat: f64, omega: f64, ramp: &RampParams, step: f64) -> f64 {
    let ao = ramp.alpha * omega;
    let t = if t_hat.abs() <= ao {
        t_hat
    } else {
        ao.max(t_hat.abs() - ramp.beta * step) * t_hat.signum()
    };
    t.clamp(-omega, omega)
}

/// Dual update of the plus part (variable `p`).
pub fn prox_p(t_hat: f64, omega: f64, plus: &RampParams, sigma: f64) -> f64 {
    prox_conjugate_ramp(t_hat, omega, plus, sigma)
}

/// Dual update of the minus part (variable `q`); the minus ramp has
/// `alpha = 0`, so the plateau degenerates to the origin.
pub fn prox_q(q_hat: f64, omega: f64, minus: &RampParams, tau: f64) -> f64 {
    prox_conjugate_ramp(q_hat, omega, minus, tau)
}

/// `A u` per edge and component (`u_i - u_j`, `i` the left/top endpoint),
/// plus the scalar second operator component `s = -<Au, q>`.
pub fn nonlinear_op_apply(
    u: &[f64],
    q: &[f64],
    graph: &GridGraph,
    components: usize,
) -> (Vec<f64>, f64) {
    let n = graph.num_pixels();
    let ne = graph.edges.len();
    let mut au = vec![0.0; components * ne];
    let mut s = 0.0;
    for c in 0..components {
        for (e, &(i, j)) in graph.edges.iter().enumerate() {
            let v = u[c * n + i] - u[c * n + j];
            au[c * ne + e] = v;
            s -= v * q[c * ne + e];
        }
    }
    (au, s)
}

/// `[grad A(x)]^T y` for `y = (p, d)`: returns
/// `(A^T p - d * A^T q, -d * A u)` laid out per variable.
pub fn nonlinear_op_gradient_adjoint(
    u: &[f64],
    q: &[f64],
    p: &[f64],
    d_dummy: f64,
    graph: &GridGraph,
    components: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = graph.num_pixels();
    let ne = graph.edges.len();
    let mut grad_u = vec![0.0; components * n];
    let mut grad_q = vec![0.0; components * ne];
    for c in 0..components {
        for (e, &(i, j)) in graph.edges.iter().enumerate() {
            let z = p[c * ne + e] - d_dummy * q[c * ne + e];
            grad_u[c * n + i] += z;
            grad_u[c * n + j] -= z;
            grad_q[c * ne + e] = -d_dummy * (u[c * n + i] - u[c * n + j]);
        }
    }
    (grad_u, grad_q)
}

/// Jacobian of the non-linear operator applied to a direction
/// `(v_u, v_q)`: `(A v_u, -<A v_u, q> - <A u, v_q>)`.
fn jacobian_apply(
    u: &[f64],
    q: &[f64],
    v_u: &[f64],
    v_q: &[f64],
    graph: &GridGraph,
    components: usize,
) -> (Vec<f64>, f64) {
    let n = graph.num_pixels();
    let ne = graph.edges.len();
    let mut top = vec![0.0; components * ne];
    let mut bottom = 0.0;
    for c in 0..components {
        for (e, &(i, j)) in graph.edges.iter().enumerate() {
            let av = v_u[c * n + i] - v_u[c * n + j];
            top[c * ne + e] = av;
            bottom -= av * q[c * ne + e];
            bottom -= (u[c * n + i] - u[c * n + j]) * v_q[c * ne + e];
        }
    }
    (top, bottom)
}

/// Operator norm estimate of the Jacobian at `(u, q)` by power iteration.
pub fn estimate_op_norm(
    u: &[f64],
    q: &[f64],
    graph: &GridGraph,
    components: usize,
    iters: usize,
) -> f64 {
    let n = graph.num_pixels();
    let ne = graph.edges.len();
    let dim_u = components * n;
    let dim_q = components * ne;
    let mut v_u: Vec<f64> = (0..dim_u)
        .map(|i| 1.0 + 0.01 * ((i % 7) as f64))
        .collect();
    let mut v_q: Vec<f64> = (0..dim_q)
        .map(|i| 1.0 - 0.01 * ((i % 5) as f64))
        .collect();
    let mut norm_est = 0.0;
    for _ in 0..iters.max(1) {
        let scale = (v_u.iter().chain(v_q.iter()).map(|x| x * x).sum::<f64>()).sqrt();
        if scale < 1e-300 {
            return 0.0;
        }
        v_u.iter_mut().for_each(|x| *x /= scale);
        v_q.iter_mut().for_each(|x| *x /= scale);
        let (top, bottom) = jacobian_apply(u, q, &v_u, &v_q, graph, components);
        norm_est = (top.iter().map(|x| x * x).sum::<f64>() + bottom * bottom).sqrt();
        // pull back: (v_u, v_q) = J^T (top, bottom)
        let (gu, gq) = nonlinear_op_gradient_adjoint_scaled(u, &top, bottom, graph, components, q);
        v_u = gu;
        v_q = gq;
    }
    norm_est
}

fn nonlinear_op_gradient_adjoint_scaled(
    u: &[f64],
    y_p: &[f64],
    y_d: f64,
    graph: &GridGraph,
    components: usize,
    q: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    nonlinear_op_gradient_adjoint(u, q, y_p, y_d, graph, components)
}

/// Piecewise-linear convex model of a stereo data term around per-pixel
/// anchors: left slope `s1`, right slope `s2` (convexified so `s1 <= s2`),
/// valid within the trust radius `h`.
#[derive(Debug, Clone)]
pub struct StereoApprox {
    pub anchor: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub h: f64,
    /// Pixels whose anchor had to be clamped into the sampled label range.
    pub clamped: Vec<bool>,
}

/// Build the two-slope model at the current solution by difference
/// quotients of the interpolated cost volume; slopes are averaged when the
/// local shape is concave.
pub fn build_stereo_approx(volume: &CostVolume, u: &[f64], h: f64) -> Result<StereoApprox> {
    if h <= 0.0 {
        return Err(Error::Argument(format!("trust radius must be > 0, got {h}")));
    }
    let n = volume.width * volume.height;
    if u.len() != n {
        return Err(Error::Dimension(format!(
            "u length {} vs {} pixels",
            u.len(),
            n
        )));
    }
    let lo = volume.label_values[0];
    let hi = volume.label_values[volume.labels - 1];
    let mut approx = StereoApprox {
        anchor: vec![0.0; n],
        s1: vec![0.0; n],
        s2: vec![0.0; n],
        h,
        clamped: vec![false; n],
    };
    for i in 0..n {
        let anchor = u[i].clamp(lo, hi);
        approx.clamped[i] = anchor != u[i];
        let d0 = volume.sample(i, anchor);
        let dl = volume.sample(i, anchor - h);
        let dr = volume.sample(i, anchor + h);
        let mut s1 = (d0 - dl) / h;
        let mut s2 = (dr - d0) / h;
        if s2 < s1 {
            let m = 0.5 * (s1 + s2);
            s1 = m;
            s2 = m;
        }
        approx.anchor[i] = anchor;
        approx.s1[i] = s1;
        approx.s2[i] = s2;
    }
    Ok(approx)
}

/// Pointwise soft-threshold prox of the two-slope model, clamped to the
/// trust region `[anchor - h, anchor + h]`.
pub fn prox_data_stereo(u_hat: f64, anchor: f64, s1: f64, s2: f64, h: f64, tau: f64) -> f64 {
    let u = if u_hat > anchor + tau * s2 {
        u_hat - tau * s2
    } else if u_hat < anchor + tau * s1 {
        u_hat - tau * s1
    } else {
        anchor
    };
    u.clamp(anchor - h, anchor + h)
}

/// Quadratic convex model of a flow data term: gradient `l`, positive
/// semidefinite Hessian `(qxx, qxy, qyy)` per pixel, trust radius `h`.
#[derive(Debug, Clone)]
pub struct FlowApprox {
    pub anchor: Vec<[f64; 2]>,
    pub grad: Vec<[f64; 2]>,
    pub hess: Vec<[f64; 3]>,
    pub h: f64,
    pub clamped: Vec<bool>,
}

/// Finite-difference gradient and Hessian of the bilinearly interpolated
/// 2-D cost table, with the Hessian projected to its positive-semidefinite
/// part.
pub fn build_flow_approx(vol2d: &FlowCostVolume2D, u: &[f64], h: f64) -> Result<FlowApprox> {
    if h <= 0.0 {
        return Err(Error::Argument(format!("trust radius must be > 0, got {h}")));
    }
    let n = vol2d.width * vol2d.height;
    if u.len() != 2 * n {
        return Err(Error::Dimension(format!(
            "u length {} vs 2*{} components",
            u.len(),
            n
        )));
    }
    let lo1 = vol2d.label_values1[0];
    let hi1 = vol2d.label_values1[vol2d.labels1 - 1];
    let lo2 = vol2d.label_values2[0];
    let hi2 = vol2d.label_values2[vol2d.labels2 - 1];
    let mut approx = FlowApprox {
        anchor: vec![[0.0; 2]; n],
        grad: vec![[0.0; 2]; n],
        hess: vec![[0.0; 3]; n],
        h,
        clamped: vec![false; n],
    };
    for i in 0..n {
        let a1 = u[i].clamp(lo1, hi1);
        let a2 = u[n + i].clamp(lo2, hi2);
        approx.clamped[i] = a1 != u[i] || a2 != u[n + i];
        let d = |x: f64, y: f64| vol2d.sample(i, a1 + x, a2 + y);
        let d0 = d(0.0, 0.0);
        let l1 = (d(h, 0.0) - d(-h, 0.0)) / (2.0 * h);
        let l2 = (d(0.0, h) - d(0.0, -h)) / (2.0 * h);
        let qxx = (d(h, 0.0) - 2.0 * d0 + d(-h, 0.0)) / (h * h);
        let qyy = (d(0.0, h) - 2.0 * d0 + d(0.0, -h)) / (h * h);
        let qxy = (d(h, h) - d(h, -h) - d(-h, h) + d(-h, -h)) / (4.0 * h * h);
        let (qxx, qxy, qyy) = project_psd(qxx, qxy, qyy);
        approx.anchor[i] = [a1, a2];
        approx.grad[i] = [l1, l2];
        approx.hess[i] = [qxx, qxy, qyy];
    }
    Ok(approx)
}

/// Project a symmetric 2x2 matrix onto the PSD cone by clipping negative
/// eigenvalues at zero.
fn project_psd(qxx: f64, qxy: f64, qyy: f64) -> (f64, f64, f64) {
    let tr = qxx + qyy;
    let det_disc = ((qxx - qyy) * 0.5).hypot(qxy);
    let l1 = tr * 0.5 + det_disc;
    let l2 = tr * 0.5 - det_disc;
    if l2 >= 0.0 {
        return (qxx, qxy, qyy);
    }
    // eigenvector for l1
    let (vx, vy) = if qxy.abs() > 1e-15 {
        (l1 - qyy, qxy)
    } else if qxx >= qyy {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = vx.hypot(vy);
    let (vx, vy) = if norm > 0.0 {
        (vx / norm, vy / norm)
    } else {
        (1.0, 0.0)
    };
    let l1 = l1.max(0.0);
    (l1 * vx * vx, l1 * vx * vy, l1 * vy * vy)
}

/// Proximal point of the quadratic flow model under the trust-region box:
/// solve `(I + tau*Q) u = u_hat + tau*(Q*anchor - L)` exactly, then clamp
/// each component to `anchor +- h`.
pub fn prox_data_flow(
    u_hat: [f64; 2],
    anchor: [f64; 2],
    grad: [f64; 2],
    hess: [f64; 3],
    h: f64,
    tau: f64,
) -> [f64; 2] {
    let [qxx, qxy, qyy] = hess;
    let m11 = 1.0 + tau * qxx;
    let m12 = tau * qxy;
    let m22 = 1.0 + tau * qyy;
    let r1 = u_hat[0] + tau * (qxx * anchor[0] + qxy * anchor[1] - grad[0]);
    let r2 = u_hat[1] + tau * (qxy * anchor[0] + qyy * anchor[1] - grad[1]);
    let det = m11 * m22 - m12 * m12;
    let u1 = (m22 * r1 - m12 * r2) / det;
    let u2 = (m11 * r2 - m12 * r1) / det;
    [
        u1.clamp(anchor[0] - h, anchor[0] + h),
        u2.clamp(anchor[1] - h, anchor[1] + h),
    ]
}

/// Per-warp convex model of the data term.
#[derive(Debug, Clone)]
pub enum DataApprox {
    Stereo(StereoApprox),
    Flow(FlowApprox),
}

impl DataApprox {
    pub fn components(&self) -> usize {
        match self {
            DataApprox::Stereo(_) => 1,
            DataApprox::Flow(_) => 2,
        }
    }

    /// Apply the data prox pointwise to `u_hat` (layout: component planes).
    fn prox(&self, u_hat: &[f64], tau: f64, out: &mut [f64]) {
        match self {
            DataApprox::Stereo(a) => {
                for i in 0..a.anchor.len() {
                    out[i] = prox_data_stereo(u_hat[i], a.anchor[i], a.s1[i], a.s2[i], a.h, tau);
                }
            }
            DataApprox::Flow(a) => {
                let n = a.anchor.len();
                for i in 0..n {
                    let r = prox_data_flow(
                        [u_hat[i], u_hat[n + i]],
                        a.anchor[i],
                        a.grad[i],
                        a.hess[i],
                        a.h,
                        tau,
                    );
                    out[i] = r[0];
                    out[n + i] = r[1];
                }
            }
        }
    }
}

/// State of the non-linear primal-dual iteration.
#[derive(Debug, Clone)]
pub struct ContinuousState {
    pub components: usize,
    /// Solution, component planes of `pixels` values each.
    pub u: Vec<f64>,
    /// Minus-part dual per edge and component.
    pub q: Vec<f64>,
    /// Plus-part dual per edge and component, box-constrained.
    pub p: Vec<f64>,
    /// Fixed at 1 by the saddle reformulation.
    pub d_dummy: f64,
    pub tau: f64,
    pub sigma: f64,
    /// Operator norm estimate backing the current step sizes.
    pub op_norm: f64,
}

impl ContinuousState {
    pub fn new(u_init: &[f64], graph: &GridGraph, components: usize) -> Self {
        let ne = graph.edges.len();
        ContinuousState {
            components,
            u: u_init.to_vec(),
            q: vec![0.0; components * ne],
            p: vec![0.0; components * ne],
            d_dummy: 1.0,
            tau: 0.0,
            sigma: 0.0,
            op_norm: 0.0,
        }
    }

    /// Estimate the operator norm at the current point and set
    /// `tau = sigma = 0.95 / L`.
    pub fn set_steps_from_norm(&mut self, graph: &GridGraph, power_iters: usize) {
        let l = estimate_op_norm(&self.u, &self.q, graph, self.components, power_iters);
        self.op_norm = l;
        let step = if l > 1e-9 { 0.95 / l } else { 1e3 };
        self.tau = step;
        self.sigma = step;
    }
}

/// One primal-dual iteration: primal update of `(u, q)` through the data
/// and minus-part proxes, extrapolation, dual update of `(p, d)` through
/// the plus-part prox and the dummy projection.
pub fn pd_iterate(
    state: &mut ContinuousState,
    graph: &GridGraph,
    split: &DcSplit,
    data: &DataApprox,
) -> Result<()> {
    let l2 = state.op_norm * state.op_norm;
    if state.tau <= 0.0 || state.sigma <= 0.0 || state.tau * state.sigma * l2 > 1.0 + 1e-9 {
        return Err(Error::Argument(format!(
            "step sizes violate tau*sigma*L^2 <= 1 (tau={}, sigma={}, L={})",
            state.tau, state.sigma, state.op_norm
        )));
    }
    let components = state.components;
    let n = graph.num_pixels();
    let ne = graph.edges.len();
    debug_assert_eq!(data.components(), components);

    let (grad_u, grad_q) = nonlinear_op_gradient_adjoint(
        &state.u,
        &state.q,
        &state.p,
        state.d_dummy,
        graph,
        components,
    );
    let mut u_hat = vec![0.0; components * n];
    for i in 0..components * n {
        u_hat[i] = state.u[i] - state.tau * grad_u[i];
    }
    let mut q_hat = vec![0.0; components * ne];
    for i in 0..components * ne {
        q_hat[i] = state.q[i] - state.tau * grad_q[i];
    }
    let mut u_new = vec![0.0; components * n];
    data.prox(&u_hat, state.tau, &mut u_new);
    let mut q_new = vec![0.0; components * ne];
    for c in 0..components {
        for e in 0..ne {
            let idx = c * ne + e;
            q_new[idx] = prox_q(q_hat[idx], graph.edge_weights[e], &split.minus, state.tau);
        }
    }
    // extrapolated point 2*x^{k+1} - x^k
    let u_bar: Vec<f64> = u_new
        .iter()
        .zip(state.u.iter())
        .map(|(n, o)| 2.0 * n - o)
        .collect();
    let q_bar: Vec<f64> = q_new
        .iter()
        .zip(state.q.iter())
        .map(|(n, o)| 2.0 * n - o)
        .collect();
    let (au_bar, _s) = nonlinear_op_apply(&u_bar, &q_bar, graph, components);
    for c in 0..components {
        for e in 0..ne {
            let idx = c * ne + e;
            let p_hat = state.p[idx] + state.sigma * au_bar[idx];
            state.p[idx] = prox_p(p_hat, graph.edge_weights[e], &split.plus, state.sigma);
        }
    }
    // the dummy dual is constrained to 1; its prox is the projection
    state.d_dummy = 1.0;
    state.u = u_new;
    state.q = q_new;
    Ok(())
}

/// Data source for the refinement stage.
pub enum DataTerm<'a> {
    Stereo(&'a CostVolume),
    Flow(&'a FlowCostVolume2D),
}

impl DataTerm<'_> {
    pub fn components(&self) -> usize {
        match self {
            DataTerm::Stereo(_) => 1,
            DataTerm::Flow(_) => 2,
        }
    }

    pub fn build_approx(&self, u: &[f64], h: f64) -> Result<DataApprox> {
        match self {
            DataTerm::Stereo(v) => Ok(DataApprox::Stereo(build_stereo_approx(v, u, h)?)),
            DataTerm::Flow(v) => Ok(DataApprox::Flow(build_flow_approx(v, u, h)?)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefineOptions {
    pub warps: usize,
    pub iters_per_warp: usize,
    /// Trust radius in label steps.
    pub trust_radius: f64,
    pub power_iters: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            warps: 5,
            iters_per_warp: 40,
            trust_radius: 0.5,
            power_iters: 20,
        }
    }
}

/// Warping outer loop: rebuild the data approximation at the current
/// solution, re-estimate step sizes, and run the primal-dual iterations;
/// `u_init` comes from the discrete stage through the label values.
pub fn refine(
    u_init: &[f64],
    data: &DataTerm,
    graph: &GridGraph,
    params: &PenaltyParams,
    opts: &RefineOptions,
) -> Result<Vec<f64>> {
    params.validate()?;
    let components = data.components();
    if u_init.len() != components * graph.num_pixels() {
        return Err(Error::Dimension(format!(
            "u_init length {} vs {} values",
            u_init.len(),
            components * graph.num_pixels()
        )));
    }
    let split = dc_decompose(params);
    let mut state = ContinuousState::new(u_init, graph, components);
    for _ in 0..opts.warps {
        let approx = data.build_approx(&state.u, opts.trust_radius)?;
        state.set_steps_from_norm(graph, opts.power_iters);
        for _ in 0..opts.iters_per_warp {
            pd_iterate(&mut state, graph, &split, &approx)?;
        }
    }
    Ok(state.u)
}
