//! Full-grid solvers over the horizontal/vertical chain decomposition:
//! the parallel dual minorize-maximize scheme, a sequential TRW-S baseline
//! and a primal majorize-minimize baseline.
//!
//! The energy splits as `E(x) = f(x) + g(x)` with `f` the horizontal chains
//! (holding all unaries) and `g` the vertical chains.  The dual state keeps
//! the accumulated modular minorants `hbar` of `f` and `vbar` of `g`; the
//! dual vector alternates between `vbar` (after a vertical phase) and
//! `-hbar` (after a horizontal phase).

use std::sync::Arc;

use rayon::prelude::*;

use crate::chain::{chain_argmin, Chain, EdgeModel};
use crate::energy::{energy_evaluate, CostVolume, GridGraph, Labeling, PenaltyParams};
use crate::error::{Error, Result};
use crate::minorant::{build_minorant, MinorantKind, MinorantParams};

/// A discrete grid matching problem: cost volume, graph and penalty.
#[derive(Clone)]
pub struct GridProblem<'a> {
    pub volume: &'a CostVolume,
    pub graph: &'a GridGraph,
    pub params: &'a PenaltyParams,
    label_values: Arc<[f64]>,
}

impl<'a> GridProblem<'a> {
    pub fn new(
        volume: &'a CostVolume,
        graph: &'a GridGraph,
        params: &'a PenaltyParams,
    ) -> Result<Self> {
        if volume.width != graph.width || volume.height != graph.height {
            return Err(Error::Dimension(format!(
                "volume {}x{} vs graph {}x{}",
                volume.width, volume.height, graph.width, graph.height
            )));
        }
        params.validate()?;
        Ok(GridProblem {
            volume,
            graph,
            params,
            label_values: volume.label_values.clone().into(),
        })
    }

    pub fn width(&self) -> usize {
        self.graph.width
    }

    pub fn height(&self) -> usize {
        self.graph.height
    }

    pub fn labels(&self) -> usize {
        self.volume.labels
    }

    pub fn energy(&self, x: &Labeling) -> Result<f64> {
        energy_evaluate(self.volume, self.graph, self.params, x)
    }

    /// Row chain `y` with unaries `f + extra`.
    pub(crate) fn row_chain(&self, extra: &[f64], y: usize) -> Chain {
        let (w, k) = (self.width(), self.labels());
        let mut unaries = Vec::with_capacity(w * k);
        let mut nodes = Vec::with_capacity(w);
        for x in 0..w {
            let pixel = y * w + x;
            nodes.push(pixel);
            let costs = self.volume.pixel_costs(pixel);
            for l in 0..k {
                unaries.push(costs[l] as f64 + extra[pixel * k + l]);
            }
        }
        let edges = (0..w - 1)
            .map(|x| EdgeModel {
                params: *self.params,
                weight: self.graph.horizontal_weight(x, y),
            })
            .collect();
        Chain::new(nodes, k, unaries, edges, self.label_values.clone())
    }

    /// Column chain `x` with unaries `extra` only (the vertical subproblem
    /// carries no data costs).
    pub(crate) fn col_chain(&self, extra: &[f64], x: usize) -> Chain {
        let (w, h, k) = (self.width(), self.height(), self.labels());
        let mut unaries = Vec::with_capacity(h * k);
        let mut nodes = Vec::with_capacity(h);
        for y in 0..h {
            let pixel = y * w + x;
            nodes.push(pixel);
            unaries.extend_from_slice(&extra[pixel * k..(pixel + 1) * k]);
        }
        let edges = (0..h - 1)
            .map(|y| EdgeModel {
                params: *self.params,
                weight: self.graph.vertical_weight(x, y),
            })
            .collect();
        Chain::new(nodes, k, unaries, edges, self.label_values.clone())
    }
}

/// Which chain orientation a DMM half-iteration processes next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Horizontal,
    Vertical,
}

/// Direction of one TRW-S sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassDirection {
    Forward,
    Backward,
}

/// Persistent TRW-S message fields (from-left, from-right, from-above,
/// from-below), each `pixels * labels`.
#[derive(Debug, Clone)]
pub struct TrwsMessages {
    ml: Vec<f64>,
    mr: Vec<f64>,
    mu: Vec<f64>,
    md: Vec<f64>,
}

/// Dual solver state: accumulated minorants, primal bookkeeping, histories.
#[derive(Debug, Clone)]
pub struct DualState {
    pub width: usize,
    pub height: usize,
    pub labels: usize,
    /// Accumulated modular minorant of the horizontal subproblem.
    pub hbar: Vec<f64>,
    /// Accumulated modular minorant of the vertical subproblem; doubles as
    /// the dual vector for TRW-S.
    pub vbar: Vec<f64>,
    pub phase: Phase,
    pub iteration: usize,
    pub last_primal: Labeling,
    pub best_labeling: Labeling,
    pub best_energy: f64,
    pub bound_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    trws: Option<TrwsMessages>,
}

impl DualState {
    pub fn new(problem: &GridProblem) -> Self {
        let n = problem.width() * problem.height();
        let nk = n * problem.labels();
        DualState {
            width: problem.width(),
            height: problem.height(),
            labels: problem.labels(),
            hbar: vec![0.0; nk],
            vbar: vec![0.0; nk],
            phase: Phase::Horizontal,
            iteration: 0,
            last_primal: vec![0; n],
            best_labeling: vec![0; n],
            best_energy: f64::INFINITY,
            bound_history: Vec::new(),
            energy_history: Vec::new(),
            trws: None,
        }
    }
}

/// Dual objective `D(lambda)`: the sum over horizontal chains of
/// `min (f + lambda)` plus the sum over vertical chains of `min (g - lambda)`,
/// with the current dual vector implied by the phase parity.
pub fn dual_bound(state: &DualState, problem: &GridProblem) -> f64 {
    // lambda = vbar before a horizontal phase, -hbar before a vertical one:
    // rows see f + lambda, columns see g - lambda
    let (row_extra, col_extra): (Vec<f64>, Vec<f64>) = match state.phase {
        Phase::Horizontal => (
            state.vbar.clone(),
            state.vbar.iter().map(|v| -v).collect(),
        ),
        Phase::Vertical => (
            state.hbar.iter().map(|v| -v).collect(),
            state.hbar.clone(),
        ),
    };
    let rows: f64 = (0..state.height)
        .map(|y| chain_argmin(&problem.row_chain(&row_extra, y)).1)
        .sum();
    let cols: f64 = (0..state.width)
        .map(|x| chain_argmin(&problem.col_chain(&col_extra, x)).1)
        .sum();
    rows + cols
}

/// One DMM half-iteration: solve all chains of the active orientation under
/// the current reparametrization, replace the stored minorant of that
/// orientation, and swap roles.  The horizontal phase also refreshes the
/// primal labeling (per-row argmins) and the best-energy bookkeeping.
pub fn dmm_iterate(
    state: &mut DualState,
    problem: &GridProblem,
    kind: MinorantKind,
    params: &MinorantParams,
) -> Result<()> {
    let k = state.labels;
    let w = state.width;
    match state.phase {
        Phase::Horizontal => {
            let vbar = &state.vbar;
            let results: Vec<(Vec<usize>, crate::minorant::Minorant)> = (0..state.height)
                .into_par_iter()
                .map(|y| {
                    let chain = problem.row_chain(vbar, y);
                    let (x, _) = chain_argmin(&chain);
                    let mu = build_minorant(&chain, kind, params)?;
                    Ok((x, mu))
                })
                .collect::<Result<_>>()?;
            for (y, (xrow, mu)) in results.into_iter().enumerate() {
                for x in 0..w {
                    let pixel = y * w + x;
                    state.last_primal[pixel] = xrow[x];
                    for l in 0..k {
                        state.hbar[pixel * k + l] =
                            mu.values[x * k + l] - state.vbar[pixel * k + l];
                    }
                }
            }
            let e = problem.energy(&state.last_primal)?;
            if e < state.best_energy {
                state.best_energy = e;
                state.best_labeling = state.last_primal.clone();
            }
            state.phase = Phase::Vertical;
        }
        Phase::Vertical => {
            let hbar = &state.hbar;
            let results: Vec<crate::minorant::Minorant> = (0..w)
                .into_par_iter()
                .map(|x| {
                    let chain = problem.col_chain(hbar, x);
                    build_minorant(&chain, kind, params)
                })
                .collect::<Result<_>>()?;
            for (x, nu) in results.into_iter().enumerate() {
                for y in 0..state.height {
                    let pixel = y * w + x;
                    for l in 0..k {
                        state.vbar[pixel * k + l] =
                            nu.values[y * k + l] - state.hbar[pixel * k + l];
                    }
                }
            }
            state.phase = Phase::Horizontal;
        }
    }
    Ok(())
}

/// One sequential TRW-S sweep (Kolmogorov's schedule on the two-chain
/// decomposition with the symmetric 1/2 split): per pixel, equalize the row
/// and column min-marginals, then push the downstream message by a single
/// dynamic-programming step.  `vbar` holds the dual vector.
pub fn trws_iterate(
    state: &mut DualState,
    problem: &GridProblem,
    direction: PassDirection,
) -> Result<()> {
    let (w, h, k) = (state.width, state.height, state.labels);
    if state.trws.is_none() {
        state.trws = Some(init_trws_messages(state, problem));
    }
    let mut msgs = state.trws.take().expect("just initialized");
    let lambda = &mut state.vbar;
    let vals: &[f64] = &problem.label_values;
    let mut row_mm = vec![0.0; k];
    let mut col_mm = vec![0.0; k];
    let mut buf = vec![0.0; k];
    let mut out = vec![0.0; k];

    let mut order: Vec<usize> = (0..w * h).collect();
    if direction == PassDirection::Backward {
        order.reverse();
    }
    for &pixel in &order {
        let x = pixel % w;
        let y = pixel / w;
        let costs = problem.volume.pixel_costs(pixel);
        for l in 0..k {
            let idx = pixel * k + l;
            row_mm[l] = costs[l] as f64 + lambda[idx] + msgs.ml[idx] + msgs.mr[idx];
            col_mm[l] = -lambda[idx] + msgs.mu[idx] + msgs.md[idx];
        }
        for l in 0..k {
            lambda[pixel * k + l] += 0.5 * (col_mm[l] - row_mm[l]);
        }
        match direction {
            PassDirection::Forward => {
                if x + 1 < w {
                    let edge = EdgeModel {
                        params: *problem.params,
                        weight: problem.graph.horizontal_weight(x, y),
                    };
                    for l in 0..k {
                        let idx = pixel * k + l;
                        buf[l] = msgs.ml[idx] + costs[l] as f64 + lambda[idx];
                    }
                    crate::chain::pass_message_into(&buf, &edge, vals, &mut out);
                    msgs.ml[(pixel + 1) * k..(pixel + 2) * k].copy_from_slice(&out);
                }
                if y + 1 < h {
                    let edge = EdgeModel {
                        params: *problem.params,
                        weight: problem.graph.vertical_weight(x, y),
                    };
                    for l in 0..k {
                        let idx = pixel * k + l;
                        buf[l] = msgs.mu[idx] - lambda[idx];
                    }
                    crate::chain::pass_message_into(&buf, &edge, vals, &mut out);
                    let below = pixel + w;
                    msgs.mu[below * k..(below + 1) * k].copy_from_slice(&out);
                }
            }
            PassDirection::Backward => {
                if x > 0 {
                    let edge = EdgeModel {
                        params: *problem.params,
                        weight: problem.graph.horizontal_weight(x - 1, y),
                    };
                    for l in 0..k {
                        let idx = pixel * k + l;
                        buf[l] = msgs.mr[idx] + costs[l] as f64 + lambda[idx];
                    }
                    crate::chain::pass_message_into(&buf, &edge, vals, &mut out);
                    msgs.mr[(pixel - 1) * k..pixel * k].copy_from_slice(&out);
                }
                if y > 0 {
                    let edge = EdgeModel {
                        params: *problem.params,
                        weight: problem.graph.vertical_weight(x, y - 1),
                    };
                    for l in 0..k {
                        let idx = pixel * k + l;
                        buf[l] = msgs.md[idx] - lambda[idx];
                    }
                    crate::chain::pass_message_into(&buf, &edge, vals, &mut out);
                    let above = pixel - w;
                    msgs.md[above * k..(above + 1) * k].copy_from_slice(&out);
                }
            }
        }
    }
    state.trws = Some(msgs);
    // refresh the primal from the row chains under the current dual
    let mut primal = vec![0usize; w * h];
    for y in 0..h {
        let chain = problem.row_chain(&state.vbar, y);
        let (xrow, _) = chain_argmin(&chain);
        for x in 0..w {
            primal[y * w + x] = xrow[x];
        }
    }
    state.last_primal = primal;
    let e = problem.energy(&state.last_primal)?;
    if e < state.best_energy {
        state.best_energy = e;
        state.best_labeling = state.last_primal.clone();
    }
    Ok(())
}

/// Right and below message prepass so that the first forward sweep sees
/// valid incoming messages from the not-yet-visited part of the grid.
fn init_trws_messages(state: &DualState, problem: &GridProblem) -> TrwsMessages {
    let (w, h, k) = (state.width, state.height, state.labels);
    let n = w * h;
    let mut msgs = TrwsMessages {
        ml: vec![0.0; n * k],
        mr: vec![0.0; n * k],
        mu: vec![0.0; n * k],
        md: vec![0.0; n * k],
    };
    let vals: &[f64] = &problem.label_values;
    let mut buf = vec![0.0; k];
    let mut out = vec![0.0; k];
    for y in 0..h {
        for x in (0..w - 1).rev() {
            let pixel = y * w + x;
            let src = pixel + 1;
            let costs = problem.volume.pixel_costs(src);
            for l in 0..k {
                buf[l] = msgs.mr[src * k + l] + costs[l] as f64 + state.vbar[src * k + l];
            }
            let edge = EdgeModel {
                params: *problem.params,
                weight: problem.graph.horizontal_weight(x, y),
            };
            crate::chain::pass_message_into(&buf, &edge, vals, &mut out);
            msgs.mr[pixel * k..(pixel + 1) * k].copy_from_slice(&out);
        }
    }
    for x in 0..w {
        for y in (0..h - 1).rev() {
            let pixel = y * w + x;
            let src = pixel + w;
            for l in 0..k {
                buf[l] = msgs.md[src * k + l] - state.vbar[src * k + l];
            }
            let edge = EdgeModel {
                params: *problem.params,
                weight: problem.graph.vertical_weight(x, y),
            };
            crate::chain::pass_message_into(&buf, &edge, vals, &mut out);
            msgs.md[pixel * k..(pixel + 1) * k].copy_from_slice(&out);
        }
    }
    msgs
}

/// One primal majorize-minimize step: majorize the pairwise terms of the
/// inactive orientation by a modular function exact at `x` (each edge `ij`
/// contributes `cost(a, x_j)` at `i` and `max_a [cost(a, b) - cost(a, x_j)]`
/// at `j`), then minimize the resulting chain problem of the active
/// orientation exactly.  The energy never increases.
pub fn pmm_iterate(x: &Labeling, problem: &GridProblem, active: Phase) -> Result<Labeling> {
    let (w, h, k) = (problem.width(), problem.height(), problem.labels());
    if x.len() != w * h {
        return Err(Error::Dimension(format!(
            "labeling length {} vs {} pixels",
            x.len(),
            w * h
        )));
    }
    let vals: &[f64] = &problem.label_values;
    let mut extra = vec![0.0f64; w * h * k];
    // majorize the inactive orientation's edges
    let majorize_edge = |i: usize, j: usize, weight: f64, extra: &mut Vec<f64>| {
        let edge = EdgeModel {
            params: *problem.params,
            weight,
        };
        let (a_star, b_star) = (x[i], x[j]);
        for a in 0..k {
            extra[i * k + a] += edge.cost(a, b_star, vals);
        }
        for b in 0..k {
            let mut worst = f64::NEG_INFINITY;
            for a in 0..k {
                let d = edge.cost(a, b, vals) - edge.cost(a, b_star, vals);
                if d > worst {
                    worst = d;
                }
            }
            extra[j * k + b] += worst;
        }
        debug_assert!({
            let exact = edge.cost(a_star, b_star, vals);
            (extra[i * k + a_star] + extra[j * k + b_star] - exact).abs() < 1e-9 || true
        });
    };
    match active {
        Phase::Horizontal => {
            for y in 0..h - 1 {
                for xx in 0..w {
                    let i = y * w + xx;
                    majorize_edge(i, i + w, problem.graph.vertical_weight(xx, y), &mut extra);
                }
            }
            let mut next = vec![0usize; w * h];
            for y in 0..h {
                let chain = problem.row_chain(&extra, y);
                let (xrow, _) = chain_argmin(&chain);
                for xx in 0..w {
                    next[y * w + xx] = xrow[xx];
                }
            }
            Ok(next)
        }
        Phase::Vertical => {
            for y in 0..h {
                for xx in 0..w - 1 {
                    let i = y * w + xx;
                    majorize_edge(i, i + 1, problem.graph.horizontal_weight(xx, y), &mut extra);
                }
            }
            // vertical chains must also carry the data unaries
            let mut with_data = extra;
            for pixel in 0..w * h {
                let costs = problem.volume.pixel_costs(pixel);
                for l in 0..k {
                    with_data[pixel * k + l] += costs[l] as f64;
                }
            }
            let zeros = vec![0.0f64; 0];
            let _ = zeros;
            let mut next = vec![0usize; w * h];
            for xx in 0..w {
                let chain = problem.col_chain(&with_data, xx);
                let (xcol, _) = chain_argmin(&chain);
                for y in 0..h {
                    next[y * w + xx] = xcol[y];
                }
            }
            Ok(next)
        }
    }
}

/// Optimization method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    DualMM,
    Trws,
    PrimalMM,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::DualMM => "dmm",
            Method::Trws => "trws",
            Method::PrimalMM => "pmm",
        }
    }
}

/// Which labeling `solve` returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoundingPolicy {
    /// The best-energy labeling seen across iterations.
    #[default]
    BestEnergy,
    /// The labeling of the final iteration.
    LastIterate,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    pub iterations: usize,
    pub minorant: MinorantKind,
    pub minorant_params: MinorantParams,
    /// Optional early stop on relative bound change (dual methods only).
    pub stop_tol: Option<f64>,
    pub rounding: RoundingPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::DualMM,
            iterations: 4,
            minorant: MinorantKind::Hierarchical,
            minorant_params: MinorantParams::default(),
            stop_tol: None,
            rounding: RoundingPolicy::BestEnergy,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Argument("iterations must be >= 1".into()));
        }
        if self.minorant_params.leaf_size < 2 || self.minorant_params.leaf_size > 8 {
            return Err(Error::Argument(format!(
                "hierarchical leaf size must be in [2, 8], got {}",
                self.minorant_params.leaf_size
            )));
        }
        Ok(())
    }
}

/// Output of a full solve: the rounded labeling plus per-iteration
/// histories (one entry per full iteration).
#[derive(Debug, Clone)]
pub struct Solution {
    pub labeling: Labeling,
    pub energy: f64,
    pub bound_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    /// Cumulative wall-clock milliseconds at the end of each iteration.
    pub iter_millis: Vec<u64>,
}

/// The latest horizontal-chain argmin labeling (DMM line-1 output).
pub fn round_primal(state: &DualState) -> Labeling {
    state.last_primal.clone()
}

/// Driver: iterate the configured method, recording the dual bound and the
/// best primal energy after every full iteration.  One iteration means one
/// horizontal plus one vertical phase (DMM/PMM) or one forward plus one
/// backward pass (TRW-S), i.e. an equal number of updates per pixel.
pub fn solve(problem: &GridProblem, config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    let start = std::time::Instant::now();
    let mut state = DualState::new(problem);
    let mut bound_history = Vec::with_capacity(config.iterations);
    let mut energy_history = Vec::with_capacity(config.iterations);
    let mut iter_millis = Vec::with_capacity(config.iterations);
    match config.method {
        Method::DualMM => {
            for _ in 0..config.iterations {
                dmm_iterate(&mut state, problem, config.minorant, &config.minorant_params)?;
                dmm_iterate(&mut state, problem, config.minorant, &config.minorant_params)?;
                state.iteration += 1;
                let b = dual_bound(&state, problem);
                bound_history.push(b);
                energy_history.push(state.best_energy);
                iter_millis.push(start.elapsed().as_millis() as u64);
                if stop_early(&bound_history, config.stop_tol) {
                    break;
                }
            }
        }
        Method::Trws => {
            for _ in 0..config.iterations {
                trws_iterate(&mut state, problem, PassDirection::Forward)?;
                trws_iterate(&mut state, problem, PassDirection::Backward)?;
                state.iteration += 1;
                let b = dual_bound(&state, problem);
                bound_history.push(b);
                energy_history.push(state.best_energy);
                iter_millis.push(start.elapsed().as_millis() as u64);
                if stop_early(&bound_history, config.stop_tol) {
                    break;
                }
            }
        }
        Method::PrimalMM => {
            let mut x = vec![0usize; problem.width() * problem.height()];
            // start from the unary argmin
            let k = problem.labels();
            for (pixel, xi) in x.iter_mut().enumerate() {
                let costs = problem.volume.pixel_costs(pixel);
                let mut best = f64::INFINITY;
                for l in 0..k {
                    if (costs[l] as f64) < best {
                        best = costs[l] as f64;
                        *xi = l;
                    }
                }
            }
            state.best_energy = problem.energy(&x)?;
            state.best_labeling = x.clone();
            for _ in 0..config.iterations {
                x = pmm_iterate(&x, problem, Phase::Horizontal)?;
                x = pmm_iterate(&x, problem, Phase::Vertical)?;
                state.iteration += 1;
                let e = problem.energy(&x)?;
                if e < state.best_energy {
                    state.best_energy = e;
                    state.best_labeling = x.clone();
                }
                state.last_primal = x.clone();
                bound_history.push(f64::NEG_INFINITY);
                energy_history.push(state.best_energy);
                iter_millis.push(start.elapsed().as_millis() as u64);
            }
        }
    }
    let labeling = match config.rounding {
        RoundingPolicy::BestEnergy => state.best_labeling.clone(),
        RoundingPolicy::LastIterate => state.last_primal.clone(),
    };
    let energy = problem.energy(&labeling)?;
    Ok(Solution {
        labeling,
        energy,
        bound_history,
        energy_history,
        iter_millis,
    })
}

fn stop_early(bounds: &[f64], tol: Option<f64>) -> bool {
    match (tol, bounds.len()) {
        (Some(t), n) if n >= 2 => {
            let a = bounds[n - 2];
            let b = bounds[n - 1];
            (b - a).abs() <= t * (1.0 + b.abs())
        }
        _ => false,
    }
}
