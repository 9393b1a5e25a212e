//! Shared oracles for the integration suites.  Everything here is written
//! against the energy definition alone, independent of the library's chain
//! dynamic programming, so it can serve as a reference.
#![allow(dead_code)] // each test binary uses its own subset

use dcmatch::energy::{CostVolume, GridGraph, PenaltyParams};

/// Reference penalty evaluation: slope `eps` to `delta`, slope one to the
/// saturation point, constant beyond.
pub fn penalty_ref(p: &PenaltyParams, t: f64) -> f64 {
    let a = t.abs();
    let sat = p.trunc + p.delta - p.epsilon * p.delta;
    if a <= p.delta {
        p.epsilon * a
    } else if a <= sat {
        p.epsilon * p.delta + (a - p.delta)
    } else {
        p.trunc
    }
}

/// Literal double-loop energy of a grid labeling.
pub fn grid_energy_ref(
    vol: &CostVolume,
    graph: &GridGraph,
    params: &PenaltyParams,
    x: &[usize],
) -> f64 {
    let mut e = 0.0;
    for (pixel, &l) in x.iter().enumerate() {
        e += vol.cost(pixel, l) as f64;
    }
    for (edge, &(i, j)) in graph.edges.iter().enumerate() {
        let d = vol.label_values[x[i]] - vol.label_values[x[j]];
        e += graph.edge_weights[edge] * penalty_ref(params, d);
    }
    e
}

/// Exact global optimum of a grid energy by variable elimination along the
/// raster order with a frontier of one image row.  Handles widths where
/// `labels^width` stays small; completely independent of the solvers.
pub fn exact_grid_min(vol: &CostVolume, graph: &GridGraph, params: &PenaltyParams) -> f64 {
    let (w, h, k) = (graph.width, graph.height, vol.labels);
    let states = k.pow(w as u32);
    assert!(states <= 1 << 20, "frontier too large for the oracle");
    // dp over frontier states: labels of the last `w` processed pixels,
    // state = sum labels[t] * k^t with t the age (0 = most recent)
    let mut dp = vec![0.0f64; 1];
    let mut frontier_len = 0usize;
    let horizontal = |x: usize, y: usize| graph.edge_weights[y * (w - 1) + x];
    let vertical =
        |x: usize, y: usize| graph.edge_weights[h * (w - 1) + y * w + x];
    for pixel in 0..w * h {
        let (x, y) = (pixel % w, pixel / w);
        let new_len = (frontier_len + 1).min(w);
        let new_states = k.pow(new_len as u32);
        let mut next = vec![f64::INFINITY; new_states];
        for (state, &base) in dp.iter().enumerate() {
            if !base.is_finite() {
                continue;
            }
            for l in 0..k {
                let mut cost = base + vol.cost(pixel, l) as f64;
                if x > 0 {
                    let left = state % k;
                    cost += horizontal(x - 1, y)
                        * penalty_ref(params, vol.label_values[l] - vol.label_values[left]);
                }
                if y > 0 && frontier_len == w {
                    let above = state / k.pow((w - 1) as u32);
                    cost += vertical(x, y - 1)
                        * penalty_ref(params, vol.label_values[l] - vol.label_values[above]);
                }
                let dropped = if frontier_len == w {
                    state % k.pow((w - 1) as u32)
                } else {
                    state
                };
                let ns = dropped * k + l;
                if cost < next[ns] {
                    next[ns] = cost;
                }
            }
        }
        dp = next;
        frontier_len = new_len;
    }
    dp.iter().copied().fold(f64::INFINITY, f64::min)
}
