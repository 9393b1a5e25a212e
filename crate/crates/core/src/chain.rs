//! Dynamic programming on chains: message passing, min-marginals, chain
//! minimization, and an exhaustive oracle for small instances.
//!
//! Chains are the slave subproblems of the dual decomposition: every row and
//! every column of the grid, with unaries possibly reparametrized by dual
//! variables.

use std::sync::Arc;

use crate::energy::{pairwise_cost, CostVolume, GridGraph, Labeling, PenaltyParams};
use crate::error::{Error, Result};

/// Pairwise model of one chain edge: truncated penalty scaled by the edge
/// weight, evaluated on label-value differences.
#[derive(Debug, Clone, Copy)]
pub struct EdgeModel {
    pub params: PenaltyParams,
    pub weight: f64,
}

impl EdgeModel {
    #[inline]
    pub fn cost(&self, a: usize, b: usize, label_values: &[f64]) -> f64 {
        self.weight * self.params.value(label_values[a] - label_values[b])
    }
}

/// A chain subproblem: ordered nodes, per-node unaries (length `len * k`)
/// and `len - 1` edges.  `nodes` keeps the originating pixel indices so that
/// per-chain results can be scattered back into grid vectors.
#[derive(Debug, Clone)]
pub struct Chain {
    pub nodes: Vec<usize>,
    pub k: usize,
    pub unaries: Vec<f64>,
    pub edges: Vec<EdgeModel>,
    pub label_values: Arc<[f64]>,
    pub reversed: bool,
}

impl Chain {
    pub fn new(
        nodes: Vec<usize>,
        k: usize,
        unaries: Vec<f64>,
        edges: Vec<EdgeModel>,
        label_values: Arc<[f64]>,
    ) -> Self {
        debug_assert!(!nodes.is_empty());
        debug_assert_eq!(unaries.len(), nodes.len() * k);
        debug_assert_eq!(edges.len(), nodes.len() - 1);
        debug_assert_eq!(label_values.len(), k);
        Chain {
            nodes,
            k,
            unaries,
            edges,
            label_values,
            reversed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn unary(&self, i: usize) -> &[f64] {
        &self.unaries[i * self.k..(i + 1) * self.k]
    }

    /// The same chain walked in the opposite direction.  The penalty is even,
    /// so edge models are direction independent.
    pub fn reverse(&self) -> Chain {
        let n = self.len();
        let mut unaries = Vec::with_capacity(self.unaries.len());
        for i in (0..n).rev() {
            unaries.extend_from_slice(self.unary(i));
        }
        Chain {
            nodes: self.nodes.iter().rev().copied().collect(),
            k: self.k,
            unaries,
            edges: self.edges.iter().rev().copied().collect(),
            label_values: self.label_values.clone(),
            reversed: !self.reversed,
        }
    }

    /// Energy of a labeling of this chain (indexed along the chain).
    pub fn energy(&self, x: &[usize]) -> f64 {
        let mut e = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            e += self.unary(i)[xi];
        }
        for (i, edge) in self.edges.iter().enumerate() {
            e += edge.cost(x[i], x[i + 1], &self.label_values);
        }
        e
    }
}

/// `out(b) = min_a source(a) + edge.cost(a, b)`.
///
/// Uses an O(K) lower-envelope recurrence for the `epsilon = 1` family
/// (truncated linear, Potts) and an O(K^2) scan otherwise.
pub fn pass_message(source: &[f64], edge: &EdgeModel, label_values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; source.len()];
    pass_message_into(source, edge, label_values, &mut out);
    out
}

pub(crate) fn pass_message_into(
    source: &[f64],
    edge: &EdgeModel,
    label_values: &[f64],
    out: &mut [f64],
) {
    if edge.params.epsilon == 1.0 || edge.params.delta == 0.0 {
        // the penalty collapses to min(|t|, trunc)
        pass_message_envelope(source, edge, label_values, out);
    } else if source.len() >= 8 {
        pass_message_envelope_general(source, edge, label_values, out);
    } else {
        pass_message_quadratic(source, edge, label_values, out);
    }
}

/// O(K^2) reference path, valid for any penalty.
pub(crate) fn pass_message_quadratic(
    source: &[f64],
    edge: &EdgeModel,
    label_values: &[f64],
    out: &mut [f64],
) {
    let k = source.len();
    for b in 0..k {
        let vb = label_values[b];
        let mut best = f64::INFINITY;
        for a in 0..k {
            let c = source[a] + edge.weight * edge.params.value(label_values[a] - vb);
            if c < best {
                best = c;
            }
        }
        out[b] = best;
    }
}

/// O(K) path for `epsilon = 1`, where `r(t) = min(|t|, trunc)`: two linear
/// envelope sweeps plus the truncation floor.
fn pass_message_envelope(source: &[f64], edge: &EdgeModel, label_values: &[f64], out: &mut [f64]) {
    let k = source.len();
    let w = edge.weight;
    let cap = {
        let mut m = f64::INFINITY;
        for &s in source {
            if s < m {
                m = s;
            }
        }
        m + w * edge.params.trunc
    };
    // forward: min over a <= b of source(a) + w*(v_b - v_a)
    let mut run = f64::INFINITY;
    for b in 0..k {
        if b > 0 {
            run += w * (label_values[b] - label_values[b - 1]);
        }
        if source[b] < run {
            run = source[b];
        }
        out[b] = if run < cap { run } else { cap };
    }
    // backward: min over a >= b of source(a) + w*(v_a - v_b)
    run = f64::INFINITY;
    for b in (0..k).rev() {
        if b + 1 < k {
            run += w * (label_values[b + 1] - label_values[b]);
        }
        if source[b] < run {
            run = source[b];
        }
        if run < out[b] {
            out[b] = run;
        }
    }
}

/// O(K) path for the full three-piece family with `0 <= epsilon < 1`:
/// `r(t) = min(max(eps*|t|, |t| - delta*(1-eps)), trunc)` splits into an
/// `eps`-slope band within `delta` of the target (sliding-window minima),
/// a unit-slope tail beyond `delta` (prefix/suffix minima) and the
/// truncation floor.  Every source label lands in the band where its piece
/// is exact, so the minimum of the three envelopes is the message.
fn pass_message_envelope_general(
    source: &[f64],
    edge: &EdgeModel,
    label_values: &[f64],
    out: &mut [f64],
) {
    let k = source.len();
    let w = edge.weight;
    let eps = edge.params.epsilon;
    let delta = edge.params.delta;
    let tail_offset = w * delta * (1.0 - eps);
    let cap = {
        let mut m = f64::INFINITY;
        for &s in source {
            if s < m {
                m = s;
            }
        }
        m + w * edge.params.trunc
    };
    out.iter_mut().for_each(|o| *o = cap);

    // band, sources at or left of the target: window a in [lo_b, b] with
    // v_b - v_a <= delta, minimizing source(a) - w*eps*v_a
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut lo = 0usize;
    let key_left = |a: usize| source[a] - w * eps * label_values[a];
    for b in 0..k {
        while let Some(&back) = deque.back() {
            if key_left(back) >= key_left(b) {
                deque.pop_back();
            } else {
                break;
            }
        }
        deque.push_back(b);
        while label_values[b] - label_values[lo] > delta {
            if deque.front() == Some(&lo) {
                deque.pop_front();
            }
            lo += 1;
        }
        let best = key_left(*deque.front().expect("window holds b"));
        let cand = best + w * eps * label_values[b];
        if cand < out[b] {
            out[b] = cand;
        }
    }
    // band, sources right of the target: window a in [b, hi_b] with
    // v_a - v_b <= delta, minimizing source(a) + w*eps*v_a
    deque.clear();
    let key_right = |a: usize| source[a] + w * eps * label_values[a];
    let mut hi = 0usize; // first index not yet inserted
    for b in 0..k {
        while hi < k && label_values[hi] - label_values[b] <= delta {
            while let Some(&back) = deque.back() {
                if key_right(back) >= key_right(hi) {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(hi);
            hi += 1;
        }
        while let Some(&front) = deque.front() {
            if front < b {
                deque.pop_front();
            } else {
                break;
            }
        }
        if let Some(&front) = deque.front() {
            let cand = key_right(front) - w * eps * label_values[b];
            if cand < out[b] {
                out[b] = cand;
            }
        }
    }
    // unit-slope tail from the left: a with v_b - v_a >= delta
    let mut ptr = 0usize;
    let mut prefix = f64::INFINITY;
    for b in 0..k {
        while ptr < k && label_values[b] - label_values[ptr] >= delta {
            prefix = prefix.min(source[ptr] - w * label_values[ptr]);
            ptr += 1;
        }
        let cand = prefix + w * label_values[b] - tail_offset;
        if cand < out[b] {
            out[b] = cand;
        }
    }
    // unit-slope tail from the right
    let mut ptr = k;
    let mut suffix = f64::INFINITY;
    for b in (0..k).rev() {
        while ptr > 0 && label_values[ptr - 1] - label_values[b] >= delta {
            ptr -= 1;
            suffix = suffix.min(source[ptr] + w * label_values[ptr]);
        }
        let cand = suffix - w * label_values[b] - tail_offset;
        if cand < out[b] {
            out[b] = cand;
        }
    }
}

/// Left messages `phi_{i-1,i}` and right messages `phi_{i+1,i}` of a chain,
/// both of shape `len * k` with zero boundaries.
#[derive(Debug, Clone)]
pub struct MessageField {
    pub k: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl MessageField {
    #[inline]
    pub fn left_at(&self, i: usize) -> &[f64] {
        &self.left[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn right_at(&self, i: usize) -> &[f64] {
        &self.right[i * self.k..(i + 1) * self.k]
    }
}

/// Compute both message fields by one forward and one backward sweep.
pub fn compute_messages(chain: &Chain) -> MessageField {
    let (n, k) = (chain.len(), chain.k);
    let vals = &chain.label_values;
    let mut left = vec![0.0; n * k];
    let mut right = vec![0.0; n * k];
    let mut buf = vec![0.0; k];
    let mut out = vec![0.0; k];
    for i in 1..n {
        for l in 0..k {
            buf[l] = left[(i - 1) * k + l] + chain.unaries[(i - 1) * k + l];
        }
        pass_message_into(&buf, &chain.edges[i - 1], vals, &mut out);
        left[i * k..(i + 1) * k].copy_from_slice(&out);
    }
    for i in (0..n - 1).rev() {
        for l in 0..k {
            buf[l] = right[(i + 1) * k + l] + chain.unaries[(i + 1) * k + l];
        }
        pass_message_into(&buf, &chain.edges[i], vals, &mut out);
        right[i * k..(i + 1) * k].copy_from_slice(&out);
    }
    MessageField { k, left, right }
}

/// Per-node, per-label min-marginals `m(x_i)`.
#[derive(Debug, Clone)]
pub struct MinMarginals {
    pub k: usize,
    pub values: Vec<f64>,
}

impl MinMarginals {
    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    /// Minimum over labels at one node; equals the chain optimum at every
    /// node.
    pub fn node_min(&self, i: usize) -> f64 {
        self.at(i).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Presentation helper: per-node values with the node minimum
    /// subtracted.  Never applied inside solvers.
    pub fn normalized(&self) -> Vec<f64> {
        let n = self.values.len() / self.k;
        let mut out = self.values.clone();
        for i in 0..n {
            let m = self.node_min(i);
            for l in 0..self.k {
                out[i * self.k + l] -= m;
            }
        }
        out
    }
}

/// Exact min-marginals: `m_i = f_i + phi_{i-1,i} + phi_{i+1,i}`.
pub fn min_marginals(chain: &Chain) -> MinMarginals {
    let msgs = compute_messages(chain);
    min_marginals_from(chain, &msgs)
}

pub(crate) fn min_marginals_from(chain: &Chain, msgs: &MessageField) -> MinMarginals {
    let (n, k) = (chain.len(), chain.k);
    let mut values = vec![0.0; n * k];
    for i in 0..n * k {
        values[i] = chain.unaries[i] + msgs.left[i] + msgs.right[i];
    }
    MinMarginals { k, values }
}

/// Minimizing labeling of a chain and its value.  Ties are broken toward the
/// smallest label index during backtracking, starting from the last node.
pub fn chain_argmin(chain: &Chain) -> (Vec<usize>, f64) {
    let (n, k) = (chain.len(), chain.k);
    let vals = &chain.label_values;
    let mut left = vec![0.0; n * k];
    let mut buf = vec![0.0; k];
    for i in 1..n {
        for l in 0..k {
            buf[l] = left[(i - 1) * k + l] + chain.unaries[(i - 1) * k + l];
        }
        let mut out = vec![0.0; k];
        pass_message_into(&buf, &chain.edges[i - 1], vals, &mut out);
        left[i * k..(i + 1) * k].copy_from_slice(&out);
    }
    let mut x = vec![0usize; n];
    let mut best = f64::INFINITY;
    for l in 0..k {
        let c = left[(n - 1) * k + l] + chain.unaries[(n - 1) * k + l];
        if c < best {
            best = c;
            x[n - 1] = l;
        }
    }
    for i in (0..n.saturating_sub(1)).rev() {
        let mut node_best = f64::INFINITY;
        for l in 0..k {
            let c = left[i * k + l]
                + chain.unaries[i * k + l]
                + chain.edges[i].cost(l, x[i + 1], vals);
            if c < node_best {
                node_best = c;
                x[i] = l;
            }
        }
    }
    (x, best)
}

/// Exhaustive global minimum of a grid energy by enumeration.  Intended as a
/// test oracle; refuses instances with more than 10^7 labelings.
pub fn brute_force_min(
    volume: &CostVolume,
    graph: &GridGraph,
    params: &PenaltyParams,
) -> Result<(Labeling, f64)> {
    let n = graph.num_pixels();
    let k = volume.labels;
    let mut total = 1f64;
    for _ in 0..n {
        total *= k as f64;
        if total > 1e7 {
            return Err(Error::Capacity(format!(
                "{k}^{n} labelings exceed the 10^7 enumeration limit"
            )));
        }
    }
    let mut x = vec![0usize; n];
    let mut best_x = x.clone();
    let mut best = f64::INFINITY;
    loop {
        let mut e = 0.0f64;
        for (pixel, &label) in x.iter().enumerate() {
            e += volume.cost(pixel, label) as f64;
        }
        for (edge, &(i, j)) in graph.edges.iter().enumerate() {
            e += pairwise_cost(
                params,
                graph.edge_weights[edge],
                x[i],
                x[j],
                &volume.label_values,
            );
        }
        if e < best {
            best = e;
            best_x.copy_from_slice(&x);
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == n {
                return Ok((best_x, best));
            }
            x[i] += 1;
            if x[i] < k {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}
