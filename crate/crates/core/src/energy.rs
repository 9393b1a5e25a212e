//! Grid MRF data model: 4-connected grid graph, truncated penalty function,
//! cost volumes and labelings.
//!
//! The discretized energy is
//! `f(x) = sum_i f_i(x_i) + sum_ij w_ij * r(v[x_i] - v[x_j])`
//! where `r` is an even, truncated three-piece penalty and `v` maps label
//! indices to the continuous values they represent.

use crate::error::{Error, Result};

/// Truncated penalty `r`: slope `epsilon` on `[0, delta]`, slope 1 on
/// `[delta, C + delta - epsilon*delta]`, constant `C` beyond.  Even in `t`.
///
/// Degenerate corners of the family: `epsilon = 1` gives the truncated
/// linear penalty `min(|t|, C)`; with unit label spacing and `C = 1` that
/// is the Potts model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    /// Slope near zero, `0 <= epsilon <= 1`.
    pub epsilon: f64,
    /// Knee location in label units, `delta >= 0`.
    pub delta: f64,
    /// Truncation value, `trunc >= delta * epsilon`.
    pub trunc: f64,
}

impl PenaltyParams {
    pub fn new(epsilon: f64, delta: f64, trunc: f64) -> Result<Self> {
        let p = PenaltyParams {
            epsilon,
            delta,
            trunc,
        };
        p.validate()?;
        Ok(p)
    }

    /// Potts penalty of unit cost (use an edge weight for other costs).
    /// Valid for label values spaced at least 1 apart.
    pub fn potts() -> Self {
        PenaltyParams {
            epsilon: 1.0,
            delta: 0.0,
            trunc: 1.0,
        }
    }

    /// Truncated linear penalty `min(|t|, trunc)`.
    pub fn truncated_linear(trunc: f64) -> Self {
        PenaltyParams {
            epsilon: 1.0,
            delta: 0.0,
            trunc,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Argument(format!(
                "penalty epsilon must be in [0,1], got {}",
                self.epsilon
            )));
        }
        if self.delta < 0.0 || !self.delta.is_finite() {
            return Err(Error::Argument(format!(
                "penalty delta must be >= 0, got {}",
                self.delta
            )));
        }
        if self.trunc < self.delta * self.epsilon || !self.trunc.is_finite() {
            return Err(Error::Argument(format!(
                "penalty truncation must be >= delta*epsilon, got {}",
                self.trunc
            )));
        }
        Ok(())
    }

    /// Point where the penalty saturates at `trunc`.
    pub fn saturation_point(&self) -> f64 {
        self.trunc + self.delta - self.epsilon * self.delta
    }

    /// Evaluate `r(t)`.
    pub fn value(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= self.delta {
            self.epsilon * a
        } else if a <= self.saturation_point() {
            self.epsilon * self.delta + (a - self.delta)
        } else {
            self.trunc
        }
    }
}

/// Evaluate the truncated penalty; thin wrapper over [`PenaltyParams::value`].
pub fn penalty_value(params: &PenaltyParams, t: f64) -> f64 {
    params.value(t)
}

/// Weighted pairwise cost between two labels: `weight * r(v[a] - v[b])`.
pub fn pairwise_cost(
    params: &PenaltyParams,
    weight: f64,
    a: usize,
    b: usize,
    label_values: &[f64],
) -> f64 {
    weight * params.value(label_values[a] - label_values[b])
}

/// 4-connected grid graph with per-edge regularization weights.
///
/// Edges are ordered: all horizontal (right-neighbor) edges in raster order,
/// then all vertical (down-neighbor) edges in raster order.  Each edge stores
/// `(i, j)` with `i` the left/top endpoint.
#[derive(Debug, Clone)]
pub struct GridGraph {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<(usize, usize)>,
    pub edge_weights: Vec<f64>,
}

impl GridGraph {
    /// Right/down 4-neighborhood with unit weights.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        let mut edges = Vec::with_capacity(height * (width - 1) + width * (height - 1));
        for y in 0..height {
            for x in 0..width - 1 {
                edges.push((y * width + x, y * width + x + 1));
            }
        }
        for y in 0..height - 1 {
            for x in 0..width {
                edges.push((y * width + x, (y + 1) * width + x));
            }
        }
        let edge_weights = vec![1.0; edges.len()];
        Ok(GridGraph {
            width,
            height,
            edges,
            edge_weights,
        })
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn num_horizontal(&self) -> usize {
        self.height * (self.width - 1)
    }

    /// Weight of the horizontal edge starting at column `x` in row `y`.
    pub fn horizontal_weight(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x + 1 < self.width);
        self.edge_weights[y * (self.width - 1) + x]
    }

    /// Weight of the vertical edge starting at row `y` in column `x`.
    pub fn vertical_weight(&self, x: usize, y: usize) -> f64 {
        debug_assert!(y + 1 < self.height);
        self.edge_weights[self.num_horizontal() + y * self.width + x]
    }

    pub fn set_horizontal_weight(&mut self, x: usize, y: usize, w: f64) {
        self.edge_weights[y * (self.width - 1) + x] = w;
    }

    pub fn set_vertical_weight(&mut self, x: usize, y: usize, w: f64) {
        let off = self.num_horizontal();
        self.edge_weights[off + y * self.width + x] = w;
    }
}

/// Convenience constructor mirroring [`GridGraph::new`].
pub fn build_grid_graph(width: usize, height: usize) -> Result<GridGraph> {
    GridGraph::new(width, height)
}

/// Sampled per-pixel, per-label data costs plus the continuous value each
/// label represents.  Costs are stored in 32-bit floats; energy sums
/// accumulate in 64-bit.
#[derive(Debug, Clone)]
pub struct CostVolume {
    pub width: usize,
    pub height: usize,
    pub labels: usize,
    /// Row-major per pixel, contiguous per label: `costs[(y*width + x)*labels + k]`.
    pub costs: Vec<f32>,
    /// Strictly increasing continuous value per label.
    pub label_values: Vec<f64>,
}

impl CostVolume {
    pub fn new(width: usize, height: usize, labels: usize) -> Result<Self> {
        if width == 0 || height == 0 || labels == 0 {
            return Err(Error::Argument(format!(
                "cost volume dimensions must be positive, got {width}x{height}x{labels}"
            )));
        }
        Ok(CostVolume {
            width,
            height,
            labels,
            costs: vec![0.0; width * height * labels],
            label_values: (0..labels).map(|k| k as f64).collect(),
        })
    }

    pub fn with_label_values(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.labels {
            return Err(Error::Dimension(format!(
                "{} label values for {} labels",
                values.len(),
                self.labels
            )));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "label values must be strictly increasing".into(),
            ));
        }
        self.label_values = values;
        Ok(self)
    }

    #[inline]
    pub fn cost(&self, pixel: usize, label: usize) -> f32 {
        self.costs[pixel * self.labels + label]
    }

    #[inline]
    pub fn pixel_costs(&self, pixel: usize) -> &[f32] {
        &self.costs[pixel * self.labels..(pixel + 1) * self.labels]
    }

    /// Data cost at an arbitrary continuous value, by linear interpolation of
    /// the sampled costs; clamps outside the label range.
    pub fn sample(&self, pixel: usize, value: f64) -> f64 {
        let vals = &self.label_values;
        let costs = self.pixel_costs(pixel);
        if value <= vals[0] {
            return costs[0] as f64;
        }
        if value >= vals[self.labels - 1] {
            return costs[self.labels - 1] as f64;
        }
        let hi = vals.partition_point(|v| *v <= value).min(self.labels - 1);
        let lo = hi - 1;
        let t = (value - vals[lo]) / (vals[hi] - vals[lo]);
        costs[lo] as f64 + t * (costs[hi] as f64 - costs[lo] as f64)
    }
}

/// One discrete label index per pixel, raster order.
pub type Labeling = Vec<usize>;

/// Per-pixel 2-D table of flow data costs `D_i(a, b)` over the two
/// displacement components.
#[derive(Debug, Clone)]
pub struct FlowCostVolume2D {
    pub width: usize,
    pub height: usize,
    pub labels1: usize,
    pub labels2: usize,
    /// `costs[((y*width + x)*labels1 + a)*labels2 + b]`.
    pub costs: Vec<f32>,
    pub label_values1: Vec<f64>,
    pub label_values2: Vec<f64>,
}

impl FlowCostVolume2D {
    pub fn new(width: usize, height: usize, labels1: usize, labels2: usize) -> Result<Self> {
        if width == 0 || height == 0 || labels1 == 0 || labels2 == 0 {
            return Err(Error::Argument("flow volume dimensions must be positive".into()));
        }
        Ok(FlowCostVolume2D {
            width,
            height,
            labels1,
            labels2,
            costs: vec![0.0; width * height * labels1 * labels2],
            label_values1: (0..labels1).map(|k| k as f64).collect(),
            label_values2: (0..labels2).map(|k| k as f64).collect(),
        })
    }

    #[inline]
    pub fn cost(&self, pixel: usize, a: usize, b: usize) -> f32 {
        self.costs[(pixel * self.labels1 + a) * self.labels2 + b]
    }

    #[inline]
    pub fn cost_mut(&mut self, pixel: usize, a: usize, b: usize) -> &mut f32 {
        &mut self.costs[(pixel * self.labels1 + a) * self.labels2 + b]
    }

    /// Bilinear interpolation of `D_i` at a continuous displacement, clamped
    /// to the sampled range.
    pub fn sample(&self, pixel: usize, v1: f64, v2: f64) -> f64 {
        let (lo1, hi1, t1) = locate(&self.label_values1, v1);
        let (lo2, hi2, t2) = locate(&self.label_values2, v2);
        let c = |a: usize, b: usize| self.cost(pixel, a, b) as f64;
        let top = c(lo1, lo2) + t2 * (c(lo1, hi2) - c(lo1, lo2));
        let bot = c(hi1, lo2) + t2 * (c(hi1, hi2) - c(hi1, lo2));
        top + t1 * (bot - top)
    }
}

fn locate(vals: &[f64], v: f64) -> (usize, usize, f64) {
    let n = vals.len();
    if v <= vals[0] || n == 1 {
        return (0, 0, 0.0);
    }
    if v >= vals[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let hi = vals.partition_point(|x| *x <= v).min(n - 1);
    let lo = hi - 1;
    ((lo), (hi), (v - vals[lo]) / (vals[hi] - vals[lo]))
}

/// Exact energy of a labeling: unary sum plus weighted pairwise sum.
pub fn energy_evaluate(
    volume: &CostVolume,
    graph: &GridGraph,
    params: &PenaltyParams,
    labeling: &Labeling,
) -> Result<f64> {
    if volume.width != graph.width || volume.height != graph.height {
        return Err(Error::Dimension(format!(
            "volume {}x{} vs graph {}x{}",
            volume.width, volume.height, graph.width, graph.height
        )));
    }
    if labeling.len() != graph.num_pixels() {
        return Err(Error::Dimension(format!(
            "labeling length {} vs {} pixels",
            labeling.len(),
            graph.num_pixels()
        )));
    }
    let mut e = 0.0f64;
    for (pixel, &label) in labeling.iter().enumerate() {
        e += volume.cost(pixel, label) as f64;
    }
    for (edge, &(i, j)) in graph.edges.iter().enumerate() {
        e += pairwise_cost(
            params,
            graph.edge_weights[edge],
            labeling[i],
            labeling[j],
            &volume.label_values,
        );
    }
    Ok(e)
}

/// Decouple a 2-D flow cost table into two stereo-like volumes of optimistic
/// costs: per pixel, the row-wise and column-wise minima of the table.
pub fn decouple_flow_costs(vol2d: &FlowCostVolume2D) -> (CostVolume, CostVolume) {
    let n = vol2d.width * vol2d.height;
    let mut f1 = CostVolume::new(vol2d.width, vol2d.height, vol2d.labels1).expect("valid dims");
    let mut f2 = CostVolume::new(vol2d.width, vol2d.height, vol2d.labels2).expect("valid dims");
    f1.label_values = vol2d.label_values1.clone();
    f2.label_values = vol2d.label_values2.clone();
    for pixel in 0..n {
        for a in 0..vol2d.labels1 {
            let mut best = f32::INFINITY;
            for b in 0..vol2d.labels2 {
                best = best.min(vol2d.cost(pixel, a, b));
            }
            f1.costs[pixel * vol2d.labels1 + a] = best;
        }
        for b in 0..vol2d.labels2 {
            let mut best = f32::INFINITY;
            for a in 0..vol2d.labels1 {
                best = best.min(vol2d.cost(pixel, a, b));
            }
            f2.costs[pixel * vol2d.labels2 + b] = best;
        }
    }
    (f1, f2)
}
