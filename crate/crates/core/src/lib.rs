//! Discrete-continuous dense image matching.
//!
//! The pipeline minimizes one energy in two stages.  A discrete stage runs a
//! parallel dual minorize-maximize solver (with TRW-S and a primal
//! majorize-minimize baseline) over horizontal/vertical chain decompositions
//! of a grid MRF, using Census-based cost volumes and a truncated penalty.
//! A continuous stage then refines the rounded labeling with a non-linear
//! primal-dual scheme on the same energy, splitting the non-convex penalty
//! into a difference of convex functions.
//!
//! Modules follow the pipeline: [`energy`] holds the shared data model,
//! [`chain`] the chain dynamic programming, [`minorant`] the minorant
//! constructions that drive the dual solver in [`solver`], [`refine`] the
//! continuous stage, [`census`] the data terms, [`io`] the file formats, and
//! [`pipeline`] the end-to-end stereo/flow/bench runs used by the `match`
//! binary.
//!
//! # Quick start
//! ```
//! use dcmatch::energy::{build_grid_graph, CostVolume, PenaltyParams};
//! use dcmatch::solver::{solve, GridProblem, SolverConfig};
//!
//! # fn main() -> dcmatch::Result<()> {
//! // a tiny 4x3 problem with 5 labels and uniform smoothing
//! let mut volume = CostVolume::new(4, 3, 5)?;
//! for (i, c) in volume.costs.iter_mut().enumerate() {
//!     *c = ((i * 7) % 11) as f32;
//! }
//! let graph = build_grid_graph(4, 3)?;
//! let params = PenaltyParams::truncated_linear(2.0);
//! let problem = GridProblem::new(&volume, &graph, &params)?;
//! let solution = solve(&problem, &SolverConfig::default())?;
//! assert_eq!(solution.labeling.len(), 12);
//! assert!(solution.bound_history.last().unwrap() <= &solution.energy);
//! # Ok(())
//! # }
//! ```
#![allow(clippy::needless_range_loop)] // indexed loops mirror the per-label math

pub mod census;
pub mod chain;
pub mod energy;
pub mod error;
pub mod io;
pub mod minorant;
pub mod pipeline;
pub mod refine;
pub mod solver;

pub use energy::{
    build_grid_graph, decouple_flow_costs, energy_evaluate, pairwise_cost, penalty_value,
    CostVolume, FlowCostVolume2D, GridGraph, Labeling, PenaltyParams,
};
pub use error::{Error, Result};
