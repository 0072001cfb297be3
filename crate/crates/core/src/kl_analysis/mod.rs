//! Population-level analysis of the Kronecker KL objective under a spiked
//! gradient model: stationary points, the restricted family, subspace
//! selection, gap bounds and calibration.

pub mod calibrate;
pub mod gap;
pub mod identity;
pub mod measure;
pub mod model;
pub mod objective;
pub mod stationary;
pub mod subspace;

pub use calibrate::{alpha_bracket, AlphaBracket};
pub use gap::{approximation_gap, GapReport};
pub use measure::{mixed_norm_measure, sigma_p_stationary_check, MeasureConstants};
pub use model::{Side, SpikedModel};
pub use objective::{kl_objective, RightFactor};
pub use stationary::{solve_full_stationary, solve_restricted_stationary, SolverConfig, StationaryPair};
pub use subspace::{optimal_subspace_bruteforce, subspace_optimality_check, SubsetChoice};
