//! Plant simulation, Monte Carlo batches, regret and bound evaluation.

pub mod bounds;
pub mod episode;
pub mod monte_carlo;
pub mod noise;
pub mod regret;

pub use bounds::{
    state_bound_alpha, theoretical_bound, BoundConstants, BoundKind, BoundTerms, RealizedQuantities,
};
pub use episode::{run_episode, run_fixed_policy, simulate_step, EpisodeConfig, EpisodeTrace, StepRecord};
pub use monte_carlo::{aggregate, episode_seed, monte_carlo, Aggregate, MonteCarloResult};
pub use noise::NoiseModel;
pub use regret::{empirical_regret, fit_regret_exponent, regret_decomposition, ExponentFit, RegretDecomposition};
