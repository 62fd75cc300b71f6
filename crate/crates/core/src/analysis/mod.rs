//! Exact tabular oracles, information-bound checks and training statistics.

mod bounds;
mod oracle;
mod report;
mod timeseries;

pub use bounds::{
    latent_mi_bound_check, marginal_entropy, mi_bound_check, BoundCheck, DiscreteJoint, LatentBoundCheck, LatentStack,
};
pub use oracle::{
    default_policy_from_weights, discounted_visitation, entropy_regularized_eval, evaluate_with_costs,
    history_default_policy, optimal_default_policy, regularized_dp_eval, DefaultPolicyOracle, DpValues, Visitation,
    MAX_HISTORY_HORIZON, VISITATION_CUTOFF,
};
pub use report::{bounds_suite, oracle_suite, CheckLine, VerificationReport};
pub use timeseries::{
    default_marginals, kl_timeseries, AxisMarginal, DefaultMarginals, KlRow, KlSeries, MarginalsLog, SpikeStats,
    TracePoint,
};
