//! Robust kernelized contextual bandits under perturbed contexts.
//!
//! The agent observes a context `x_hat` that an adversary may have moved by
//! up to `delta` from the true context. A kernel ridge regression estimator
//! supplies upper confidence bounds; the robust policies optimize those
//! bounds against the worst context in the defense region around `x_hat`.
//!
//! Modules, bottom-up: [`kernel`], [`estimator`], [`region`], [`policy`],
//! [`env`] (the edge-computing simulator) and [`experiment`] (round loop,
//! regret metrics, replication and CSV output).

pub mod checks;
pub mod env;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod kernel;
pub mod policy;
pub mod region;

pub use env::{default_arms, latency, DatacenterArm, EdgeEnv, EnvConfig, PendingRound, RewardTransform, RoundOutcome};
pub use error::{Error, Result};
pub use estimator::{ucb, ucb_batch, EstimatorState, ExplorationSchedule, Posterior};
pub use experiment::{
    replicate, run_episode, seed_range, verify_concentration, verify_width_sum, write_csv, DefenseConfig,
    EstimatorConfig, RoundRecord, RunSpec, RunSummary, SyntheticSpec,
};
pub use kernel::{ArmEncoding, ContextArmVector, ContextEncoder, KernelFamily, KernelSpec};
pub use policy::{ArmSet, OracleValues, PolicyDecision, PolicyKind, RewardFunction};
pub use region::{ContextGrid, DefenseRegion, Norm};
