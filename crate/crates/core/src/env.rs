//! Edge datacenter selection environment.
//!
//! Each arm is a datacenter whose latency for workload `x` is an M/M/1
//! queueing delay plus a linear communication delay. The workload (the
//! context) is drawn uniformly on the context domain every round, and the
//! agent is shown a perturbed copy of it within distance `delta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::RewardFunction;

const CONTEXT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatacenterArm {
    /// Service rate.
    pub mu: f64,
    /// Communication delay per unit of workload.
    pub p: f64,
}

/// Average total latency `x / (mu - x) + p x`.
pub fn latency(arm: &DatacenterArm, x: f64) -> Result<f64> {
    if x >= arm.mu {
        return Err(Error::UnstableQueue { x, mu: arm.mu });
    }
    Ok(x / (arm.mu - x) + arm.p * x)
}

/// How latency is turned into a reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardTransform {
    #[default]
    Negate,
    Reciprocal,
}

/// Datacenters I-IV.
pub fn default_arms() -> Vec<DatacenterArm> {
    [(35.0, 0.04), (38.0, 0.05), (45.0, 0.074), (51.0, 0.088)]
        .into_iter()
        .map(|(mu, p)| DatacenterArm { mu, p })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub arms: Vec<DatacenterArm>,
    pub context_lo: f64,
    pub context_hi: f64,
    /// Largest distance between the true and the presented context.
    pub delta: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub horizon: usize,
    pub reward_transform: RewardTransform,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            arms: default_arms(),
            context_lo: 10.0,
            context_hi: 30.0,
            delta: 2.0,
            noise_sigma: 0.05,
            seed: 0,
            horizon: 2000,
            reward_transform: RewardTransform::Negate,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::invalid("env.arms is empty"));
        }
        if !(self.context_lo < self.context_hi) {
            return Err(Error::invalid(format!(
                "env.context_lo ({}) must be below env.context_hi ({})",
                self.context_lo, self.context_hi
            )));
        }
        if self.context_lo < 0.0 {
            return Err(Error::invalid("workload domain must be nonnegative"));
        }
        for (i, arm) in self.arms.iter().enumerate() {
            if !(arm.mu > self.context_hi) {
                return Err(Error::invalid(format!(
                    "arm {i}: service rate {} must exceed env.context_hi {}",
                    arm.mu, self.context_hi
                )));
            }
            if !(arm.p > 0.0) {
                return Err(Error::invalid(format!("arm {i}: p must be > 0, got {}", arm.p)));
            }
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("env.delta must be >= 0, got {}", self.delta)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "env.noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("env.horizon must be >= 1"));
        }
        if self.reward_transform == RewardTransform::Reciprocal && self.context_lo <= 0.0 {
            return Err(Error::invalid("reciprocal reward needs a strictly positive workload domain"));
        }
        Ok(())
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    /// Noiseless reward of `arm` at workload `x`.
    pub fn true_reward(&self, arm: usize, x: f64) -> Result<f64> {
        let spec = self
            .arms
            .get(arm)
            .ok_or_else(|| Error::invalid(format!("arm {arm} outside arm set of size {}", self.arms.len())))?;
        let l = latency(spec, x)?;
        Ok(match self.reward_transform {
            RewardTransform::Negate => -l,
            RewardTransform::Reciprocal => 1.0 / l,
        })
    }
}

impl RewardFunction for EnvConfig {
    /// Panics outside the stable region; validated configs only query the
    /// context domain, where every arm is stable.
    fn reward(&self, x: &[f64], arm: usize) -> f64 {
        self.true_reward(arm, x[0]).expect("context inside the stable domain")
    }
}

/// A round whose context has been drawn but whose arm is not yet committed.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingRound {
    round: usize,
    x_true: f64,
    x_hat: f64,
}

impl PendingRound {
    /// The imperfect context shown to the agent.
    pub fn x_hat(&self) -> f64 {
        self.x_hat
    }

    /// The true context. Only metrics may look at this before the round ends.
    pub fn true_context(&self) -> f64 {
        self.x_true
    }

    pub fn round(&self) -> usize {
        self.round
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub x_true: f64,
    pub x_hat: f64,
    pub arm: usize,
    pub reward: f64,
    pub noiseless_reward: f64,
}

/// Stateful environment; contexts and noise come from separate streams so
/// the context sequence does not depend on which arms are played.
#[derive(Debug, Clone)]
pub struct EdgeEnv {
    config: EnvConfig,
    context_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    round: usize,
}

impl EdgeEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let mut context_rng = ChaCha8Rng::seed_from_u64(config.seed);
        context_rng.set_stream(CONTEXT_STREAM);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
        noise_rng.set_stream(NOISE_STREAM);
        Ok(Self {
            config,
            context_rng,
            noise_rng,
            round: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Draws the true context and the presented one.
    pub fn begin_round(&mut self) -> PendingRound {
        let c = &self.config;
        self.round += 1;
        let x_true = c.context_lo + (c.context_hi - c.context_lo) * self.context_rng.random::<f64>();
        let shift = c.delta * (2.0 * self.context_rng.random::<f64>() - 1.0);
        let x_hat = (x_true + shift).clamp(c.context_lo, c.context_hi);
        PendingRound {
            round: self.round,
            x_true,
            x_hat,
        }
    }

    /// Commits `arm` for the pending round and draws the noisy reward.
    pub fn complete(&mut self, pending: PendingRound, arm: usize) -> Result<RoundOutcome> {
        let noiseless_reward = self.config.true_reward(arm, pending.x_true)?;
        let z: f64 = self.noise_rng.sample(StandardNormal);
        Ok(RoundOutcome {
            x_true: pending.x_true,
            x_hat: pending.x_hat,
            arm,
            reward: noiseless_reward + self.config.noise_sigma * z,
            noiseless_reward,
        })
    }

    /// One full round with an arm fixed in advance.
    pub fn step(&mut self, arm: usize) -> Result<RoundOutcome> {
        let pending = self.begin_round();
        self.complete(pending, arm)
    }
}
