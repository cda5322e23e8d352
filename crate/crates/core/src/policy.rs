//! Arm selection over estimator UCBs, and the known-reward oracles used as
//! ground truth by the metrics.
//!
//! Selection functions only see a [`UcbModel`] (estimator, schedule and
//! encoder) plus the contexts to consider. The oracles take the true reward
//! function instead and are never called by a selection rule.
//!
//! Ties go to the lowest arm index, then to the first grid point in
//! lexicographic order.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimator::{ucb_batch, EstimatorState, ExplorationSchedule};
use crate::kernel::ContextEncoder;
use crate::region::ContextGrid;

/// The true reward `f(x, a)`.
pub trait RewardFunction {
    fn reward(&self, x: &[f64], arm: usize) -> f64;
}

impl<F> RewardFunction for F
where
    F: Fn(&[f64], usize) -> f64,
{
    fn reward(&self, x: &[f64], arm: usize) -> f64 {
        self(x, arm)
    }
}

/// Arms `0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArmSet {
    count: usize,
}

impl ArmSet {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("arm set is empty"));
        }
        Ok(Self { count })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        0..self.count
    }
}

/// Index of the first maximum.
fn argmax(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Index of the first minimum.
fn argmin(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// What the selection rules are allowed to see.
#[derive(Debug, Clone, Copy)]
pub struct UcbModel<'a> {
    pub state: &'a EstimatorState,
    pub schedule: &'a ExplorationSchedule,
    pub encoder: &'a ContextEncoder,
}

/// `U_t(x, a)` over a list of contexts times every arm.
#[derive(Debug, Clone)]
pub struct UcbTable {
    contexts: Vec<Vec<f64>>,
    n_arms: usize,
    values: Vec<f64>,
}

impl UcbTable {
    pub fn build(model: &UcbModel<'_>, contexts: &[Vec<f64>], arms: ArmSet) -> Result<Self> {
        if arms.len() != model.encoder.n_arms() {
            return Err(Error::invalid(format!(
                "arm set of size {} does not match the encoder's {}",
                arms.len(),
                model.encoder.n_arms()
            )));
        }
        if contexts.is_empty() {
            return Err(Error::invalid("no contexts to evaluate"));
        }
        let mut queries = Vec::with_capacity(contexts.len() * arms.len());
        for x in contexts {
            for a in arms.indices() {
                queries.push(model.encoder.encode(x, a)?);
            }
        }
        let values = ucb_batch(model.state, model.schedule, &queries)?;
        Ok(Self {
            contexts: contexts.to_vec(),
            n_arms: arms.len(),
            values,
        })
    }

    pub fn value(&self, context: usize, arm: usize) -> f64 {
        self.values[context * self.n_arms + arm]
    }

    fn row(&self, context: usize) -> &[f64] {
        &self.values[context * self.n_arms..(context + 1) * self.n_arms]
    }

    /// `A_t(x)`: the arm with the largest UCB at context `context`.
    pub fn ucb_optimal_arm(&self, context: usize) -> usize {
        argmax(self.row(context).iter().copied()).0
    }

    /// `D_a(x) = U(x, A(x)) - U(x, a)`.
    pub fn degradation(&self, context: usize, arm: usize) -> f64 {
        let best = self.value(context, self.ucb_optimal_arm(context));
        best - self.value(context, arm)
    }

    pub fn contexts(&self) -> &[Vec<f64>] {
        &self.contexts
    }
}

/// Selected arm with the context that witnessed its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub arm: usize,
    pub witness_context: Vec<f64>,
    pub objective_value: f64,
}

pub fn ucb_optimal_arm(model: &UcbModel<'_>, context: &[f64], arms: ArmSet) -> Result<usize> {
    let table = UcbTable::build(model, &[context.to_vec()], arms)?;
    Ok(table.ucb_optimal_arm(0))
}

/// Treats the presented context as if it were the true one.
pub fn select_simple_ucb(model: &UcbModel<'_>, x_hat: &[f64], arms: ArmSet) -> Result<PolicyDecision> {
    let table = UcbTable::build(model, &[x_hat.to_vec()], arms)?;
    let arm = table.ucb_optimal_arm(0);
    Ok(PolicyDecision {
        arm,
        witness_context: x_hat.to_vec(),
        objective_value: table.value(0, arm),
    })
}

/// Picks the arm whose smallest UCB over the grid is largest.
pub fn select_maxmin_ucb(model: &UcbModel<'_>, grid: &ContextGrid, arms: ArmSet) -> Result<PolicyDecision> {
    let table = UcbTable::build(model, grid.points(), arms)?;
    Ok(maxmin_from_table(&table, arms))
}

fn maxmin_from_table(table: &UcbTable, arms: ArmSet) -> PolicyDecision {
    let worst: Vec<(usize, f64)> = arms
        .indices()
        .map(|a| argmin((0..table.contexts.len()).map(|g| table.value(g, a))))
        .collect();
    let (arm, value) = argmax(worst.iter().map(|w| w.1));
    PolicyDecision {
        arm,
        witness_context: table.contexts[worst[arm].0].clone(),
        objective_value: value,
    }
}

pub fn ucb_degradation(model: &UcbModel<'_>, x: &[f64], arm: usize, arms: ArmSet) -> Result<f64> {
    if arm >= arms.len() {
        return Err(Error::invalid(format!("arm {arm} outside arm set of size {}", arms.len())));
    }
    let table = UcbTable::build(model, &[x.to_vec()], arms)?;
    Ok(table.degradation(0, arm))
}

/// Picks the arm whose largest UCB degradation over the grid is smallest.
pub fn select_minwd(model: &UcbModel<'_>, grid: &ContextGrid, arms: ArmSet) -> Result<PolicyDecision> {
    let table = UcbTable::build(model, grid.points(), arms)?;
    Ok(minwd_from_table(&table, arms))
}

fn minwd_from_table(table: &UcbTable, arms: ArmSet) -> PolicyDecision {
    let worst: Vec<(usize, f64)> = arms
        .indices()
        .map(|a| argmax((0..table.contexts.len()).map(|g| table.degradation(g, a))))
        .collect();
    let (arm, value) = argmin(worst.iter().map(|w| w.1));
    PolicyDecision {
        arm,
        witness_context: table.contexts[worst[arm].0].clone(),
        objective_value: value,
    }
}

/// `A*(x) = argmax_a f(x, a)`.
pub fn oracle_optimal_arm(f: &dyn RewardFunction, x: &[f64], arms: ArmSet) -> usize {
    argmax(arms.indices().map(|a| f.reward(x, a))).0
}

/// Arm, context and value of an oracle optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleChoice {
    pub arm: usize,
    pub context: Vec<f64>,
    pub value: f64,
}

/// The true reward over a grid times every arm, plus per-context best rewards.
#[derive(Debug, Clone)]
pub struct RewardTable {
    contexts: Vec<Vec<f64>>,
    n_arms: usize,
    values: Vec<f64>,
    best: Vec<f64>,
}

impl RewardTable {
    pub fn build(f: &dyn RewardFunction, contexts: &[Vec<f64>], arms: ArmSet) -> Self {
        let mut values = Vec::with_capacity(contexts.len() * arms.len());
        let mut best = Vec::with_capacity(contexts.len());
        for x in contexts {
            let row: Vec<f64> = arms.indices().map(|a| f.reward(x, a)).collect();
            best.push(argmax(row.iter().copied()).1);
            values.extend(row);
        }
        Self {
            contexts: contexts.to_vec(),
            n_arms: arms.len(),
            values,
            best,
        }
    }

    pub fn reward(&self, context: usize, arm: usize) -> f64 {
        self.values[context * self.n_arms + arm]
    }

    /// `r(x, a) = f(x, A*(x)) - f(x, a)`.
    pub fn regret(&self, context: usize, arm: usize) -> f64 {
        self.best[context] - self.reward(context, arm)
    }

    /// Smallest reward of `arm` over the grid and where it occurs.
    pub fn worst_reward(&self, arm: usize) -> (usize, f64) {
        argmin((0..self.contexts.len()).map(|g| self.reward(g, arm)))
    }

    /// Largest regret of `arm` over the grid and where it occurs.
    pub fn worst_regret(&self, arm: usize) -> (usize, f64) {
        argmax((0..self.contexts.len()).map(|g| self.regret(g, arm)))
    }

    /// `argmax_a min_x f(x, a)`.
    pub fn maxmin_reward(&self) -> OracleChoice {
        let worst: Vec<_> = (0..self.n_arms).map(|a| self.worst_reward(a)).collect();
        let (arm, value) = argmax(worst.iter().map(|w| w.1));
        OracleChoice {
            arm,
            context: self.contexts[worst[arm].0].clone(),
            value,
        }
    }

    /// `argmin_a max_x r(x, a)`.
    pub fn minmax_regret(&self) -> OracleChoice {
        let worst: Vec<_> = (0..self.n_arms).map(|a| self.worst_regret(a)).collect();
        let (arm, value) = argmin(worst.iter().map(|w| w.1));
        OracleChoice {
            arm,
            context: self.contexts[worst[arm].0].clone(),
            value,
        }
    }

    /// `max_x f(x, A*(x))`.
    pub fn best_reward_anywhere(&self) -> f64 {
        self.best.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `(a_bar, x_bar, MF)`.
pub fn maxmin_reward_oracle(f: &dyn RewardFunction, grid: &ContextGrid, arms: ArmSet) -> OracleChoice {
    RewardTable::build(f, grid.points(), arms).maxmin_reward()
}

/// `(a_tilde, x_tilde, MR)`.
pub fn minmax_regret_oracle(f: &dyn RewardFunction, grid: &ContextGrid, arms: ArmSet) -> OracleChoice {
    RewardTable::build(f, grid.points(), arms).minmax_regret()
}

/// `max_x r(x, arm)` over the grid.
pub fn worst_case_regret_of_arm(f: &dyn RewardFunction, grid: &ContextGrid, arm: usize, arms: ArmSet) -> f64 {
    RewardTable::build(f, grid.points(), arms).worst_regret(arm).1
}

/// `max_x f(x, A*(x)) - MF`.
pub fn mr_bar_oracle(f: &dyn RewardFunction, grid: &ContextGrid, arms: ArmSet, mf: f64) -> f64 {
    RewardTable::build(f, grid.points(), arms).best_reward_anywhere() - mf
}

/// All oracle quantities of one round, computed from a single reward table.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleValues {
    pub maxmin: OracleChoice,
    pub minmax: OracleChoice,
    pub mr_bar: f64,
    /// `min_x f(x, a)` per arm.
    pub worst_reward: Vec<f64>,
    /// `max_x r(x, a)` per arm.
    pub worst_regret: Vec<f64>,
}

impl OracleValues {
    pub fn compute(f: &dyn RewardFunction, contexts: &[Vec<f64>], arms: ArmSet) -> Self {
        let table = RewardTable::build(f, contexts, arms);
        let maxmin = table.maxmin_reward();
        let mr_bar = table.best_reward_anywhere() - maxmin.value;
        Self {
            minmax: table.minmax_regret(),
            worst_reward: arms.indices().map(|a| table.worst_reward(a).1).collect(),
            worst_regret: arms.indices().map(|a| table.worst_regret(a).1).collect(),
            maxmin,
            mr_bar,
        }
    }

    pub fn mf(&self) -> f64 {
        self.maxmin.value
    }

    pub fn mr(&self) -> f64 {
        self.minmax.value
    }
}

/// Arm selection rules the runner knows about.
///
/// The two oracle variants replay `a_bar_t` / `a_tilde_t` from the true
/// reward and exist only to check metric identities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    SimpleUcb,
    MaxMinUcb,
    MinWd,
    OracleMaxMin,
    OracleMinMax,
}

impl PolicyKind {
    pub const LEARNING: [PolicyKind; 3] = [PolicyKind::SimpleUcb, PolicyKind::MaxMinUcb, PolicyKind::MinWd];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::SimpleUcb => "simple_ucb",
            PolicyKind::MaxMinUcb => "maxmin_ucb",
            PolicyKind::MinWd => "minwd",
            PolicyKind::OracleMaxMin => "oracle_maxmin",
            PolicyKind::OracleMinMax => "oracle_minmax",
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, PolicyKind::OracleMaxMin | PolicyKind::OracleMinMax)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PolicyKind::SimpleUcb,
            PolicyKind::MaxMinUcb,
            PolicyKind::MinWd,
            PolicyKind::OracleMaxMin,
            PolicyKind::OracleMinMax,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::invalid(format!("unknown policy {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::kernel::{ArmEncoding, KernelSpec};
    use crate::region::DefenseRegion;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        state: EstimatorState,
        schedule: ExplorationSchedule,
        encoder: ContextEncoder,
    }

    impl Fixture {
        fn new(n_arms: usize) -> Self {
            Self {
                state: EstimatorState::new(KernelSpec::gaussian(0.1).unwrap(), 0.1).unwrap(),
                schedule: ExplorationSchedule::fixed(0.04).unwrap(),
                encoder: ContextEncoder::scalar(10.0, 30.0, n_arms, ArmEncoding::Ordinal).unwrap(),
            }
        }

        fn observe(&mut self, x: f64, arm: usize, y: f64) {
            let z = self.encoder.encode(&[x], arm).unwrap();
            self.state.observe(z, y).unwrap();
        }

        fn model(&self) -> UcbModel<'_> {
            UcbModel {
                state: &self.state,
                schedule: &self.schedule,
                encoder: &self.encoder,
            }
        }

        fn ucb(&self, x: f64, a: usize) -> f64 {
            crate::estimator::ucb(&self.state, &self.schedule, &self.encoder.encode(&[x], a).unwrap()).unwrap()
        }
    }

    fn grid(center: f64, delta: f64, res: usize) -> ContextGrid {
        DefenseRegion::scalar(center, delta, 10.0, 30.0).unwrap().enumerate_grid(res).unwrap()
    }

    fn random_fixture(rng: &mut ChaCha8Rng, n_arms: usize, n_obs: usize) -> Fixture {
        let mut fx = Fixture::new(n_arms);
        for _ in 0..n_obs {
            let x = rng.random_range(10.0..30.0);
            let a = rng.random_range(0..n_arms);
            fx.observe(x, a, rng.random_range(-3.0..0.0));
        }
        fx
    }

    #[test]
    fn empty_history_ties_go_to_arm_zero() {
        let fx = Fixture::new(4);
        let arms = ArmSet::new(4).unwrap();
        assert_eq!(ucb_optimal_arm(&fx.model(), &[20.0], arms).unwrap(), 0);
        assert_eq!(select_simple_ucb(&fx.model(), &[20.0], arms).unwrap().arm, 0);
        assert_eq!(select_maxmin_ucb(&fx.model(), &grid(20.0, 2.0, 41), arms).unwrap().arm, 0);
    }

    #[test]
    fn single_arm_is_always_chosen() {
        let mut fx = Fixture::new(1);
        fx.observe(15.0, 0, -1.0);
        let arms = ArmSet::new(1).unwrap();
        assert_eq!(ucb_optimal_arm(&fx.model(), &[20.0], arms).unwrap(), 0);
        assert_eq!(ucb_degradation(&fx.model(), &[20.0], 0, arms).unwrap(), 0.0);
        let d = select_minwd(&fx.model(), &grid(20.0, 2.0, 11), arms).unwrap();
        assert_eq!((d.arm, d.objective_value), (0, 0.0));
    }

    #[test]
    fn empty_arm_set_is_rejected() {
        assert!(ArmSet::new(0).is_err());
    }

    #[test]
    fn ucb_optimal_arm_matches_exhaustive_search() {
        let mut fx = Fixture::new(3);
        fx.observe(20.0, 0, -2.0);
        fx.observe(20.0, 1, -1.5);
        fx.observe(20.0, 2, -0.5);
        let arms = ArmSet::new(3).unwrap();
        let ucbs: Vec<f64> = (0..3).map(|a| fx.ucb(20.0, a)).collect();
        let brute = (0..3).max_by(|a, b| ucbs[*a].total_cmp(&ucbs[*b])).unwrap();
        assert_eq!(brute, 2);
        assert_eq!(ucb_optimal_arm(&fx.model(), &[20.0], arms).unwrap(), 2);
        for a in 0..3 {
            let d = ucb_degradation(&fx.model(), &[20.0], a, arms).unwrap();
            assert_abs_diff_eq!(d, ucbs[2] - ucbs[a], epsilon = 1e-12);
        }
    }

    #[test]
    fn maxmin_matches_brute_force_table() {
        let mut fx = Fixture::new(2);
        fx.observe(19.0, 0, -1.0);
        fx.observe(21.0, 0, -3.0);
        fx.observe(20.0, 1, -2.0);
        let g = grid(20.0, 1.0, 3);
        let arms = ArmSet::new(2).unwrap();
        let d = select_maxmin_ucb(&fx.model(), &g, arms).unwrap();
        let mut best = (0, f64::NEG_INFINITY, 0.0);
        for a in 0..2 {
            let (x, m) = [19.0, 20.0, 21.0]
                .iter()
                .map(|&x| (x, fx.ucb(x, a)))
                .fold((0.0, f64::INFINITY), |acc, (x, u)| if u < acc.1 { (x, u) } else { acc });
            if m > best.1 {
                best = (a, m, x);
            }
        }
        assert_eq!(d.arm, best.0);
        assert_abs_diff_eq!(d.objective_value, best.1, epsilon = 1e-10);
        assert_eq!(d.witness_context, vec![best.2]);
    }

    #[test]
    fn minwd_matches_brute_force_table() {
        let mut fx = Fixture::new(2);
        fx.observe(18.0, 0, -1.0);
        fx.observe(22.0, 1, -1.2);
        fx.observe(20.0, 0, -2.5);
        let g = grid(20.0, 2.0, 5);
        let arms = ArmSet::new(2).unwrap();
        let d = select_minwd(&fx.model(), &g, arms).unwrap();
        let xs = [18.0, 19.0, 20.0, 21.0, 22.0];
        let mut best = (0, f64::INFINITY, 0.0);
        for a in 0..2 {
            let mut worst = (0.0, f64::NEG_INFINITY);
            for &x in &xs {
                let top = fx.ucb(x, 0).max(fx.ucb(x, 1));
                let deg = top - fx.ucb(x, a);
                if deg > worst.1 {
                    worst = (x, deg);
                }
            }
            if worst.1 < best.1 {
                best = (a, worst.1, worst.0);
            }
        }
        assert_eq!(d.arm, best.0);
        assert_abs_diff_eq!(d.objective_value, best.1, epsilon = 1e-10);
        assert_eq!(d.witness_context, vec![best.2]);
    }

    #[test]
    fn zero_budget_collapses_all_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let arms = ArmSet::new(4).unwrap();
        for _ in 0..30 {
            let n = rng.random_range(0..25);
            let fx = random_fixture(&mut rng, 4, n);
            let x_hat = rng.random_range(10.0..30.0);
            let g = grid(x_hat, 0.0, 41);
            let simple = select_simple_ucb(&fx.model(), &[x_hat], arms).unwrap();
            let maxmin = select_maxmin_ucb(&fx.model(), &g, arms).unwrap();
            let minwd = select_minwd(&fx.model(), &g, arms).unwrap();
            assert_eq!(simple.arm, maxmin.arm);
            assert_eq!(simple.arm, minwd.arm);
            assert_eq!(minwd.objective_value, 0.0);
        }
    }

    #[test]
    fn selections_dominate_every_alternative() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let arms = ArmSet::new(4).unwrap();
        for _ in 0..20 {
            let n = rng.random_range(0..40);
            let fx = random_fixture(&mut rng, 4, n);
            let g = grid(rng.random_range(10.0..30.0), 2.0, 21);
            let table = UcbTable::build(&fx.model(), g.points(), arms).unwrap();
            let maxmin = select_maxmin_ucb(&fx.model(), &g, arms).unwrap();
            let minwd = select_minwd(&fx.model(), &g, arms).unwrap();
            for a in 0..4 {
                let min_u = (0..g.len()).map(|i| table.value(i, a)).fold(f64::INFINITY, f64::min);
                assert!(maxmin.objective_value >= min_u);
                let max_d = (0..g.len()).map(|i| table.degradation(i, a)).fold(f64::NEG_INFINITY, f64::max);
                assert!(minwd.objective_value <= max_d);
                for i in 0..g.len() {
                    assert!(table.degradation(i, a) >= 0.0);
                }
            }
            for i in 0..g.len() {
                assert_eq!(table.degradation(i, table.ucb_optimal_arm(i)), 0.0);
            }
            assert!(g.points().contains(&maxmin.witness_context));
            assert!(g.points().contains(&minwd.witness_context));
        }
    }

    #[test]
    fn simple_ucb_ignores_the_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fx = random_fixture(&mut rng, 4, 15);
        let arms = ArmSet::new(4).unwrap();
        let d = select_simple_ucb(&fx.model(), &[21.3], arms).unwrap();
        assert_eq!(d.witness_context, vec![21.3]);
        assert_abs_diff_eq!(d.objective_value, fx.ucb(21.3, d.arm), epsilon = 1e-10);
    }

    #[test]
    fn oracle_optimal_arms_on_the_edge_env() {
        let env = EnvConfig::default();
        let arms = ArmSet::new(4).unwrap();
        assert_eq!(oracle_optimal_arm(&env, &[10.0], arms), 0);
        assert_eq!(oracle_optimal_arm(&env, &[20.0], arms), 1);
        assert_eq!(oracle_optimal_arm(&env, &[29.0], arms), 3);
    }

    #[test]
    fn oracles_on_the_edge_env() {
        let env = EnvConfig::default();
        let arms = ArmSet::new(4).unwrap();
        let g = grid(20.0, 2.0, 401);
        let mm = maxmin_reward_oracle(&env, &g, arms);
        assert_eq!(mm.arm, 1);
        assert_eq!(mm.context, vec![22.0]);
        assert_abs_diff_eq!(mm.value, -2.475, epsilon = 5e-4);
        let mr = minmax_regret_oracle(&env, &g, arms);
        assert_eq!(mr.arm, 1);
        assert_eq!(mr.context, vec![18.0]);
        assert_abs_diff_eq!(mr.value, 0.021, epsilon = 2e-3);
        assert_eq!(worst_case_regret_of_arm(&env, &g, mr.arm, arms), mr.value);
        assert_abs_diff_eq!(worst_case_regret_of_arm(&env, &g, 3, arms), 0.351, epsilon = 2e-3);
        let bar = mr_bar_oracle(&env, &g, arms, mm.value);
        assert_abs_diff_eq!(bar, 0.696, epsilon = 2e-3);
        assert!(bar >= mr.value);
    }

    #[test]
    fn oracles_collapse_at_zero_budget() {
        let env = EnvConfig::default();
        let arms = ArmSet::new(4).unwrap();
        let g = grid(17.0, 0.0, 41);
        let star = oracle_optimal_arm(&env, &[17.0], arms);
        let mm = maxmin_reward_oracle(&env, &g, arms);
        assert_eq!((mm.arm, mm.context.clone()), (star, vec![17.0]));
        assert_eq!(mm.value, env.true_reward(star, 17.0).unwrap());
        let mr = minmax_regret_oracle(&env, &g, arms);
        assert_eq!((mr.arm, mr.value), (star, 0.0));
        assert_eq!(worst_case_regret_of_arm(&env, &g, star, arms), 0.0);
        assert_eq!(mr_bar_oracle(&env, &g, arms, mm.value), 0.0);
    }

    #[test]
    fn constant_and_single_arm_oracles() {
        let constant = |_: &[f64], _: usize| 1.0;
        let g = grid(20.0, 2.0, 5);
        let mm = maxmin_reward_oracle(&constant, &g, ArmSet::new(3).unwrap());
        assert_eq!((mm.arm, mm.value), (0, 1.0));
        let env = EnvConfig::default();
        let mr = minmax_regret_oracle(&env, &g, ArmSet::new(1).unwrap());
        assert_eq!((mr.arm, mr.value), (0, 0.0));
    }

    #[test]
    fn oracle_values_are_consistent() {
        let env = EnvConfig::default();
        let arms = ArmSet::new(4).unwrap();
        for c in [10.5, 14.0, 19.7, 23.2, 29.9] {
            let g = grid(c, 2.0, 41);
            let ov = OracleValues::compute(&env, g.points(), arms);
            assert_eq!(ov.mr(), ov.worst_regret[ov.minmax.arm]);
            assert_eq!(ov.mr(), worst_case_regret_of_arm(&env, &g, ov.minmax.arm, arms));
            assert_eq!(ov.mf(), env.true_reward(ov.maxmin.arm, ov.maxmin.context[0]).unwrap());
            assert!(ov.mr() >= 0.0);
            assert!(ov.mr_bar >= ov.mr());
            // Latency increases in x: the worst reward sits at the right edge.
            let right = g.points().last().unwrap()[0];
            for a in 0..4 {
                assert_eq!(ov.worst_reward[a], env.true_reward(a, right).unwrap());
            }
        }
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::LEARNING {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("ucb".parse::<PolicyKind>().is_err());
    }
}
