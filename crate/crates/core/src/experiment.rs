//! The round loop, regret metrics, multi-seed replication and the numerical
//! checks on confidence widths.
//!
//! Every round: the environment draws `(x_t, x_hat_t)`; the policy sees only
//! `x_hat_t` and the estimator; the metrics use the true reward on the
//! defense grid (plus the true context, so that the worst-case regret always
//! dominates the true regret); the estimator then observes `(x_t, a_t, y_t)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::env::{EdgeEnv, EnvConfig};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorState, ExplorationSchedule};
use crate::kernel::{ArmEncoding, ContextArmVector, ContextEncoder, KernelSpec};
use crate::policy::{
    oracle_optimal_arm, select_maxmin_ucb, select_minwd, select_simple_ucb, ArmSet, OracleValues,
    PolicyKind, RewardFunction, UcbModel,
};
use crate::region::{DefenseRegion, Norm};

/// Agent-side defense settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefenseConfig {
    /// Budget `delta` the policies defend against.
    pub delta: f64,
    pub norm: Norm,
    /// Grid resolution of the policies' inner optimizations.
    pub grid_points: usize,
    /// Grid resolution of the per-round oracle metrics.
    pub oracle_grid_points: usize,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            delta: 2.0,
            norm: Norm::L2,
            grid_points: 41,
            oracle_grid_points: 41,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("defense.delta must be >= 0, got {}", self.delta)));
        }
        for (name, g) in [("grid_points", self.grid_points), ("oracle_grid_points", self.oracle_grid_points)] {
            if g == 0 || g % 2 == 0 {
                return Err(Error::invalid(format!("defense.{name} must be odd and positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Estimator settings shared by every policy of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub kernel: KernelSpec,
    pub arm_encoding: ArmEncoding,
    pub lambda: f64,
    pub schedule: ExplorationSchedule,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::gaussian(0.1).expect("positive lengthscale"),
            arm_encoding: ArmEncoding::Ordinal,
            lambda: 0.1,
            schedule: ExplorationSchedule::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("estimator.lambda must be > 0, got {}", self.lambda)));
        }
        self.schedule.validate()
    }
}

/// Everything one episode needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub env: EnvConfig,
    pub estimator: EstimatorConfig,
    pub defense: DefenseConfig,
    pub policy: PolicyKind,
}

impl RunSpec {
    pub fn new(policy: PolicyKind) -> Self {
        Self {
            env: EnvConfig::default(),
            estimator: EstimatorConfig::default(),
            defense: DefenseConfig::default(),
            policy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.estimator.validate()?;
        self.defense.validate()
    }

    pub fn with_policy(&self, policy: PolicyKind) -> Self {
        Self {
            policy,
            ..self.clone()
        }
    }
}

/// Per-round log.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub x_hat: f64,
    pub x_true: f64,
    pub arm: usize,
    pub reward: f64,
    /// `f(x_t, a_t)`.
    pub noiseless_reward: f64,
    pub r_inst: f64,
    pub r_cum: f64,
    pub robust_inst: f64,
    pub robust_cum: f64,
    pub worst_inst: f64,
    pub worst_cum: f64,
    pub mf: f64,
    pub mr: f64,
    pub mr_bar: f64,
    /// Confidence width at `(x_t, a_t)` before the round's observation.
    pub s_t: f64,
    /// Information gain after the round's observation.
    pub gamma_t: f64,
    /// Exploration coefficient used for the round's decision.
    pub h_t: f64,
}

impl RoundRecord {
    /// `MF_t - f(x_t, a_t)`.
    pub fn reward_gap(&self) -> f64 {
        self.mf - self.noiseless_reward
    }

    /// Worst-case instantaneous regret minus `MR_t`.
    pub fn regret_gap(&self) -> f64 {
        self.worst_inst - self.mr
    }
}

/// Runs `spec.env.horizon` rounds with the environment seeded by `seed`.
pub fn run_episode(spec: &RunSpec, seed: u64) -> Result<Vec<RoundRecord>> {
    spec.validate()?;
    let env_config = EnvConfig {
        seed,
        ..spec.env.clone()
    };
    let mut env = EdgeEnv::new(env_config.clone())?;
    let arms = ArmSet::new(env_config.n_arms())?;
    let encoder = ContextEncoder::scalar(
        env_config.context_lo,
        env_config.context_hi,
        arms.len(),
        spec.estimator.arm_encoding,
    )?;
    let mut state = EstimatorState::new(spec.estimator.kernel, spec.estimator.lambda)?;
    let schedule = spec.estimator.schedule;
    let truth: &dyn RewardFunction = &env_config;

    let mut records = Vec::with_capacity(env_config.horizon);
    let (mut r_cum, mut robust_cum, mut worst_cum) = (0.0, 0.0, 0.0);
    for t in 1..=env_config.horizon {
        let wrap = |e: Error| Error::Episode {
            round: t,
            policy: spec.policy.name().to_string(),
            source: Box::new(e),
        };
        let pending = env.begin_round();
        let x_hat = pending.x_hat();
        let x_true = pending.true_context();
        let region = DefenseRegion::new(
            vec![x_hat],
            spec.defense.delta,
            spec.defense.norm,
            vec![env_config.context_lo],
            vec![env_config.context_hi],
        )
        .map_err(wrap)?;

        let metric_grid = region
            .enumerate_grid(spec.defense.oracle_grid_points)
            .map_err(wrap)?
            .with_point(&[x_true]);
        let oracle = OracleValues::compute(truth, metric_grid.points(), arms);

        let h_t = schedule.coefficient(&state).map_err(wrap)?;
        let model = UcbModel {
            state: &state,
            schedule: &schedule,
            encoder: &encoder,
        };
        let arm = match spec.policy {
            PolicyKind::SimpleUcb => select_simple_ucb(&model, &[x_hat], arms).map_err(wrap)?.arm,
            PolicyKind::MaxMinUcb | PolicyKind::MinWd => {
                let grid = region.enumerate_grid(spec.defense.grid_points).map_err(wrap)?;
                if spec.policy == PolicyKind::MaxMinUcb {
                    select_maxmin_ucb(&model, &grid, arms).map_err(wrap)?.arm
                } else {
                    select_minwd(&model, &grid, arms).map_err(wrap)?.arm
                }
            }
            PolicyKind::OracleMaxMin => oracle.maxmin.arm,
            PolicyKind::OracleMinMax => oracle.minmax.arm,
        };

        let outcome = env.complete(pending, arm).map_err(wrap)?;
        let point: ContextArmVector = encoder.encode(&[x_true], arm).map_err(wrap)?;

        let best = truth.reward(&[x_true], oracle_optimal_arm(truth, &[x_true], arms));
        let r_inst = best - outcome.noiseless_reward;
        let robust_inst = oracle.mf() - oracle.worst_reward[arm];
        let worst_inst = oracle.worst_regret[arm];
        r_cum += r_inst;
        robust_cum += robust_inst;
        worst_cum += worst_inst;

        let s_t = state.observe_with_width(point, outcome.reward).map_err(wrap)?;

        records.push(RoundRecord {
            t,
            seed,
            policy: spec.policy,
            x_hat,
            x_true,
            arm,
            reward: outcome.reward,
            noiseless_reward: outcome.noiseless_reward,
            r_inst,
            r_cum,
            robust_inst,
            robust_cum,
            worst_inst,
            worst_cum,
            mf: oracle.mf(),
            mr: oracle.mr(),
            mr_bar: oracle.mr_bar,
            s_t,
            gamma_t: state.information_gain(),
            h_t,
        });
    }
    Ok(records)
}

/// Mean and standard deviation (n - 1 denominator; 0 for one sample) per round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CurveStats {
    fn from_runs(runs: &[Vec<f64>]) -> Self {
        let len = runs.first().map_or(0, Vec::len);
        let n = runs.len() as f64;
        let mut stats = CurveStats {
            mean: Vec::with_capacity(len),
            std: Vec::with_capacity(len),
        };
        for t in 0..len {
            let mean = runs.iter().map(|r| r[t]).sum::<f64>() / n;
            let var = if runs.len() > 1 {
                runs.iter().map(|r| (r[t] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            stats.mean.push(mean);
            stats.std.push(var.sqrt());
        }
        stats
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_std(&self) -> f64 {
        self.std.last().copied().unwrap_or(0.0)
    }

    /// Standard error of the final mean.
    pub fn final_stderr(&self, n_seeds: usize) -> f64 {
        self.final_std() / (n_seeds as f64).sqrt()
    }
}

/// One seed's episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub seed: u64,
    pub records: Vec<RoundRecord>,
}

/// Aggregate over seeds for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub policy: PolicyKind,
    /// Sorted ascending.
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub true_regret: CurveStats,
    pub robust_regret: CurveStats,
    pub worst_regret: CurveStats,
    /// One width-sum check per seed, in seed order.
    pub width_checks: Vec<WidthSumCheck>,
    /// `MF_t - f(x_t, a_t)` averaged over the first and the last quarter.
    pub reward_gap: QuarterMeans,
    /// Worst-case instantaneous regret minus `MR_t`, same averaging.
    pub regret_gap: QuarterMeans,
    pub episodes: Vec<Episode>,
}

impl RunSummary {
    pub fn from_episodes(policy: PolicyKind, mut episodes: Vec<Episode>) -> Self {
        episodes.sort_by_key(|e| e.seed);
        let curve = |f: fn(&RoundRecord) -> f64| {
            let runs: Vec<Vec<f64>> = episodes.iter().map(|e| e.records.iter().map(f).collect()).collect();
            CurveStats::from_runs(&runs)
        };
        let true_regret = curve(|r| r.r_cum);
        let robust_regret = curve(|r| r.robust_cum);
        let worst_regret = curve(|r| r.worst_cum);
        Self {
            policy,
            seeds: episodes.iter().map(|e| e.seed).collect(),
            horizon: episodes.first().map_or(0, |e| e.records.len()),
            true_regret,
            robust_regret,
            worst_regret,
            width_checks: episodes.iter().map(|e| verify_width_sum(&e.records)).collect(),
            reward_gap: quarter_means(&episodes, RoundRecord::reward_gap),
            regret_gap: quarter_means(&episodes, RoundRecord::regret_gap),
            episodes,
        }
    }
}

/// Per-round means over the first and the last quarter of the episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarterMeans {
    pub first: f64,
    pub last: f64,
}

impl QuarterMeans {
    /// The last-quarter mean is below the first-quarter one.
    pub fn shrinks(&self) -> bool {
        self.last < self.first
    }
}

/// Mean of `metric` over the first and the last quarter of the rounds,
/// pooled across episodes (NaN when episodes are shorter than 4 rounds).
pub fn quarter_means(episodes: &[Episode], metric: fn(&RoundRecord) -> f64) -> QuarterMeans {
    let mut first = (0.0, 0usize);
    let mut last = (0.0, 0usize);
    for e in episodes {
        let q = e.records.len() / 4;
        for r in &e.records[..q] {
            first.0 += metric(r);
            first.1 += 1;
        }
        for r in &e.records[e.records.len() - q..] {
            last.0 += metric(r);
            last.1 += 1;
        }
    }
    QuarterMeans {
        first: first.0 / first.1 as f64,
        last: last.0 / last.1 as f64,
    }
}

/// Runs one episode per seed (in parallel on the current rayon pool) and
/// aggregates them in seed order.
pub fn replicate(spec: &RunSpec, seeds: &[u64]) -> Result<RunSummary> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    let episodes = seeds
        .par_iter()
        .map(|&seed| {
            run_episode(spec, seed)
                .map(|records| Episode { seed, records })
                .map_err(|e| Error::Seed {
                    seed,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSummary::from_episodes(spec.policy, episodes))
}

/// `seed0, seed0 + 1, ..., seed0 + n - 1`.
pub fn seed_range(seed0: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| seed0 + i).collect()
}

/// `2 h sqrt(2 T d log(1 + T / (d lambda)))`.
pub fn reward_gap_bound(h: f64, t: usize, d_bar: f64, lambda: f64) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let t = t as f64;
    2.0 * h * (2.0 * t * d_bar * (1.0 + t / (d_bar * lambda)).ln()).sqrt()
}

/// `2 h sqrt(2 T gamma_T)`, the realized counterpart of [`reward_gap_bound`].
pub fn realized_reward_gap_bound(h: f64, t: usize, gamma: f64) -> f64 {
    2.0 * h * (2.0 * t as f64 * gamma).sqrt()
}

/// Reference curves at round `t` (index 0 is the empty prefix).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundPoint {
    pub t: usize,
    pub cum_mf: f64,
    pub cum_mr: f64,
    pub cum_mr_bar: f64,
    pub slack: f64,
}

pub fn bound_curves(records: &[RoundRecord]) -> Vec<BoundPoint> {
    let mut out = vec![BoundPoint::default()];
    let mut acc = BoundPoint::default();
    let mut h_max: f64 = 0.0;
    for r in records {
        acc.t = r.t;
        acc.cum_mf += r.mf;
        acc.cum_mr += r.mr;
        acc.cum_mr_bar += r.mr_bar;
        h_max = h_max.max(r.h_t);
        acc.slack = realized_reward_gap_bound(h_max, r.t, r.gamma_t);
        out.push(acc);
    }
    out
}

/// Both sides of `sum_t s_t^2 <= 2 gamma_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthSumCheck {
    pub sum_sq_widths: f64,
    pub twice_gamma: f64,
    pub passed: bool,
}

pub const WIDTH_SUM_SLACK: f64 = 1e-6;

pub fn verify_width_sum(records: &[RoundRecord]) -> WidthSumCheck {
    let sum_sq_widths: f64 = records.iter().map(|r| r.s_t * r.s_t).sum();
    let twice_gamma = 2.0 * records.last().map_or(0.0, |r| r.gamma_t);
    WidthSumCheck {
        sum_sq_widths,
        twice_gamma,
        passed: sum_sq_widths <= twice_gamma + WIDTH_SUM_SLACK,
    }
}

/// Synthetic run with a known reward function in the kernel's RKHS.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub n_arms: usize,
    /// Number of kernel centres in the reward expansion.
    pub n_centers: usize,
    /// RKHS norm the expansion is scaled to.
    pub rkhs_norm: f64,
    pub noise_sigma: f64,
    pub delta: f64,
    pub rounds: usize,
    pub n_probes: usize,
    /// Multiplies `h_t` before comparing against the error.
    pub width_multiplier: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::gaussian(0.1).expect("positive lengthscale"),
            lambda: 0.1,
            n_arms: 4,
            n_centers: 10,
            rkhs_norm: 1.0,
            noise_sigma: 0.05,
            delta: 0.1,
            rounds: 500,
            n_probes: 50,
            width_multiplier: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub covered: usize,
    pub total: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        self.covered as f64 / self.total as f64
    }
}

/// Fraction of (round, probe) pairs with `|f_hat - f| <= h_t s_t`, under the
/// theoretical schedule with `B` set to the expansion's RKHS norm.
pub fn verify_concentration(spec: &SyntheticSpec) -> Result<Coverage> {
    if spec.rounds == 0 || spec.n_probes == 0 || spec.n_centers == 0 {
        return Err(Error::invalid("synthetic run needs rounds, probes and centres"));
    }
    let encoder = ContextEncoder::scalar(0.0, 1.0, spec.n_arms, ArmEncoding::Ordinal)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draw_point = |rng: &mut ChaCha8Rng| -> Result<ContextArmVector> {
        let x: f64 = rng.random();
        let a = rng.random_range(0..spec.n_arms);
        encoder.encode(&[x], a)
    };

    let centers = (0..spec.n_centers).map(|_| draw_point(&mut rng)).collect::<Result<Vec<_>>>()?;
    let mut coef: Vec<f64> = (0..spec.n_centers).map(|_| rng.sample(StandardNormal)).collect();
    let gram = crate::kernel::gram_matrix(&spec.kernel, &centers)?;
    let norm_sq: f64 = (0..centers.len())
        .flat_map(|i| (0..centers.len()).map(move |j| (i, j)))
        .map(|(i, j)| coef[i] * coef[j] * gram[[i, j]])
        .sum();
    let scale = spec.rkhs_norm / norm_sq.sqrt();
    coef.iter_mut().for_each(|c| *c *= scale);
    let truth = |z: &ContextArmVector| -> f64 {
        centers
            .iter()
            .zip(&coef)
            .map(|(c, w)| w * spec.kernel.eval_slices(c.combined(), z.combined()))
            .sum()
    };

    let schedule = ExplorationSchedule::theoretical(spec.rkhs_norm, spec.noise_sigma, spec.delta)?;
    let probes = (0..spec.n_probes).map(|_| draw_point(&mut rng)).collect::<Result<Vec<_>>>()?;
    let probe_truth: Vec<f64> = probes.iter().map(&truth).collect();
    let mut state = EstimatorState::new(spec.kernel, spec.lambda)?;
    let mut coverage = Coverage { covered: 0, total: 0 };
    for _ in 0..spec.rounds {
        let h = spec.width_multiplier * schedule.coefficient(&state)?;
        for (post, f) in state.posterior_batch(&probes)?.iter().zip(&probe_truth) {
            coverage.total += 1;
            if (post.mean - f).abs() <= h * post.width {
                coverage.covered += 1;
            }
        }
        let z = draw_point(&mut rng)?;
        let noise: f64 = rng.sample(StandardNormal);
        let y = truth(&z) + spec.noise_sigma * noise;
        state.observe(z, y)?;
    }
    Ok(coverage)
}

pub const CSV_HEADER: [&str; 18] = [
    "t", "seed", "policy", "x_hat", "x_true", "arm", "reward", "r_inst", "R_cum", "robust_inst",
    "robust_cum", "worst_inst", "worst_cum", "MF", "MR", "MR_bar", "s_t", "gamma_t",
];

/// Formats a float with 9 significant digits, `%.9g` style.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// Writes the header and one row per record.
pub fn write_csv<W: std::io::Write>(out: W, records: &[RoundRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.seed.to_string(),
            r.policy.name().to_string(),
            format_sig9(r.x_hat),
            format_sig9(r.x_true),
            r.arm.to_string(),
            format_sig9(r.reward),
            format_sig9(r.r_inst),
            format_sig9(r.r_cum),
            format_sig9(r.robust_inst),
            format_sig9(r.robust_cum),
            format_sig9(r.worst_inst),
            format_sig9(r.worst_cum),
            format_sig9(r.mf),
            format_sig9(r.mr),
            format_sig9(r.mr_bar),
            format_sig9(r.s_t),
            format_sig9(r.gamma_t),
        ])?;
    }
    w.flush()?;
    Ok(())
}
