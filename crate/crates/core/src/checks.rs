//! Self-verification suite: the incremental estimator against dense
//! from-scratch solves, the width-sum and concentration inequalities, the
//! zero-budget policy collapse, and the metric identities of oracle play.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimator::{EstimatorState, ExplorationSchedule};
use crate::experiment::{run_episode, verify_concentration, verify_width_sum, RunSpec, SyntheticSpec};
use crate::kernel::{gram_matrix, ArmEncoding, ContextArmVector, ContextEncoder, KernelSpec};
use crate::policy::{select_maxmin_ucb, select_minwd, select_simple_ucb, ArmSet, PolicyKind, UcbModel};
use crate::region::DefenseRegion;

/// Mean and width from a dense solve of `(K + lambda I) x = k`.
pub fn dense_posterior(
    kernel: &KernelSpec,
    lambda: f64,
    points: &[ContextArmVector],
    rewards: &[f64],
    query: &ContextArmVector,
) -> Result<(f64, f64)> {
    let self_kernel = kernel.eval_slices(query.combined(), query.combined());
    if points.is_empty() {
        return Ok((0.0, (self_kernel / lambda).sqrt()));
    }
    let n = points.len();
    let gram = gram_matrix(kernel, points)?;
    let a = DMatrix::from_fn(n, n, |i, j| gram[[i, j]] + if i == j { lambda } else { 0.0 });
    let k = DVector::from_iterator(n, points.iter().map(|p| kernel.eval_slices(p.combined(), query.combined())));
    let y = DVector::from_column_slice(rewards);
    let lu = a.lu();
    let ak = lu
        .solve(&k)
        .ok_or_else(|| Error::Numerical("dense system is singular".into()))?;
    let ay = lu
        .solve(&y)
        .ok_or_else(|| Error::Numerical("dense system is singular".into()))?;
    let mean = k.dot(&ay);
    let sq = (self_kernel - k.dot(&ak)) / lambda;
    Ok((mean, sq.max(0.0).sqrt()))
}

/// Random estimator state over a scalar context in `[0, 1]`.
pub fn random_state(
    rng: &mut impl Rng,
    kernel: KernelSpec,
    lambda: f64,
    encoder: &ContextEncoder,
    history: usize,
) -> Result<EstimatorState> {
    let mut state = EstimatorState::new(kernel, lambda)?;
    for _ in 0..history {
        let x = rng.random_range(0.0..=1.0);
        let arm = rng.random_range(0..encoder.n_arms());
        state.observe(encoder.encode(&[x], arm)?, rng.random_range(-6.0..0.0))?;
    }
    Ok(state)
}

/// Largest relative deviations seen between the incremental and dense routes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DenseComparison {
    pub instances: usize,
    pub max_mean_rel: f64,
    pub max_width_rel: f64,
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// `instances` random (history of at most `max_history` points, query) pairs.
pub fn compare_with_dense(
    kernel: KernelSpec,
    lambda: f64,
    instances: usize,
    max_history: usize,
    seed: u64,
) -> Result<DenseComparison> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = ContextEncoder::scalar(0.0, 1.0, 4, ArmEncoding::Ordinal)?;
    let mut out = DenseComparison {
        instances,
        ..DenseComparison::default()
    };
    for _ in 0..instances {
        let history = rng.random_range(0..=max_history);
        let state = random_state(&mut rng, kernel, lambda, &encoder, history)?;
        let query = encoder.encode(&[rng.random_range(0.0..=1.0)], rng.random_range(0..4))?;
        let (mean, width) = dense_posterior(&kernel, lambda, state.points(), state.rewards(), &query)?;
        out.max_mean_rel = out.max_mean_rel.max(relative(state.predict_mean(&query)?, mean));
        out.max_width_rel = out.max_width_rel.max(relative(state.confidence_width(&query)?, width));
    }
    Ok(out)
}

/// Number of random states (out of `instances`) where the three learning
/// policies disagree with a zero defense budget.
pub fn zero_budget_disagreements(
    kernel: KernelSpec,
    lambda: f64,
    schedule: ExplorationSchedule,
    instances: usize,
    seed: u64,
) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = ContextEncoder::scalar(10.0, 30.0, 4, ArmEncoding::Ordinal)?;
    let unit = ContextEncoder::scalar(0.0, 1.0, 4, ArmEncoding::Ordinal)?;
    let arms = ArmSet::new(4)?;
    let mut mismatches = 0;
    for _ in 0..instances {
        let history = rng.random_range(0..=40);
        let state = random_state(&mut rng, kernel, lambda, &unit, history)?;
        let model = UcbModel {
            state: &state,
            schedule: &schedule,
            encoder: &encoder,
        };
        let x_hat = rng.random_range(10.0..=30.0);
        let grid = DefenseRegion::scalar(x_hat, 0.0, 10.0, 30.0)?.enumerate_grid(41)?;
        let simple = select_simple_ucb(&model, &[x_hat], arms)?.arm;
        let maxmin = select_maxmin_ucb(&model, &grid, arms)?.arm;
        let minwd = select_minwd(&model, &grid, arms)?.arm;
        if simple != maxmin || simple != minwd {
            mismatches += 1;
        }
    }
    Ok(mismatches)
}

/// Worst violation of the per-round metric invariants over one episode:
/// `worst >= true >= 0`, robust term `>= -1e-9`, prefix sums, monotone curves.
pub fn metric_invariant_violations(spec: &RunSpec, seed: u64) -> Result<Vec<String>> {
    let records = run_episode(spec, seed)?;
    let mut problems = Vec::new();
    let (mut r, mut rb, mut w) = (0.0, 0.0, 0.0);
    for rec in &records {
        if rec.r_inst < 0.0 {
            problems.push(format!("round {}: negative true regret {}", rec.t, rec.r_inst));
        }
        if rec.worst_inst < rec.r_inst {
            problems.push(format!("round {}: worst-case regret below true regret", rec.t));
        }
        if rec.robust_inst < -1e-9 {
            problems.push(format!("round {}: robust regret term {}", rec.t, rec.robust_inst));
        }
        r += rec.r_inst;
        rb += rec.robust_inst;
        w += rec.worst_inst;
        if (r, rb, w) != (rec.r_cum, rec.robust_cum, rec.worst_cum) {
            problems.push(format!("round {}: cumulative fields are not prefix sums", rec.t));
        }
    }
    Ok(problems)
}

/// Final cumulative robust regret of oracle max-min play and the gap between
/// the cumulative worst-case regret of oracle min-max play and `sum MR_t`.
pub fn oracle_play_residuals(spec: &RunSpec, seed: u64) -> Result<(f64, f64)> {
    let maxmin = run_episode(&spec.with_policy(PolicyKind::OracleMaxMin), seed)?;
    let minmax = run_episode(&spec.with_policy(PolicyKind::OracleMinMax), seed)?;
    let robust = maxmin.last().map_or(0.0, |r| r.robust_cum);
    let sum_mr: f64 = minmax.iter().map(|r| r.mr).sum();
    let worst = minmax.last().map_or(0.0, |r| r.worst_cum);
    Ok((robust, (worst - sum_mr).abs()))
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Tolerance for the incremental-vs-dense comparison.
pub const DENSE_REL_TOL: f64 = 1e-8;
/// Minimum coverage for the concentration check.
pub const MIN_COVERAGE: f64 = 0.9;
/// Tolerance for the oracle-play identities.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Runs every check against `spec`, using episodes of at most `horizon` rounds.
pub fn run_all(spec: &RunSpec, horizon: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    spec.validate()?;
    let mut short = spec.clone();
    short.env.horizon = horizon.min(spec.env.horizon);
    let est = &spec.estimator;
    let mut out = Vec::new();

    let dense = compare_with_dense(est.kernel, est.lambda, 200, 30, seed)?;
    out.push(CheckOutcome {
        name: "estimator_vs_dense",
        passed: dense.max_mean_rel <= DENSE_REL_TOL && dense.max_width_rel <= DENSE_REL_TOL,
        detail: format!(
            "{} instances, max rel err mean {:.2e}, width {:.2e} (tol {DENSE_REL_TOL:e})",
            dense.instances, dense.max_mean_rel, dense.max_width_rel
        ),
    });

    let mut unit_lambda = short.with_policy(PolicyKind::SimpleUcb);
    unit_lambda.estimator.lambda = 1.0;
    let width = verify_width_sum(&run_episode(&unit_lambda, seed)?);
    out.push(CheckOutcome {
        name: "width_sum_lambda_1",
        passed: width.passed,
        detail: format!("sum s^2 = {:.6} <= 2 gamma = {:.6}", width.sum_sq_widths, width.twice_gamma),
    });
    let reported = verify_width_sum(&run_episode(&short.with_policy(PolicyKind::SimpleUcb), seed)?);
    out.push(CheckOutcome {
        name: "width_sum_configured_lambda",
        passed: true,
        detail: format!(
            "report only: sum s^2 = {:.6}, 2 gamma = {:.6}, holds: {}",
            reported.sum_sq_widths, reported.twice_gamma, reported.passed
        ),
    });

    let coverage = verify_concentration(&SyntheticSpec {
        kernel: est.kernel,
        lambda: est.lambda,
        seed,
        ..SyntheticSpec::default()
    })?;
    out.push(CheckOutcome {
        name: "concentration",
        passed: coverage.fraction() >= MIN_COVERAGE,
        detail: format!("coverage {:.4} (min {MIN_COVERAGE})", coverage.fraction()),
    });

    let mismatches = zero_budget_disagreements(est.kernel, est.lambda, est.schedule, 100, seed)?;
    out.push(CheckOutcome {
        name: "zero_budget_collapse",
        passed: mismatches == 0,
        detail: format!("{mismatches} of 100 states disagree"),
    });

    for policy in PolicyKind::LEARNING {
        let problems = metric_invariant_violations(&short.with_policy(policy), seed)?;
        out.push(CheckOutcome {
            name: match policy {
                PolicyKind::SimpleUcb => "metric_invariants_simple_ucb",
                PolicyKind::MaxMinUcb => "metric_invariants_maxmin_ucb",
                _ => "metric_invariants_minwd",
            },
            passed: problems.is_empty(),
            detail: problems.first().cloned().unwrap_or_else(|| format!("{} rounds clean", short.env.horizon)),
        });
    }

    let (robust, gap) = oracle_play_residuals(&short, seed)?;
    out.push(CheckOutcome {
        name: "oracle_play_identities",
        passed: robust.abs() <= IDENTITY_TOL && gap <= IDENTITY_TOL,
        detail: format!("robust regret of max-min play {robust:e}, |worst - sum MR| {gap:e}"),
    });
    Ok(out)
}
