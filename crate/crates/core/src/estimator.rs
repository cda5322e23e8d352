//! Online kernel ridge regression with confidence widths and UCBs.
//!
//! The state keeps the lower Cholesky factor `L` of `K + lambda I` and grows
//! it by one row per observation. Single queries solve against `L` directly.
//! Batched queries (a whole grid of context-arm points per round) go through
//! the explicit inverse factor `L^-1`, also grown one row per observation,
//! so the per-round work is a dense matrix product.

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{Accum, MatMut, MatRef, Par};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kernel::{cross_matrix, cross_vector, ContextArmVector, KernelSpec};

/// Squared widths above this (but below zero) are rounding noise and clamp to 0.
const NEG_WIDTH_TOLERANCE: f64 = -1e-10;

/// Exploration coefficient `h_t` used in `U = mean + h_t * width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExplorationSchedule {
    /// Constant `h_t`.
    Fixed { h: f64 },
    /// `h_t = sqrt(lambda) * B + b * sqrt(gamma_t - 2 ln delta)`.
    Theoretical {
        reward_bound: f64,
        noise_scale: f64,
        delta: f64,
    },
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule::Fixed { h: 0.04 }
    }
}

impl ExplorationSchedule {
    pub fn fixed(h: f64) -> Result<Self> {
        let schedule = ExplorationSchedule::Fixed { h };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn theoretical(reward_bound: f64, noise_scale: f64, delta: f64) -> Result<Self> {
        let schedule = ExplorationSchedule::Theoretical {
            reward_bound,
            noise_scale,
            delta,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ExplorationSchedule::Fixed { h } => {
                if !(h >= 0.0 && h.is_finite()) {
                    return Err(Error::invalid(format!("fixed h must be >= 0, got {h}")));
                }
            }
            ExplorationSchedule::Theoretical {
                reward_bound,
                noise_scale,
                delta,
            } => {
                if !(reward_bound > 0.0 && reward_bound.is_finite()) {
                    return Err(Error::invalid(format!("B must be > 0, got {reward_bound}")));
                }
                if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
                    return Err(Error::invalid(format!("b must be >= 0, got {noise_scale}")));
                }
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
                }
            }
        }
        Ok(())
    }

    /// `h_t` for the estimator's current round.
    pub fn coefficient(&self, state: &EstimatorState) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            ExplorationSchedule::Fixed { h } => h,
            ExplorationSchedule::Theoretical {
                reward_bound,
                noise_scale,
                delta,
            } => {
                let gamma = state.information_gain();
                state.lambda().sqrt() * reward_bound
                    + noise_scale * (gamma - 2.0 * delta.ln()).sqrt()
            }
        })
    }
}

/// Posterior mean and confidence width at one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub width: f64,
}

/// Square lower-triangular buffer with a row stride that grows by doubling.
#[derive(Debug, Clone, Default)]
struct GrowableLower {
    data: Vec<f64>,
    stride: usize,
    n: usize,
}

impl GrowableLower {
    fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.n + 1);
        if self.n == self.stride {
            let stride = (self.stride * 2).max(16);
            let mut data = vec![0.0; stride * stride];
            for i in 0..self.n {
                data[i * stride..i * stride + i + 1]
                    .copy_from_slice(&self.data[i * self.stride..i * self.stride + i + 1]);
            }
            self.data = data;
            self.stride = stride;
        }
        let off = self.n * self.stride;
        self.data[off..off + row.len()].copy_from_slice(row);
        self.n += 1;
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..i * self.stride + i + 1]
    }

    /// Row-major storage covering every row, and its row stride.
    fn raw(&self) -> (&[f64], usize) {
        let len = if self.n == 0 { 0 } else { (self.n - 1) * self.stride + self.n };
        (&self.data[..len], self.stride)
    }
}

/// Kernel ridge regression history and its incrementally maintained factors.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    kernel: KernelSpec,
    lambda: f64,
    points: Vec<ContextArmVector>,
    rewards: Vec<f64>,
    /// Packed rows of `L` with `L L^T = K + lambda I`.
    factor: Vec<f64>,
    factor_inv: GrowableLower,
    /// `L^-1 y`.
    whitened_rewards: Vec<f64>,
    /// `log det(I + K / lambda)`.
    info_gain: f64,
}

impl EstimatorState {
    pub fn new(kernel: KernelSpec, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self {
            kernel,
            lambda,
            points: Vec::new(),
            rewards: Vec::new(),
            factor: Vec::new(),
            factor_inv: GrowableLower::default(),
            whitened_rewards: Vec::new(),
            info_gain: 0.0,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn points(&self) -> &[ContextArmVector] {
        &self.points
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Number of observations so far.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// 1-based round index; the history holds `round() - 1` observations.
    pub fn round(&self) -> usize {
        self.len() + 1
    }

    fn factor_row(&self, i: usize) -> &[f64] {
        let off = i * (i + 1) / 2;
        &self.factor[off..off + i + 1]
    }

    /// Dense copy of the lower factor `L`.
    pub fn factor_matrix(&self) -> Array2<f64> {
        let n = self.len();
        let mut l = Array2::zeros((n, n));
        for i in 0..n {
            for (j, v) in self.factor_row(i).iter().enumerate() {
                l[[i, j]] = *v;
            }
        }
        l
    }

    fn check_query(&self, query: &ContextArmVector) -> Result<()> {
        match self.points.first() {
            Some(p) if p.dim() != query.dim() => Err(Error::DimensionMismatch {
                expected: p.dim(),
                got: query.dim(),
            }),
            _ => Ok(()),
        }
    }

    /// Solves `L w = rhs` in place.
    fn forward_solve(&self, rhs: &mut [f64]) {
        for i in 0..rhs.len() {
            let row = self.factor_row(i);
            rhs[i] = (rhs[i] - dot(&row[..i], &rhs[..i])) / row[i];
        }
    }

    fn width_from_parts(&self, self_kernel: f64, explained: f64) -> Result<f64> {
        let sq = (self_kernel - explained) / self.lambda;
        if sq >= 0.0 {
            Ok(sq.sqrt())
        } else if sq >= NEG_WIDTH_TOLERANCE {
            Ok(0.0)
        } else {
            Err(Error::Numerical(format!("squared confidence width {sq:e} is negative")))
        }
    }

    /// Kernel ridge estimate `k^T (K + lambda I)^-1 y`; 0 with no history.
    pub fn predict_mean(&self, query: &ContextArmVector) -> Result<f64> {
        self.check_query(query)?;
        let mut w = cross_vector(&self.kernel, query, &self.points)?;
        self.forward_solve(&mut w);
        Ok(dot(&w, &self.whitened_rewards))
    }

    /// `s_t(query) = sqrt((k(q, q) - k^T (K + lambda I)^-1 k) / lambda)`.
    pub fn confidence_width(&self, query: &ContextArmVector) -> Result<f64> {
        self.check_query(query)?;
        let mut w = cross_vector(&self.kernel, query, &self.points)?;
        self.forward_solve(&mut w);
        let self_kernel = self.kernel.eval_slices(query.combined(), query.combined());
        self.width_from_parts(self_kernel, dot(&w, &w))
    }

    /// `gamma_t = log det(I + K_t / lambda)`.
    pub fn information_gain(&self) -> f64 {
        self.info_gain
    }

    /// Mean and width for a batch of queries via the inverse factor.
    ///
    /// With `W = L^-1 K_cross`, the means are `W^T (L^-1 y)` and the explained
    /// variances are the column sums of `W o W`.
    pub fn posterior_batch(&self, queries: &[ContextArmVector]) -> Result<Vec<Posterior>> {
        for q in queries {
            self.check_query(q)?;
        }
        if let Some(first) = queries.first() {
            if let Some(q) = queries.iter().find(|q| q.dim() != first.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    got: q.dim(),
                });
            }
        }
        let n = self.len();
        let m = queries.len();
        let mut means = vec![0.0; m];
        let mut explained = vec![0.0; m];
        if n > 0 && m > 0 {
            let cross = cross_matrix(&self.kernel, &self.points, queries)?;
            // W^T = K_cross^T L^-T; the row-major L^-1 buffer read column-major is L^-T.
            let mut wt = vec![0.0; m * n];
            let (inv, stride) = self.factor_inv.raw();
            triangular::matmul(
                MatMut::from_column_major_slice_mut(&mut wt, m, n),
                BlockStructure::Rectangular,
                Accum::Replace,
                MatRef::from_row_major_slice(&cross, m, n),
                BlockStructure::Rectangular,
                MatRef::from_column_major_slice_with_stride(inv, n, n, stride),
                BlockStructure::TriangularUpper,
                1.0,
                Par::Seq,
            );
            for (row, z) in wt.chunks_exact(m).zip(&self.whitened_rewards) {
                for ((mean, acc), w) in means.iter_mut().zip(explained.iter_mut()).zip(row) {
                    *mean += w * z;
                    *acc += w * w;
                }
            }
        }

        queries
            .iter()
            .zip(means.iter().zip(&explained))
            .map(|(q, (&mean, &e))| {
                let self_kernel = self.kernel.eval_slices(q.combined(), q.combined());
                Ok(Posterior {
                    mean,
                    width: self.width_from_parts(self_kernel, e)?,
                })
            })
            .collect()
    }

    /// Appends one observation, extending both factors by one row.
    pub fn observe(&mut self, point: ContextArmVector, reward: f64) -> Result<()> {
        self.observe_with_width(point, reward).map(|_| ())
    }

    /// Like [`observe`](Self::observe), also returning the confidence width
    /// at `point` before the update (a by-product of extending the factor).
    pub fn observe_with_width(&mut self, point: ContextArmVector, reward: f64) -> Result<f64> {
        self.check_query(&point)?;
        if !reward.is_finite() {
            return Err(Error::invalid(format!("reward must be finite, got {reward}")));
        }
        let n = self.len();
        let k = cross_vector(&self.kernel, &point, &self.points)?;
        // One pass over L^-1: l = L^-1 k and the new inverse row -(l^T L^-1) / pivot.
        let mut l = vec![0.0; n];
        let mut inv_row = vec![0.0; n + 1];
        for i in 0..n {
            let row = self.factor_inv.row(i);
            let li = dot(row, &k[..=i]);
            l[i] = li;
            axpy(li, row, &mut inv_row[..=i]);
        }
        let self_kernel = self.kernel.eval_slices(point.combined(), point.combined());
        let explained = dot(&l, &l);
        let width = self.width_from_parts(self_kernel, explained)?;
        let pivot_sq = self_kernel + self.lambda - explained;
        if !(pivot_sq > 0.0) {
            return Err(Error::Numerical(format!(
                "non-positive pivot {pivot_sq:e} while extending the factor"
            )));
        }
        let pivot = pivot_sq.sqrt();
        for v in &mut inv_row[..n] {
            *v = -*v / pivot;
        }
        inv_row[n] = 1.0 / pivot;

        let whitened = (reward - dot(&l, &self.whitened_rewards)) / pivot;
        self.whitened_rewards.push(whitened);
        self.factor.extend_from_slice(&l);
        self.factor.push(pivot);
        self.factor_inv.push_row(&inv_row);
        self.info_gain += (pivot_sq / self.lambda).ln();
        self.points.push(point);
        self.rewards.push(reward);
        Ok(width)
    }
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let chunks = n / 8 * 8;
    for (ca, cb) in a[..chunks].chunks_exact(8).zip(b[..chunks].chunks_exact(8)) {
        for k in 0..8 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let tail: f64 = a[chunks..].iter().zip(&b[chunks..]).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

/// `y += alpha * x`.
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `U_t(q) = mean + h_t * width` through the single-query route.
pub fn ucb(state: &EstimatorState, schedule: &ExplorationSchedule, query: &ContextArmVector) -> Result<f64> {
    let h = schedule.coefficient(state)?;
    Ok(state.predict_mean(query)? + h * state.confidence_width(query)?)
}

/// UCBs for a batch of queries through the inverse-factor route.
pub fn ucb_batch(
    state: &EstimatorState,
    schedule: &ExplorationSchedule,
    queries: &[ContextArmVector],
) -> Result<Vec<f64>> {
    let h = schedule.coefficient(state)?;
    Ok(state
        .posterior_batch(queries)?
        .into_iter()
        .map(|p| p.mean + h * p.width)
        .collect())
}
