//! Kernels over concatenated context-arm points.
//!
//! A [`ContextArmVector`] is the point `[x, a]` the regression runs on: the
//! normalized context followed by an encoding of the arm. The
//! [`ContextEncoder`] owns the affine normalization of raw contexts and the
//! arm encoding, so every point fed to the estimator goes through one place.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Concatenated context-arm point.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextArmVector {
    context: Vec<f64>,
    arm: usize,
    combined: Vec<f64>,
}

impl ContextArmVector {
    /// Builds a point from an already-normalized context and the arm's code.
    pub fn new(context: Vec<f64>, arm: usize, arm_code: &[f64]) -> Self {
        let mut combined = Vec::with_capacity(context.len() + arm_code.len());
        combined.extend_from_slice(&context);
        combined.extend_from_slice(arm_code);
        Self {
            context,
            arm,
            combined,
        }
    }

    pub fn context(&self) -> &[f64] {
        &self.context
    }

    pub fn arm(&self) -> usize {
        self.arm
    }

    pub fn combined(&self) -> &[f64] {
        &self.combined
    }

    pub fn dim(&self) -> usize {
        self.combined.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    Linear,
}

/// Kernel family plus its lengthscale (ignored by the linear family).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    lengthscale: f64,
}

impl KernelSpec {
    /// `k(z, z') = exp(-|z - z'|^2 / (2 l^2))`.
    pub fn gaussian(lengthscale: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::invalid(format!(
                "gaussian lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Gaussian,
            lengthscale,
        })
    }

    /// Inner-product kernel `k(z, z') = <z, z'>`.
    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            lengthscale: 1.0,
        }
    }

    pub fn new(family: KernelFamily, lengthscale: f64) -> Result<Self> {
        match family {
            KernelFamily::Gaussian => Self::gaussian(lengthscale),
            KernelFamily::Linear => Ok(Self::linear()),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// Unchecked evaluation on raw slices of equal length.
    #[inline]
    pub fn eval_slices(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self.family {
            KernelFamily::Gaussian => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-sq / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
            KernelFamily::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn eval_kernel(spec: &KernelSpec, z1: &ContextArmVector, z2: &ContextArmVector) -> Result<f64> {
    check_dims(z1.dim(), z2.dim())?;
    Ok(spec.eval_slices(z1.combined(), z2.combined()))
}

/// Symmetric Gram matrix of `points`; a 0x0 matrix for an empty slice.
pub fn gram_matrix(spec: &KernelSpec, points: &[ContextArmVector]) -> Result<Array2<f64>> {
    let n = points.len();
    if let Some(first) = points.first() {
        for p in points {
            check_dims(first.dim(), p.dim())?;
        }
    }
    let mut gram = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval_slices(points[i].combined(), points[j].combined());
            gram[[i, j]] = v;
            gram[[j, i]] = v;
        }
    }
    Ok(gram)
}

/// Kernel values between `query` and every history point.
pub fn cross_vector(
    spec: &KernelSpec,
    query: &ContextArmVector,
    points: &[ContextArmVector],
) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|p| eval_kernel(spec, query, p))
        .collect()
}

/// Column-major `points.len() x queries.len()` matrix of kernel values.
///
/// Both kernel families split over the context and arm blocks (a product for
/// the gaussian, a sum for the linear kernel), so each history point costs
/// one evaluation per distinct query context plus one per distinct arm code
/// instead of one per query.
pub fn cross_matrix(
    spec: &KernelSpec,
    points: &[ContextArmVector],
    queries: &[ContextArmVector],
) -> Result<Vec<f64>> {
    let Some(first) = queries.first() else {
        return Ok(Vec::new());
    };
    let cdim = first.context().len();
    for z in points.iter().chain(queries) {
        check_dims(first.dim(), z.dim())?;
    }
    let n = points.len();
    let mut out = vec![0.0; n * queries.len()];
    if points.iter().chain(queries).any(|z| z.context().len() != cdim) {
        for (j, q) in queries.iter().enumerate() {
            for (i, p) in points.iter().enumerate() {
                out[j * n + i] = spec.eval_slices(p.combined(), q.combined());
            }
        }
        return Ok(out);
    }

    let (contexts, ctx_of) = distinct_blocks(queries, |z| &z.combined()[..cdim]);
    let (codes, code_of) = distinct_blocks(queries, |z| &z.combined()[cdim..]);
    // Per-block factors, one contiguous column of length n per distinct block.
    let factor_columns = |blocks: &[&[f64]], range: std::ops::Range<usize>| -> Vec<f64> {
        let mut cols = vec![0.0; blocks.len() * n];
        for (col, b) in cols.chunks_exact_mut(n.max(1)).zip(blocks) {
            for (v, p) in col.iter_mut().zip(points) {
                let a = &p.combined()[range.clone()];
                *v = match spec.family {
                    KernelFamily::Gaussian => {
                        let sq: f64 = a.iter().zip(*b).map(|(x, y)| (x - y) * (x - y)).sum();
                        (-sq / (2.0 * spec.lengthscale * spec.lengthscale)).exp()
                    }
                    KernelFamily::Linear => a.iter().zip(*b).map(|(x, y)| x * y).sum(),
                };
            }
        }
        cols
    };
    let ctx_cols = factor_columns(&contexts, 0..cdim);
    let code_cols = factor_columns(&codes, cdim..first.dim());
    for (j, out_col) in out.chunks_exact_mut(n.max(1)).enumerate() {
        let c = &ctx_cols[ctx_of[j] * n..(ctx_of[j] + 1) * n];
        let a = &code_cols[code_of[j] * n..(code_of[j] + 1) * n];
        for ((o, x), y) in out_col.iter_mut().zip(c).zip(a) {
            *o = match spec.family {
                KernelFamily::Gaussian => x * y,
                KernelFamily::Linear => x + y,
            };
        }
    }
    Ok(out)
}

/// Distinct sub-blocks of the queries (by bit pattern) and each query's index
/// into them.
fn distinct_blocks<'a>(
    queries: &'a [ContextArmVector],
    block: impl Fn(&'a ContextArmVector) -> &'a [f64],
) -> (Vec<&'a [f64]>, Vec<usize>) {
    let mut distinct: Vec<&[f64]> = Vec::new();
    let index = queries
        .iter()
        .map(|q| {
            let b = block(q);
            match distinct.iter().position(|d| d.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())) {
                Some(k) => k,
                None => {
                    distinct.push(b);
                    distinct.len() - 1
                }
            }
        })
        .collect();
    (distinct, index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmEncoding {
    /// One coordinate `arm / (n_arms - 1)`.
    #[default]
    Ordinal,
    /// `n_arms` coordinates with a single 1.
    OneHot,
}

/// Maps raw contexts and arm indices to [`ContextArmVector`]s.
///
/// Raw context component `i` is mapped affinely from `[lo[i], hi[i]]` onto
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEncoder {
    lo: Vec<f64>,
    hi: Vec<f64>,
    n_arms: usize,
    encoding: ArmEncoding,
}

impl ContextEncoder {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n_arms: usize, encoding: ArmEncoding) -> Result<Self> {
        check_dims(lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::invalid("context must have at least one component"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::invalid("context domain needs lo < hi in every component"));
        }
        if n_arms == 0 {
            return Err(Error::invalid("arm set is empty"));
        }
        Ok(Self {
            lo,
            hi,
            n_arms,
            encoding,
        })
    }

    /// Encoder for a scalar context on `[lo, hi]`.
    pub fn scalar(lo: f64, hi: f64, n_arms: usize, encoding: ArmEncoding) -> Result<Self> {
        Self::new(vec![lo], vec![hi], n_arms, encoding)
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn context_dim(&self) -> usize {
        self.lo.len()
    }

    /// Dimension `d` of the encoded points.
    pub fn dim(&self) -> usize {
        self.context_dim()
            + match self.encoding {
                ArmEncoding::Ordinal => 1,
                ArmEncoding::OneHot => self.n_arms,
            }
    }

    pub fn normalize(&self, raw: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.context_dim(), raw.len())?;
        Ok(raw
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (lo, hi))| (x - lo) / (hi - lo))
            .collect())
    }

    pub fn arm_code(&self, arm: usize) -> Result<Vec<f64>> {
        if arm >= self.n_arms {
            return Err(Error::invalid(format!(
                "arm {arm} outside arm set of size {}",
                self.n_arms
            )));
        }
        Ok(match self.encoding {
            ArmEncoding::Ordinal if self.n_arms == 1 => vec![0.0],
            ArmEncoding::Ordinal => vec![arm as f64 / (self.n_arms - 1) as f64],
            ArmEncoding::OneHot => {
                let mut code = vec![0.0; self.n_arms];
                code[arm] = 1.0;
                code
            }
        })
    }

    pub fn encode(&self, raw_context: &[f64], arm: usize) -> Result<ContextArmVector> {
        let context = self.normalize(raw_context)?;
        let code = self.arm_code(arm)?;
        Ok(ContextArmVector::new(context, arm, &code))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pt(v: &[f64]) -> ContextArmVector {
        ContextArmVector::new(v.to_vec(), 0, &[])
    }

    #[test]
    fn gaussian_self_similarity_is_one() {
        let k = KernelSpec::gaussian(0.1).unwrap();
        let z = pt(&[0.3, 0.7]);
        assert_eq!(eval_kernel(&k, &z, &z).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_at_one_lengthscale() {
        let k = KernelSpec::gaussian(0.1).unwrap();
        let v = eval_kernel(&k, &pt(&[0.2, 0.5]), &pt(&[0.3, 0.5])).unwrap();
        assert_abs_diff_eq!(v, (-0.5f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.60653, epsilon = 1e-5);
    }

    #[test]
    fn linear_orthogonal_is_zero() {
        let k = KernelSpec::linear();
        assert_eq!(eval_kernel(&k, &pt(&[1.0, 0.0]), &pt(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let k = KernelSpec::gaussian(0.1).unwrap();
        let err = eval_kernel(&k, &pt(&[1.0]), &pt(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, got: 2 }));
        assert!(cross_vector(&k, &pt(&[1.0]), &[pt(&[1.0, 2.0])]).is_err());
        assert!(gram_matrix(&k, &[pt(&[1.0]), pt(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn bad_lengthscale_is_rejected() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn gram_shapes() {
        let k = KernelSpec::gaussian(0.1).unwrap();
        assert_eq!(gram_matrix(&k, &[]).unwrap().dim(), (0, 0));
        let g1 = gram_matrix(&k, &[pt(&[0.4])]).unwrap();
        assert_eq!(g1[[0, 0]], 1.0);
        let g2 = gram_matrix(&k, &[pt(&[0.4]), pt(&[0.5])]).unwrap();
        assert_eq!(g2[[0, 0]], 1.0);
        assert_eq!(g2[[1, 1]], 1.0);
        assert_abs_diff_eq!(g2[[0, 1]], 0.60653, epsilon = 1e-5);
        assert_eq!(g2[[0, 1]], g2[[1, 0]]);
    }

    #[test]
    fn cross_vector_cases() {
        let k = KernelSpec::gaussian(0.1).unwrap();
        assert_eq!(cross_vector(&k, &pt(&[0.4]), &[]).unwrap(), Vec::<f64>::new());
        assert_eq!(cross_vector(&k, &pt(&[0.4]), &[pt(&[0.4])]).unwrap(), vec![1.0]);
        let v = cross_vector(&k, &pt(&[0.5]), &[pt(&[0.4]), pt(&[0.6])]).unwrap();
        assert_abs_diff_eq!(v[0], 0.60653, epsilon = 1e-5);
        assert_abs_diff_eq!(v[1], 0.60653, epsilon = 1e-5);
    }

    #[test]
    fn encoder_normalizes_and_codes_arms() {
        let enc = ContextEncoder::scalar(10.0, 30.0, 4, ArmEncoding::Ordinal).unwrap();
        let z = enc.encode(&[20.0], 3).unwrap();
        assert_eq!(z.combined(), &[0.5, 1.0]);
        assert_eq!(z.arm(), 3);
        assert_eq!(enc.dim(), 2);
        assert!(enc.encode(&[20.0], 4).is_err());

        let one_hot = ContextEncoder::scalar(10.0, 30.0, 3, ArmEncoding::OneHot).unwrap();
        assert_eq!(one_hot.encode(&[10.0], 1).unwrap().combined(), &[0.0, 0.0, 1.0, 0.0]);

        let single = ContextEncoder::scalar(0.0, 1.0, 1, ArmEncoding::Ordinal).unwrap();
        assert_eq!(single.arm_code(0).unwrap(), vec![0.0]);
    }

    fn smallest_eigenvalue(gram: &Array2<f64>) -> f64 {
        let n = gram.nrows();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| gram[[i, j]]);
        m.symmetric_eigenvalues().min()
    }

    #[test]
    fn factored_cross_matrix_matches_direct_evaluation() {
        for encoding in [ArmEncoding::Ordinal, ArmEncoding::OneHot] {
            let enc = ContextEncoder::scalar(10.0, 30.0, 4, encoding).unwrap();
            let points: Vec<_> = (0..23).map(|i| enc.encode(&[10.0 + i as f64 * 0.83], i % 4).unwrap()).collect();
            let queries: Vec<_> = (0..15).map(|i| enc.encode(&[18.0 + (i / 4) as f64 * 0.5], i % 4).unwrap()).collect();
            for spec in [KernelSpec::gaussian(0.1).unwrap(), KernelSpec::gaussian(0.7).unwrap(), KernelSpec::linear()] {
                let m = cross_matrix(&spec, &points, &queries).unwrap();
                for (j, q) in queries.iter().enumerate() {
                    for (i, v) in cross_vector(&spec, q, &points).unwrap().iter().enumerate() {
                        let got = m[j * points.len() + i];
                        // exp(a) exp(b) vs exp(a + b): rounding grows with the exponent.
                        let tol = 8.0 * f64::EPSILON * (1.0 + v.abs().max(1e-300).ln().abs());
                        assert!((got - v).abs() <= tol * v.abs().max(1e-300), "{got} vs {v}");
                    }
                }
            }
        }
        let k = KernelSpec::linear();
        assert!(cross_matrix(&k, &[pt(&[1.0])], &[pt(&[1.0, 2.0])]).is_err());
        assert!(cross_matrix(&k, &[pt(&[1.0])], &[]).unwrap().is_empty());
        // Points whose context/arm split differs fall back to direct evaluation.
        let mixed = [ContextArmVector::new(vec![0.2], 1, &[0.5]), pt(&[0.3, 0.1])];
        let q = [ContextArmVector::new(vec![0.4], 0, &[0.0])];
        let direct: Vec<f64> = mixed.iter().map(|p| k.eval_slices(p.combined(), q[0].combined())).collect();
        assert_eq!(cross_matrix(&k, &mixed, &q).unwrap(), direct);
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(a in prop::collection::vec(0.0f64..1.0, 3),
                               b in prop::collection::vec(0.0f64..1.0, 3),
                               l in 0.01f64..2.0) {
            for k in [KernelSpec::gaussian(l).unwrap(), KernelSpec::linear()] {
                let (za, zb) = (pt(&a), pt(&b));
                prop_assert_eq!(eval_kernel(&k, &za, &zb).unwrap(), eval_kernel(&k, &zb, &za).unwrap());
            }
        }

        #[test]
        fn gaussian_is_bounded(a in prop::collection::vec(0.0f64..1.0, 2),
                               b in prop::collection::vec(0.0f64..1.0, 2)) {
            let k = KernelSpec::gaussian(0.1).unwrap();
            let v = eval_kernel(&k, &pt(&a), &pt(&b)).unwrap();
            prop_assert!(v > 0.0);
            prop_assert!(v <= 1.0);
            if a == b { prop_assert_eq!(v, 1.0); } else { prop_assert!(v < 1.0); }
        }

        #[test]
        fn gram_is_numerically_psd(points in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 1..=20),
                                   l in 0.05f64..1.0) {
            let pts: Vec<_> = points.iter().map(|p| pt(p)).collect();
            for k in [KernelSpec::gaussian(l).unwrap(), KernelSpec::linear()] {
                let g = gram_matrix(&k, &pts).unwrap();
                prop_assert!(smallest_eigenvalue(&g) >= -1e-9);
            }
        }
    }
}
