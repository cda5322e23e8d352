//! The defense region `B_delta(x_hat)` and the finite grids used for every
//! inner min/max over it.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BALL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    L2,
    Linf,
}

impl Norm {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Norm::Linf => diffs.fold(0.0, f64::max),
        }
    }
}

/// Ball of admissible true contexts around the presented one, intersected
/// with the context domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenseRegion {
    center: Vec<f64>,
    radius: f64,
    norm: Norm,
    domain_lo: Vec<f64>,
    domain_hi: Vec<f64>,
}

impl DefenseRegion {
    /// The center is clamped into the domain.
    pub fn new(
        center: Vec<f64>,
        radius: f64,
        norm: Norm,
        domain_lo: Vec<f64>,
        domain_hi: Vec<f64>,
    ) -> Result<Self> {
        if center.len() != domain_lo.len() || center.len() != domain_hi.len() {
            return Err(Error::DimensionMismatch {
                expected: domain_lo.len(),
                got: center.len(),
            });
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("defense radius must be >= 0, got {radius}")));
        }
        if domain_lo.iter().zip(&domain_hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::invalid("context domain needs lo <= hi"));
        }
        let center = center
            .iter()
            .zip(domain_lo.iter().zip(&domain_hi))
            .map(|(c, (lo, hi))| c.clamp(*lo, *hi))
            .collect();
        Ok(Self {
            center,
            radius,
            norm,
            domain_lo,
            domain_hi,
        })
    }

    pub fn scalar(center: f64, radius: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![center], radius, Norm::L2, vec![lo], vec![hi])
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.center.len()
            && self.norm.distance(x, &self.center) <= self.radius + BALL_SLACK
            && x
                .iter()
                .zip(self.domain_lo.iter().zip(&self.domain_hi))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.domain_lo.iter().zip(&self.domain_hi)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Uniform tensor grid with `resolution` nodes per axis over the box
    /// `center +- radius`, kept where it lies in the norm ball, clamped to the
    /// domain, deduplicated and sorted lexicographically.
    pub fn enumerate_grid(&self, resolution: usize) -> Result<ContextGrid> {
        if resolution == 0 || resolution % 2 == 0 {
            return Err(Error::invalid(format!(
                "grid resolution must be odd and positive, got {resolution}"
            )));
        }
        let dim = self.center.len();
        let span = (resolution - 1) as f64;
        // Offset of node i along an axis; the middle node is exactly 0.
        let offset = |i: usize| -> f64 {
            if resolution == 1 {
                0.0
            } else {
                self.radius * ((2 * i) as f64 - span) / span
            }
        };

        let mut points = Vec::new();
        let mut index = vec![0usize; dim];
        loop {
            let offsets: Vec<f64> = index.iter().map(|&i| offset(i)).collect();
            let zero = vec![0.0; dim];
            if self.norm.distance(&offsets, &zero) <= self.radius + BALL_SLACK {
                let mut p: Vec<f64> = self.center.iter().zip(&offsets).map(|(c, o)| c + o).collect();
                self.clamp(&mut p);
                points.push(p);
            }
            // Odometer increment over the tensor index.
            let mut axis = 0;
            while axis < dim {
                index[axis] += 1;
                if index[axis] < resolution {
                    break;
                }
                index[axis] = 0;
                axis += 1;
            }
            if axis == dim {
                break;
            }
        }
        Ok(ContextGrid::from_points(points, resolution))
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Finite, lexicographically sorted set of contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextGrid {
    points: Vec<Vec<f64>>,
    resolution: usize,
}

impl ContextGrid {
    fn from_points(mut points: Vec<Vec<f64>>, resolution: usize) -> Self {
        points.sort_by(|a, b| lexicographic(a, b));
        points.dedup();
        Self { points, resolution }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The grid with `x` added at its sorted position (no-op if present).
    pub fn with_point(&self, x: &[f64]) -> Self {
        let mut points = self.points.clone();
        if let Err(pos) = points.binary_search_by(|p| lexicographic(p, x)) {
            points.insert(pos, x.to_vec());
        }
        Self {
            points,
            resolution: self.resolution,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalars(grid: &ContextGrid) -> Vec<f64> {
        grid.points().iter().map(|p| p[0]).collect()
    }

    #[test]
    fn uniform_grid_around_center() {
        let r = DefenseRegion::scalar(20.0, 2.0, 10.0, 30.0).unwrap();
        assert_eq!(scalars(&r.enumerate_grid(5).unwrap()), vec![18.0, 19.0, 20.0, 21.0, 22.0]);
    }

    #[test]
    fn zero_radius_is_a_single_point() {
        let r = DefenseRegion::scalar(17.3, 0.0, 10.0, 30.0).unwrap();
        for res in [1, 5, 41] {
            assert_eq!(scalars(&r.enumerate_grid(res).unwrap()), vec![17.3]);
        }
    }

    #[test]
    fn grid_is_clipped_and_deduplicated_at_the_domain_edge() {
        let r = DefenseRegion::scalar(29.5, 2.0, 10.0, 30.0).unwrap();
        assert_eq!(scalars(&r.enumerate_grid(5).unwrap()), vec![27.5, 28.5, 29.5, 30.0]);
    }

    #[test]
    fn even_resolution_is_rejected() {
        let r = DefenseRegion::scalar(20.0, 2.0, 10.0, 30.0).unwrap();
        assert!(r.enumerate_grid(4).is_err());
        assert!(r.enumerate_grid(0).is_err());
    }

    #[test]
    fn containment() {
        let r = DefenseRegion::scalar(20.0, 2.0, 10.0, 30.0).unwrap();
        assert!(r.contains(&[22.0]));
        assert!(!r.contains(&[22.5]));
        let point = DefenseRegion::scalar(20.0, 0.0, 10.0, 30.0).unwrap();
        assert!(point.contains(&[20.0]));
        let edge = DefenseRegion::scalar(29.5, 2.0, 10.0, 30.0).unwrap();
        assert!(!edge.contains(&[30.5]));
    }

    #[test]
    fn two_dimensional_l2_grid_is_a_disc() {
        let r = DefenseRegion::new(vec![0.5, 0.5], 0.2, Norm::L2, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = r.enumerate_grid(5).unwrap();
        // Lattice points (i, j) in -2..=2 with i^2 + j^2 <= 4.
        assert_eq!(g.len(), 13);
        assert!(g.points().iter().all(|p| r.contains(p)));
        assert!(g.points().contains(&vec![0.5, 0.5]));
        let linf = DefenseRegion::new(vec![0.5, 0.5], 0.2, Norm::Linf, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(linf.enumerate_grid(5).unwrap().len(), 25);
    }

    #[test]
    fn with_point_keeps_order() {
        let r = DefenseRegion::scalar(20.0, 2.0, 10.0, 30.0).unwrap();
        let g = r.enumerate_grid(5).unwrap().with_point(&[19.5]);
        assert_eq!(scalars(&g), vec![18.0, 19.0, 19.5, 20.0, 21.0, 22.0]);
        assert_eq!(g.with_point(&[19.5]).len(), 6);
    }

    proptest! {
        #[test]
        fn grid_points_lie_in_the_region(c in 5.0f64..35.0, d in 0.0f64..5.0, half in 0usize..30) {
            let r = DefenseRegion::scalar(c, d, 10.0, 30.0).unwrap();
            let g = r.enumerate_grid(2 * half + 1).unwrap();
            prop_assert!(g.points().iter().all(|p| r.contains(p)));
            prop_assert!(g.points().contains(&r.center().to_vec()));
            prop_assert!(g.points().windows(2).all(|w| w[0][0] < w[1][0]));
            prop_assert_eq!(g.clone(), r.enumerate_grid(2 * half + 1).unwrap());
        }

        #[test]
        fn refinement_never_raises_the_grid_minimum(c in 10.0f64..30.0, d in 0.0f64..4.0,
                                                    half in 0usize..20, w in 0.1f64..3.0, phase in 0.0f64..6.0) {
            let r = DefenseRegion::scalar(c, d, 10.0, 30.0).unwrap();
            let f = |x: f64| (w * x + phase).sin() + 0.01 * x;
            let coarse_res = 2 * half + 1;
            let coarse = r.enumerate_grid(coarse_res).unwrap();
            let fine = r.enumerate_grid(2 * coarse_res - 1).unwrap();
            prop_assert!(coarse.points().iter().all(|p| fine.points().contains(p)));
            let min = |g: &ContextGrid| g.points().iter().map(|p| f(p[0])).fold(f64::INFINITY, f64::min);
            prop_assert!(min(&fine) <= min(&coarse));
        }
    }
}
