//! Linear hyperbolic dynamics on the two-torus.
//!
//! A hyperbolic unimodular integer matrix acts on `T^2 = R^2 / Z^2` with
//! transverse invariant line foliations spanned by its eigenvectors. This
//! module provides the eigen-data, fixed points, and leaf-segment geometry
//! used by the skew-product layer. All leaf computations are carried out in
//! lifted (`R^2`) coordinates with explicit integer translates so that mod-1
//! wraparound never enters a linear solve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TorusError {
    #[error("matrix is not unimodular: |det| = {0}")]
    NotUnimodular(i64),
    #[error("matrix is not hyperbolic: an eigenvalue has modulus 1")]
    NotHyperbolic,
    #[error("leaf segments are parallel: both have direction {0:?}")]
    ParallelLeaves(LeafDirection),
}

fn mod1(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    // rem_euclid can return exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point of `T^2` with both coordinates reduced into `[0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x1: f64,
    pub x2: f64,
}

impl TorusPoint {
    pub fn new(x1: f64, x2: f64) -> Self {
        TorusPoint {
            x1: mod1(x1),
            x2: mod1(x2),
        }
    }

    /// Translate by a lifted vector, reducing mod 1.
    pub fn offset(&self, dx1: f64, dx2: f64) -> Self {
        TorusPoint::new(self.x1 + dx1, self.x2 + dx2)
    }

    /// Distance on the torus (minimum over integer translates, Euclidean).
    pub fn dist(&self, other: &TorusPoint) -> f64 {
        let mut best = f64::INFINITY;
        for m in -1..=1 {
            for n in -1..=1 {
                let dx = other.x1 - self.x1 + m as f64;
                let dy = other.x2 - self.x2 + n as f64;
                best = best.min(dx.hypot(dy));
            }
        }
        best
    }
}

/// Which invariant line foliation a leaf segment follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeafDirection {
    Stable,
    Unstable,
}

/// A hyperbolic unimodular `2x2` integer matrix with its eigen-data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToralAutomorphism {
    pub entries: [[i64; 2]; 2],
    pub determinant: i64,
    /// Eigenvalue of modulus > 1.
    pub eigenvalue_u: f64,
    /// Eigenvalue of modulus < 1.
    pub eigenvalue_s: f64,
    /// Unit eigenvector for `eigenvalue_u` (first nonzero component > 0).
    pub dir_u: [f64; 2],
    /// Unit eigenvector for `eigenvalue_s`.
    pub dir_s: [f64; 2],
    /// Spectral operator norm (largest singular value).
    pub norm: f64,
    /// `‖A^{-1}‖^{-1}` (smallest singular value).
    pub conorm: f64,
    pub fixed_points: Vec<TorusPoint>,
}

fn unit_eigenvector(entries: [[i64; 2]; 2], lambda: f64) -> [f64; 2] {
    let a = entries[0][0] as f64;
    let b = entries[0][1] as f64;
    let c = entries[1][0] as f64;
    let d = entries[1][1] as f64;
    // (A - lambda I) v = 0; pick the better-conditioned row.
    let mut v = if b.abs() > c.abs() {
        [b, lambda - a]
    } else {
        [lambda - d, c]
    };
    if v[0] == 0.0 && v[1] == 0.0 {
        v = [1.0, 0.0];
    }
    let n = v[0].hypot(v[1]);
    v = [v[0] / n, v[1] / n];
    let lead = if v[0].abs() > 1e-15 { v[0] } else { v[1] };
    if lead < 0.0 {
        v = [-v[0], -v[1]];
    }
    v
}

impl ToralAutomorphism {
    /// Analyze an integer matrix, rejecting non-unimodular or
    /// non-hyperbolic input.
    pub fn analyze(entries: [[i64; 2]; 2]) -> Result<Self, TorusError> {
        let det = entries[0][0] * entries[1][1] - entries[0][1] * entries[1][0];
        if det.abs() != 1 {
            return Err(TorusError::NotUnimodular(det.abs()));
        }
        let tr = entries[0][0] + entries[1][1];
        // Exact hyperbolicity test for unimodular integer matrices:
        // det = 1 gives unit-modulus eigenvalues iff |tr| <= 2,
        // det = -1 iff tr = 0.
        if (det == 1 && tr.abs() <= 2) || (det == -1 && tr == 0) {
            return Err(TorusError::NotHyperbolic);
        }
        let trf = tr as f64;
        let disc = (trf * trf - 4.0 * det as f64).sqrt();
        let l1 = (trf + disc) / 2.0;
        let l2 = (trf - disc) / 2.0;
        let (eig_u, eig_s) = if l1.abs() > l2.abs() { (l1, l2) } else { (l2, l1) };

        // Singular values from A^T A; det(A^T A) = det(A)^2 = 1, so the
        // two squared singular values are reciprocal.
        let a = entries[0][0] as f64;
        let b = entries[0][1] as f64;
        let c = entries[1][0] as f64;
        let d = entries[1][1] as f64;
        let tr_b = a * a + c * c + b * b + d * d;
        let s2_max = (tr_b + (tr_b * tr_b - 4.0).sqrt()) / 2.0;
        let norm = s2_max.sqrt();
        let conorm = 1.0 / norm;

        let fixed_points = enumerate_fixed_points(entries);

        Ok(ToralAutomorphism {
            entries,
            determinant: det,
            eigenvalue_u: eig_u,
            eigenvalue_s: eig_s,
            dir_u: unit_eigenvector(entries, eig_u),
            dir_s: unit_eigenvector(entries, eig_s),
            norm,
            conorm,
            fixed_points,
        })
    }

    /// Apply the matrix to a torus point.
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        let x = self.entries[0][0] as f64 * p.x1 + self.entries[0][1] as f64 * p.x2;
        let y = self.entries[1][0] as f64 * p.x1 + self.entries[1][1] as f64 * p.x2;
        TorusPoint::new(x, y)
    }

    /// Apply the inverse matrix (integer adjugate divided by det).
    pub fn apply_inverse(&self, p: &TorusPoint) -> TorusPoint {
        let inv = self.inverse_entries();
        let x = inv[0][0] as f64 * p.x1 + inv[0][1] as f64 * p.x2;
        let y = inv[1][0] as f64 * p.x1 + inv[1][1] as f64 * p.x2;
        TorusPoint::new(x, y)
    }

    /// Integer entries of `A^{-1}` (exact since `|det| = 1`).
    pub fn inverse_entries(&self) -> [[i64; 2]; 2] {
        let [[a, b], [c, d]] = self.entries;
        let s = self.determinant; // 1/det = det for |det| = 1
        [[s * d, -s * b], [-s * c, s * a]]
    }

    pub fn direction(&self, dir: LeafDirection) -> [f64; 2] {
        match dir {
            LeafDirection::Stable => self.dir_s,
            LeafDirection::Unstable => self.dir_u,
        }
    }

    pub fn eigenvalue(&self, dir: LeafDirection) -> f64 {
        match dir {
            LeafDirection::Stable => self.eigenvalue_s,
            LeafDirection::Unstable => self.eigenvalue_u,
        }
    }

    /// Decompose a lifted vector `w` as `sigma * dir_s + upsilon * dir_u`.
    pub fn leaf_coords(&self, w: [f64; 2]) -> (f64, f64) {
        let det = self.dir_s[0] * self.dir_u[1] - self.dir_s[1] * self.dir_u[0];
        let sigma = (w[0] * self.dir_u[1] - w[1] * self.dir_u[0]) / det;
        let upsilon = (self.dir_s[0] * w[1] - self.dir_s[1] * w[0]) / det;
        (sigma, upsilon)
    }

    /// Signed arc-length displacement from `x` to `y` along the leaf of
    /// direction `dir`, minimized over integer translates `|m|,|n| <= span`.
    ///
    /// Returns `None` when no translate puts `y` on the leaf of `x` within
    /// `off_tol` in the transverse direction.
    pub fn leaf_displacement(
        &self,
        x: &TorusPoint,
        y: &TorusPoint,
        dir: LeafDirection,
        span: i64,
        off_tol: f64,
    ) -> Option<f64> {
        let mut best: Option<f64> = None;
        for m in -span..=span {
            for n in -span..=span {
                let w = [y.x1 - x.x1 + m as f64, y.x2 - x.x2 + n as f64];
                let (sigma, upsilon) = self.leaf_coords(w);
                let (along, across) = match dir {
                    LeafDirection::Stable => (sigma, upsilon),
                    LeafDirection::Unstable => (upsilon, sigma),
                };
                if across.abs() <= off_tol {
                    match best {
                        Some(b) if b.abs() <= along.abs() => {}
                        _ => best = Some(along),
                    }
                }
            }
        }
        best
    }
}

/// All solutions of `(A - I) x = 0 (mod 1)` in `[0,1)^2`.
///
/// Solved exactly in rational arithmetic: with `M = A - I` and `d = det M`,
/// the solutions are `adj(M) (j,k)^T / d mod 1` for `j,k` ranging over
/// residues mod `|d|`.
fn enumerate_fixed_points(entries: [[i64; 2]; 2]) -> Vec<TorusPoint> {
    let m = [
        [entries[0][0] - 1, entries[0][1]],
        [entries[1][0], entries[1][1] - 1],
    ];
    let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    debug_assert!(d != 0, "hyperbolic matrices have det(A - I) != 0");
    let adj = [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]];
    let da = d.abs();
    let mut seen = std::collections::BTreeSet::new();
    for j in 0..da {
        for k in 0..da {
            let nx = (adj[0][0] * j + adj[0][1] * k).rem_euclid(d).rem_euclid(da);
            let ny = (adj[1][0] * j + adj[1][1] * k).rem_euclid(d).rem_euclid(da);
            seen.insert((nx, ny));
        }
    }
    seen.into_iter()
        .map(|(nx, ny)| TorusPoint::new(nx as f64 / da as f64, ny as f64 / da as f64))
        .collect()
}

/// A segment of a stable or unstable leaf, parameterized by arc length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeafSegment {
    pub base: TorusPoint,
    pub direction: LeafDirection,
    pub radius: f64,
}

impl LeafSegment {
    pub fn new(base: TorusPoint, direction: LeafDirection, radius: f64) -> Self {
        assert!(radius >= 0.0, "leaf segment radius must be nonnegative");
        LeafSegment {
            base,
            direction,
            radius,
        }
    }

    /// Point at arc-length parameter `s` (lifted, then reduced mod 1).
    pub fn point_at(&self, automorphism: &ToralAutomorphism, s: f64) -> TorusPoint {
        let d = automorphism.direction(self.direction);
        self.base.offset(s * d[0], s * d[1])
    }
}

/// Transverse intersection of a stable and an unstable leaf segment.
///
/// Solves the 2x2 linear system in lifted coordinates over integer
/// translates and returns the intersection closest to `seg1.base`, together
/// with the arc-length parameters `(s1, s2)` along each segment.
pub fn leaf_intersection(
    automorphism: &ToralAutomorphism,
    seg1: &LeafSegment,
    seg2: &LeafSegment,
) -> Result<Option<(TorusPoint, f64, f64)>, TorusError> {
    if seg1.direction == seg2.direction {
        return Err(TorusError::ParallelLeaves(seg1.direction));
    }
    let d1 = automorphism.direction(seg1.direction);
    let d2 = automorphism.direction(seg2.direction);
    let span = (seg1.radius + seg2.radius).ceil() as i64 + 1;
    let det = d1[0] * (-d2[1]) - (-d2[0]) * d1[1];
    let mut best: Option<(TorusPoint, f64, f64)> = None;
    for m in -span..=span {
        for n in -span..=span {
            let rhs = [
                seg2.base.x1 - seg1.base.x1 + m as f64,
                seg2.base.x2 - seg1.base.x2 + n as f64,
            ];
            // seg1.base + s1 d1 = seg2.base + (m,n) + s2 d2
            let s1 = (rhs[0] * (-d2[1]) - (-d2[0]) * rhs[1]) / det;
            let s2 = (d1[0] * rhs[1] - d1[1] * rhs[0]) / det;
            if s1.abs() <= seg1.radius && s2.abs() <= seg2.radius {
                let pt = seg1.base.offset(s1 * d1[0], s1 * d1[1]);
                match &best {
                    Some((_, b1, _)) if b1.abs() <= s1.abs() => {}
                    _ => best = Some((pt, s1, s2)),
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cat() -> ToralAutomorphism {
        ToralAutomorphism::analyze([[3, 1], [2, 1]]).unwrap()
    }

    #[test]
    fn analyze_cat_eigenvalues() {
        let a = cat();
        assert_eq!(a.determinant, 1);
        // roots of x^2 - 4x + 1
        assert_abs_diff_eq!(a.eigenvalue_u, 2.0 + 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.eigenvalue_s, 2.0 - 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn analyze_cat_singular_values() {
        let a = cat();
        // sqrt of eigenvalues of A^T A = [[13,5],[5,2]], i.e. (15 ± sqrt 221)/2
        let s2 = (15.0 + 221f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(a.norm, s2.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.norm, 3.86433, epsilon = 1e-5);
        assert_abs_diff_eq!(a.conorm, 0.25878, epsilon = 1e-5);
        assert!(a.conorm <= a.eigenvalue_s.abs());
        assert!(a.eigenvalue_u.abs() <= a.norm);
    }

    #[test]
    fn rejects_permutation_matrix() {
        assert!(matches!(
            ToralAutomorphism::analyze([[0, 1], [1, 0]]),
            Err(TorusError::NotHyperbolic)
        ));
    }

    #[test]
    fn rejects_identity() {
        assert!(matches!(
            ToralAutomorphism::analyze([[1, 0], [0, 1]]),
            Err(TorusError::NotHyperbolic)
        ));
    }

    #[test]
    fn rejects_non_unimodular() {
        assert!(matches!(
            ToralAutomorphism::analyze([[2, 0], [0, 2]]),
            Err(TorusError::NotUnimodular(4))
        ));
    }

    #[test]
    fn cat_fixed_points() {
        let a = cat();
        let fps = &a.fixed_points;
        assert_eq!(fps.len(), 2); // |det(A - I)| = 2
        assert!(fps.iter().any(|p| p.x1 == 0.0 && p.x2 == 0.0));
        assert!(fps.iter().any(|p| p.x1 == 0.5 && p.x2 == 0.0));
        for p in fps {
            assert!(a.apply(p).dist(p) < 1e-12);
        }
    }

    #[test]
    fn fibonacci_matrix_single_fixed_point() {
        let a = ToralAutomorphism::analyze([[2, 1], [1, 1]]).unwrap();
        assert_eq!(a.fixed_points.len(), 1);
        assert_eq!(a.fixed_points[0], TorusPoint::new(0.0, 0.0));
    }

    #[test]
    fn equivariance_along_unstable_direction() {
        let a = cat();
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let x = [next(), next()];
            let s = next() - 0.5;
            // lifted: A(x + s dir_u) = A x + s * lambda_u * dir_u
            let lhs = [
                a.entries[0][0] as f64 * (x[0] + s * a.dir_u[0])
                    + a.entries[0][1] as f64 * (x[1] + s * a.dir_u[1]),
                a.entries[1][0] as f64 * (x[0] + s * a.dir_u[0])
                    + a.entries[1][1] as f64 * (x[1] + s * a.dir_u[1]),
            ];
            let rhs = [
                a.entries[0][0] as f64 * x[0]
                    + a.entries[0][1] as f64 * x[1]
                    + s * a.eigenvalue_u * a.dir_u[0],
                a.entries[1][0] as f64 * x[0]
                    + a.entries[1][1] as f64 * x[1]
                    + s * a.eigenvalue_u * a.dir_u[1],
            ];
            assert_abs_diff_eq!(lhs[0], rhs[0], epsilon = 1e-12);
            assert_abs_diff_eq!(lhs[1], rhs[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn leaf_intersection_common_base() {
        let a = cat();
        let o = TorusPoint::new(0.0, 0.0);
        let s1 = LeafSegment::new(o, LeafDirection::Stable, 0.5);
        let s2 = LeafSegment::new(o, LeafDirection::Unstable, 0.5);
        let (pt, p1, p2) = leaf_intersection(&a, &s1, &s2).unwrap().unwrap();
        assert!(pt.dist(&o) < 1e-12);
        assert!(p1.abs() < 1e-12 && p2.abs() < 1e-12);
    }

    #[test]
    fn leaf_intersection_p_q() {
        let a = cat();
        let p = TorusPoint::new(0.5, 0.0);
        let q = TorusPoint::new(0.0, 0.0);
        let su = LeafSegment::new(p, LeafDirection::Unstable, 1.0);
        let ss = LeafSegment::new(q, LeafDirection::Stable, 1.0);
        let (r, s_u, s_s) = leaf_intersection(&a, &su, &ss).unwrap().unwrap();
        // r lies on both lines to 1e-12: its leaf displacement from each
        // base must exist with transverse part below tolerance.
        let du = a
            .leaf_displacement(&p, &r, LeafDirection::Unstable, 3, 1e-12)
            .unwrap();
        let ds = a
            .leaf_displacement(&q, &r, LeafDirection::Stable, 3, 1e-12)
            .unwrap();
        assert_abs_diff_eq!(du, s_u, epsilon = 1e-12);
        assert_abs_diff_eq!(ds, s_s, epsilon = 1e-12);
    }

    #[test]
    fn leaf_intersection_symmetric() {
        let a = cat();
        let p = TorusPoint::new(0.5, 0.0);
        let q = TorusPoint::new(0.0, 0.0);
        let su = LeafSegment::new(p, LeafDirection::Unstable, 1.0);
        let ss = LeafSegment::new(q, LeafDirection::Stable, 1.0);
        let (r1, _, _) = leaf_intersection(&a, &su, &ss).unwrap().unwrap();
        let (r2, _, _) = leaf_intersection(&a, &ss, &su).unwrap().unwrap();
        // symmetric up to which base anchors the "closest" tie-break;
        // both results must lie on both leaves
        for r in [r1, r2] {
            assert!(a
                .leaf_displacement(&p, &r, LeafDirection::Unstable, 3, 1e-10)
                .is_some());
            assert!(a
                .leaf_displacement(&q, &r, LeafDirection::Stable, 3, 1e-10)
                .is_some());
        }
    }

    #[test]
    fn parallel_leaves_rejected() {
        let a = cat();
        let o = TorusPoint::new(0.0, 0.0);
        let s1 = LeafSegment::new(o, LeafDirection::Unstable, 0.5);
        let s2 = LeafSegment::new(TorusPoint::new(0.3, 0.3), LeafDirection::Unstable, 0.5);
        assert_eq!(
            leaf_intersection(&a, &s1, &s2).unwrap_err(),
            TorusError::ParallelLeaves(LeafDirection::Unstable)
        );
    }

    #[test]
    fn mod1_reduction_edge_cases() {
        assert_eq!(TorusPoint::new(-1e-18, 1.0).x1, 0.0);
        assert_eq!(TorusPoint::new(1.0, 2.5).x2, 0.5);
        let p = TorusPoint::new(0.25, 0.75);
        let q = p.offset(1.0, -1.0);
        assert_eq!(p, q);
    }
}
