//! The 3D skew product `F(x,t) = (Ax, phi_x(t))` over a hyperbolic toral
//! automorphism: construction with K1-K3 validation, orbit stepping, and
//! strong stable/unstable holonomy between center fibers.
//!
//! Base orbits are iterated in 64-bit fixed point (`ExactBase`), where the
//! integer matrix action is exact modulo 1. Plain f64 iteration of a
//! hyperbolic matrix loses all significant digits after ~19 steps; the
//! fixed-point representation keeps long cocycles and witness verification
//! honest at any depth.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fiber::{invert_monotone, FiberError, FnMap, PoleKind, PoleMap};
use crate::torus::{LeafDirection, ToralAutomorphism, TorusError, TorusPoint};

#[derive(Debug, Error)]
pub enum SkewError {
    #[error("point ({0}, {1}) is not fixed by the base automorphism")]
    NotFixedPoint(f64, f64),
    #[error("target base point is not on the required leaf of the source")]
    NotOnLeaf,
    #[error("holonomy did not converge within the depth cap")]
    NoConvergence,
    #[error("system failed K-validation required by this operation")]
    NotValidated,
    #[error("computed center holonomy is not monotone on the sample grid")]
    HolonomyNotMonotone,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Torus(#[from] TorusError),
}

// ---------------------------------------------------------------------------
// exact base arithmetic

/// A torus point in 64-bit fixed point: coordinate `i` is `coords[i] / 2^64`.
///
/// The action of an integer matrix in this representation is exact modulo 1
/// (wrapping arithmetic *is* arithmetic mod `2^64`), so base orbits of any
/// length carry no roundoff. Every f64 coordinate with magnitude >= 2^-12 is
/// converted exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExactBase(pub [u64; 2]);

fn f64_to_fixed(x: f64) -> u64 {
    let x = x.rem_euclid(1.0);
    if x == 0.0 {
        return 0;
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (m, e) = if exp == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1 << 52), exp - 1075)
    };
    // x = m * 2^e < 1; the fixed-point value is m * 2^(e+64)
    let shift = e + 64;
    if shift >= 0 {
        m << shift
    } else if shift > -64 {
        let down = (-shift) as u32;
        (m >> down) + ((m >> (down - 1)) & 1) // round to nearest
    } else {
        0
    }
}

impl ExactBase {
    pub fn from_torus(p: &TorusPoint) -> Self {
        ExactBase([f64_to_fixed(p.x1), f64_to_fixed(p.x2)])
    }

    pub fn to_torus(&self) -> TorusPoint {
        TorusPoint::new(
            self.0[0] as f64 / 2f64.powi(64),
            self.0[1] as f64 / 2f64.powi(64),
        )
    }

    /// Exact matrix action modulo 1.
    pub fn apply(&self, entries: [[i64; 2]; 2]) -> Self {
        let [x, y] = self.0;
        let row = |a: i64, b: i64| {
            (a as u64)
                .wrapping_mul(x)
                .wrapping_add((b as u64).wrapping_mul(y))
        };
        ExactBase([
            row(entries[0][0], entries[0][1]),
            row(entries[1][0], entries[1][1]),
        ])
    }
}

// ---------------------------------------------------------------------------
// fiber families

/// A C^2 family of fiber maps `x -> phi_x`, each a self-map of `[0,1]`.
pub trait FiberFamily: Send + Sync {
    fn eval(&self, x: [f64; 2], t: f64) -> f64;
    fn dt(&self, x: [f64; 2], t: f64) -> f64;
    fn dtt(&self, x: [f64; 2], t: f64) -> f64;

    /// Exact global range of `dt` over all `(x, t)`, when known in closed
    /// form (presets). Sampling is used otherwise.
    fn derivative_range(&self) -> Option<(f64, f64)> {
        None
    }
}

/// The fiber family of Kan's examples:
/// `phi_x(t) = t + t(1-t) cos(2 pi x_1)/32`.
pub struct KanFiber;

impl FiberFamily for KanFiber {
    fn eval(&self, x: [f64; 2], t: f64) -> f64 {
        t + t * (1.0 - t) * (std::f64::consts::TAU * x[0]).cos() / 32.0
    }

    fn dt(&self, x: [f64; 2], t: f64) -> f64 {
        1.0 + (1.0 - 2.0 * t) * (std::f64::consts::TAU * x[0]).cos() / 32.0
    }

    fn dtt(&self, x: [f64; 2], _t: f64) -> f64 {
        -2.0 * (std::f64::consts::TAU * x[0]).cos() / 32.0
    }

    fn derivative_range(&self) -> Option<(f64, f64)> {
        // 1 + (1-2t) cos(2 pi x)/32 extremized at t in {0,1}, cos = +-1
        Some((31.0 / 32.0, 33.0 / 32.0))
    }
}

/// Closure-backed fiber family.
pub struct FnFamily<F, G, H> {
    pub f: F,
    pub df: G,
    pub ddf: H,
}

impl<F, G, H> FiberFamily for FnFamily<F, G, H>
where
    F: Fn([f64; 2], f64) -> f64 + Send + Sync,
    G: Fn([f64; 2], f64) -> f64 + Send + Sync,
    H: Fn([f64; 2], f64) -> f64 + Send + Sync,
{
    fn eval(&self, x: [f64; 2], t: f64) -> f64 {
        (self.f)(x, t)
    }
    fn dt(&self, x: [f64; 2], t: f64) -> f64 {
        (self.df)(x, t)
    }
    fn dtt(&self, x: [f64; 2], t: f64) -> f64 {
        (self.ddf)(x, t)
    }
}

// ---------------------------------------------------------------------------
// system and validation

/// K1-K3 validation summary for a skew product.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Fiber maps fix `t = 0` and `t = 1` over the base sample.
    pub k1_pass: bool,
    /// `phi_p` is NS and `phi_q` is SN.
    pub k2_pass: bool,
    /// Sampled `phi'_x(t)` lies strictly inside `(conorm, norm)`.
    pub k3_pass: bool,
    /// `||A^-1||^-1` (smallest singular value of the base matrix).
    pub lambda: f64,
    /// Largest `gamma` with `phi'_x(t) in (gamma, 1/gamma)` on the sample.
    pub gamma: f64,
    /// `[min, max]` of the sampled (or closed-form) fiber derivative.
    pub derivative_range: [f64; 2],
    /// `[base_side, fiber]` sampling resolution.
    pub grid: [usize; 2],
}

/// A Kan-type skew product `F(x,t) = (Ax, phi_x(t))`.
pub struct KanSystem {
    pub base: ToralAutomorphism,
    fiber: Arc<dyn FiberFamily>,
    pub p: TorusPoint,
    pub q: TorusPoint,
    pub validation: ValidationReport,
    pole_p: Option<PoleMap>,
    pole_q: Option<PoleMap>,
}

/// A point of the phase space `T^2 x [0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatePoint {
    pub base: TorusPoint,
    pub t: f64,
}

impl StatePoint {
    pub fn new(base: TorusPoint, t: f64) -> Self {
        assert!((0.0..=1.0).contains(&t), "t must lie in [0,1]");
        StatePoint { base, t }
    }
}

const VALIDATION_BASE_GRID: usize = 256;
const VALIDATION_FIBER_GRID: usize = 64;

/// Build and validate a skew product.
///
/// Construction succeeds even when K1-K3 fail (the report flags the
/// failure) so diagnostics stay runnable; proof-guided operations check
/// [`KanSystem::is_valid`] themselves.
pub fn build_system(
    entries: [[i64; 2]; 2],
    fiber: Arc<dyn FiberFamily>,
    p: TorusPoint,
    q: TorusPoint,
) -> Result<KanSystem, SkewError> {
    let base = ToralAutomorphism::analyze(entries)?;
    for pt in [&p, &q] {
        if base.apply(pt).dist(pt) > 1e-12 {
            return Err(SkewError::NotFixedPoint(pt.x1, pt.x2));
        }
    }

    let nb = VALIDATION_BASE_GRID;
    let nf = VALIDATION_FIBER_GRID;
    let mut k1_pass = true;
    let mut d_min = f64::INFINITY;
    let mut d_max = f64::NEG_INFINITY;
    for i in 0..nb {
        for j in 0..nb {
            let x = [i as f64 / nb as f64, j as f64 / nb as f64];
            if fiber.eval(x, 0.0).abs() > 1e-12 || (fiber.eval(x, 1.0) - 1.0).abs() > 1e-12 {
                k1_pass = false;
            }
            for k in 0..=nf {
                let t = k as f64 / nf as f64;
                let d = fiber.dt(x, t);
                d_min = d_min.min(d);
                d_max = d_max.max(d);
            }
        }
    }
    if let Some((lo, hi)) = fiber.derivative_range() {
        d_min = lo;
        d_max = hi;
    }

    let pole_p = pole_map_at(&fiber, &p).ok();
    let pole_q = pole_map_at(&fiber, &q).ok();
    let k2_pass = matches!(&pole_p, Some(m) if m.kind == PoleKind::NS)
        && matches!(&pole_q, Some(m) if m.kind == PoleKind::SN);

    let lambda = base.conorm;
    let gamma = d_min.min(1.0 / d_max);
    let k3_pass = d_min > 0.0 && lambda < d_min && d_max < 1.0 / lambda;

    Ok(KanSystem {
        base,
        fiber,
        p,
        q,
        validation: ValidationReport {
            k1_pass,
            k2_pass,
            k3_pass,
            lambda,
            gamma,
            derivative_range: [d_min, d_max],
            grid: [nb, nf],
        },
        pole_p,
        pole_q,
    })
}

fn pole_map_at(fiber: &Arc<dyn FiberFamily>, x: &TorusPoint) -> Result<PoleMap, FiberError> {
    let coords = [x.x1, x.x2];
    let fam = fiber.clone();
    let fam2 = fiber.clone();
    let fam3 = fiber.clone();
    PoleMap::classify(Arc::new(FnMap {
        f: move |t| fam.eval(coords, t),
        df: move |t| fam2.dt(coords, t),
        ddf: move |t| fam3.dtt(coords, t),
    }))
}

impl KanSystem {
    pub fn is_valid(&self) -> bool {
        self.validation.k1_pass && self.validation.k2_pass && self.validation.k3_pass
    }

    /// The classified fiber map over an arbitrary base point.
    pub fn pole_map_at(&self, x: &TorusPoint) -> Result<PoleMap, FiberError> {
        pole_map_at(&self.fiber, x)
    }

    /// The NS fiber map over `p`.
    pub fn phi_p(&self) -> Result<&PoleMap, SkewError> {
        self.pole_p.as_ref().ok_or(SkewError::NotValidated)
    }

    /// The SN fiber map over `q`.
    pub fn phi_q(&self) -> Result<&PoleMap, SkewError> {
        self.pole_q.as_ref().ok_or(SkewError::NotValidated)
    }

    pub fn fiber_eval(&self, x: [f64; 2], t: f64) -> f64 {
        self.fiber.eval(x, t).clamp(0.0, 1.0)
    }

    pub fn fiber_dt(&self, x: [f64; 2], t: f64) -> f64 {
        self.fiber.dt(x, t)
    }

    /// One application of `F` (`direction = 1`) or `F^-1` (`direction = -1`).
    pub fn step(&self, s: &StatePoint, direction: i32) -> StatePoint {
        match direction {
            1 => StatePoint {
                base: self.base.apply(&s.base),
                t: self.fiber_eval([s.base.x1, s.base.x2], s.t),
            },
            -1 => {
                let prev = self.base.apply_inverse(&s.base);
                let x = [prev.x1, prev.x2];
                let t = invert_monotone(
                    |u| self.fiber.eval(x, u),
                    |u| self.fiber.dt(x, u),
                    s.t,
                );
                StatePoint { base: prev, t }
            }
            _ => panic!("direction must be +1 or -1"),
        }
    }

    /// Forward fiber cocycle along an exact base orbit.
    ///
    /// Returns the final fiber value and the accumulated log-derivative
    /// `sum ln phi'_{x_j}(t_j)`.
    pub fn fiber_cocycle(&self, start: ExactBase, t: f64, n: u64) -> (f64, f64) {
        let mut x = start;
        let mut u = t;
        let mut log_d = 0.0;
        for _ in 0..n {
            let p = x.to_torus();
            let c = [p.x1, p.x2];
            log_d += self.fiber.dt(c, u).ln();
            u = self.fiber_eval(c, u);
            x = x.apply(self.base.entries);
        }
        (u, log_d)
    }
}

// ---------------------------------------------------------------------------
// strong holonomy

/// Result of a strong stable/unstable holonomy computation.
#[derive(Debug, Clone, Serialize)]
pub struct HolonomyResult {
    pub source: StatePoint,
    pub target_base: TorusPoint,
    pub t_prime: f64,
    /// Iterations used to converge.
    pub depth: usize,
    /// Last increment amplified by the geometric tail `1/(1 - lambda/gamma)`.
    pub error_bound: f64,
    /// Optional whole-fiber sample table `(t, H(t))`.
    pub samples: Option<Vec<(f64, f64)>>,
}

const HOLONOMY_DEPTH_CAP: usize = 1000;
const LEAF_OFF_TOL: f64 = 1e-10;
const LEAF_SPAN: i64 = 4;

/// Strong stable holonomy: slide `(x, t)` to the fiber over `target_base`
/// on the stable leaf of `x`.
///
/// Computes `t' = lim_n (phi^(n)_{x'})^{-1}(phi^(n)_x(t))` with the base
/// orbit of `x` iterated exactly and the orbit of `x'` represented as
/// `A^n x + sigma lambda_s^n dir_s` (the leaf displacement contracts
/// exactly at the eigenvalue rate, so no second orbit needs tracking).
pub fn strong_stable_holonomy(
    system: &KanSystem,
    s: &StatePoint,
    target_base: &TorusPoint,
    tol: f64,
) -> Result<HolonomyResult, SkewError> {
    if !system.validation.k3_pass {
        return Err(SkewError::NotValidated);
    }
    let sigma = system
        .base
        .leaf_displacement(&s.base, target_base, LeafDirection::Stable, LEAF_SPAN, LEAF_OFF_TOL)
        .ok_or(SkewError::NotOnLeaf)?;
    holonomy_limit(system, s, target_base, sigma, LeafDirection::Stable, tol)
}

/// Strong unstable holonomy: the stable construction under `F^-1`.
pub fn strong_unstable_holonomy(
    system: &KanSystem,
    s: &StatePoint,
    target_base: &TorusPoint,
    tol: f64,
) -> Result<HolonomyResult, SkewError> {
    if !system.validation.k3_pass {
        return Err(SkewError::NotValidated);
    }
    let sigma = system
        .base
        .leaf_displacement(&s.base, target_base, LeafDirection::Unstable, LEAF_SPAN, LEAF_OFF_TOL)
        .ok_or(SkewError::NotOnLeaf)?;
    holonomy_limit(system, s, target_base, sigma, LeafDirection::Unstable, tol)
}

fn holonomy_limit(
    system: &KanSystem,
    s: &StatePoint,
    target_base: &TorusPoint,
    sigma: f64,
    dir: LeafDirection,
    tol: f64,
) -> Result<HolonomyResult, SkewError> {
    let fam = &system.fiber;
    let entries = match dir {
        LeafDirection::Stable => system.base.entries,
        LeafDirection::Unstable => system.base.inverse_entries(),
    };
    // contraction rate of the displacement along the chosen orbit direction
    let rate = match dir {
        LeafDirection::Stable => system.base.eigenvalue(LeafDirection::Stable),
        LeafDirection::Unstable => 1.0 / system.base.eigenvalue(LeafDirection::Unstable),
    };
    let d = system.base.direction(dir);
    let tail = {
        let r = system.validation.lambda / system.validation.gamma;
        1.0 / (1.0 - r).max(1e-3)
    };

    // exact orbit of x in the contracting time direction
    let mut orbit: Vec<[f64; 2]> = Vec::new();
    let mut x = ExactBase::from_torus(&s.base);
    // fiber values of x's orbit (forward for stable; pulled back for unstable)
    let mut along: Vec<f64> = vec![s.t];

    let mut t_prev = f64::NAN;
    for n in 1..=HOLONOMY_DEPTH_CAP {
        {
            let p = x.to_torus();
            orbit.push([p.x1, p.x2]);
        }
        x = x.apply(entries);
        // extend the value sequence along x's orbit by one step
        let cur = *along.last().unwrap();
        let xn = orbit[n - 1];
        let next = match dir {
            LeafDirection::Stable => fam.eval(xn, cur).clamp(0.0, 1.0),
            LeafDirection::Unstable => {
                // pull back: solve phi_{x_{-n}}(u) = value at x_{-(n-1)}
                let xm = {
                    let p = x.to_torus();
                    [p.x1, p.x2]
                };
                invert_monotone(|u| fam.eval(xm, u), |u| fam.dt(xm, u), cur)
            }
        };
        along.push(next);

        // transport across to the orbit of x' and return to time zero
        let t_n = match dir {
            LeafDirection::Stable => {
                // pull phi^(n)_x(t) back through the n fiber maps over x'
                let mut u = *along.last().unwrap();
                for j in (0..n).rev() {
                    let off = sigma * rate.powi(j as i32);
                    let xp = [orbit[j][0] + off * d[0], orbit[j][1] + off * d[1]];
                    u = invert_monotone(|v| fam.eval(xp, v), |v| fam.dt(xp, v), u);
                }
                u
            }
            LeafDirection::Unstable => {
                // push the pulled-back value forward through maps over x'
                let mut u = *along.last().unwrap();
                for j in (0..n).rev() {
                    let off = sigma * rate.powi((j + 1) as i32);
                    let xb = {
                        // base of the j-th backward step of x'
                        let p = if j + 1 == n {
                            x.to_torus()
                        } else {
                            TorusPoint::new(orbit[j + 1][0], orbit[j + 1][1])
                        };
                        [p.x1 + off * d[0], p.x2 + off * d[1]]
                    };
                    u = fam.eval(xb, u).clamp(0.0, 1.0);
                }
                u
            }
        };

        let inc = (t_n - t_prev).abs();
        let sep = (sigma * rate.powi(n as i32)).abs();
        if n > 1 && (inc < tol && (sep < tol || inc == 0.0)) {
            return Ok(HolonomyResult {
                source: *s,
                target_base: *target_base,
                t_prime: t_n,
                depth: n,
                error_bound: (inc * tail).max(f64::EPSILON),
                samples: None,
            });
        }
        t_prev = t_n;
    }
    Err(SkewError::NoConvergence)
}

/// Whole-fiber center holonomy `H : [0,1] -> [0,1]` between two base
/// points on a common leaf, sampled on a grid with a finite-difference
/// derivative table.
#[derive(Debug, Clone, Serialize)]
pub struct CenterHolonomy {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    /// Central finite differences (one-sided at the ends).
    pub derivative: Vec<f64>,
    pub max_error_bound: f64,
}

pub fn holonomy_center_map(
    system: &KanSystem,
    source_base: &TorusPoint,
    target_base: &TorusPoint,
    path: LeafDirection,
    grid_n: usize,
    tol: f64,
) -> Result<CenterHolonomy, SkewError> {
    assert!(grid_n >= 2);
    let results: Vec<Result<HolonomyResult, SkewError>> = (0..=grid_n)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 / grid_n as f64;
            let s = StatePoint::new(*source_base, t);
            match path {
                LeafDirection::Stable => strong_stable_holonomy(system, &s, target_base, tol),
                LeafDirection::Unstable => strong_unstable_holonomy(system, &s, target_base, tol),
            }
        })
        .collect();
    let mut ts = Vec::with_capacity(grid_n + 1);
    let mut values = Vec::with_capacity(grid_n + 1);
    let mut max_err: f64 = 0.0;
    for (i, r) in results.into_iter().enumerate() {
        let h = r?;
        ts.push(i as f64 / grid_n as f64);
        values.push(h.t_prime);
        max_err = max_err.max(h.error_bound);
    }
    for w in values.windows(2) {
        if w[1] < w[0] {
            return Err(SkewError::HolonomyNotMonotone);
        }
    }
    let n = values.len();
    let dt = 1.0 / grid_n as f64;
    let mut derivative = Vec::with_capacity(n);
    for i in 0..n {
        let d = if i == 0 {
            (values[1] - values[0]) / dt
        } else if i == n - 1 {
            (values[n - 1] - values[n - 2]) / dt
        } else {
            (values[i + 1] - values[i - 1]) / (2.0 * dt)
        };
        derivative.push(d);
    }
    Ok(CenterHolonomy {
        ts,
        values,
        derivative,
        max_error_bound: max_err,
    })
}

// ---------------------------------------------------------------------------
// presets

/// The non-invertible cylinder example: `(x, t) -> (3x, phi_x(t))` on
/// `S^1 x [0,1]` with the same fiber family as the diffeomorphism preset.
pub struct CylinderEndo {
    fiber: Arc<dyn FiberFamily>,
    pub multiplier: u64,
}

impl CylinderEndo {
    pub fn fiber_eval(&self, x1: f64, t: f64) -> f64 {
        self.fiber.eval([x1, 0.0], t).clamp(0.0, 1.0)
    }

    /// One forward step with the circle coordinate in exact fixed point.
    pub fn step_exact(&self, x1: u64, t: f64) -> (u64, f64) {
        let xf = x1 as f64 / 2f64.powi(64);
        (x1.wrapping_mul(self.multiplier), self.fiber_eval(xf, t))
    }
}

/// Either preset, for operations that accept both system kinds.
pub enum SystemPreset {
    Diffeo(Box<KanSystem>),
    Endo(CylinderEndo),
}

/// Kan's diffeomorphism on `T^2 x [0,1]`: base `[[3,1],[2,1]]`, fiber
/// `t + t(1-t) cos(2 pi x_1)/32`, with `p = (1/2, 0)` and `q = (0, 0)`.
pub fn kan_diffeo() -> KanSystem {
    build_system(
        [[3, 1], [2, 1]],
        Arc::new(KanFiber),
        TorusPoint::new(0.5, 0.0),
        TorusPoint::new(0.0, 0.0),
    )
    .expect("preset is well-formed")
}

/// Kan's endomorphism on the cylinder: `x -> 3x` with the same fiber.
pub fn kan_endo() -> CylinderEndo {
    CylinderEndo {
        fiber: Arc::new(KanFiber),
        multiplier: 3,
    }
}

/// Look up a preset by its stable public name.
pub fn preset(name: &str) -> Result<SystemPreset, SkewError> {
    match name {
        "kan-diffeo" => Ok(SystemPreset::Diffeo(Box::new(kan_diffeo()))),
        "kan-endo" => Ok(SystemPreset::Endo(kan_endo())),
        other => Err(SkewError::UnknownPreset(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn x_independent_system() -> KanSystem {
        // phi(t) = t - t(1-t)/8 for every x: K1 holds, K2 fails at q
        build_system(
            [[3, 1], [2, 1]],
            Arc::new(FnFamily {
                f: |_x: [f64; 2], t: f64| t - t * (1.0 - t) / 8.0,
                df: |_x: [f64; 2], t: f64| 1.0 - (1.0 - 2.0 * t) / 8.0,
                ddf: |_x: [f64; 2], _t: f64| 2.0 / 8.0,
            }),
            TorusPoint::new(0.5, 0.0),
            TorusPoint::new(0.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn exact_base_matches_f64_for_one_step() {
        let p = TorusPoint::new(0.1240234375, 0.72314453125); // dyadic
        let e = ExactBase::from_torus(&p);
        let sys = kan_diffeo();
        let one = e.apply(sys.base.entries).to_torus();
        let two = sys.base.apply(&p);
        assert!(one.dist(&two) < 1e-12);
    }

    #[test]
    fn exact_base_round_trips_under_inverse() {
        let sys = kan_diffeo();
        let e = ExactBase([0x123456789abcdef0, 0xfedcba9876543210]);
        let back = e.apply(sys.base.entries).apply(sys.base.inverse_entries());
        assert_eq!(e, back); // bit-for-bit: integer matrix inverses mod 2^64
    }

    #[test]
    fn exact_base_f64_conversion_is_exact_for_dyadics() {
        for &x in &[0.0, 0.5, 0.25, 0.1240234375, 1.0 - 2f64.powi(-30)] {
            let e = f64_to_fixed(x);
            assert_eq!(e as f64 / 2f64.powi(64), x);
        }
    }

    #[test]
    fn kan_preset_validation() {
        let sys = kan_diffeo();
        let v = &sys.validation;
        assert!(v.k1_pass && v.k2_pass && v.k3_pass);
        assert_eq!(v.derivative_range, [31.0 / 32.0, 33.0 / 32.0]);
        assert_abs_diff_eq!(v.lambda, 0.25878, epsilon = 1e-5);
        assert_abs_diff_eq!(1.0 / v.lambda, 3.86433, epsilon = 1e-5);
        assert_eq!(sys.phi_p().unwrap().kind, PoleKind::NS);
        assert_eq!(sys.phi_q().unwrap().kind, PoleKind::SN);
        assert_abs_diff_eq!(v.gamma, 31.0 / 32.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_fiber_fails_k2_only() {
        let sys = build_system(
            [[3, 1], [2, 1]],
            Arc::new(FnFamily {
                f: |_x: [f64; 2], t: f64| t,
                df: |_x: [f64; 2], _t: f64| 1.0,
                ddf: |_x: [f64; 2], _t: f64| 0.0,
            }),
            TorusPoint::new(0.5, 0.0),
            TorusPoint::new(0.0, 0.0),
        )
        .unwrap();
        assert!(sys.validation.k1_pass);
        assert!(!sys.validation.k2_pass);
        assert!(sys.validation.k3_pass);
    }

    #[test]
    fn rejects_non_fixed_points() {
        let r = build_system(
            [[3, 1], [2, 1]],
            Arc::new(KanFiber),
            TorusPoint::new(0.3, 0.3),
            TorusPoint::new(0.0, 0.0),
        );
        assert!(matches!(r, Err(SkewError::NotFixedPoint(_, _))));
    }

    #[test]
    fn step_at_fixed_point_q() {
        let sys = kan_diffeo();
        let s = StatePoint::new(TorusPoint::new(0.0, 0.0), 0.5);
        let next = sys.step(&s, 1);
        assert_eq!(next.base, TorusPoint::new(0.0, 0.0));
        assert_eq!(next.t, 0.5 + 0.25 / 32.0);
    }

    #[test]
    fn boundary_is_invariant() {
        let sys = kan_diffeo();
        let mut s = StatePoint::new(TorusPoint::new(0.37, 0.91), 0.0);
        for _ in 0..50 {
            s = sys.step(&s, 1);
            assert_eq!(s.t, 0.0);
        }
    }

    #[test]
    fn step_round_trip() {
        let sys = kan_diffeo();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let s = StatePoint::new(
                TorusPoint::new(rng.gen::<f64>(), rng.gen::<f64>()),
                rng.gen::<f64>(),
            );
            let back = sys.step(&sys.step(&s, 1), -1);
            assert!(back.base.dist(&s.base) < 1e-12);
            assert!((back.t - s.t).abs() < 1e-12);
        }
    }

    #[test]
    fn base_projection_semiconjugacy() {
        let sys = kan_diffeo();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let s = StatePoint::new(
                TorusPoint::new(rng.gen::<f64>(), rng.gen::<f64>()),
                rng.gen::<f64>(),
            );
            let lhs = sys.step(&s, 1).base;
            let rhs = sys.base.apply(&s.base);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn x_independent_stable_holonomy_is_identity() {
        let sys = x_independent_system();
        let base = TorusPoint::new(0.1, 0.2);
        let d = sys.base.dir_s;
        let target = base.offset(0.01 * d[0], 0.01 * d[1]);
        for &t in &[0.0, 0.3, 0.77, 1.0] {
            let h = strong_stable_holonomy(&sys, &StatePoint::new(base, t), &target, 1e-12)
                .unwrap();
            assert!((h.t_prime - t).abs() < 1e-12);
        }
    }

    #[test]
    fn x_independent_unstable_holonomy_is_identity() {
        let sys = x_independent_system();
        let base = TorusPoint::new(0.1, 0.2);
        let d = sys.base.dir_u;
        let target = base.offset(0.01 * d[0], 0.01 * d[1]);
        for &t in &[0.2, 0.5, 0.9] {
            let h = strong_unstable_holonomy(&sys, &StatePoint::new(base, t), &target, 1e-12)
                .unwrap();
            assert!((h.t_prime - t).abs() < 1e-12);
        }
    }

    fn cocycle_value(sys: &KanSystem, base: &TorusPoint, t: f64, n: usize) -> f64 {
        let mut s = StatePoint::new(*base, t);
        for _ in 0..n {
            s = sys.step(&s, 1);
        }
        s.t
    }

    #[test]
    fn kan_stable_holonomy_defining_property() {
        let sys = kan_diffeo();
        let base = TorusPoint::new(0.1, 0.2);
        let d = sys.base.dir_s;
        let target = base.offset(0.01 * d[0], 0.01 * d[1]);
        let s = StatePoint::new(base, 0.5);
        let h = strong_stable_holonomy(&sys, &s, &target, 1e-12).unwrap();
        // residual of the defining property at the returned depth
        let lhs = cocycle_value(&sys, &base, 0.5, h.depth);
        let rhs = cocycle_value(&sys, &target, h.t_prime, h.depth);
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn kan_unstable_holonomy_defining_property() {
        let sys = kan_diffeo();
        let base = TorusPoint::new(0.1, 0.2);
        let d = sys.base.dir_u;
        let target = base.offset(0.01 * d[0], 0.01 * d[1]);
        let s = StatePoint::new(base, 0.5);
        let h = strong_unstable_holonomy(&sys, &s, &target, 1e-12).unwrap();
        // defining property under F^-1
        let mut a = s;
        let mut b = StatePoint::new(target, h.t_prime);
        for _ in 0..h.depth {
            a = sys.step(&a, -1);
            b = sys.step(&b, -1);
        }
        assert!((a.t - b.t).abs() < 1e-9);
    }

    #[test]
    fn off_leaf_target_is_rejected() {
        let sys = kan_diffeo();
        let base = TorusPoint::new(0.1, 0.2);
        let d = sys.base.dir_u; // wrong direction for a stable holonomy
        let target = base.offset(0.1 * d[0], 0.1 * d[1]);
        let r = strong_stable_holonomy(&sys, &StatePoint::new(base, 0.5), &target, 1e-12);
        assert!(matches!(r, Err(SkewError::NotOnLeaf)));
    }

    #[test]
    fn holonomy_composes_along_the_leaf() {
        let sys = kan_diffeo();
        let base = TorusPoint::new(0.3, 0.4);
        let d = sys.base.dir_s;
        let mid = base.offset(0.01 * d[0], 0.01 * d[1]);
        let far = base.offset(0.025 * d[0], 0.025 * d[1]);
        let s = StatePoint::new(base, 0.6);
        let direct = strong_stable_holonomy(&sys, &s, &far, 1e-13).unwrap();
        let first = strong_stable_holonomy(&sys, &s, &mid, 1e-13).unwrap();
        let second = strong_stable_holonomy(
            &sys,
            &StatePoint::new(mid, first.t_prime),
            &far,
            1e-13,
        )
        .unwrap();
        let bound = 2.0 * (direct.error_bound + first.error_bound + second.error_bound);
        assert!((direct.t_prime - second.t_prime).abs() <= bound.max(1e-11));
    }

    #[test]
    fn center_map_fixes_boundary_and_is_monotone() {
        let sys = kan_diffeo();
        let base = TorusPoint::new(0.1, 0.2);
        let d = sys.base.dir_s;
        let target = base.offset(0.02 * d[0], 0.02 * d[1]);
        let h = holonomy_center_map(&sys, &base, &target, LeafDirection::Stable, 64, 1e-12)
            .unwrap();
        assert!(h.values[0].abs() < 1e-8);
        assert!((h.values[64] - 1.0).abs() < 1e-8);
        assert!(h.derivative.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn endo_preset_boundary_and_tripling() {
        let endo = kan_endo();
        let x0 = f64_to_fixed(0.25);
        let (x1, t1) = endo.step_exact(x0, 0.0);
        assert_eq!(t1, 0.0);
        assert_eq!(x1 as f64 / 2f64.powi(64), 0.75);
    }

    #[test]
    fn preset_registry() {
        assert!(matches!(preset("kan-diffeo"), Ok(SystemPreset::Diffeo(_))));
        assert!(matches!(preset("kan-endo"), Ok(SystemPreset::Endo(_))));
        assert!(matches!(
            preset("unknown"),
            Err(SkewError::UnknownPreset(_))
        ));
    }
}
