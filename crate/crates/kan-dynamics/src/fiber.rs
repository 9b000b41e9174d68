//! One-dimensional dynamics on the interval `[0,1]`.
//!
//! Pole maps are boundary-fixing interval diffeomorphisms; the
//! north-south (NS) kind attracts at 0 and repels at 1. Near the
//! attracting endpoint a C^2 map is C^1-conjugate to its linear part
//! `t -> alpha t`, and the conjugacy is computed here as the pointwise
//! limit `h(t) = lim alpha^-n f^n(t)`.

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FiberError {
    #[error("map does not fix the boundary: |f(0)| or |f(1)-1| exceeds 1e-12")]
    NotBoundaryFixing,
    #[error("derivative changes sign on the validation grid")]
    NotMonotone,
    #[error("linearization increments stalled above tolerance within the iteration budget")]
    NoConvergence,
    #[error("linearization domain shrank below the floor {0:e}")]
    DomainCollapse(f64),
    #[error("derivative magnitude below 1e-12 on the grid")]
    DegenerateDerivative,
}

/// A C^2 self-map of `[0,1]` given by value and first two derivatives.
pub trait C2Map: Send + Sync {
    fn eval(&self, t: f64) -> f64;
    fn d1(&self, t: f64) -> f64;
    fn d2(&self, t: f64) -> f64;
}

/// Closure-backed [`C2Map`].
pub struct FnMap<F, G, H> {
    pub f: F,
    pub df: G,
    pub ddf: H,
}

impl<F, G, H> C2Map for FnMap<F, G, H>
where
    F: Fn(f64) -> f64 + Send + Sync,
    G: Fn(f64) -> f64 + Send + Sync,
    H: Fn(f64) -> f64 + Send + Sync,
{
    fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }
    fn d1(&self, t: f64) -> f64 {
        (self.df)(t)
    }
    fn d2(&self, t: f64) -> f64 {
        (self.ddf)(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum PoleKind {
    /// Attracting at 0, repelling at 1; `f(t) < t` on `(0,1)`.
    NS,
    /// Attracting at 1, repelling at 0; `f(t) > t` on `(0,1)`.
    SN,
    Neither,
}

/// A classified boundary-fixing interval diffeomorphism.
#[derive(Clone)]
pub struct PoleMap {
    map: Arc<dyn C2Map>,
    /// `f'(0)`
    pub mult0: f64,
    /// `f'(1)`
    pub mult1: f64,
    pub kind: PoleKind,
}

impl std::fmt::Debug for PoleMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoleMap")
            .field("mult0", &self.mult0)
            .field("mult1", &self.mult1)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

/// Grid density used for monotonicity / sign validation.
pub const VALIDATION_GRID: usize = 4096;

impl PoleMap {
    /// Classify a map as NS, SN or neither, validating boundary fixing and
    /// monotonicity on a grid.
    pub fn classify(map: Arc<dyn C2Map>) -> Result<PoleMap, FiberError> {
        if map.eval(0.0).abs() > 1e-12 || (map.eval(1.0) - 1.0).abs() > 1e-12 {
            return Err(FiberError::NotBoundaryFixing);
        }
        let n = VALIDATION_GRID;
        let mut below_all = true;
        let mut above_all = true;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            if map.d1(t) <= 0.0 {
                return Err(FiberError::NotMonotone);
            }
            if i > 0 && i < n {
                let v = map.eval(t);
                if v >= t {
                    below_all = false;
                }
                if v <= t {
                    above_all = false;
                }
            }
        }
        let mult0 = map.d1(0.0);
        let mult1 = map.d1(1.0);
        let kind = if below_all && mult0 > 0.0 && mult0 < 1.0 && mult1 > 1.0 {
            PoleKind::NS
        } else if above_all && mult1 > 0.0 && mult1 < 1.0 && mult0 > 1.0 {
            PoleKind::SN
        } else {
            PoleKind::Neither
        };
        Ok(PoleMap {
            map,
            mult0,
            mult1,
            kind,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.map.eval(t)
    }

    pub fn d1(&self, t: f64) -> f64 {
        self.map.d1(t)
    }

    pub fn d2(&self, t: f64) -> f64 {
        self.map.d2(t)
    }

    /// n-fold forward iterate.
    pub fn iterate(&self, t: f64, n: u64) -> f64 {
        let mut u = t;
        for _ in 0..n {
            u = self.eval(u);
        }
        u
    }

    /// Solve `f(u) = y` on `[0,1]` by safeguarded Newton (tolerance 1e-14).
    pub fn eval_inverse(&self, y: f64) -> f64 {
        invert_monotone(|t| self.map.eval(t), |t| self.map.d1(t), y)
    }

    /// n-fold backward iterate.
    pub fn iterate_inverse(&self, t: f64, n: u64) -> f64 {
        let mut u = t;
        for _ in 0..n {
            u = self.eval_inverse(u);
        }
        u
    }

    /// The inverse diffeomorphism as a [`PoleMap`] (NS and SN swap).
    pub fn inverse(&self) -> Result<PoleMap, FiberError> {
        let inner = self.map.clone();
        let inv = Arc::new(FnMap {
            f: {
                let m = inner.clone();
                move |y: f64| invert_monotone(|t| m.eval(t), |t| m.d1(t), y)
            },
            df: {
                let m = inner.clone();
                move |y: f64| {
                    let t = invert_monotone(|t| m.eval(t), |t| m.d1(t), y);
                    1.0 / m.d1(t)
                }
            },
            ddf: {
                let m = inner.clone();
                move |y: f64| {
                    let t = invert_monotone(|t| m.eval(t), |t| m.d1(t), y);
                    let d1 = m.d1(t);
                    -m.d2(t) / (d1 * d1 * d1)
                }
            },
        });
        PoleMap::classify(inv)
    }
}

/// Monotone-increasing solve of `f(u) = y` on `[0,1]`: bisection bracket
/// with Newton acceleration, tolerance 1e-14.
pub fn invert_monotone<F, D>(f: F, d1: D, y: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let y = y.clamp(0.0, 1.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut u = y; // monotone boundary-fixing maps: y is a decent start
    for _ in 0..200 {
        let fu = f(u);
        let err = fu - y;
        if err.abs() < 1e-15 {
            return u;
        }
        if err > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let du = d1(u);
        let mut next = if du > 1e-12 { u - err / du } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() < 1e-16 {
            return next;
        }
        u = next;
    }
    u
}

/// A one-dimensional linearizing chart near the attracting endpoint 0.
#[derive(Clone)]
pub struct LinearizationChart {
    pub alpha: f64,
    /// Certified domain radius.
    pub delta: f64,
    /// `sup |h(f(t)) - alpha h(t)|` on a grid of `[0, delta]`.
    pub residual: f64,
    /// `sup |h(t)/t - 1|` on a grid of `(0, delta/100]`.
    pub normalization_defect: f64,
    map: Arc<PoleMap>,
    tol: f64,
}

/// Iteration budget for the linearization limit.
pub const LINEARIZE_BUDGET: u64 = 10_000;
/// Domain floor for delta shrinking.
pub const DELTA_FLOOR: f64 = 1e-6;

impl LinearizationChart {
    /// Evaluate `h(t) = lim alpha^-n f^n(t)`, valid on all of `[0,1)`.
    ///
    /// The product form `h(t) = t * prod f(u_j)/(alpha u_j)` avoids
    /// overflow of `alpha^-n`. Iteration stops when increments fall below
    /// an internal tolerance a hundredfold tighter than the chart's.
    pub fn eval(&self, t: f64) -> f64 {
        chart_limit(&self.map, self.alpha, t, self.tol * 1e-2, LINEARIZE_BUDGET).0
    }

    /// Inverse chart by monotone bisection.
    pub fn eval_inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0 - 1e-12);
        // h is increasing with h(t) >= ~t near 0; expand hi downward bracket
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// One evaluation of the linearization limit; returns (value, last increment).
fn chart_limit(f: &PoleMap, alpha: f64, t: f64, tol: f64, budget: u64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    let mut u = t;
    let mut v = t;
    let mut inc = f64::INFINITY;
    for _ in 0..budget {
        let fu = f.eval(u);
        let next = v * (fu / (alpha * u));
        inc = (next - v).abs();
        v = next;
        u = fu;
        if inc < tol {
            break;
        }
    }
    (v, inc)
}

/// Compute a Sternberg linearization chart for an NS map at 0.
///
/// The domain radius delta starts at 0.5 and halves until the limit
/// iteration is Cauchy below `tol`, the chart is strictly increasing on a
/// grid, and the normalization defect near 0 is under 1e-4.
pub fn sternberg_linearize(f: &PoleMap, tol: f64) -> Result<LinearizationChart, FiberError> {
    let alpha = f.mult0;
    assert!(
        alpha > 0.0 && alpha < 1.0,
        "linearization requires an attracting multiplier at 0"
    );
    let f = Arc::new(f.clone());
    let mut delta = 0.5f64;
    let mut stalled = false;
    loop {
        if delta < DELTA_FLOOR {
            return Err(if stalled {
                FiberError::NoConvergence
            } else {
                FiberError::DomainCollapse(DELTA_FLOOR)
            });
        }
        let grid = 256;
        let mut ok = true;
        let mut prev = 0.0f64;
        let mut max_inc = 0.0f64;
        for i in 1..=grid {
            let t = delta * i as f64 / grid as f64;
            let (v, inc) = chart_limit(&f, alpha, t, tol * 1e-2, LINEARIZE_BUDGET);
            max_inc = max_inc.max(inc);
            if v <= prev {
                ok = false;
                break;
            }
            prev = v;
        }
        if max_inc >= tol {
            ok = false;
            stalled = true;
        } else {
            stalled = false;
        }
        let chart = LinearizationChart {
            alpha,
            delta,
            residual: 0.0,
            normalization_defect: 0.0,
            map: f.clone(),
            tol,
        };
        if ok {
            // normalization near 0: |h(t)/t - 1| on (0, delta/100]
            let mut defect = 0.0f64;
            for i in 1..=32 {
                let t = delta / 100.0 * i as f64 / 32.0;
                defect = defect.max((chart.eval(t) / t - 1.0).abs());
            }
            if defect > 1e-4 {
                ok = false;
            } else {
                // conjugacy residual on [0, delta]
                let mut residual = 0.0f64;
                for i in 0..=grid {
                    let t = delta * i as f64 / grid as f64;
                    residual =
                        residual.max((chart.eval(f.eval(t)) - alpha * chart.eval(t)).abs());
                }
                if residual > tol {
                    ok = false;
                } else {
                    return Ok(LinearizationChart {
                        residual,
                        normalization_defect: defect,
                        ..chart
                    });
                }
            }
        }
        if !ok {
            delta *= 0.5;
        }
    }
}

/// The ratio `max |g''| / min |g'|` over `[0, delta_tilde]`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DistortionConstant {
    pub value: f64,
    pub interval: [f64; 2],
}

/// Distortion constant over `[0, delta_tilde]` from a dense grid with two
/// refinement passes around the extremizers.
pub fn distortion_constant(
    g: &PoleMap,
    delta_tilde: f64,
) -> Result<DistortionConstant, FiberError> {
    assert!(delta_tilde > 0.0 && delta_tilde <= 1.0);
    let n = VALIDATION_GRID;
    let eval_pair = |t: f64| (g.d2(t).abs(), g.d1(t).abs());
    let mut max_d2 = f64::NEG_INFINITY;
    let mut min_d1 = f64::INFINITY;
    let mut arg_max = 0.0;
    let mut arg_min = 0.0;
    for i in 0..=n {
        let t = delta_tilde * i as f64 / n as f64;
        let (a2, a1) = eval_pair(t);
        if a2 > max_d2 {
            max_d2 = a2;
            arg_max = t;
        }
        if a1 < min_d1 {
            min_d1 = a1;
            arg_min = t;
        }
    }
    // local refinement around each extremizer
    let mut width = delta_tilde / n as f64;
    for _ in 0..2 {
        let lo_max = (arg_max - width).max(0.0);
        let hi_max = (arg_max + width).min(delta_tilde);
        let lo_min = (arg_min - width).max(0.0);
        let hi_min = (arg_min + width).min(delta_tilde);
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let tm = lo_max + s * (hi_max - lo_max);
            let (a2, _) = eval_pair(tm);
            if a2 > max_d2 {
                max_d2 = a2;
                arg_max = tm;
            }
            let tn = lo_min + s * (hi_min - lo_min);
            let (_, a1) = eval_pair(tn);
            if a1 < min_d1 {
                min_d1 = a1;
                arg_min = tn;
            }
        }
        width /= n as f64;
    }
    if min_d1 < 1e-12 {
        return Err(FiberError::DegenerateDerivative);
    }
    Ok(DistortionConstant {
        value: max_d2 / min_d1,
        interval: [0.0, delta_tilde],
    })
}

// ---------------------------------------------------------------------------
// ready-made maps

/// The NS fiber map over the Kan fixed point p: `t - t(1-t)/32`.
pub fn kan_phi_p() -> PoleMap {
    PoleMap::classify(Arc::new(FnMap {
        f: |t: f64| t - t * (1.0 - t) / 32.0,
        df: |t: f64| 1.0 - (1.0 - 2.0 * t) / 32.0,
        ddf: |_t: f64| 2.0 / 32.0,
    }))
    .expect("kan phi_p is a valid pole map")
}

/// The SN fiber map over the Kan fixed point q: `t + t(1-t)/32`.
pub fn kan_phi_q() -> PoleMap {
    PoleMap::classify(Arc::new(FnMap {
        f: |t: f64| t + t * (1.0 - t) / 32.0,
        df: |t: f64| 1.0 + (1.0 - 2.0 * t) / 32.0,
        ddf: |_t: f64| -2.0 / 32.0,
    }))
    .expect("kan phi_q is a valid pole map")
}

/// `t -> alpha t`, clamped into `[0,1]` (linear model map).
pub fn linear_map(alpha: f64) -> PoleMap {
    // Not boundary-fixing at 1 in general; bypass classification and build
    // directly with NS-like data. Used for oracles and linear cross-checks.
    PoleMap {
        map: Arc::new(FnMap {
            f: move |t: f64| alpha * t,
            df: move |_t: f64| alpha,
            ddf: |_t: f64| 0.0,
        }),
        mult0: alpha,
        mult1: alpha,
        kind: if alpha < 1.0 { PoleKind::NS } else { PoleKind::Neither },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn classify_kan_p_is_ns() {
        let f = kan_phi_p();
        assert_eq!(f.kind, PoleKind::NS);
        assert_eq!(f.mult0, 31.0 / 32.0);
        assert_eq!(f.mult1, 33.0 / 32.0);
    }

    #[test]
    fn classify_kan_q_is_sn() {
        let g = kan_phi_q();
        assert_eq!(g.kind, PoleKind::SN);
        assert_eq!(g.mult0, 33.0 / 32.0);
        assert_eq!(g.mult1, 31.0 / 32.0);
    }

    #[test]
    fn classify_identity_is_neither() {
        let id = PoleMap::classify(Arc::new(FnMap {
            f: |t: f64| t,
            df: |_t: f64| 1.0,
            ddf: |_t: f64| 0.0,
        }))
        .unwrap();
        assert_eq!(id.kind, PoleKind::Neither);
        assert_eq!(id.mult0, 1.0);
    }

    #[test]
    fn classify_rejects_non_boundary_fixing() {
        let r = PoleMap::classify(Arc::new(FnMap {
            f: |t: f64| 0.5 * t + 0.1,
            df: |_t: f64| 0.5,
            ddf: |_t: f64| 0.0,
        }));
        assert_eq!(r.unwrap_err(), FiberError::NotBoundaryFixing);
    }

    #[test]
    fn classify_rejects_non_monotone() {
        let r = PoleMap::classify(Arc::new(FnMap {
            f: |t: f64| t * t * (3.0 - 2.0 * t), // smoothstep: f'(0)=f'(1)=0
            df: |t: f64| 6.0 * t * (1.0 - t),
            ddf: |t: f64| 6.0 - 12.0 * t,
        }));
        assert_eq!(r.unwrap_err(), FiberError::NotMonotone);
    }

    #[test]
    fn inverse_swaps_ns_sn() {
        let g = kan_phi_q().inverse().unwrap();
        assert_eq!(g.kind, PoleKind::NS);
        assert_abs_diff_eq!(g.mult0, 32.0 / 33.0, epsilon = 1e-12);
        // round trip
        let q = kan_phi_q();
        for &t in &[0.0, 0.1, 0.5, 0.9, 1.0] {
            assert_abs_diff_eq!(g.eval(q.eval(t)), t, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_map_chart_is_identity() {
        let f = linear_map(0.5);
        let chart = sternberg_linearize(&f, 1e-12).unwrap();
        for &t in &[0.01, 0.1, 0.3, 0.49] {
            assert_abs_diff_eq!(chart.eval(t), t, epsilon = 1e-15);
        }
        assert!(chart.residual <= 1e-15);
    }

    #[test]
    fn kan_p_chart_conjugates() {
        let f = kan_phi_p();
        let chart = sternberg_linearize(&f, 1e-9).unwrap();
        assert!(chart.residual < 1e-9, "residual {}", chart.residual);
        assert!(chart.normalization_defect < 1e-4);
        // independent oracle: evaluate the limit with explicit alpha^-n f^n
        // in extended precision via Kahan-style product accumulation
        let alpha = 31.0 / 32.0;
        for &t in &[1e-4, 1e-3, chart.delta * 0.5, chart.delta] {
            let mut u = t;
            let mut log_v = t.ln();
            for _ in 0..4000 {
                let fu = f.eval(u);
                log_v += (fu / (alpha * u)).ln();
                u = fu;
                if u < 1e-300 {
                    break;
                }
            }
            let oracle = log_v.exp();
            assert_abs_diff_eq!(chart.eval(t), oracle, epsilon = 1e-9 * (1.0 + oracle));
        }
    }

    #[test]
    fn quadratic_perturbation_chart() {
        // f(t) = t/2 + t^2 on [0, 0.2]: alpha = 1/2
        let f = PoleMap {
            map: Arc::new(FnMap {
                f: |t: f64| 0.5 * t + t * t,
                df: |t: f64| 0.5 + 2.0 * t,
                ddf: |_t: f64| 2.0,
            }),
            mult0: 0.5,
            mult1: f64::NAN,
            kind: PoleKind::NS,
        };
        let chart = sternberg_linearize(&f, 1e-10).unwrap();
        assert!(chart.residual < 1e-10);
        // h(f(t)) = h(t)/2 pointwise
        for &t in &[0.01, 0.05, 0.1, 0.15] {
            let lhs = chart.eval(f.eval(t));
            let rhs = 0.5 * chart.eval(t);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn chart_inverse_round_trip() {
        let f = kan_phi_p();
        let chart = sternberg_linearize(&f, 1e-9).unwrap();
        for i in 1..=16 {
            let t = chart.delta * i as f64 / 16.0;
            assert_abs_diff_eq!(chart.eval_inverse(chart.eval(t)), t, epsilon = 1e-10);
        }
    }

    #[test]
    fn distortion_linear_zero() {
        let g = linear_map(0.7);
        let d = distortion_constant(&g, 0.5).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn distortion_kan_p_closed_form() {
        // g'' = 2/32 everywhere; min g' on [0, 0.5] is g'(0) = 31/32
        let g = kan_phi_p();
        let d = distortion_constant(&g, 0.5).unwrap();
        assert_abs_diff_eq!(d.value, (2.0 / 32.0) / (31.0 / 32.0), epsilon = 1e-9);
    }

    #[test]
    fn distortion_degenerate_derivative() {
        let g = PoleMap {
            map: Arc::new(FnMap {
                f: |t: f64| t * t,
                df: |t: f64| 2.0 * t, // vanishes at 0
                ddf: |_t: f64| 2.0,
            }),
            mult0: 0.0,
            mult1: 2.0,
            kind: PoleKind::Neither,
        };
        assert_eq!(
            distortion_constant(&g, 0.5).unwrap_err(),
            FiberError::DegenerateDerivative
        );
    }

    #[test]
    fn invert_monotone_accuracy() {
        let f = kan_phi_q();
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let y = f.eval(t);
            assert_abs_diff_eq!(f.eval_inverse(y), t, epsilon = 1e-13);
        }
    }
}
