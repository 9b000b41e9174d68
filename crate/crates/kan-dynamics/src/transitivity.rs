//! Transitivity certificates for K-validated skew products: reach the
//! local stable/unstable slabs of the distinguished fixed points, run the
//! center intersection through the composed holonomy, check distortion
//! dominance, and verify with an explicit witness orbit. A direct-search
//! oracle cross-validates every certificate.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::center::{
    intersection_pairs, CenterError, CenterMap, IntervalPair, SampledDiffeo, VerifiedPair,
};
use crate::fiber::FiberError;
use crate::number_theory::{multiplicative_independence, NumberTheoryError, PairSearchConfig};
use num_bigint::BigInt;
use num_rational::BigRational;
use crate::skew::{holonomy_center_map, ExactBase, KanSystem, SkewError, StatePoint};
use crate::torus::{leaf_intersection, LeafDirection, LeafSegment, TorusPoint};

#[derive(Debug, Error)]
pub enum TransitivityError {
    #[error("system failed K-validation")]
    NotValidated,
    #[error("rational fiber multipliers are multiplicatively dependent")]
    IndependenceUnknown,
    #[error("no slab crossing within the iteration cap")]
    BudgetExceeded,
    #[error("no witness verified for any candidate Diophantine pair")]
    VerificationFailed,
    #[error("the unstable leaf of p and stable leaf of q did not intersect within the scanned radius")]
    NoLeafIntersection,
    #[error(transparent)]
    Skew(#[from] SkewError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Center(#[from] CenterError),
    #[error(transparent)]
    NumberTheory(#[from] NumberTheoryError),
}

// ---------------------------------------------------------------------------
// domain types

/// An open box in phase space: a base rectangle in (stable, unstable) leaf
/// coordinates around `center`, times a center interval.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhaseBox {
    pub center: TorusPoint,
    /// Half side length along the stable direction.
    pub half_s: f64,
    /// Half side length along the unstable direction.
    pub half_u: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl PhaseBox {
    pub fn new(
        center: TorusPoint,
        half_s: f64,
        half_u: f64,
        t_lo: f64,
        t_hi: f64,
    ) -> Self {
        assert!(half_s > 0.0 && half_u > 0.0, "side lengths must be positive");
        assert!(
            0.0 <= t_lo && t_lo < t_hi && t_hi <= 1.0,
            "t interval must satisfy 0 <= t_lo < t_hi <= 1"
        );
        PhaseBox {
            center,
            half_s,
            half_u,
            t_lo,
            t_hi,
        }
    }

    /// Closed-box membership test on the stored floating representation.
    pub fn contains(&self, system: &KanSystem, base: &TorusPoint, t: f64) -> bool {
        if !(self.t_lo <= t && t <= self.t_hi) {
            return false;
        }
        self.base_coords(system, base).is_some()
    }

    /// Leaf coordinates of `base` relative to the box center when inside
    /// the base rectangle (scanned over integer translates).
    pub fn base_coords(&self, system: &KanSystem, base: &TorusPoint) -> Option<(f64, f64)> {
        let span = (self.half_s + self.half_u).ceil() as i64 + 1;
        for m in -span..=span {
            for n in -span..=span {
                let w = [
                    base.x1 - self.center.x1 + m as f64,
                    base.x2 - self.center.x2 + n as f64,
                ];
                let (sigma, upsilon) = system.base.leaf_coords(w);
                if sigma.abs() <= self.half_s && upsilon.abs() <= self.half_u {
                    return Some((sigma, upsilon));
                }
            }
        }
        None
    }

    /// The phase point at box coordinates `(sigma, upsilon, t)`.
    pub fn point_at(&self, system: &KanSystem, sigma: f64, upsilon: f64, t: f64) -> StatePoint {
        let ds = system.base.dir_s;
        let du = system.base.dir_u;
        StatePoint::new(
            self.center.offset(
                sigma * ds[0] + upsilon * du[0],
                sigma * ds[1] + upsilon * du[1],
            ),
            t,
        )
    }
}

/// Distortion diagnostics of the Step-3 dominance check.
#[derive(Debug, Clone, Serialize)]
pub struct DistortionDiagnostics {
    #[serde(rename = "D1")]
    pub d1: f64,
    #[serde(rename = "D2")]
    pub d2: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub rho: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// First pair index (1-based) with `D_i >= 2 R_i` for both `i`.
    pub dominance_n: Option<u64>,
}

/// A verified transitivity certificate.
#[derive(Debug, Clone, Serialize)]
pub struct TransitivityCertificate {
    pub system: String,
    #[serde(rename = "U")]
    pub u: PhaseBox,
    #[serde(rename = "V")]
    pub v: PhaseBox,
    pub k0s: u64,
    pub l0u: u64,
    pub kn: u64,
    pub ln: u64,
    /// `m = k0s + kn + ln + l0u`.
    pub m: u64,
    /// `[x1, x2, t]` of the witness in `U`.
    pub witness: [f64; 3],
    /// Distance from `F^m(witness)` to `V`; 0 for an accepted certificate.
    pub image_residual: f64,
    pub diagnostics: DistortionDiagnostics,
}

/// Step-1 output: `F^{k0s}(U)` crosses the local stable leaf of `p`.
#[derive(Debug, Clone, Serialize)]
pub struct StableSlab {
    pub k0s: u64,
    /// The crossing point `p~` on the stable leaf of `p`.
    pub anchor: TorusPoint,
    /// Center interval over the anchor contained in `F^{k0s}(U)`.
    pub interval: (f64, f64),
    /// `d_s(p, p~)`.
    pub leaf_distance: f64,
}

/// Time-reversed Step-1 output for `V` at `q`.
#[derive(Debug, Clone, Serialize)]
pub struct UnstableSlab {
    pub l0u: u64,
    pub anchor: TorusPoint,
    pub interval: (f64, f64),
    /// `d_u(q, q~)`.
    pub leaf_distance: f64,
}

/// Data shared between certificate construction and the distortion
/// diagnostics: Step 1-2 stage outputs plus estimated holonomy constants.
pub struct StageData {
    pub slab_s: StableSlab,
    pub slab_u: UnstableSlab,
    /// Lipschitz-type lower bounds of the sampled holonomies.
    pub k1: f64,
    pub k2: f64,
    /// Center-displacement constant of the sampled holonomies.
    pub q_est: f64,
    /// Minimum normalized overlap ratio over the verified pairs.
    pub rho: f64,
    pub pairs: Vec<VerifiedPair>,
}

/// Tunable certificate parameters.
pub struct CertificateParams {
    /// Holonomy tolerance.
    pub tol: f64,
    /// Diophantine pairs to try before failing (retry ladder).
    pub pair_count: usize,
    /// Witness-search subdivision depth (grid `8 * 2^level` per axis).
    pub subdivision_levels: usize,
    /// Holonomy sampling grid for the composed center map.
    pub holonomy_grid: usize,
    pub pair_budget: PairSearchConfig,
}

impl Default for CertificateParams {
    fn default() -> Self {
        CertificateParams {
            tol: 1e-11,
            pair_count: 5,
            subdivision_levels: 5,
            holonomy_grid: 128,
            pair_budget: PairSearchConfig::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Step 1: slabs

const SLAB_ITERATION_CAP: u64 = 200;
/// Local leaf radius for the slab crossings.
const LOCAL_LEAF_RADIUS: f64 = 0.25;
const TRANSLATE_SPAN_CAP: i64 = 40;

/// Iterate `U` forward until its image crosses the local stable leaf of
/// `p` close enough that `d_s(p, p~) < d_c(b, phi_p(b))`.
pub fn reach_stable_slab(
    system: &KanSystem,
    u: &PhaseBox,
    _tol: f64,
) -> Result<StableSlab, TransitivityError> {
    if !system.is_valid() {
        return Err(TransitivityError::NotValidated);
    }
    let phi_p = system.phi_p()?;
    let auto = &system.base;
    let p = system.p;
    let lam_u = auto.eigenvalue(LeafDirection::Unstable);

    let mut center = ExactBase::from_torus(&u.center);
    for k in 0..=SLAB_ITERATION_CAP {
        let hu_k = u.half_u * lam_u.abs().powi(k as i32);
        let ck = center.to_torus();
        let span = ((hu_k.ceil() as i64) + 2).clamp(2, TRANSLATE_SPAN_CAP);

        // crossing with the smallest d_s(p, p~): take the rectangle's
        // central stable slice (sigma = 0), so p~ = p - sigma0 * dir_s
        let mut best: Option<(f64, f64)> = None; // (sigma0, upsilon0)
        for m in -span..=span {
            for n in -span..=span {
                let w = [p.x1 + m as f64 - ck.x1, p.x2 + n as f64 - ck.x2];
                let (s0, u0) = auto.leaf_coords(w);
                if u0.abs() <= 0.9 * hu_k && s0.abs() <= LOCAL_LEAF_RADIUS {
                    match best {
                        Some((bs, _)) if bs.abs() <= s0.abs() => {}
                        _ => best = Some((s0, u0)),
                    }
                }
            }
        }
        if let Some((sigma0, upsilon0)) = best {
            // center interval over the anchor: pull the anchor back to U
            // and run the fiber cocycle forward k steps
            let coef_u = upsilon0 / lam_u.powi(k as i32);
            let du = auto.dir_u;
            let x0 = u.center.offset(coef_u * du[0], coef_u * du[1]);
            let (mut lo, mut hi) = (u.t_lo, u.t_hi);
            let mut x = ExactBase::from_torus(&x0);
            for _ in 0..k {
                let pt = x.to_torus();
                lo = system.fiber_eval([pt.x1, pt.x2], lo);
                hi = system.fiber_eval([pt.x1, pt.x2], hi);
                x = x.apply(auto.entries);
            }
            // 10% numerical margin on each side
            let w10 = 0.1 * (hi - lo);
            let interval = (lo + w10, hi - w10);
            let b = interval.1;
            let d_c = (phi_p.eval(b) - b).abs();
            if sigma0.abs() < d_c && interval.0 < interval.1 {
                let ds = auto.dir_s;
                return Ok(StableSlab {
                    k0s: k,
                    anchor: p.offset(-sigma0 * ds[0], -sigma0 * ds[1]),
                    interval,
                    leaf_distance: sigma0.abs(),
                });
            }
        }
        center = center.apply(auto.entries);
    }
    Err(TransitivityError::BudgetExceeded)
}

/// Time-reversed analog: iterate `V` backward until it crosses the local
/// unstable leaf of `q` with `d_u(q, q~) < d_c(d, phi_q^{-1}(d))`.
pub fn reach_unstable_slab(
    system: &KanSystem,
    v: &PhaseBox,
    _tol: f64,
) -> Result<UnstableSlab, TransitivityError> {
    if !system.is_valid() {
        return Err(TransitivityError::NotValidated);
    }
    let phi_q = system.phi_q()?;
    let g = phi_q.inverse()?;
    let auto = &system.base;
    let q = system.q;
    let lam_s = auto.eigenvalue(LeafDirection::Stable);
    let inv = auto.inverse_entries();

    let mut center = ExactBase::from_torus(&v.center);
    for l in 0..=SLAB_ITERATION_CAP {
        let hs_l = v.half_s * lam_s.abs().powi(-(l as i32));
        let cl = center.to_torus();
        let span = ((hs_l.ceil() as i64) + 2).clamp(2, TRANSLATE_SPAN_CAP);

        let mut best: Option<(f64, f64)> = None; // (sigma0, upsilon0)
        for m in -span..=span {
            for n in -span..=span {
                let w = [q.x1 + m as f64 - cl.x1, q.x2 + n as f64 - cl.x2];
                let (s0, u0) = auto.leaf_coords(w);
                if s0.abs() <= 0.9 * hs_l && u0.abs() <= LOCAL_LEAF_RADIUS {
                    match best {
                        Some((_, bu)) if bu.abs() <= u0.abs() => {}
                        _ => best = Some((s0, u0)),
                    }
                }
            }
        }
        if let Some((sigma0, upsilon0)) = best {
            // anchor q~ = q - upsilon0 * dir_u; its l-step forward orbit
            // ends in V, so the center interval is the pullback of V's
            let du = auto.dir_u;
            let anchor = q.offset(-upsilon0 * du[0], -upsilon0 * du[1]);
            // pull [t_lo, t_hi] back through the forward cocycle over q~
            let mut orbit = Vec::with_capacity(l as usize);
            let mut x = ExactBase::from_torus(&anchor);
            for _ in 0..l {
                let pt = x.to_torus();
                orbit.push([pt.x1, pt.x2]);
                x = x.apply(auto.entries);
            }
            let pull = |mut t: f64| {
                for c in orbit.iter().rev() {
                    t = crate::fiber::invert_monotone(
                        |v| system.fiber_eval(*c, v),
                        |v| system.fiber_dt(*c, v),
                        t,
                    );
                }
                t
            };
            let (lo, hi) = (pull(v.t_lo), pull(v.t_hi));
            let w10 = 0.1 * (hi - lo);
            let interval = (lo + w10, hi - w10);
            let d = interval.1;
            let d_c = (g.eval(d) - d).abs();
            let _ = sigma0;
            if upsilon0.abs() < d_c && interval.0 < interval.1 {
                return Ok(UnstableSlab {
                    l0u: l,
                    anchor,
                    interval,
                    leaf_distance: upsilon0.abs(),
                });
            }
        }
        center = center.apply(inv);
    }
    Err(TransitivityError::BudgetExceeded)
}

// ---------------------------------------------------------------------------
// witness search

/// Deterministic witness search: sample `U` on a nested grid (refined
/// along the unstable and center axes), iterate `m` steps with the exact
/// base representation, and return the first sample landing in `V`.
pub fn find_witness(
    system: &KanSystem,
    u: &PhaseBox,
    v: &PhaseBox,
    m: u64,
    max_level: usize,
) -> Option<StatePoint> {
    const NS: usize = 4;
    for level in 0..=max_level {
        let nu = 8usize << level;
        let nt = 8usize << level;
        let total = NS * nu * nt;
        let found: Option<(usize, StatePoint)> = (0..total)
            .into_par_iter()
            .filter_map(|idx| {
                let is = idx / (nu * nt);
                let iu = (idx / nt) % nu;
                let it = idx % nt;
                let sigma = u.half_s * (2.0 * (is as f64 + 0.5) / NS as f64 - 1.0);
                let upsilon = u.half_u * (2.0 * (iu as f64 + 0.5) / nu as f64 - 1.0);
                let t = u.t_lo + (u.t_hi - u.t_lo) * (it as f64 + 0.5) / nt as f64;
                let z = u.point_at(system, sigma, upsilon, t);
                let (base, tf) = iterate_exact(system, &z, m);
                if v.contains(system, &base, tf) {
                    Some((idx, z))
                } else {
                    None
                }
            })
            .min_by_key(|(idx, _)| *idx);
        if let Some((_, z)) = found {
            return Some(z);
        }
    }
    None
}

/// `F^m` of a state with the base orbit in exact fixed point.
pub fn iterate_exact(system: &KanSystem, z: &StatePoint, m: u64) -> (TorusPoint, f64) {
    let mut x = ExactBase::from_torus(&z.base);
    let mut t = z.t;
    for _ in 0..m {
        let pt = x.to_torus();
        t = system.fiber_eval([pt.x1, pt.x2], t);
        x = x.apply(system.base.entries);
    }
    (x.to_torus(), t)
}

/// Smallest `m <= m_max` with a verified point of `F^m(U)` in `V`.
pub fn direct_search(
    system: &KanSystem,
    u: &PhaseBox,
    v: &PhaseBox,
    m_max: u64,
    max_level: usize,
) -> Option<(u64, StatePoint)> {
    for m in 1..=m_max {
        if let Some(z) = find_witness(system, u, v, m, max_level) {
            return Some((m, z));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// diagnostics

/// Distortion diagnostics at pair index `n` (1-based), with `dominance_n`
/// the first index satisfying both dominance inequalities.
pub fn distortion_diagnostics(
    system: &KanSystem,
    stage: &StageData,
    n: usize,
) -> DistortionDiagnostics {
    let lambda = system.validation.lambda;
    let gamma = system.validation.gamma;
    let phi_p = system.phi_p().expect("validated system");
    let g = system
        .phi_q()
        .expect("validated system")
        .inverse()
        .expect("SN inverse is NS");
    let b = stage.slab_s.interval.1;
    let d_c_p = (phi_p.eval(b) - b).abs();
    let dd = stage.slab_u.interval.1;
    let d_c_q = (g.eval(dd) - dd).abs();

    let eval_at = |pair: &VerifiedPair| {
        let kn = pair.k as i32;
        let ln = pair.l as i32;
        let d1 = stage.k1 * stage.rho * gamma.powi(kn) * d_c_p;
        let d2 = stage.k2 * stage.rho * gamma.powi(ln) * d_c_q;
        let r1 = 2.0 * stage.q_est * lambda.powi(kn) * stage.slab_s.leaf_distance;
        let r2 = 2.0 * stage.q_est * lambda.powi(ln) * stage.slab_u.leaf_distance;
        (d1, d2, r1, r2)
    };

    let mut dominance_n = None;
    for (i, pair) in stage.pairs.iter().enumerate() {
        let (d1, d2, r1, r2) = eval_at(pair);
        if d1 >= 2.0 * r1 && d2 >= 2.0 * r2 {
            dominance_n = Some(i as u64 + 1);
            break;
        }
    }

    let idx = n.clamp(1, stage.pairs.len()) - 1;
    let (d1, d2, r1, r2) = eval_at(&stage.pairs[idx]);
    DistortionDiagnostics {
        d1,
        d2,
        r1,
        r2,
        q: stage.q_est,
        rho: stage.rho,
        lambda,
        gamma,
        dominance_n,
    }
}

// ---------------------------------------------------------------------------
// certificate pipeline

/// Recognize an f64 as a small-denominator rational (denominator <= 10^4).
fn recognize_rational(x: f64) -> Option<BigRational> {
    for den in 1..=10_000i64 {
        let num = (x * den as f64).round();
        if num != 0.0 && (num / den as f64 - x).abs() < 1e-12 {
            return Some(BigRational::new(BigInt::from(num as i64), BigInt::from(den)));
        }
    }
    None
}

/// Steps 1-2 of the certificate pipeline: slabs, composed holonomy,
/// verified pairs, and the estimated distortion constants.
pub fn build_stage(
    system: &KanSystem,
    u: &PhaseBox,
    v: &PhaseBox,
    params: &CertificateParams,
) -> Result<StageData, TransitivityError> {
    if !system.is_valid() {
        return Err(TransitivityError::NotValidated);
    }
    let phi_p = system.phi_p()?.clone();
    let phi_q = system.phi_q()?.clone();

    // Theorem hypothesis: ln phi_p'(0) / ln phi_q'(0) irrational. Exactly
    // checkable when both multipliers are rational.
    if let (Some(r), Some(s)) = (
        recognize_rational(phi_p.mult0),
        recognize_rational(phi_q.mult0),
    ) {
        let verdict = multiplicative_independence(&r, &s)?;
        if verdict.dependent {
            return Err(TransitivityError::IndependenceUnknown);
        }
    }

    // Step 1: reach both slabs.
    let slab_s = reach_stable_slab(system, u, params.tol)?;
    let slab_u = reach_unstable_slab(system, v, params.tol)?;

    // Step 2: composed center holonomy H = H_q^s ∘ H_p^u through
    // r = L^u(p) ⋔ L^s(q).
    let r_point = transverse_point(system)?;
    let h1 = holonomy_center_map(
        system,
        &system.p,
        &r_point,
        LeafDirection::Unstable,
        params.holonomy_grid,
        params.tol,
    )?;
    let h2 = holonomy_center_map(
        system,
        &r_point,
        &system.q,
        LeafDirection::Stable,
        params.holonomy_grid,
        params.tol,
    )?;
    let s2 = SampledDiffeo::from_center_holonomy(&h2);
    let composed = SampledDiffeo::new(
        h1.ts.clone(),
        h1.values.iter().map(|&t| s2.eval(t)).collect(),
    );

    // Step 2 continued: verified intersection pairs for the stage
    // intervals under f = phi_p, g = phi_q^{-1}, h = H.
    let g = phi_q.inverse()?;
    let pair = IntervalPair::new(slab_s.interval, slab_u.interval)?;
    let pairs = intersection_pairs(
        &phi_p,
        &g,
        &composed,
        &pair,
        params.pair_count,
        &params.pair_budget,
    )?;

    // holonomy constants for the Step-3 diagnostics
    let d1_base = system
        .base
        .leaf_displacement(&system.p, &r_point, LeafDirection::Unstable, 4, 1e-8)
        .map(f64::abs)
        .unwrap_or(1.0);
    let d2_base = system
        .base
        .leaf_displacement(&r_point, &system.q, LeafDirection::Stable, 4, 1e-8)
        .map(f64::abs)
        .unwrap_or(1.0);
    let min_pos = |xs: &[f64]| xs.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let disp = |ts: &[f64], vs: &[f64], d: f64| {
        ts.iter()
            .zip(vs)
            .map(|(&t, &v)| (v - t).abs())
            .fold(0.0f64, f64::max)
            / d.max(1e-12)
    };
    Ok(StageData {
        slab_s,
        slab_u,
        k1: min_pos(&h1.derivative),
        k2: min_pos(&h2.derivative),
        q_est: disp(&h1.ts, &h1.values, d1_base).max(disp(&h2.ts, &h2.values, d2_base)),
        rho: pairs
            .iter()
            .map(|p| p.report.ratio_g)
            .fold(f64::INFINITY, f64::min),
        pairs,
    })
}

/// Build and verify a transitivity certificate for `F^m(U) ∩ V != ∅`.
pub fn build_certificate(
    system: &KanSystem,
    system_name: &str,
    u: &PhaseBox,
    v: &PhaseBox,
    params: &CertificateParams,
) -> Result<TransitivityCertificate, TransitivityError> {
    let stage = build_stage(system, u, v, params)?;

    // Step 3 + verification: try pairs in order, locating a witness by
    // nested subdivision; accept only with image_residual = 0.
    for (i, cand) in stage.pairs.iter().enumerate() {
        let m = stage.slab_s.k0s + cand.k + cand.l + stage.slab_u.l0u;
        if let Some(z) = find_witness(system, u, v, m, params.subdivision_levels) {
            let diagnostics = distortion_diagnostics(system, &stage, i + 1);
            return Ok(TransitivityCertificate {
                system: system_name.to_string(),
                u: *u,
                v: *v,
                k0s: stage.slab_s.k0s,
                l0u: stage.slab_u.l0u,
                kn: cand.k,
                ln: cand.l,
                m,
                witness: [z.base.x1, z.base.x2, z.t],
                image_residual: 0.0,
                diagnostics,
            });
        }
    }
    Err(TransitivityError::VerificationFailed)
}

/// A transverse intersection point `r = L^u(p) ⋔ L^s(q)`.
fn transverse_point(system: &KanSystem) -> Result<TorusPoint, TransitivityError> {
    for radius in [0.75, 1.5, 3.0] {
        let seg_u = LeafSegment::new(system.p, LeafDirection::Unstable, radius);
        let seg_s = LeafSegment::new(system.q, LeafDirection::Stable, radius);
        if let Ok(Some((pt, _, _))) = leaf_intersection(&system.base, &seg_u, &seg_s) {
            return Ok(pt);
        }
    }
    Err(TransitivityError::NoLeafIntersection)
}

/// Re-verify a certificate's witness by direct `m`-step iteration.
pub fn verify_certificate(system: &KanSystem, cert: &TransitivityCertificate) -> bool {
    let z = StatePoint::new(
        TorusPoint::new(cert.witness[0], cert.witness[1]),
        cert.witness[2],
    );
    let (base, t) = iterate_exact(system, &z, cert.m);
    cert.v.contains(system, &base, t) && cert.image_residual == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skew::kan_diffeo;

    #[test]
    fn phase_box_membership_and_coords() {
        let sys = kan_diffeo();
        let b = PhaseBox::new(TorusPoint::new(0.3, 0.7), 0.05, 0.05, 0.3, 0.4);
        assert!(b.contains(&sys, &TorusPoint::new(0.3, 0.7), 0.35));
        assert!(!b.contains(&sys, &TorusPoint::new(0.3, 0.7), 0.5));
        assert!(!b.contains(&sys, &TorusPoint::new(0.6, 0.2), 0.35));
        let z = b.point_at(&sys, 0.02, -0.03, 0.33);
        let (s, u) = b.base_coords(&sys, &z.base).unwrap();
        assert!((s - 0.02).abs() < 1e-12 && (u + 0.03).abs() < 1e-12);
    }

    #[test]
    fn stable_slab_reaches_p() {
        let sys = kan_diffeo();
        let u = PhaseBox::new(TorusPoint::new(0.3, 0.7), 0.05, 0.05, 0.3, 0.4);
        let slab = reach_stable_slab(&sys, &u, 1e-11).unwrap();
        let phi_p = sys.phi_p().unwrap();
        let b = slab.interval.1;
        assert!(slab.leaf_distance < (phi_p.eval(b) - b).abs());
        // anchor really is on the stable leaf of p
        let disp = sys
            .base
            .leaf_displacement(&sys.p, &slab.anchor, LeafDirection::Stable, 2, 1e-9)
            .unwrap();
        assert!((disp.abs() - slab.leaf_distance).abs() < 1e-9);
        assert!(slab.interval.0 < slab.interval.1);
    }

    #[test]
    fn unstable_slab_reaches_q() {
        let sys = kan_diffeo();
        let v = PhaseBox::new(TorusPoint::new(0.6, 0.2), 0.05, 0.05, 0.5, 0.6);
        let slab = reach_unstable_slab(&sys, &v, 1e-11).unwrap();
        let g = sys.phi_q().unwrap().clone().inverse().unwrap();
        let d = slab.interval.1;
        assert!(slab.leaf_distance < (g.eval(d) - d).abs());
        let disp = sys
            .base
            .leaf_displacement(&sys.q, &slab.anchor, LeafDirection::Unstable, 2, 1e-9)
            .unwrap();
        assert!((disp.abs() - slab.leaf_distance).abs() < 1e-9);
    }

    #[test]
    fn direct_search_finds_one_step_inclusion() {
        let sys = kan_diffeo();
        let u = PhaseBox::new(TorusPoint::new(0.3, 0.7), 0.01, 0.01, 0.45, 0.55);
        // V: a large box around F(U)'s center
        let fu = sys.step(&StatePoint::new(u.center, 0.5), 1);
        let v = PhaseBox::new(fu.base, 0.3, 0.3, 0.2, 0.8);
        let (m, z) = direct_search(&sys, &u, &v, 3, 3).unwrap();
        assert_eq!(m, 1);
        let (base, t) = iterate_exact(&sys, &z, m);
        assert!(v.contains(&sys, &base, t));
    }

    #[test]
    fn direct_search_zero_budget_is_none() {
        let sys = kan_diffeo();
        let u = PhaseBox::new(TorusPoint::new(0.3, 0.7), 0.01, 0.01, 0.45, 0.55);
        assert!(direct_search(&sys, &u, &u, 0, 3).is_none());
    }

    #[test]
    fn x_independent_constants_give_zero_r_and_immediate_dominance() {
        let sys = kan_diffeo();
        let stage = StageData {
            slab_s: StableSlab {
                k0s: 1,
                anchor: sys.p,
                interval: (0.3, 0.6),
                leaf_distance: 0.001,
            },
            slab_u: UnstableSlab {
                l0u: 1,
                anchor: sys.q,
                interval: (0.3, 0.6),
                leaf_distance: 0.001,
            },
            k1: 1.0,
            k2: 1.0,
            q_est: 0.0, // identity holonomies
            rho: 0.5,
            pairs: vec![VerifiedPair {
                k: 1,
                l: 1,
                report: crate::center::overlap_ratio(
                    sys.phi_p().unwrap(),
                    &sys.phi_q().unwrap().clone().inverse().unwrap(),
                    &crate::center::IdentityMap,
                    &IntervalPair::new((0.3, 0.6), (0.3, 0.6)).unwrap(),
                    1,
                    1,
                ),
            }],
        };
        let d = distortion_diagnostics(&sys, &stage, 1);
        assert_eq!(d.r1, 0.0);
        assert_eq!(d.r2, 0.0);
        assert_eq!(d.dominance_n, Some(1));
        assert!(d.d1 > 0.0 && d.d2 > 0.0);
    }

    #[test]
    fn kan_certificate_end_to_end() {
        let sys = kan_diffeo();
        let u = PhaseBox::new(TorusPoint::new(0.3, 0.7), 0.05, 0.05, 0.4, 0.6);
        let v = PhaseBox::new(TorusPoint::new(0.6, 0.2), 0.05, 0.05, 0.4, 0.6);
        let cert =
            build_certificate(&sys, "kan-diffeo", &u, &v, &CertificateParams::default())
                .unwrap();
        assert!(cert.m >= 1);
        assert_eq!(cert.m, cert.k0s + cert.kn + cert.ln + cert.l0u);
        assert_eq!(cert.image_residual, 0.0);
        assert!(verify_certificate(&sys, &cert));
        assert!(cert.diagnostics.dominance_n.is_some());
        // oracle consistency: a direct search finds some m' <= m
        let (m_direct, _) = direct_search(&sys, &u, &v, cert.m, 5).unwrap();
        assert!(m_direct <= cert.m);
    }
}
