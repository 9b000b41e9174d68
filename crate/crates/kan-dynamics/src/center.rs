//! The one-dimensional intersection mechanism on the center fiber: dense
//! orbit sets `f^{-k} h^{-1} g^{l}(x)`, verified intersection pairs for
//! interval images under `h . f^k` vs `g^l`, and the distortion-controlled
//! overlap ratio.

use serde::Serialize;
use thiserror::Error;

use crate::fiber::{sternberg_linearize, FiberError, PoleKind, PoleMap};
use crate::number_theory::{diophantine_pairs, NumberTheoryError, PairSearchConfig};

#[derive(Debug, Error)]
pub enum CenterError {
    #[error("interval endpoints must satisfy 0 <= a < b <= 1")]
    InvalidInterval,
    #[error("operation requires an NS map (attracting at 0)")]
    NotNs,
    #[error("only {found} of {want} candidate pairs verified within the iterate budget")]
    ExhaustedCandidates { found: usize, want: usize },
    #[error(transparent)]
    Chart(#[from] FiberError),
    #[error(transparent)]
    Pairs(#[from] NumberTheoryError),
}

/// An increasing homeomorphism of `[0,1]` used as the transverse map `h`.
pub trait CenterMap: Send + Sync {
    fn eval(&self, t: f64) -> f64;
    fn eval_inverse(&self, t: f64) -> f64;
}

/// The identity transverse map.
pub struct IdentityMap;

impl CenterMap for IdentityMap {
    fn eval(&self, t: f64) -> f64 {
        t
    }
    fn eval_inverse(&self, t: f64) -> f64 {
        t
    }
}

impl CenterMap for PoleMap {
    fn eval(&self, t: f64) -> f64 {
        PoleMap::eval(self, t)
    }
    fn eval_inverse(&self, t: f64) -> f64 {
        PoleMap::eval_inverse(self, t)
    }
}

/// A monotone map given by a sample table, evaluated by linear
/// interpolation (inverse by binary search). Used to wrap sampled center
/// holonomies.
#[derive(Debug, Clone, Serialize)]
pub struct SampledDiffeo {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledDiffeo {
    pub fn new(ts: Vec<f64>, values: Vec<f64>) -> Self {
        assert!(ts.len() == values.len() && ts.len() >= 2);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert!(values.windows(2).all(|w| w[1] >= w[0]));
        SampledDiffeo { ts, values }
    }

    pub fn from_center_holonomy(h: &crate::skew::CenterHolonomy) -> Self {
        Self::new(h.ts.clone(), h.values.clone())
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= *xs.last().unwrap() {
        return *ys.last().unwrap();
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

impl CenterMap for SampledDiffeo {
    fn eval(&self, t: f64) -> f64 {
        interp(&self.ts, &self.values, t)
    }
    fn eval_inverse(&self, t: f64) -> f64 {
        interp(&self.values, &self.ts, t)
    }
}

// ---------------------------------------------------------------------------
// domain types

/// A pair of closed intervals `I, J` in `[0,1]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntervalPair {
    pub i: (f64, f64),
    pub j: (f64, f64),
}

impl IntervalPair {
    pub fn new(i: (f64, f64), j: (f64, f64)) -> Result<Self, CenterError> {
        for (a, b) in [i, j] {
            if !(0.0 <= a && a < b && b <= 1.0) {
                return Err(CenterError::InvalidInterval);
            }
        }
        Ok(IntervalPair { i, j })
    }
}

/// Overlap statistics for one candidate pair `(k, l)`, normalized by the
/// fundamental-domain lengths at the right endpoints.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub k: u64,
    pub l: u64,
    /// `|f^k(I) ∩ h^{-1} g^l(J)|`
    pub overlap_f_side: f64,
    /// `f^k(b) - f^{k+1}(b)`
    pub fund_f: f64,
    pub ratio_f: f64,
    /// `|h f^k(I) ∩ g^l(J)|`
    pub overlap_g_side: f64,
    /// `g^l(d) - g^{l+1}(d)`
    pub fund_g: f64,
    pub ratio_g: f64,
}

/// A pair that passed direct interval-image verification.
#[derive(Debug, Clone, Serialize)]
pub struct VerifiedPair {
    pub k: u64,
    pub l: u64,
    pub report: OverlapReport,
}

/// Dense orbit sample `{f^{-k} h^{-1} g^{l}(x)}` with its largest gap.
#[derive(Debug, Clone, Serialize)]
pub struct DenseOrbitSample {
    pub points: Vec<f64>,
    pub largest_gap: f64,
}

// ---------------------------------------------------------------------------
// operations

/// All points `f^{-k} h^{-1} g^{l}(x)` for `1 <= k <= big_k`,
/// `1 <= l <= big_l`, sorted, with the largest gap between consecutive
/// points.
pub fn dense_orbit_sample(
    f: &PoleMap,
    g: &PoleMap,
    h: &dyn CenterMap,
    x: f64,
    big_k: usize,
    big_l: usize,
) -> Result<DenseOrbitSample, CenterError> {
    if f.kind != PoleKind::NS || g.kind != PoleKind::NS {
        return Err(CenterError::NotNs);
    }
    let mut points = Vec::with_capacity(big_k * big_l);
    let mut gl = x;
    for _ in 1..=big_l {
        gl = g.eval(gl);
        let mut y = h.eval_inverse(gl);
        for _ in 1..=big_k {
            y = f.eval_inverse(y);
            points.push(y.clamp(0.0, 1.0));
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let largest_gap = points
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    Ok(DenseOrbitSample {
        points,
        largest_gap,
    })
}

/// Overlap statistics of `h(f^k(I))` against `g^l(J)` (and the mirrored
/// f-side comparison), computed from exact endpoint iterates.
pub fn overlap_ratio(
    f: &PoleMap,
    g: &PoleMap,
    h: &dyn CenterMap,
    pair: &IntervalPair,
    k: u64,
    l: u64,
) -> OverlapReport {
    let (a, b) = pair.i;
    let (c, d) = pair.j;
    let fa = f.iterate(a, k);
    let fb = f.iterate(b, k);
    let gc = g.iterate(c, l);
    let gd = g.iterate(d, l);

    let overlap = |lo1: f64, hi1: f64, lo2: f64, hi2: f64| (hi1.min(hi2) - lo1.max(lo2)).max(0.0);

    let overlap_g_side = overlap(h.eval(fa), h.eval(fb), gc, gd);
    let overlap_f_side = overlap(fa, fb, h.eval_inverse(gc), h.eval_inverse(gd));
    let fund_f = fb - f.eval(fb);
    let fund_g = gd - g.eval(gd);
    let ratio = |o: f64, fund: f64| if fund > 0.0 { o / fund } else { 0.0 };
    OverlapReport {
        k,
        l,
        overlap_f_side,
        fund_f,
        ratio_f: ratio(overlap_f_side, fund_f),
        overlap_g_side,
        fund_g,
        ratio_g: ratio(overlap_g_side, fund_g),
    }
}

/// Verified intersection pairs `(k_n, l_n)` with
/// `h(f^{k_n}(I)) ∩ g^{l_n}(J) != ∅`.
///
/// Candidates come from the Diophantine search targeted at the
/// middle-thirds eta; each is then checked on the full intervals by direct
/// endpoint iteration.
pub fn intersection_pairs(
    f: &PoleMap,
    g: &PoleMap,
    h: &dyn CenterMap,
    pair: &IntervalPair,
    count: usize,
    config: &PairSearchConfig,
) -> Result<Vec<VerifiedPair>, CenterError> {
    if f.kind != PoleKind::NS || g.kind != PoleKind::NS {
        return Err(CenterError::NotNs);
    }
    let (eta, eps_log) = middle_thirds_target(f, g, h, pair)?;
    let alpha = f.mult0;
    let beta = g.mult0;
    // Ask for extra candidates: the epsilon window can admit several l per
    // k, and finite-precision holonomy can spoil a marginal overlap.
    let want_candidates = count * 20 + 40;
    let search = diophantine_pairs(alpha, beta, eta, eps_log, want_candidates, config)?;
    // keep only the best-residual l for each k
    let mut best: Vec<&crate::number_theory::DiophantinePair> = Vec::new();
    for cand in &search.pairs {
        match best.last() {
            Some(prev) if prev.k == cand.k => {
                if cand.residual.abs() < prev.residual.abs() {
                    *best.last_mut().unwrap() = cand;
                }
            }
            _ => best.push(cand),
        }
    }
    let mut out = Vec::new();
    for cand in best {
        let report = overlap_ratio(f, g, h, pair, cand.k, cand.l);
        if report.overlap_g_side > 0.0 {
            out.push(VerifiedPair {
                k: cand.k,
                l: cand.l,
                report,
            });
            if out.len() == count {
                return Ok(out);
            }
        }
    }
    Err(CenterError::ExhaustedCandidates {
        found: out.len(),
        want: count,
    })
}

/// The middle-thirds Diophantine target: `eta` centers the linearized image
/// of `I`'s middle third on the chart image of `J`'s midpoint; the
/// half-width `eps` is a quarter of the chart length of the middle third
/// (converted to log scale).
fn middle_thirds_target(
    f: &PoleMap,
    g: &PoleMap,
    h: &dyn CenterMap,
    pair: &IntervalPair,
) -> Result<(f64, f64), CenterError> {
    let chart_f = sternberg_linearize(f, 1e-10)?;
    let chart_g = sternberg_linearize(g, 1e-10)?;
    let third = |(a, b): (f64, f64)| {
        let w = (b - a) / 3.0;
        (a + w, b - w)
    };
    let (i0a, i0b) = third(pair.i);
    let (j0a, j0b) = third(pair.j);
    // theta = h'(0) by symmetric-from-the-right finite difference
    let dt = 1e-6;
    let theta = (h.eval(2.0 * dt) - h.eval(dt)) / dt;
    let hi = (chart_f.eval(i0a), chart_f.eval(i0b));
    let eta = theta * 0.5 * (hi.0 + hi.1) / chart_g.eval(0.5 * (j0a + j0b));
    let eps = theta * (hi.1 - hi.0) / 4.0;
    Ok((eta, (eps / eta).abs()))
}

/// Least-squares slope of `ratio_g` against the pair index, normalized by
/// the mean ratio; used for the no-decay trend check of the uniform
/// overlap bound.
pub fn ratio_trend_slope(pairs: &[VerifiedPair]) -> f64 {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = pairs.iter().map(|p| p.report.ratio_g).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (p.report.ratio_g - mean_y);
        den += dx * dx;
    }
    if mean_y.abs() < f64::EPSILON {
        return 0.0;
    }
    (num / den) / mean_y
}
