//! Birkhoff averages, basin classification toward the two boundary
//! measures, basin rasters, and intermingling reports.
//!
//! Basins of the boundary-supported physical measures are approximated by
//! the t-average statistic: the delta measures on the two boundary tori
//! have t-averages 0 and 1, so a single observable separates them. The
//! module accepts both the 3D diffeomorphism and the non-invertible
//! cylinder endomorphism (rasters do not require invertibility).

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::skew::{CylinderEndo, ExactBase, KanSystem, StatePoint};
use crate::torus::TorusPoint;

#[derive(Debug, Error, PartialEq)]
pub enum BasinError {
    #[error("raster grid must be at least 2 x 2")]
    GridTooSmall,
    #[error("2^depth exceeds min(grid_w, grid_h)/4")]
    DepthTooFine,
}

/// Empirical basin label from the last-half t-average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BasinLabel {
    Basin0,
    Basin1,
    Undecided,
}

impl BasinLabel {
    /// PGM gray level: Basin0 -> 0, Undecided -> 128, Basin1 -> 255.
    pub fn gray(self) -> u8 {
        match self {
            BasinLabel::Basin0 => 0,
            BasinLabel::Undecided => 128,
            BasinLabel::Basin1 => 255,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BasinLabel::Basin0 => "Basin0",
            BasinLabel::Basin1 => "Basin1",
            BasinLabel::Undecided => "Undecided",
        }
    }
}

/// Either phase space the basin statistics run on.
pub enum BasinSystem<'a> {
    Diffeo(&'a KanSystem),
    Endo(&'a CylinderEndo),
}

/// Orbit state with the base coordinate kept in exact fixed point.
#[derive(Clone)]
enum OrbitState {
    Torus(ExactBase, f64),
    Cylinder(u64, f64),
}

// Raster cell centers are dyadic rationals, which are atypical initial
// conditions for the exact base arithmetic: their fixed-point words have
// long runs of trailing zeros, so the integer base maps drive the fiber
// with a short periodic signal instead of a generic orbit. Setting the
// low 40 bits to a hash of the full state (a perturbation below 2^-24,
// far under any raster resolution) restores generic orbits, and makes
// cells that share a base column statistically independent samples of
// the basins, while keeping every run bit-for-bit deterministic.
const DITHER_MASK: u64 = (1 << 40) - 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn dither_word(seed: u64) -> u64 {
    (splitmix64(seed) & DITHER_MASK) | 1
}

impl BasinSystem<'_> {
    fn init(&self, s: &StatePoint) -> OrbitState {
        let b = ExactBase::from_torus(&s.base);
        let h = s.base.x1.to_bits()
            ^ s.base.x2.to_bits().rotate_left(17)
            ^ s.t.to_bits().rotate_left(43);
        match self {
            BasinSystem::Diffeo(_) => OrbitState::Torus(
                ExactBase([b.0[0] | dither_word(h), b.0[1] | dither_word(!h)]),
                s.t,
            ),
            BasinSystem::Endo(_) => OrbitState::Cylinder(b.0[0] | dither_word(h), s.t),
        }
    }

    fn advance(&self, st: &mut OrbitState) {
        match (self, st) {
            (BasinSystem::Diffeo(sys), OrbitState::Torus(x, t)) => {
                let pt = x.to_torus();
                *t = sys.fiber_eval([pt.x1, pt.x2], *t);
                *x = x.apply(sys.base.entries);
            }
            (BasinSystem::Endo(endo), OrbitState::Cylinder(x1, t)) => {
                let (nx, nt) = endo.step_exact(*x1, *t);
                *x1 = nx;
                *t = nt;
            }
            _ => unreachable!("state constructed by the same system"),
        }
    }

    fn observe(&self, st: &OrbitState) -> StatePoint {
        match st {
            OrbitState::Torus(x, t) => StatePoint::new(x.to_torus(), t.clamp(0.0, 1.0)),
            OrbitState::Cylinder(x1, t) => {
                let frac = *x1 as f64 / 2f64.powi(64);
                StatePoint::new(TorusPoint::new(frac, 0.0), t.clamp(0.0, 1.0))
            }
        }
    }
}

/// Arithmetic mean of `observable` along the forward orbit of length `n`.
pub fn birkhoff_average(
    system: &BasinSystem,
    s: &StatePoint,
    observable: &dyn Fn(&StatePoint) -> f64,
    n: u64,
) -> f64 {
    assert!(n >= 1, "orbit length must be at least 1");
    let mut st = system.init(s);
    let mut sum = 0.0;
    for _ in 0..n {
        sum += observable(&system.observe(&st));
        system.advance(&mut st);
    }
    sum / n as f64
}

/// t-average over the last half of an n-step orbit (burn-in discarded).
pub fn last_half_t_average(system: &BasinSystem, s: &StatePoint, n: u64) -> f64 {
    assert!(n >= 1);
    let burn = n / 2;
    let mut st = system.init(s);
    for _ in 0..burn {
        system.advance(&mut st);
    }
    let tail = n - burn;
    let mut sum = 0.0;
    for _ in 0..tail {
        sum += match st {
            OrbitState::Torus(_, t) | OrbitState::Cylinder(_, t) => t,
        };
        system.advance(&mut st);
    }
    sum / tail as f64
}

/// Label from the last-half t-average against the undecided band
/// `[tau0, tau1]`.
pub fn classify_basin(
    system: &BasinSystem,
    s: &StatePoint,
    n: u64,
    tau0: f64,
    tau1: f64,
) -> BasinLabel {
    assert!(0.0 < tau0 && tau0 < tau1 && tau1 < 1.0, "need 0 < tau0 < tau1 < 1");
    let avg = last_half_t_average(system, s, n);
    if avg < tau0 {
        BasinLabel::Basin0
    } else if avg > tau1 {
        BasinLabel::Basin1
    } else {
        BasinLabel::Undecided
    }
}

/// Which 2D slice of phase space a raster samples. Cell centers run over
/// `x1` horizontally and the slice's second coordinate vertically.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum SliceSpec {
    /// Diffeomorphism: fix `x2`, vary `(x1, t)`.
    FixedX2(f64),
    /// Diffeomorphism: fix `t`, vary `(x1, x2)`.
    FixedT(f64),
    /// Endomorphism: the full cylinder `(x1, t)`.
    Cylinder,
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinRaster {
    pub grid_w: usize,
    pub grid_h: usize,
    pub slice: SliceSpec,
    /// Row-major, row `j` = second coordinate, column `i` = `x1`.
    pub labels: Vec<BasinLabel>,
    /// Last-half t-average per cell, same layout.
    pub avg_t: Vec<f64>,
    pub n: u64,
    pub tau0: f64,
    pub tau1: f64,
}

/// Classify every cell center of a `grid_w x grid_h` raster.
pub fn basin_raster(
    system: &BasinSystem,
    grid_w: usize,
    grid_h: usize,
    slice: SliceSpec,
    n: u64,
    tau0: f64,
    tau1: f64,
) -> Result<BasinRaster, BasinError> {
    if grid_w < 2 || grid_h < 2 {
        return Err(BasinError::GridTooSmall);
    }
    assert!(0.0 < tau0 && tau0 < tau1 && tau1 < 1.0, "need 0 < tau0 < tau1 < 1");
    let cells: Vec<(BasinLabel, f64)> = (0..grid_w * grid_h)
        .into_par_iter()
        .map(|idx| {
            let i = idx % grid_w;
            let j = idx / grid_w;
            let x1 = (i as f64 + 0.5) / grid_w as f64;
            let c2 = (j as f64 + 0.5) / grid_h as f64;
            let s = match slice {
                SliceSpec::FixedX2(x2) => StatePoint::new(TorusPoint::new(x1, x2), c2),
                SliceSpec::FixedT(t) => StatePoint::new(TorusPoint::new(x1, c2), t),
                SliceSpec::Cylinder => StatePoint::new(TorusPoint::new(x1, 0.0), c2),
            };
            let avg = last_half_t_average(system, &s, n);
            let label = if avg < tau0 {
                BasinLabel::Basin0
            } else if avg > tau1 {
                BasinLabel::Basin1
            } else {
                BasinLabel::Undecided
            };
            (label, avg)
        })
        .collect();
    Ok(BasinRaster {
        grid_w,
        grid_h,
        slice,
        labels: cells.iter().map(|c| c.0).collect(),
        avg_t: cells.iter().map(|c| c.1).collect(),
        n,
        tau0,
        tau1,
    })
}

/// Label fractions `[frac0, frac1, frac_undecided]` of every dyadic
/// sub-box at every depth up to the given one.
#[derive(Debug, Clone, Serialize)]
pub struct InterminglingReport {
    pub depth: u32,
    /// `per_box_fractions[d - 1]` holds the `2^d x 2^d` boxes of depth `d`,
    /// row-major.
    pub per_box_fractions: Vec<Vec<[f64; 3]>>,
    /// Minimum over all boxes of `min(frac0, frac1)`.
    pub min_fraction: f64,
}

pub fn intermingling_report(
    raster: &BasinRaster,
    depth: u32,
) -> Result<InterminglingReport, BasinError> {
    let min_side = raster.grid_w.min(raster.grid_h);
    if depth < 1 || (1usize << depth) > min_side / 4 {
        return Err(BasinError::DepthTooFine);
    }
    let mut per_box_fractions = Vec::new();
    let mut min_fraction = f64::INFINITY;
    for d in 1..=depth {
        let nb = 1usize << d;
        let mut boxes = Vec::with_capacity(nb * nb);
        for bj in 0..nb {
            for bi in 0..nb {
                let i_lo = bi * raster.grid_w / nb;
                let i_hi = (bi + 1) * raster.grid_w / nb;
                let j_lo = bj * raster.grid_h / nb;
                let j_hi = (bj + 1) * raster.grid_h / nb;
                let mut counts = [0usize; 3];
                for j in j_lo..j_hi {
                    for i in i_lo..i_hi {
                        match raster.labels[j * raster.grid_w + i] {
                            BasinLabel::Basin0 => counts[0] += 1,
                            BasinLabel::Basin1 => counts[1] += 1,
                            BasinLabel::Undecided => counts[2] += 1,
                        }
                    }
                }
                let total = ((i_hi - i_lo) * (j_hi - j_lo)) as f64;
                let fr = [
                    counts[0] as f64 / total,
                    counts[1] as f64 / total,
                    counts[2] as f64 / total,
                ];
                min_fraction = min_fraction.min(fr[0].min(fr[1]));
                boxes.push(fr);
            }
        }
        per_box_fractions.push(boxes);
    }
    Ok(InterminglingReport {
        depth,
        per_box_fractions,
        min_fraction,
    })
}

// ---------------------------------------------------------------------------
// exports

/// Binary PGM (P5, maxval 255) with Basin0 -> 0, Undecided -> 128,
/// Basin1 -> 255. `comments` become `#` header lines.
pub fn pgm_bytes(raster: &BasinRaster, comments: &[String]) -> Vec<u8> {
    let mut out = Vec::with_capacity(raster.labels.len() + 64);
    out.extend_from_slice(b"P5\n");
    for c in comments {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    out.extend_from_slice(format!("{} {}\n255\n", raster.grid_w, raster.grid_h).as_bytes());
    out.extend(raster.labels.iter().map(|l| l.gray()));
    out
}

/// 17-significant-digit float formatting shared by the text exports.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV export, one row per cell. `comments` become `#` header lines
/// above the column header.
pub fn csv_string(raster: &BasinRaster, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str("x1,x2_or_t,label,avg_t\n");
    for j in 0..raster.grid_h {
        for i in 0..raster.grid_w {
            let x1 = (i as f64 + 0.5) / raster.grid_w as f64;
            let c2 = (j as f64 + 0.5) / raster.grid_h as f64;
            let idx = j * raster.grid_w + i;
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(x1),
                fmt_f64(c2),
                raster.labels[idx].name(),
                fmt_f64(raster.avg_t[idx]),
            ));
        }
    }
    out
}
