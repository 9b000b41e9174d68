//! Exact and approximate arithmetic for the log-ratio independence
//! hypothesis and the Diophantine pair search.
//!
//! `multiplicative_independence` decides whether `ln r / ln s` is rational
//! for positive rationals by prime factorization, with no floating point in
//! the decision path. `diophantine_pairs` enumerates integer pairs `(k, l)`
//! with `alpha^-k beta^l` close to a target `eta`, using 192-bit fixed-point
//! logarithms so residuals stay meaningful at large iterate counts.

use crate::highprec::FixedReal;
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumberTheoryError {
    #[error("input must be a positive rational different from 1")]
    InvalidInput,
    #[error("factorization budget exceeded for {0}")]
    FactorizationBudgetExceeded(String),
    #[error("remaining precision cannot certify the next partial quotient")]
    PrecisionExhausted,
    #[error("no pair with |residual| < epsilon within k <= {0}")]
    NoPairInBudget(u64),
}

/// Outcome of the exact multiplicative-independence decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceVerdict {
    pub dependent: bool,
    /// When dependent: nonzero integers `(m, n)` with `r^n = s^m` exactly.
    pub witness: Option<(i64, i64)>,
}

// ---------------------------------------------------------------------------
// factorization

fn is_probable_prime(n: &BigUint) -> bool {
    if n < &BigUint::from(2u32) {
        return false;
    }
    for p in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let bp = BigUint::from(p);
        if n == &bp {
            return true;
        }
        if n.is_multiple_of(&bp) {
            return false;
        }
    }
    // Miller-Rabin with a deterministic base set for < 3.3e24, plus the
    // same bases as a strong probabilistic test beyond that.
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    let n_minus_1 = n - &one;
    let r = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> r;
    'bases: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 0..r.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

fn pollard_rho(n: &BigUint, budget: u64) -> Option<BigUint> {
    let one = BigUint::one();
    for c in 1u64..20 {
        let cc = BigUint::from(c);
        let mut x = BigUint::from(2u32);
        let mut y = BigUint::from(2u32);
        let mut d = one.clone();
        let mut steps = 0u64;
        while d == one {
            x = (&x * &x + &cc) % n;
            y = (&y * &y + &cc) % n;
            y = (&y * &y + &cc) % n;
            let diff = if x > y { &x - &y } else { &y - &x };
            if diff.is_zero() {
                break;
            }
            d = diff.gcd(n);
            steps += 1;
            if steps > budget {
                return None;
            }
        }
        if d != one && &d != n {
            return Some(d);
        }
    }
    None
}

/// Prime factorization with a trial-division + Pollard rho budget.
pub fn factorize(n: &BigUint) -> Result<Vec<(BigUint, u32)>, NumberTheoryError> {
    let mut factors: Vec<(BigUint, u32)> = Vec::new();
    let push = |p: BigUint, factors: &mut Vec<(BigUint, u32)>| {
        for (q, e) in factors.iter_mut() {
            if *q == p {
                *e += 1;
                return;
            }
        }
        factors.push((p, 1));
    };
    let mut stack = vec![n.clone()];
    while let Some(mut m) = stack.pop() {
        if m.is_one() {
            continue;
        }
        // trial division
        let mut p = 2u64;
        while p < 100_000 && &BigUint::from(p) * BigUint::from(p) <= m {
            let bp = BigUint::from(p);
            while m.is_multiple_of(&bp) {
                m /= &bp;
                push(bp.clone(), &mut factors);
            }
            p += if p == 2 { 1 } else { 2 };
        }
        if m.is_one() {
            continue;
        }
        if is_probable_prime(&m) {
            push(m, &mut factors);
            continue;
        }
        match pollard_rho(&m, 2_000_000) {
            Some(d) => {
                stack.push(&m / &d);
                stack.push(d);
            }
            None => {
                return Err(NumberTheoryError::FactorizationBudgetExceeded(
                    m.to_string(),
                ))
            }
        }
    }
    factors.sort();
    Ok(factors)
}

/// Signed prime-exponent vector of a positive rational.
fn exponent_vector(r: &BigRational) -> Result<Vec<(BigUint, i64)>, NumberTheoryError> {
    let num = r.numer().to_biguint().ok_or(NumberTheoryError::InvalidInput)?;
    let den = r.denom().to_biguint().ok_or(NumberTheoryError::InvalidInput)?;
    let mut map: Vec<(BigUint, i64)> = Vec::new();
    for (p, e) in factorize(&num)? {
        map.push((p, e as i64));
    }
    for (p, e) in factorize(&den)? {
        match map.iter_mut().find(|(q, _)| *q == p) {
            Some((_, v)) => *v -= e as i64,
            None => map.push((p, -(e as i64))),
        }
    }
    map.retain(|(_, e)| *e != 0);
    map.sort();
    Ok(map)
}

/// Decide whether `ln r / ln s` is rational, exactly.
///
/// Dependent iff the prime-exponent vectors of `r` and `s` are parallel
/// over Q; the returned witness `(m, n)` satisfies `r^n = s^m`, verified in
/// exact arithmetic before it is reported.
pub fn multiplicative_independence(
    r: &BigRational,
    s: &BigRational,
) -> Result<IndependenceVerdict, NumberTheoryError> {
    if !r.is_positive() || !s.is_positive() || r.is_one() || s.is_one() {
        return Err(NumberTheoryError::InvalidInput);
    }
    let er = exponent_vector(r)?;
    let es = exponent_vector(s)?;
    // union of supports; e = (m/n) f must hold coordinatewise
    let mut ratio: Option<(i64, i64)> = None; // (m, n) with m/n = e_i/f_i
    let mut primes: Vec<BigUint> = er.iter().map(|(p, _)| p.clone()).collect();
    for (p, _) in &es {
        if !primes.contains(p) {
            primes.push(p.clone());
        }
    }
    for p in &primes {
        let e = er.iter().find(|(q, _)| q == p).map(|(_, v)| *v).unwrap_or(0);
        let f = es.iter().find(|(q, _)| q == p).map(|(_, v)| *v).unwrap_or(0);
        match (e, f) {
            (0, 0) => {}
            (_, 0) | (0, _) => {
                return Ok(IndependenceVerdict {
                    dependent: false,
                    witness: None,
                })
            }
            (e, f) => {
                let g = e.gcd(&f);
                let (mut m, mut n) = (e / g, f / g);
                if n < 0 {
                    m = -m;
                    n = -n;
                }
                match ratio {
                    None => ratio = Some((m, n)),
                    Some((m0, n0)) => {
                        if (m0, n0) != (m, n) {
                            return Ok(IndependenceVerdict {
                                dependent: false,
                                witness: None,
                            });
                        }
                    }
                }
            }
        }
    }
    let (m, n) = ratio.expect("nontrivial rationals have nonempty support");
    // exact verification: r^n == s^m
    debug_assert!(verify_witness(r, s, m, n));
    Ok(IndependenceVerdict {
        dependent: true,
        witness: Some((m, n)),
    })
}

/// Exact check of `r^n == s^m`.
pub fn verify_witness(r: &BigRational, s: &BigRational, m: i64, n: i64) -> bool {
    fn pow(x: &BigRational, e: i64) -> BigRational {
        let p = x.pow(e.unsigned_abs() as i32 as i32);
        if e < 0 {
            p.recip()
        } else {
            p
        }
    }
    pow(r, n) == pow(s, m)
}

// ---------------------------------------------------------------------------
// continued fractions

/// Partial quotients and convergents of a continued-fraction expansion.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuedFraction {
    pub quotients: Vec<i64>,
    /// Convergents as (numerator, denominator) pairs.
    pub convergents: Vec<(i64, i64)>,
}

/// Continued-fraction expansion of the exact dyadic rational a float
/// represents.
///
/// Quotients are produced by exact Euclidean division (no floating error),
/// so early quotients agree with those of any nearby real; very deep
/// quotients reflect the dyadic approximation and should not be trusted
/// past convergent denominators near `2^26`. Expansion stops at `depth`
/// terms, at exact termination, or when a convergent overflows `i64`.
pub fn continued_fraction(x: f64, depth: usize) -> Result<ContinuedFraction, NumberTheoryError> {
    if !(x > 0.0) || depth == 0 {
        return Err(NumberTheoryError::InvalidInput);
    }
    // x = num / 2^shift exactly
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (m, e) = if exp == 0 {
        (frac as i128, -1074i64)
    } else {
        ((frac | (1 << 52)) as i128, exp - 1075)
    };
    let (mut num, mut den) = if e >= 0 {
        (BigInt::from(m) << e as u32, BigInt::from(1))
    } else {
        (BigInt::from(m), BigInt::from(1) << (-e) as u32)
    };
    let mut quotients = Vec::new();
    let mut convergents = Vec::new();
    let (mut h0, mut h1) = (1i64, 0i64); // numerators
    let (mut k0, mut k1) = (0i64, 1i64); // denominators
    for _ in 0..depth {
        let a_big = &num / &den;
        let a = match a_big.to_i64() {
            Some(a) => a,
            None => break,
        };
        let h = match a.checked_mul(h0).and_then(|v| v.checked_add(h1)) {
            Some(h) => h,
            None => break,
        };
        let k = match a.checked_mul(k0).and_then(|v| v.checked_add(k1)) {
            Some(k) => k,
            None => break,
        };
        quotients.push(a);
        convergents.push((h, k));
        h1 = h0;
        h0 = h;
        k1 = k0;
        k0 = k;
        let rem = &num - a_big * &den;
        if rem.is_zero() {
            break; // exact rational: expansion terminates
        }
        let old_den = std::mem::replace(&mut den, rem);
        num = old_den;
    }
    Ok(ContinuedFraction {
        quotients,
        convergents,
    })
}

// ---------------------------------------------------------------------------
// Diophantine pairs

/// An integer pair `(k, l)` with `alpha^-k beta^l` near the target `eta`.
#[derive(Debug, Clone, Serialize)]
pub struct DiophantinePair {
    pub k: u64,
    pub l: u64,
    /// `-k ln alpha + l ln beta - ln eta`, from 192-bit fixed-point logs.
    pub residual: f64,
    /// `alpha^-k * beta^l`.
    pub eta_star: f64,
}

/// Result of a pair search, with the exact-zero-residual suspicion flag.
#[derive(Debug, Clone, Serialize)]
pub struct PairSearch {
    pub pairs: Vec<DiophantinePair>,
    /// Set when some residual is exactly zero at working precision,
    /// signalling likely rational dependence of the logs.
    pub dependence_suspicion: bool,
}

pub struct PairSearchConfig {
    /// Upper bound on k (and on l) during the scan.
    pub max_k: u64,
}

impl Default for PairSearchConfig {
    fn default() -> Self {
        PairSearchConfig { max_k: 1_000_000 }
    }
}

/// Ordered search for pairs `(k, l)` with `|{-k ln alpha + l ln beta - ln eta}| < epsilon`.
///
/// Scans l upward; for each l every admissible k in the epsilon window is
/// emitted, which makes the output coincide with a brute-force double loop.
/// Pairs are ordered by k ascending, then l ascending.
pub fn diophantine_pairs(
    alpha: f64,
    beta: f64,
    eta: f64,
    epsilon: f64,
    max_terms: usize,
    config: &PairSearchConfig,
) -> Result<PairSearch, NumberTheoryError> {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0,1)");
    assert!(eta > 0.0 && epsilon > 0.0);
    let a = FixedReal::from_f64(alpha).ln().neg(); // -ln alpha > 0
    let b = FixedReal::from_f64(beta).ln().neg(); // -ln beta > 0
    let c = FixedReal::from_f64(eta).ln();
    let eps = FixedReal::from_f64(epsilon);

    let mut pairs: Vec<DiophantinePair> = Vec::new();
    let mut suspicion = false;
    let a_f = a.to_f64();
    let b_f = b.to_f64();
    let c_f = c.to_f64();
    let mut lb = b.clone(); // l * b, incrementally updated
    for l in 1..=config.max_k {
        // candidate k window: k a in [c + l b - eps, c + l b + eps]
        let center = (c_f + l as f64 * b_f) / a_f;
        let k_lo = ((center - epsilon / a_f).ceil() as i64).max(1);
        let k_hi = (center + epsilon / a_f).floor() as i64;
        for k in k_lo..=k_hi.min(config.max_k as i64) {
            if k < 1 {
                continue;
            }
            // residual = k a - l b - c, exact in fixed point
            let res = a.mul_int(k).sub(&lb).sub(&c);
            if res.abs() <= eps {
                if res.is_zero() {
                    suspicion = true;
                }
                let residual = res.to_f64();
                pairs.push(DiophantinePair {
                    k: k as u64,
                    l,
                    residual,
                    eta_star: eta * residual.exp(),
                });
            }
        }
        if pairs.len() >= max_terms {
            // The k window is nondecreasing along l. The first max_terms
            // pairs (by k, then l) are final once the window has moved past
            // the k of the max_terms-th best candidate.
            let mut ks: Vec<(u64, u64)> = pairs.iter().map(|p| (p.k, p.l)).collect();
            ks.sort();
            let cutoff = ks[max_terms - 1].0;
            if k_lo as u64 > cutoff {
                break;
            }
        }
        lb = lb.add(&b);
    }
    if pairs.is_empty() {
        return Err(NumberTheoryError::NoPairInBudget(config.max_k));
    }
    pairs.sort_by(|p, q| (p.k, p.l).cmp(&(q.k, q.l)));
    pairs.truncate(max_terms);
    Ok(PairSearch {
        pairs,
        dependence_suspicion: suspicion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn kan_multipliers_independent() {
        let v = multiplicative_independence(&rat(31, 32), &rat(33, 32)).unwrap();
        assert!(!v.dependent);
    }

    #[test]
    fn exact_square_dependent() {
        let v = multiplicative_independence(&rat(4, 9), &rat(2, 3)).unwrap();
        assert!(v.dependent);
        let (m, n) = v.witness.unwrap();
        assert!(verify_witness(&rat(4, 9), &rat(2, 3), m, n));
        assert_eq!((m, n), (2, 1)); // (2/3)^2 = 4/9
    }

    #[test]
    fn power_of_two_dependent() {
        let v = multiplicative_independence(&rat(8, 1), &rat(2, 1)).unwrap();
        assert!(v.dependent);
        assert_eq!(v.witness.unwrap(), (3, 1)); // 2^3 = 8
    }

    #[test]
    fn one_rejected() {
        assert_eq!(
            multiplicative_independence(&rat(1, 1), &rat(2, 1)),
            Err(NumberTheoryError::InvalidInput)
        );
    }

    #[test]
    fn inverse_powers_dependent() {
        // r = 2/3, s = 9/4: r^2 = s^-1
        let v = multiplicative_independence(&rat(2, 3), &rat(9, 4)).unwrap();
        assert!(v.dependent);
        let (m, n) = v.witness.unwrap();
        assert!(verify_witness(&rat(2, 3), &rat(9, 4), m, n));
    }

    #[test]
    fn cf_of_three_halves() {
        let cf = continued_fraction(1.5, 2).unwrap();
        assert_eq!(cf.quotients, vec![1, 2]);
        assert_eq!(cf.convergents, vec![(1, 1), (3, 2)]);
    }

    #[test]
    fn cf_of_kan_log_ratio() {
        // ln(32/33)/ln(31/32), from high-precision logs
        let x = crate::highprec::ln_ratio(32, 33)
            .div(&crate::highprec::ln_ratio(31, 32))
            .to_f64();
        let cf = continued_fraction(x, 6).unwrap();
        assert_eq!(cf.quotients[0], 0);
        assert_eq!(cf.quotients[1], 1);
        assert_eq!(cf.quotients[2], 31);
        // convergent 31/32 approximates x to < 3e-4
        assert!(cf.convergents.iter().any(|&(h, k)| h == 31 && k == 32));
        assert!((x - 31.0 / 32.0).abs() < 5e-4);
    }

    #[test]
    fn cf_of_ln3_over_ln2() {
        let x = 3f64.ln() / 2f64.ln();
        let cf = continued_fraction(x, 8).unwrap();
        assert!(cf.convergents.iter().any(|&(h, k)| h == 19 && k == 12));
        assert!((x - 19.0 / 12.0).abs() < 2e-3);
    }

    #[test]
    fn pairs_degenerate_equal_multipliers() {
        let s = diophantine_pairs(0.5, 0.5, 1.0, 1e-9, 4, &PairSearchConfig::default()).unwrap();
        assert!(s.dependence_suspicion);
        for (i, p) in s.pairs.iter().enumerate() {
            assert_eq!(p.k, i as u64 + 1);
            assert_eq!(p.l, i as u64 + 1);
            assert_eq!(p.residual, 0.0);
        }
    }

    #[test]
    fn pairs_kan_multipliers() {
        let s = diophantine_pairs(
            31.0 / 32.0,
            32.0 / 33.0,
            1.0,
            1e-3,
            10,
            &PairSearchConfig::default(),
        )
        .unwrap();
        assert!(!s.dependence_suspicion);
        let first = &s.pairs[0];
        assert_eq!((first.k, first.l), (1, 1));
        assert!((first.residual - 9.77e-4).abs() < 1e-6);
    }

    #[test]
    fn pairs_ln2_ln3() {
        let s = diophantine_pairs(0.5, 1.0 / 3.0, 1.0, 0.02, 20, &PairSearchConfig::default())
            .unwrap();
        let p = s
            .pairs
            .iter()
            .find(|p| (p.k, p.l) == (19, 12))
            .expect("(19,12) present");
        assert!((p.residual.abs() - (12.0 * 3f64.ln() - 19.0 * 2f64.ln()).abs()).abs() < 1e-12);
        assert!((p.residual.abs() - 0.0139).abs() < 1e-3);
    }

    #[test]
    fn pairs_match_brute_force() {
        // oracle: plain double loop over k,l <= 10^4 in f64 (adequate at
        // this scale since residuals of interest are >> 1e-12)
        let cases: [(f64, f64, f64, f64); 3] = [
            (31.0 / 32.0, 32.0 / 33.0, 1.0, 1e-3),
            (0.5, 1.0 / 3.0, 1.0, 0.02),
            (0.7, 0.4, 1.3, 0.01),
        ];
        for &(alpha, beta, eta, eps) in &cases {
            let mut brute: Vec<(u64, u64)> = Vec::new();
            let (la, lb, le) = (alpha.ln(), beta.ln(), eta.ln());
            let bound = 2_000u64;
            for k in 1..=bound {
                for l in 1..=bound {
                    let r = -(k as f64) * la + l as f64 * lb - le;
                    if r.abs() < eps {
                        brute.push((k, l));
                    }
                }
            }
            brute.sort();
            let s = diophantine_pairs(
                alpha,
                beta,
                eta,
                eps,
                5,
                &PairSearchConfig { max_k: bound },
            )
            .unwrap();
            let got: Vec<(u64, u64)> = s.pairs.iter().map(|p| (p.k, p.l)).collect();
            let want = &brute[..got.len().min(brute.len())];
            assert_eq!(got, want.to_vec());
        }
    }

    #[test]
    fn no_pair_in_budget() {
        let r = diophantine_pairs(
            31.0 / 32.0,
            32.0 / 33.0,
            1.0,
            1e-12,
            1,
            &PairSearchConfig { max_k: 50 },
        );
        assert!(matches!(r, Err(NumberTheoryError::NoPairInBudget(50))));
    }

    #[test]
    fn independence_never_misses_small_witness() {
        // random prime-power rationals r = s^(m/n): brute-force witness
        // search cross-check
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let bases = [rat(2, 3), rat(3, 5), rat(10, 7), rat(6, 1)];
        for _ in 0..50 {
            let s = bases[rng.gen_range(0..bases.len())].clone();
            let m: i64 = rng.gen_range(1..=8);
            let n: i64 = rng.gen_range(1..=8);
            // r = s^(m/n) is rational only when n | all exponents; use s^m
            // vs s-base^n style: take r = s^m, s' = s^n
            let r = s.pow(m as i32);
            let s2 = s.pow(n as i32);
            let v = multiplicative_independence(&r, &s2).unwrap();
            assert!(v.dependent, "r = s^{m}, s' = s^{n} must be dependent");
            let (wm, wn) = v.witness.unwrap();
            assert!(verify_witness(&r, &s2, wm, wn));
        }
    }
}
