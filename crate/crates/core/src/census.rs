//! Exact integer combinatorics of root-of-unity eigenvalue cycles.
//!
//! If `b` acts with an eigenvalue `ζ = e^{2πi m/N}` of exact order `N` and `a`
//! permutes eigenspaces, the relation `a b^p a⁻¹ = b^q` forces
//! `p·m' ≡ q·m (mod N)` between consecutive exponents. The exponents therefore
//! run through an orbit of `x ↦ u·x` on `Z/N`, `u = q·p⁻¹`, and an orbit of
//! length `k` needs `N | p^k − q^k`. Everything here is exact arithmetic.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::bsrep::BSGroup;
use crate::error::{Error, Result};

/// Trial-division cap: divisors with a prime factor above this are reported,
/// not enumerated.
pub const DEFAULT_FACTOR_CAP: u64 = 1_000_000;

/// Largest modulus whose unit group is walked during orbit enumeration.
pub const DEFAULT_MAX_MODULUS: u64 = 50_000_000;

/// One cycle `m, u·m, u²·m, …` of root-of-unity exponents modulo `N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrbitDatum {
    pub p: i64,
    pub q: i64,
    #[serde(rename = "N")]
    pub modulus: u64,
    #[serde(rename = "u")]
    pub multiplier: u64,
    pub orbit: Vec<u64>,
    pub k: usize,
}

impl OrbitDatum {
    /// The fixed cycle `{0}` modulo 1: eigenvalue 1.
    pub fn trivial(group: BSGroup) -> Self {
        OrbitDatum {
            p: group.p(),
            q: group.q(),
            modulus: 1,
            multiplier: 0,
            orbit: vec![0],
            k: 1,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.modulus == 1
    }
}

/// `∏_{k=1}^{n} |p^k − q^k|`, the bound on the order of `ρ(b)` at
/// Kempf-Ness points.
pub fn order_bound(p: i64, q: i64, n: usize) -> BigUint {
    (1..=n).map(|k| power_gap(p, q, k)).product()
}

/// `|p^k − q^k|` as an exact integer.
pub fn power_gap(p: i64, q: i64, k: usize) -> BigUint {
    let k = u32::try_from(k).expect("exponent fits in u32");
    (BigInt::from(p).pow(k) - BigInt::from(q).pow(k))
        .abs()
        .to_biguint()
        .expect("absolute value is non-negative")
}

/// Least `k ≥ 1` with `u^k ≡ 1 (mod N)`.
pub fn mult_order(u: i64, modulus: u64) -> Result<u64> {
    if modulus == 0 {
        return Err(Error::NotAUnit { u, modulus });
    }
    let m = modulus as u128;
    let base = reduce(u, modulus) as u128;
    if num_integer::gcd(base, m) != 1 {
        return Err(Error::NotAUnit { u, modulus });
    }
    let mut x = base % m;
    let mut k = 1u64;
    while x != 1 % m {
        x = x * base % m;
        k += 1;
    }
    Ok(k)
}

/// `x mod N` in `[0, N)` for a signed `x`.
pub fn reduce(x: i64, modulus: u64) -> u64 {
    (x as i128).rem_euclid(modulus as i128) as u64
}

/// Inverse of `x` modulo `N`, if it exists.
pub fn mod_inverse(x: i64, modulus: u64) -> Option<u64> {
    if modulus == 1 {
        return Some(0);
    }
    let e = (reduce(x, modulus) as i128).extended_gcd(&(modulus as i128));
    (e.gcd == 1).then(|| e.x.rem_euclid(modulus as i128) as u64)
}

/// Divisors of a big integer, from trial division up to `factor_cap`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divisors {
    /// Every divisor `> 1` built from the factored part, ascending.
    pub divisors: Vec<BigUint>,
    /// Cofactor left over when a prime factor may exceed the cap.
    pub unfactored: Option<BigUint>,
}

pub fn divisors(value: &BigUint, factor_cap: u64) -> Divisors {
    let mut rest = value.clone();
    let mut primes: Vec<(u64, u32)> = Vec::new();
    let mut unfactored = None;
    if !rest.is_zero() {
        let mut d = 2u64;
        while rest > BigUint::one() {
            if d > factor_cap {
                unfactored = Some(rest.clone());
                break;
            }
            if BigUint::from(d) * BigUint::from(d) > rest {
                // What remains is a prime below cap².
                primes.push((rest.to_u64().expect("prime below cap squared fits in u64"), 1));
                break;
            }
            let mut e = 0;
            while (&rest % d).is_zero() {
                rest /= d;
                e += 1;
            }
            if e > 0 {
                primes.push((d, e));
            }
            d += if d == 2 { 1 } else { 2 };
        }
    }
    let mut divs = vec![BigUint::one()];
    for (prime, e) in primes {
        let mut next = Vec::with_capacity(divs.len() * (e as usize + 1));
        for d in &divs {
            let mut pk = d.clone();
            for _ in 0..=e {
                next.push(pk.clone());
                pk *= prime;
            }
        }
        divs = next;
    }
    divs.sort();
    divs.retain(|d| *d > BigUint::one());
    Divisors {
        divisors: divs,
        unfactored,
    }
}

/// Limits applied by [`enumerate_orbits_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CensusLimits {
    pub factor_cap: u64,
    pub max_modulus: u64,
}

impl Default for CensusLimits {
    fn default() -> Self {
        CensusLimits {
            factor_cap: DEFAULT_FACTOR_CAP,
            max_modulus: DEFAULT_MAX_MODULUS,
        }
    }
}

/// Something the enumeration could not cover.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Skipped {
    /// `|p^k − q^k|` has a cofactor with no prime factor below the cap.
    Unfactored { k: usize, cofactor: String },
    /// A divisor too large for its unit group to be walked.
    ModulusTooLarge { k: usize, modulus: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Census {
    pub group: BSGroup,
    pub n_max: usize,
    pub orbits: Vec<OrbitDatum>,
    pub skipped: Vec<Skipped>,
}

impl Census {
    /// `(k, N, orbit count)` rows in canonical order.
    pub fn summary(&self) -> Vec<(usize, u64, usize)> {
        let mut rows: Vec<(usize, u64, usize)> = Vec::new();
        for d in &self.orbits {
            match rows.last_mut() {
                Some(last) if last.0 == d.k && last.1 == d.modulus => last.2 += 1,
                _ => rows.push((d.k, d.modulus, 1)),
            }
        }
        rows
    }

    pub fn is_complete(&self) -> bool {
        self.skipped.is_empty()
    }
}

pub fn enumerate_orbits(group: BSGroup, n_max: usize) -> Census {
    enumerate_orbits_with(group, n_max, CensusLimits::default())
}

/// All eigenvalue cycles of length `k ≤ n_max` made of roots of unity of
/// exact order `N > 1`, plus the trivial cycle.
///
/// Only orbits of units mod `N` are listed, so every eigenvalue appears once,
/// under its exact order. Output is sorted by `(k, N, smallest element)`, and
/// each orbit starts at its smallest element.
pub fn enumerate_orbits_with(group: BSGroup, n_max: usize, limits: CensusLimits) -> Census {
    let (p, q) = (group.p(), group.q());
    let mut orbits = vec![OrbitDatum::trivial(group)];
    let mut skipped = Vec::new();
    for k in 1..=n_max {
        let gap = power_gap(p, q, k);
        let divs = divisors(&gap, limits.factor_cap);
        if let Some(c) = divs.unfactored {
            skipped.push(Skipped::Unfactored {
                k,
                cofactor: c.to_string(),
            });
        }
        for d in divs.divisors {
            let Some(modulus) = d.to_u64().filter(|&m| m <= limits.max_modulus) else {
                skipped.push(Skipped::ModulusTooLarge {
                    k,
                    modulus: d.to_string(),
                });
                continue;
            };
            orbits.extend(unit_orbits(p, q, modulus, k));
        }
    }
    orbits.sort_by_key(|d| (d.k, d.modulus, d.orbit[0]));
    Census {
        group,
        n_max,
        orbits,
        skipped,
    }
}

/// Orbits of length exactly `k` of `x ↦ u·x` on the units of `Z/N`.
fn unit_orbits(p: i64, q: i64, modulus: u64, k: usize) -> Vec<OrbitDatum> {
    let pq = (p as i128 * q as i128).unsigned_abs();
    // A prime dividing both N and p would divide q^k as well.
    assert_eq!(
        num_integer::gcd(modulus as u128, pq),
        1,
        "divisor {modulus} of |p^k - q^k| shares a factor with pq"
    );
    let p_inv = mod_inverse(p, modulus).expect("p is a unit mod N");
    let u = (reduce(q, modulus) as u128 * p_inv as u128 % modulus as u128) as u64;
    if mult_order(u as i64, modulus).ok() != Some(k as u64) {
        return Vec::new();
    }
    let n = modulus as usize;
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 1..n {
        if seen[start] || num_integer::gcd(start as u64, modulus) != 1 {
            continue;
        }
        let mut orbit = Vec::with_capacity(k);
        let mut x = start as u64;
        for _ in 0..k {
            seen[x as usize] = true;
            orbit.push(x);
            x = (x as u128 * u as u128 % modulus as u128) as u64;
        }
        out.push(OrbitDatum {
            p,
            q,
            modulus,
            multiplier: u,
            orbit,
            k,
        });
    }
    out
}

/// Exact check of every [`OrbitDatum`] invariant.
pub fn verify_orbit(d: &OrbitDatum) -> bool {
    let n = d.modulus;
    if n == 0 || d.k == 0 || d.orbit.len() != d.k || d.p == 0 || d.q == 0 {
        return false;
    }
    let pq = (d.p as i128 * d.q as i128).unsigned_abs();
    if num_integer::gcd(n as u128, pq) != 1 {
        return false;
    }
    let m = n as u128;
    let u = d.multiplier as u128;
    if d.multiplier >= n && n > 1 {
        return false;
    }
    if u * reduce(d.p, n) as u128 % m != reduce(d.q, n) as u128 % m {
        return false;
    }
    if d.orbit.iter().any(|&x| x >= n) {
        return false;
    }
    let distinct: BTreeSet<u64> = d.orbit.iter().copied().collect();
    if distinct.len() != d.k {
        return false;
    }
    for j in 0..d.k {
        let next = d.orbit[(j + 1) % d.k] as u128;
        if u * d.orbit[j] as u128 % m != next % m {
            return false;
        }
    }
    let has_unit = d.orbit.iter().any(|&x| num_integer::gcd(x, n) == 1);
    if has_unit && !(power_gap(d.p, d.q, d.k) % BigUint::from(n)).is_zero() {
        return false;
    }
    true
}
