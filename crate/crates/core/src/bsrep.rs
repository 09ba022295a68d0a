//! Points of the representation variety `Hom(BS(p,q), GL_n(ℂ))`.
//!
//! A representation is stored as the matrix pair `(A, B) = (ρ(a), ρ(b))`.
//! Membership in the variety is never assumed: [`relation_residual`] measures
//! how far the pair is from satisfying `A·B^p·A⁻¹ = B^q`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::census::{enumerate_orbits, OrbitDatum};
use crate::error::{Error, Result};
use crate::numerics::{self, hs_norm, inverse, mat_pow, CMatrix, RootOfUnity};

/// Default tolerance on [`relation_residual`] for a pair to count as a
/// representation.
pub const REP_TOL: f64 = 1e-8;

/// Parameters `(p, q)` of `BS(p,q) = ⟨a, b | a b^p a⁻¹ = b^q⟩`, with
/// `gcd(p, q) = 1` and `|p| ≠ |q|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "(i64, i64)", into = "(i64, i64)")]
pub struct BSGroup {
    p: i64,
    q: i64,
}

impl BSGroup {
    pub fn new(p: i64, q: i64) -> Result<Self> {
        let invalid = |reason| Error::InvalidGroup { p, q, reason };
        if p == 0 || q == 0 {
            return Err(invalid("p and q must be nonzero"));
        }
        if p.unsigned_abs() == q.unsigned_abs() {
            return Err(invalid("|p| and |q| must differ"));
        }
        if num_integer::gcd(p.unsigned_abs(), q.unsigned_abs()) != 1 {
            return Err(invalid("p and q must be coprime"));
        }
        Ok(BSGroup { p, q })
    }

    pub fn p(&self) -> i64 {
        self.p
    }

    pub fn q(&self) -> i64 {
        self.q
    }
}

impl TryFrom<(i64, i64)> for BSGroup {
    type Error = Error;

    fn try_from((p, q): (i64, i64)) -> Result<Self> {
        BSGroup::new(p, q)
    }
}

impl From<BSGroup> for (i64, i64) {
    fn from(g: BSGroup) -> Self {
        (g.p, g.q)
    }
}

/// Ambient group: all of `GL_n` or the determinant-one subgroup.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearGroup {
    #[default]
    General,
    Special,
}

/// A pair `(A, B) = (ρ(a), ρ(b))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RepJson", into = "RepJson")]
pub struct Rep {
    pub group: BSGroup,
    pub a: CMatrix,
    pub b: CMatrix,
}

impl Rep {
    pub fn new(group: BSGroup, a: CMatrix, b: CMatrix) -> Result<Self> {
        let n = a.nrows();
        for m in [&a, &b] {
            if m.nrows() != m.ncols() {
                return Err(Error::InvalidMatrix("matrix is not square".into()));
            }
            if m.nrows() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.nrows(),
                });
            }
            if !numerics::is_finite(m) {
                return Err(Error::InvalidMatrix("non-finite entry".into()));
            }
        }
        if n == 0 {
            return Err(Error::InvalidMatrix("dimension must be positive".into()));
        }
        Ok(Rep { group, a, b })
    }

    /// The trivial representation `A = B = I`.
    pub fn trivial(group: BSGroup, n: usize) -> Self {
        Rep {
            group,
            a: numerics::identity(n),
            b: numerics::identity(n),
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Rescale `A` into `SL_n`. `B` cannot be rescaled without breaking the
    /// relation, so it must already have determinant one.
    pub fn to_special_linear(&self, tol: f64) -> Result<Rep> {
        let det_b = self.b.determinant();
        if (det_b - Complex64::new(1.0, 0.0)).norm() > tol {
            return Err(Error::NotSpecialLinear(format!("det(B) = {det_b}")));
        }
        let det_a = self.a.determinant();
        let scale = det_a.powf(-1.0 / self.n() as f64);
        Ok(Rep {
            group: self.group,
            a: &self.a * scale,
            b: self.b.clone(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RepJson {
    p: i64,
    q: i64,
    n: usize,
    #[serde(rename = "A", with = "numerics::serde_cmatrix")]
    a: CMatrix,
    #[serde(rename = "B", with = "numerics::serde_cmatrix")]
    b: CMatrix,
}

impl TryFrom<RepJson> for Rep {
    type Error = Error;

    fn try_from(j: RepJson) -> Result<Self> {
        let group = BSGroup::new(j.p, j.q)?;
        if j.a.nrows() != j.n {
            return Err(Error::DimensionMismatch {
                expected: j.n,
                found: j.a.nrows(),
            });
        }
        Rep::new(group, j.a, j.b)
    }
}

impl From<Rep> for RepJson {
    fn from(r: Rep) -> Self {
        RepJson {
            p: r.group.p,
            q: r.group.q,
            n: r.a.nrows(),
            a: r.a,
            b: r.b,
        }
    }
}

/// `‖A·B^p·A⁻¹ − B^q‖_HS`; negative exponents are inverse powers.
pub fn relation_residual(rep: &Rep) -> Result<f64> {
    let a_inv = inverse(&rep.a)?;
    let lhs = &rep.a * mat_pow(&rep.b, rep.group.p)? * a_inv;
    let rhs = mat_pow(&rep.b, rep.group.q)?;
    Ok(hs_norm(&(lhs - rhs)))
}

/// Fails with `NotInVariety` unless the residual is within `tol`.
pub fn check_in_variety(rep: &Rep, tol: f64) -> Result<f64> {
    let residual = relation_residual(rep)?;
    if residual <= tol {
        Ok(residual)
    } else {
        Err(Error::NotInVariety { residual, tol })
    }
}

/// Realize an eigenvalue cycle: `B = diag(ζ^{m_1}, …, ζ^{m_k})` and `A` the
/// cyclic shift `e_{j+1} ↦ e_j` with `chi` on the closing entry `e_1 ↦ e_k`.
pub fn from_orbit_datum(d: &OrbitDatum, chi: Complex64) -> Result<Rep> {
    let group = BSGroup::new(d.p, d.q)?;
    if !(chi.norm() > 0.0) || !chi.re.is_finite() || !chi.im.is_finite() {
        return Err(Error::InvalidOrbit(format!("scalar {chi} must be finite and nonzero")));
    }
    let k = d.orbit.len();
    if k == 0 || k != d.k || d.modulus == 0 {
        return Err(Error::InvalidOrbit(format!("malformed datum {d:?}")));
    }
    let n = d.modulus as i128;
    for j in 0..k {
        let (m, next) = (d.orbit[j] as i128, d.orbit[(j + 1) % k] as i128);
        if (d.p as i128 * next - d.q as i128 * m).rem_euclid(n) != 0 {
            return Err(Error::InvalidOrbit(format!(
                "{}·{next} ≢ {}·{m} (mod {n})",
                d.p, d.q
            )));
        }
    }
    let eigenvalues: Vec<Complex64> = d
        .orbit
        .iter()
        .map(|&m| RootOfUnity::new(d.modulus, m).value())
        .collect();
    let b = numerics::diag(&eigenvalues);
    let mut a = CMatrix::zeros(k, k);
    for j in 1..k {
        a[(j - 1, j)] = Complex64::new(1.0, 0.0);
    }
    a[(k - 1, 0)] = chi;
    Rep::new(group, a, b)
}

/// Block-diagonal sum.
pub fn direct_sum(r1: &Rep, r2: &Rep) -> Result<Rep> {
    if r1.group != r2.group {
        return Err(Error::GroupMismatch);
    }
    let block = |x: &CMatrix, y: &CMatrix| {
        let (n1, n2) = (x.nrows(), y.nrows());
        let mut m = CMatrix::zeros(n1 + n2, n1 + n2);
        m.view_mut((0, 0), (n1, n1)).copy_from(x);
        m.view_mut((n1, n1), (n2, n2)).copy_from(y);
        m
    };
    Ok(Rep {
        group: r1.group,
        a: block(&r1.a, &r2.a),
        b: block(&r1.b, &r2.b),
    })
}

/// `(g·A·g⁻¹, g·B·g⁻¹)`.
pub fn conjugate(rep: &Rep, g: &CMatrix) -> Result<Rep> {
    if g.nrows() != rep.n() || g.ncols() != rep.n() {
        return Err(Error::DimensionMismatch {
            expected: rep.n(),
            found: g.nrows(),
        });
    }
    let g_inv = inverse(g)?;
    Ok(conjugate_with_inverse(rep, g, &g_inv))
}

pub(crate) fn conjugate_with_inverse(rep: &Rep, g: &CMatrix, g_inv: &CMatrix) -> Rep {
    Rep {
        group: rep.group,
        a: g * &rep.a * g_inv,
        b: g * &rep.b * g_inv,
    }
}

/// Knobs for [`random_rep_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomRepOptions {
    pub linear: LinearGroup,
    /// Upper bound on the condition number of the conjugating matrix.
    pub max_cond: f64,
    /// Moduli of the block scalars are drawn log-uniformly from this range.
    pub chi_modulus: (f64, f64),
    /// Minimum distance between the spectra of `A` on distinct blocks.
    pub min_spectral_gap: f64,
}

impl Default for RandomRepOptions {
    fn default() -> Self {
        RandomRepOptions {
            linear: LinearGroup::General,
            max_cond: 100.0,
            chi_modulus: (0.5, 2.0),
            min_spectral_gap: 0.25,
        }
    }
}

pub fn random_rep(group: BSGroup, n: usize, seed: u64) -> Result<Rep> {
    random_rep_with(group, n, seed, &RandomRepOptions::default())
}

/// A census-backed direct sum of orbit blocks of total dimension `n`,
/// conjugated by a random `g` with `cond(g) ≤ max_cond`. Deterministic in
/// `seed`.
pub fn random_rep_with(group: BSGroup, n: usize, seed: u64, opts: &RandomRepOptions) -> Result<Rep> {
    if n == 0 {
        return Err(Error::InvalidMatrix("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let census = enumerate_orbits(group, n);

    const BLOCK_ATTEMPTS: usize = 200;
    let mut blocks = None;
    for _ in 0..BLOCK_ATTEMPTS {
        let candidate = draw_blocks(&census.orbits, n, &mut rng);
        if opts.linear == LinearGroup::General || det_is_one(&candidate) {
            blocks = Some(candidate);
            break;
        }
    }
    // All-trivial B always has determinant one.
    let blocks = blocks.unwrap_or_else(|| vec![OrbitDatum::trivial(group); n]);

    let chis = draw_scalars(&blocks, opts, &mut rng);
    let mut rep: Option<Rep> = None;
    for (d, chi) in blocks.iter().zip(chis) {
        let block = from_orbit_datum(d, chi)?;
        rep = Some(match rep {
            None => block,
            Some(r) => direct_sum(&r, &block)?,
        });
    }
    let mut rep = rep.expect("at least one block");
    if opts.linear == LinearGroup::Special {
        rep = rep.to_special_linear(1e-12)?;
    }
    let g = random_conditioned(n, opts.max_cond, &mut rng);
    let rep = conjugate(&rep, &g)?;
    check_in_variety(&rep, REP_TOL)?;
    Ok(rep)
}

/// Pick a block length uniformly among those available, then an orbit of
/// that length uniformly, until the dimension is filled.
fn draw_blocks(orbits: &[OrbitDatum], n: usize, rng: &mut ChaCha8Rng) -> Vec<OrbitDatum> {
    let mut remaining = n;
    let mut out = Vec::new();
    while remaining > 0 {
        let mut lengths: Vec<usize> = orbits.iter().map(|d| d.k).filter(|&k| k <= remaining).collect();
        lengths.dedup();
        let k = lengths[rng.random_range(0..lengths.len())];
        let pool: Vec<&OrbitDatum> = orbits.iter().filter(|d| d.k == k).collect();
        let d = pool[rng.random_range(0..pool.len())];
        remaining -= k;
        out.push(d.clone());
    }
    out
}

/// `det B = ∏ ζ^{m}`, checked exactly as `Σ m/N ∈ Z`.
fn det_is_one(blocks: &[OrbitDatum]) -> bool {
    let mut num: i128 = 0;
    let mut den: i128 = 1;
    for d in blocks {
        let n = d.modulus as i128;
        let s: i128 = d.orbit.iter().map(|&m| m as i128).sum::<i128>() % n;
        // num/den + s/n
        num = num * n + s * den;
        den *= n;
        let g = num_integer::gcd(num, den);
        num /= g;
        den /= g;
    }
    num % den == 0
}

/// Block scalars with log-uniform modulus and uniform phase, redrawn until the
/// spectra of `A` on different blocks (the k-th roots of each scalar) are
/// separated.
fn draw_scalars(blocks: &[OrbitDatum], opts: &RandomRepOptions, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let (lo, hi) = opts.chi_modulus;
    let draw = |rng: &mut ChaCha8Rng| {
        let r = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
        Complex64::from_polar(r, 2.0 * PI * rng.random::<f64>())
    };
    let spectrum = |chi: Complex64, k: usize| -> Vec<Complex64> {
        let root = chi.powf(1.0 / k as f64);
        (0..k)
            .map(|j| root * Complex64::from_polar(1.0, 2.0 * PI * j as f64 / k as f64))
            .collect()
    };
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    for _ in 0..100 {
        let chis: Vec<Complex64> = blocks.iter().map(|_| draw(rng)).collect();
        let spectra: Vec<Vec<Complex64>> =
            chis.iter().zip(blocks).map(|(&c, d)| spectrum(c, d.k)).collect();
        let mut gap = f64::INFINITY;
        for i in 0..spectra.len() {
            for j in i + 1..spectra.len() {
                for x in &spectra[i] {
                    for y in &spectra[j] {
                        gap = gap.min((x - y).norm());
                    }
                }
            }
        }
        if gap >= opts.min_spectral_gap {
            return chis;
        }
        if best.as_ref().is_none_or(|(g, _)| gap > *g) {
            best = Some((gap, chis));
        }
    }
    best.expect("at least one draw").1
}

/// Haar-random unitary from the QR factorization of a complex Gaussian matrix.
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> CMatrix {
    let z = CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `U₁·diag(s)·U₂` with singular values log-uniform in `[1, max_cond]`, so
/// the condition number is at most `max_cond`.
pub fn random_conditioned(n: usize, max_cond: f64, rng: &mut impl Rng) -> CMatrix {
    let u1 = random_unitary(n, rng);
    let u2 = random_unitary(n, rng);
    let log_max = max_cond.max(1.0).ln();
    let s: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * log_max).exp()).collect();
    u1 * numerics::real_diag(&s) * u2
}

/// Random Hermitian matrix with unit Hilbert-Schmidt norm.
pub fn random_hermitian_unit(n: usize, rng: &mut impl Rng) -> CMatrix {
    let z = CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let h = numerics::hermitian_part(&z);
    let norm = hs_norm(&h);
    h.unscale(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cond, eigvals, identity, real_diag};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn g23() -> BSGroup {
        BSGroup::new(2, 3).unwrap()
    }

    fn zeta5(m: u64) -> Complex64 {
        RootOfUnity::new(5, m).value()
    }

    fn swap() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    fn block(orbit: Vec<u64>) -> OrbitDatum {
        OrbitDatum {
            p: 2,
            q: 3,
            modulus: 5,
            multiplier: 4,
            orbit,
            k: 2,
        }
    }

    #[test]
    fn group_validation() {
        assert!(BSGroup::new(2, 3).is_ok());
        assert!(BSGroup::new(-1, 2).is_ok());
        assert!(BSGroup::new(2, 2).is_err());
        assert!(BSGroup::new(2, -2).is_err());
        assert!(BSGroup::new(2, 4).is_err());
        assert!(BSGroup::new(0, 3).is_err());
        assert!(serde_json::from_str::<BSGroup>("[2, 4]").is_err());
    }

    #[test]
    fn residual_examples() {
        for (p, q) in [(2, 3), (1, 2), (-3, 5)] {
            let g = BSGroup::new(p, q).unwrap();
            assert_eq!(relation_residual(&Rep::trivial(g, 3)).unwrap(), 0.0);
        }
        let r = Rep::new(g23(), real_diag(&[5.0]), real_diag(&[1.0])).unwrap();
        assert!(relation_residual(&r).unwrap() < 1e-15);

        let r = Rep::new(g23(), swap(), numerics::diag(&[zeta5(1), zeta5(4)])).unwrap();
        assert!(relation_residual(&r).unwrap() < 1e-14);
        // The same B with A = I fails: B² ≠ B³.
        let r = Rep::new(g23(), identity(2), numerics::diag(&[zeta5(1), zeta5(4)])).unwrap();
        assert!(relation_residual(&r).unwrap() > 0.1);
    }

    #[test]
    fn orbit_constructor_examples() {
        let r = from_orbit_datum(&block(vec![1, 4]), c(1.0, 0.0)).unwrap();
        assert!(numerics::hs_norm(&(&r.a - swap())) == 0.0);
        assert!(numerics::hs_norm(&(&r.b - numerics::diag(&[zeta5(1), zeta5(4)]))) < 1e-15);

        let r = from_orbit_datum(&OrbitDatum::trivial(g23()), c(7.0, 0.0)).unwrap();
        assert_eq!(r.n(), 1);
        assert_eq!(r.a[(0, 0)], c(7.0, 0.0));
        assert_eq!(r.b[(0, 0)], c(1.0, 0.0));

        let r = from_orbit_datum(&block(vec![2, 3]), c(0.0, 1.0)).unwrap();
        assert!(relation_residual(&r).unwrap() <= 1e-12);

        assert!(matches!(
            from_orbit_datum(&block(vec![1, 3]), c(1.0, 0.0)),
            Err(Error::InvalidOrbit(_))
        ));
        assert!(from_orbit_datum(&block(vec![1, 4]), c(0.0, 0.0)).is_err());
    }

    #[test]
    fn direct_sum_examples() {
        let t = Rep::trivial(g23(), 1);
        let s = direct_sum(&t, &t).unwrap();
        assert_eq!(s, Rep::trivial(g23(), 2));

        let r1 = from_orbit_datum(&block(vec![1, 4]), c(1.0, 0.0)).unwrap();
        let r2 = from_orbit_datum(&block(vec![2, 3]), c(0.0, 1.0)).unwrap();
        let s = direct_sum(&r1, &r2).unwrap();
        assert_eq!(s.n(), 4);
        assert!(relation_residual(&s).unwrap() <= 1e-12);

        let s = direct_sum(&r1, &t).unwrap();
        let ev = eigvals(&s.b).unwrap();
        for want in [zeta5(1), zeta5(4), c(1.0, 0.0)] {
            assert!(ev.iter().any(|z| (z - want).norm() < 1e-12));
        }

        let other = Rep::trivial(BSGroup::new(1, 2).unwrap(), 1);
        assert!(matches!(direct_sum(&t, &other), Err(Error::GroupMismatch)));
    }

    #[test]
    fn conjugate_examples() {
        let r = from_orbit_datum(&block(vec![1, 4]), c(2.0, 1.0)).unwrap();
        assert_eq!(conjugate(&r, &identity(2)).unwrap(), r);
        let singular = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(1., 0.), c(1., 0.)]);
        assert!(matches!(conjugate(&r, &singular), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn random_rep_is_deterministic_and_valid() {
        for n in 1..=4 {
            let r1 = random_rep(g23(), n, 42).unwrap();
            let r2 = random_rep(g23(), n, 42).unwrap();
            assert_eq!(r1, r2);
            assert_eq!(r1.n(), n);
            assert!(relation_residual(&r1).unwrap() <= REP_TOL);
        }
        assert_ne!(random_rep(g23(), 3, 1).unwrap(), random_rep(g23(), 3, 2).unwrap());
    }

    #[test]
    fn random_rep_special_linear() {
        let opts = RandomRepOptions {
            linear: LinearGroup::Special,
            ..Default::default()
        };
        for seed in 0..10 {
            let r = random_rep_with(BSGroup::new(2, 3).unwrap(), 3, seed, &opts).unwrap();
            assert!((r.a.determinant() - c(1.0, 0.0)).norm() < 1e-9);
            assert!((r.b.determinant() - c(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn random_conditioned_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=5 {
            let g = random_conditioned(n, 100.0, &mut rng);
            assert!(cond(&g) <= 100.0 * (1.0 + 1e-10));
            let u = random_unitary(n, &mut rng);
            assert!(numerics::unitarity_defect(&u) < 1e-13);
        }
    }

    #[test]
    fn rep_json_roundtrip_and_validation() {
        let r = random_rep(g23(), 2, 5).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in ["p", "q", "n", "A", "B"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(serde_json::from_str::<Rep>(&s).unwrap(), r);

        let mut bad = v.clone();
        bad["q"] = serde_json::json!(4);
        assert!(serde_json::from_value::<Rep>(bad).is_err());
        let mut bad = v;
        bad["n"] = serde_json::json!(3);
        assert!(serde_json::from_value::<Rep>(bad).is_err());
    }
}
