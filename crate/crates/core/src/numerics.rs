//! Dense complex linear algebra for small matrices.
//!
//! Everything here works on `n x n` complex matrices with `n` at most a few
//! dozen, so matrix functions go through a full Hermitian eigendecomposition
//! rather than scaling-and-squaring or Padé approximants.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Commutator tolerance (relative to `‖A‖²`) below which [`eigvals`] treats a
/// matrix as normal and uses the joint Hermitian path.
pub const NORMALITY_TOL: f64 = 1e-8;

/// Relative singular-value threshold used by [`polar`] and [`inverse`].
pub const SINGULAR_TOL: f64 = 1e-12;

const SCHUR_MAX_ITER: usize = 10_000;

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn diag(entries: &[Complex64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries))
}

pub fn real_diag(entries: &[f64]) -> CMatrix {
    let v: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    diag(&v)
}

/// Hilbert-Schmidt (Frobenius) norm.
pub fn hs_norm(x: &CMatrix) -> f64 {
    hs_norm_sqr(x).sqrt()
}

pub fn hs_norm_sqr(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// `Re tr(X† Y)`, the real Hilbert-Schmidt inner product.
pub fn hs_inner_re(x: &CMatrix, y: &CMatrix) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

/// `X X† − X† X`; vanishes iff `X` is normal.
pub fn self_commutator(x: &CMatrix) -> CMatrix {
    let xh = x.adjoint();
    x * &xh - &xh * x
}

/// `‖X† X − I‖_HS`.
pub fn unitarity_defect(x: &CMatrix) -> f64 {
    hs_norm(&(x.adjoint() * x - identity(x.nrows())))
}

pub fn hermitian_part(x: &CMatrix) -> CMatrix {
    (x + x.adjoint()).scale(0.5)
}

pub fn is_finite(x: &CMatrix) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Inverse via LU.
///
/// Fails with `SingularMatrix` when `1/‖A⁻¹‖_HS` (a lower bound for the
/// smallest singular value, tight up to `√n`) is at most
/// `SINGULAR_TOL·‖A‖_HS`.
pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    let scale = hs_norm(a);
    let threshold = SINGULAR_TOL * scale;
    let Some(inv) = a.clone().try_inverse() else {
        return Err(Error::SingularMatrix {
            sigma_min: 0.0,
            threshold,
        });
    };
    let inv_norm = hs_norm(&inv);
    if !inv_norm.is_finite() || scale == 0.0 || 1.0 / inv_norm <= threshold {
        return Err(Error::SingularMatrix {
            sigma_min: if inv_norm.is_finite() { 1.0 / inv_norm } else { 0.0 },
            threshold,
        });
    }
    Ok(inv)
}

/// Integer matrix power; negative exponents invert first.
pub fn mat_pow(a: &CMatrix, k: i64) -> Result<CMatrix> {
    let base = if k < 0 { inverse(a)? } else { a.clone() };
    Ok(pow_unsigned(&base, k.unsigned_abs()))
}

/// Binary powering.
pub fn pow_unsigned(a: &CMatrix, mut k: u64) -> CMatrix {
    let mut result = identity(a.nrows());
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Spectral decomposition `H = V·diag(λ)·V†` of the Hermitian part of a matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(h: &CMatrix) -> Self {
        let eig = SymmetricEigen::new(hermitian_part(h));
        HermitianEigen {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `V·diag(f(λ))·V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let fj = f(lambda);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Polar decomposition `A = U·P`, `U` unitary and `P` positive definite.
pub fn polar(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    // Scaled Newton iteration X ← (ζX + ζ⁻¹X^{-†})/2. The SVD route loses
    // accuracy on clustered singular values.
    let mut x = a.clone();
    let mut converged = false;
    for _ in 0..POLAR_MAX_ITER {
        let inv = inverse(&x)?;
        let zeta = (hs_norm(&inv) / hs_norm(&x)).sqrt();
        let next = (x.scale(zeta) + inv.adjoint().unscale(zeta)).scale(0.5);
        let change = hs_norm(&(&next - &x));
        x = next;
        if change <= POLAR_TOL * hs_norm(&x) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence);
    }
    // One unscaled step sharpens the last digits.
    let u = (&x + inverse(&x)?.adjoint()).scale(0.5);
    let p = hermitian_part(&(u.adjoint() * a));
    Ok((u, p))
}

const POLAR_MAX_ITER: usize = 100;
const POLAR_TOL: f64 = 1e-14;

/// Real power `P^t` of a Hermitian positive-definite matrix.
pub fn herm_power(p: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = HermitianEigen::new(p);
    let min_eigenvalue = eig.min_value();
    if !(min_eigenvalue > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue });
    }
    if t == 0.0 {
        return Ok(identity(p.nrows()));
    }
    Ok(eig.map(|lambda| lambda.powf(t)))
}

/// Matrix exponential of the Hermitian part of `h`.
pub fn exp_herm(h: &CMatrix) -> CMatrix {
    HermitianEigen::new(h).map(f64::exp)
}

/// All eigenvalues with multiplicity.
///
/// Matrices that are normal up to [`NORMALITY_TOL`] are diagonalized through
/// their commuting Hermitian and skew-Hermitian parts; everything else goes
/// through a complex Schur form.
pub fn eigvals(a: &CMatrix) -> Result<Vec<Complex64>> {
    let scale = hs_norm_sqr(a);
    if scale == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); a.nrows()]);
    }
    if hs_norm(&self_commutator(a)) <= NORMALITY_TOL * scale {
        if let Some(values) = eigvals_normal(a) {
            return Ok(values);
        }
    }
    eigvals_schur(a)
}

fn eigvals_normal(a: &CMatrix) -> Option<Vec<Complex64>> {
    // X = (A + A†)/2 and Y = (A − A†)/2i commute; a generic real combination
    // of them has the joint eigenbasis. The mixing angle atan(MIX) must not be
    // a rational multiple of π, or pairs of roots of unity share a projection.
    const MIX: f64 = 0.577_215_664_901_532_9;
    const OFF_DIAGONAL_TOL: f64 = 1e-6;
    let ah = a.adjoint();
    let x = (a + &ah).scale(0.5);
    let y = (a - &ah) * Complex64::new(0.0, -0.5);
    let eig = HermitianEigen::new(&(x + y.scale(MIX)));
    let v = &eig.vectors;
    let mut d = v.adjoint() * a * v;
    let values: Vec<Complex64> = d.diagonal().iter().copied().collect();
    d.fill_diagonal(Complex64::new(0.0, 0.0));
    // Near-coincident projections of distinct eigenvalues leave mixing behind.
    (hs_norm(&d) <= OFF_DIAGONAL_TOL * hs_norm(a)).then_some(values)
}

fn eigvals_schur(a: &CMatrix) -> Result<Vec<Complex64>> {
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::NoConvergence)?;
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().copied().collect())
}

/// Condition number `σ_max / σ_min` in the spectral norm.
pub fn cond(a: &CMatrix) -> f64 {
    let s = SVD::new(a.clone(), false, false).singular_values;
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// The root of unity `e^{2πi·exponent/order}`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RootOfUnity {
    pub order: u64,
    pub exponent: u64,
}

impl RootOfUnity {
    pub fn new(order: u64, exponent: u64) -> Self {
        assert!(order >= 1, "root of unity needs a positive order");
        let m = exponent % order;
        let g = num_integer::gcd(m, order);
        RootOfUnity {
            order: order / g,
            exponent: m / g,
        }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * self.exponent as f64 / self.order as f64)
    }
}

/// Snap `lambda` to the root of unity of smallest order (at most
/// `max_order`) within chord distance `tol`.
///
/// The search walks the Stern-Brocot tree over the admissible arc of angles,
/// so its cost is logarithmic in `max_order`. Note that for `max_order`
/// beyond roughly `π/tol` every point of the unit circle snaps to something;
/// a large snapped order is the signal that `lambda` is not a genuine root.
pub fn snap_root_of_unity(lambda: Complex64, max_order: u64, tol: f64) -> Result<RootOfUnity> {
    let fail = || Error::NotARootOfUnity {
        value: lambda,
        max_order,
        tol,
    };
    if max_order == 0 || !(tol > 0.0) || !lambda.re.is_finite() || !lambda.im.is_finite() {
        return Err(fail());
    }
    let r = lambda.norm();
    let radial = (r - 1.0).abs();
    if radial > tol || r == 0.0 {
        return Err(fail());
    }
    // |λ − e^{iφ}|² = (r − 1)² + 4r·sin²((θ − φ)/2)
    let half_sin = ((tol * tol - radial * radial) / (4.0 * r)).sqrt().min(1.0);
    let half_width = 2.0 * half_sin.asin() / (2.0 * PI);
    let mut theta = lambda.arg() / (2.0 * PI);
    if theta < 0.0 {
        theta += 1.0;
    }
    let (lo, hi) = (theta - half_width, theta + half_width);
    let candidate = if lo <= 0.0 || hi >= 1.0 {
        Some((0, 1))
    } else {
        simplest_fraction(lo, hi, max_order)
    };
    let (m, n) = candidate.ok_or_else(fail)?;
    let root = RootOfUnity::new(n, m);
    if (lambda - root.value()).norm() <= tol {
        Ok(root)
    } else {
        Err(fail())
    }
}

/// The fraction `m/n` in `[lo, hi] ⊂ (0, 1)` with the smallest denominator,
/// provided that denominator is at most `max_den`.
fn simplest_fraction(lo: f64, hi: f64, max_den: u64) -> Option<(u64, u64)> {
    let (mut a, mut b, mut c, mut d) = (0u64, 1u64, 1u64, 1u64);
    loop {
        let (m, n) = (a + c, b + d);
        if n > max_den {
            return None;
        }
        let x = m as f64 / n as f64;
        if x < lo {
            // Advance the left bound by k mediant steps at once.
            let k = steps_toward(lo * b as f64 - a as f64, c as f64 - lo * d as f64);
            a += k * c;
            b += k * d;
        } else if x > hi {
            let k = steps_toward(c as f64 - hi * d as f64, hi * b as f64 - a as f64);
            c += k * a;
            d += k * b;
        } else {
            return Some((m, n));
        }
    }
}

/// Largest `k ≥ 1` with `k·den < num` (the strict-side step count).
fn steps_toward(num: f64, den: f64) -> u64 {
    let k = (num / den).ceil() - 1.0;
    if k.is_finite() && k >= 1.0 {
        k.min(1e15) as u64
    } else {
        1
    }
}

/// JSON layout of a [`CMatrix`]: `{"n": int, "re": [[...]], "im": [[...]]}`,
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrixJson {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for CMatrixJson {
    fn from(m: &CMatrix) -> Self {
        let n = m.nrows();
        let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        CMatrixJson {
            n,
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }
}

impl TryFrom<CMatrixJson> for CMatrix {
    type Error = Error;

    fn try_from(j: CMatrixJson) -> Result<Self> {
        let n = j.n;
        if n == 0 {
            return Err(Error::InvalidMatrix("dimension must be positive".into()));
        }
        let square = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !square(&j.re) || !square(&j.im) {
            return Err(Error::InvalidMatrix(format!("expected {n}x{n} re/im arrays")));
        }
        let m = CMatrix::from_fn(n, n, |i, k| Complex64::new(j.re[i][k], j.im[i][k]));
        if !is_finite(&m) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        Ok(m)
    }
}

/// `#[serde(with = "serde_cmatrix")]` adapter for [`CMatrix`] fields.
pub mod serde_cmatrix {
    use super::{CMatrix, CMatrixJson};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        CMatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let j = CMatrixJson::deserialize(d)?;
        CMatrix::try_from(j).map_err(serde::de::Error::custom)
    }
}
