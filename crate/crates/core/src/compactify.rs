//! Finite cyclic groups `⟨ρ(b)⟩` and the choice of a maximal compact
//! subgroup containing them.
//!
//! Maximal compacts of `GL_n(ℂ)` are the unitary groups
//! `U(Q) = {g : g†·Q·g = Q}` of positive-definite Hermitian forms `Q`. Averaging
//! `h†h` over a finite group gives a form it preserves, and the identity form
//! whenever the group is already unitary.

use serde::{Deserialize, Serialize};

use crate::bsrep::{conjugate_with_inverse, Rep};
use crate::error::{Error, Result};
use crate::numerics::{eigvals, herm_power, hs_norm, identity, inverse, pow_unsigned, snap_root_of_unity, CMatrix, RootOfUnity};

/// Tolerance for `generator^order = I` in [`FiniteCyclicGroup`].
pub const GROUP_POWER_TOL: f64 = 1e-8;

/// Minimum Hilbert-Schmidt distance between distinct group elements.
pub const DISTINCTNESS_TOL: f64 = 1e-6;

/// Result of eigenvalue-first order detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCertificate {
    pub order: u64,
    /// Snapped eigenvalues, in the order the eigensolver returned them.
    pub roots: Vec<RootOfUnity>,
    /// `‖B^order − I‖_HS`.
    pub power_defect: f64,
}

/// Order of a finite-order matrix: the lcm of the orders of its snapped
/// eigenvalues, backed by a check that `B^order ≈ I`.
pub fn detect_finite_order(b: &CMatrix, max_order: u64, tol: f64) -> Result<u64> {
    certify_finite_order(b, max_order, tol).map(|c| c.order)
}

pub fn certify_finite_order(b: &CMatrix, max_order: u64, tol: f64) -> Result<OrderCertificate> {
    let n = b.nrows();
    let mut roots = Vec::with_capacity(n);
    let mut order = 1u64;
    for z in eigvals(b)? {
        let root = snap_root_of_unity(z, max_order, tol)
            .map_err(|_| Error::NotFiniteOrder(format!("eigenvalue {z} is not a root of unity of order <= {max_order}")))?;
        order = lcm_checked(order, root.order)
            .ok_or_else(|| Error::NotFiniteOrder("order overflows u64".into()))?;
        roots.push(root);
    }
    let power_defect = hs_norm(&(pow_unsigned(b, order) - identity(n)));
    let allowed = n as f64 * tol * order as f64;
    if !(power_defect <= allowed) {
        return Err(Error::NotFiniteOrder(format!(
            "‖B^{order} − I‖ = {power_defect:e} exceeds {allowed:e}"
        )));
    }
    Ok(OrderCertificate {
        order,
        roots,
        power_defect,
    })
}

fn lcm_checked(a: u64, b: u64) -> Option<u64> {
    (a / num_integer::gcd(a, b)).checked_mul(b)
}

/// The cyclic group `{B^j : 0 ≤ j < order}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteCyclicGroup {
    generator: CMatrix,
    order: u64,
    elements: Vec<CMatrix>,
}

impl FiniteCyclicGroup {
    pub fn generator(&self) -> &CMatrix {
        &self.generator
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    /// All elements unitary to within `tol`.
    pub fn is_unitary(&self, tol: f64) -> bool {
        self.elements
            .iter()
            .all(|h| crate::numerics::unitarity_defect(h) <= tol)
    }
}

pub fn generated_group(b: &CMatrix, order: u64) -> Result<FiniteCyclicGroup> {
    if order == 0 {
        return Err(Error::DegenerateGroup("order must be positive".into()));
    }
    let n = b.nrows();
    let mut elements = Vec::with_capacity(order as usize);
    let mut h = identity(n);
    for _ in 0..order {
        let next = &h * b;
        elements.push(h);
        h = next;
    }
    let defect = hs_norm(&(h - identity(n)));
    if !(defect <= GROUP_POWER_TOL) {
        return Err(Error::DegenerateGroup(format!(
            "generator^{order} differs from I by {defect:e}"
        )));
    }
    for i in 0..elements.len() {
        for j in i + 1..elements.len() {
            let d = hs_norm(&(&elements[i] - &elements[j]));
            if !(d > DISTINCTNESS_TOL) {
                return Err(Error::DegenerateGroup(format!(
                    "elements {i} and {j} coincide (distance {d:e})"
                )));
            }
        }
    }
    Ok(FiniteCyclicGroup {
        generator: b.clone(),
        order,
        elements,
    })
}

/// Positive-definite Hermitian form with unit determinant, standing for the
/// maximal compact `U(Q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermitianForm {
    #[serde(with = "crate::numerics::serde_cmatrix")]
    q: CMatrix,
}

impl HermitianForm {
    /// Symmetrize and rescale to determinant one.
    pub fn new(q: CMatrix) -> Result<Self> {
        let q = crate::numerics::hermitian_part(&q);
        let n = q.nrows();
        // Positive definiteness check and determinant from the spectrum.
        let eig = crate::numerics::HermitianEigen::new(&q);
        let min_eigenvalue = eig.min_value();
        if !(min_eigenvalue > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        let log_det: f64 = eig.values.iter().map(|l| l.ln()).sum();
        let scale = (-log_det / n as f64).exp();
        Ok(HermitianForm { q: q.scale(scale) })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.q
    }

    /// `max_h ‖h†·Q·h − Q‖_HS`.
    pub fn invariance_defect(&self, group: &FiniteCyclicGroup) -> f64 {
        group
            .elements()
            .iter()
            .map(|h| hs_norm(&(h.adjoint() * &self.q * h - &self.q)))
            .fold(0.0, f64::max)
    }

    /// `‖Q − I‖_HS`.
    pub fn deviation_from_identity(&self) -> f64 {
        hs_norm(&(&self.q - identity(self.q.nrows())))
    }
}

/// `Q ∝ (1/|H|)·Σ_{h ∈ H} h†h`, normalized to determinant one.
pub fn averaged_form(group: &FiniteCyclicGroup) -> HermitianForm {
    form_from_elements(group.elements()).expect("a mean of h†h over invertible h is positive definite")
}

/// The same average over an arbitrary list of matrices, group or not.
pub fn form_from_elements(elements: &[CMatrix]) -> Result<HermitianForm> {
    let Some(first) = elements.first() else {
        return Err(Error::DegenerateGroup("no elements to average".into()));
    };
    let n = first.nrows();
    let mut sum = CMatrix::zeros(n, n);
    for h in elements {
        sum += h.adjoint() * h;
    }
    HermitianForm::new(sum.unscale(elements.len() as f64))
}

/// Conjugate by `Q^{1/2}`, which carries `U(Q)` onto `U(n)`.
pub fn conjugate_into_unitary(rep: &Rep, form: &HermitianForm) -> Result<Rep> {
    let root = herm_power(form.matrix(), 0.5)?;
    let root_inv = herm_power(form.matrix(), -0.5)?;
    Ok(conjugate_with_inverse(rep, &root, &root_inv))
}

/// The `j ∈ [0, order)` with `A·B·A⁻¹ = B^j`, certifying that `A`
/// normalizes `⟨B⟩`.
pub fn normality_exponent(rep: &Rep, order: u64, tol: f64) -> Result<u64> {
    let (j, distance) = closest_power(rep, order)?;
    if distance <= tol {
        Ok(j)
    } else {
        Err(Error::NotNormalizing {
            best_exponent: j,
            distance,
        })
    }
}

/// `argmin_j ‖A·B·A⁻¹ − B^j‖` and the minimum.
pub fn closest_power(rep: &Rep, order: u64) -> Result<(u64, f64)> {
    if order == 0 {
        return Err(Error::DegenerateGroup("order must be positive".into()));
    }
    let target = &rep.a * &rep.b * inverse(&rep.a)?;
    let mut power = identity(rep.n());
    let mut best = (0, f64::INFINITY);
    for j in 0..order {
        let d = hs_norm(&(&target - &power));
        if d < best.1 {
            best = (j, d);
        }
        power = &power * &rep.b;
    }
    Ok(best)
}
