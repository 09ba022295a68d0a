//! Moment-map gradient flow onto the Kempf-Ness set.
//!
//! `GL_n` acts on pairs by simultaneous conjugation and the orbit functional
//! is `F(A, B) = ‖A‖² + ‖B‖²`. For Hermitian `H`,
//!
//! ```text
//! d/dt F(e^{tH}·x) |_{t=0} = 2·Re tr(H·μ(x)),   μ = [A, A†] + [B, B†]
//! ```
//!
//! so `μ` is the moment map and `−μ` the descent direction. Zeros of `μ` are
//! exactly the points of minimal norm on their orbit.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bsrep::{conjugate_with_inverse, random_hermitian_unit, relation_residual, Rep};
use crate::error::{Error, Result};
use crate::numerics::{hs_inner_re, hs_norm, hs_norm_sqr, identity, self_commutator, CMatrix, HermitianEigen};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Stop once `‖μ‖ ≤ tol·(1 + energy)`.
    pub tol: f64,
    pub max_iter: usize,
    pub eta0: f64,
    pub armijo: f64,
    pub shrink: f64,
    /// Project the generator onto traceless matrices.
    pub sl_mode: bool,
    /// Sample the relation residual every this many iterations (0: only at
    /// the endpoints).
    pub residual_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            tol: 1e-10,
            max_iter: 100_000,
            eta0: 0.1,
            armijo: 0.5,
            shrink: 0.5,
            sl_mode: false,
            residual_every: 100,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tol > 0.0
            && self.eta0 > 0.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidMatrix(format!("invalid flow configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowOutcome {
    Converged,
    IterBudget,
    /// The line search could not find a step with a resolvable decrease.
    Stalled,
}

/// State after `iter` accepted steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub iter: usize,
    pub energy: f64,
    pub moment_norm: f64,
    /// Step length that produced this state (0 for the start).
    pub step: f64,
    /// Energy decrease of that step, evaluated from the increment so that it
    /// stays accurate far below the rounding level of the energy itself.
    pub decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
    pub outcome: FlowOutcome,
    /// `(iteration, relation residual)` samples.
    pub residuals: Vec<(usize, f64)>,
}

impl FlowTrace {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn initial(&self) -> &FlowRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &FlowRecord {
        self.records.last().expect("trace has an initial record")
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.1).fold(0.0, f64::max)
    }

    /// Every accepted step decreased the energy.
    pub fn is_monotone(&self) -> bool {
        self.records.iter().skip(1).all(|r| r.decrease >= 0.0)
    }
}

/// `‖A‖² + ‖B‖²`.
pub fn kn_energy(rep: &Rep) -> f64 {
    hs_norm_sqr(&rep.a) + hs_norm_sqr(&rep.b)
}

/// `[A, A†] + [B, B†]`, made traceless when `sl_mode` is set.
pub fn moment_map(rep: &Rep, sl_mode: bool) -> CMatrix {
    let mut mu = self_commutator(&rep.a) + self_commutator(&rep.b);
    if sl_mode {
        let n = rep.n();
        let shift = mu.trace() / Complex64::new(n as f64, 0.0);
        mu -= identity(n) * shift;
    }
    // Hermitian by construction; enforce it exactly.
    (&mu + mu.adjoint()).scale(0.5)
}

/// Directional derivative `2·Re⟨H, μ⟩` of the energy along `e^{tH}`.
pub fn energy_derivative(rep: &Rep, h: &CMatrix) -> f64 {
    2.0 * hs_inner_re(h, &moment_map(rep, false))
}

/// Conjugation by `exp(−η·μ)` computed as an increment `x ↦ x + D`, which
/// makes the energy change `2·Re⟨x, D⟩ + ‖D‖²` accurate to the size of `D`.
struct DescentKernel {
    eig: HermitianEigen,
}

struct Trial {
    rep: Rep,
    decrease: f64,
}

impl DescentKernel {
    fn new(mu: &CMatrix) -> Self {
        DescentKernel {
            eig: HermitianEigen::new(mu),
        }
    }

    fn trial(&self, rep: &Rep, eta: f64) -> Trial {
        // g − I and g⁻¹ − I for g = exp(−η·μ).
        let e_fwd = self.eig.map(|l| (-eta * l).exp_m1());
        let e_inv = self.eig.map(|l| (eta * l).exp_m1());
        let increment = |x: &CMatrix| -> CMatrix {
            let xe = x * &e_inv;
            &e_fwd * x + &xe + &e_fwd * &xe
        };
        let (da, db) = (increment(&rep.a), increment(&rep.b));
        let delta = 2.0 * hs_inner_re(&rep.a, &da) + hs_norm_sqr(&da) + 2.0 * hs_inner_re(&rep.b, &db) + hs_norm_sqr(&db);
        Trial {
            rep: Rep {
                group: rep.group,
                a: &rep.a + da,
                b: &rep.b + db,
            },
            decrease: -delta,
        }
    }
}

/// One conjugation step by `exp(−η·μ(rep))`.
pub fn flow_step(rep: &Rep, eta: f64, sl_mode: bool) -> Result<Rep> {
    if !(eta > 0.0) {
        return Err(Error::InvalidMatrix(format!("step {eta} must be positive")));
    }
    let mu = moment_map(rep, sl_mode);
    let eig = HermitianEigen::new(&mu);
    let g = eig.map(|l| (-eta * l).exp());
    let g_inv = eig.map(|l| (eta * l).exp());
    Ok(conjugate_with_inverse(rep, &g, &g_inv))
}

/// Descend to the Kempf-Ness set with Armijo backtracking.
///
/// Each iteration starts from `eta0` and shrinks until the energy decrease is
/// at least `armijo·η·2‖μ‖²`. Non-convergence is reported through
/// [`FlowOutcome`], not as an error.
pub fn flow(rep: &Rep, cfg: &FlowConfig) -> Result<(Rep, FlowTrace)> {
    cfg.validate()?;
    const MIN_STEP: f64 = 1e-30;

    let mut x = rep.clone();
    let mut energy = kn_energy(&x);
    let mut mu = moment_map(&x, cfg.sl_mode);
    let mut mu_norm = hs_norm(&mu);
    let mut records = vec![FlowRecord {
        iter: 0,
        energy,
        moment_norm: mu_norm,
        step: 0.0,
        decrease: 0.0,
    }];
    let mut residuals = vec![(0, relation_residual(&x)?)];

    let mut outcome = FlowOutcome::IterBudget;
    let mut iter = 0;
    loop {
        if mu_norm <= cfg.tol * (1.0 + energy) {
            outcome = FlowOutcome::Converged;
            break;
        }
        if iter >= cfg.max_iter {
            break;
        }
        let kernel = DescentKernel::new(&mu);
        let required = 2.0 * mu_norm * mu_norm;
        let mut eta = cfg.eta0;
        let accepted = loop {
            let t = kernel.trial(&x, eta);
            if t.decrease >= cfg.armijo * eta * required {
                break Some((t, eta));
            }
            eta *= cfg.shrink;
            if eta < MIN_STEP {
                break None;
            }
        };
        let Some((trial, eta)) = accepted else {
            outcome = FlowOutcome::Stalled;
            break;
        };
        iter += 1;
        x = trial.rep;
        energy = kn_energy(&x);
        mu = moment_map(&x, cfg.sl_mode);
        mu_norm = hs_norm(&mu);
        records.push(FlowRecord {
            iter,
            energy,
            moment_norm: mu_norm,
            step: eta,
            decrease: trial.decrease,
        });
        if cfg.residual_every > 0 && iter % cfg.residual_every == 0 {
            residuals.push((iter, relation_residual(&x)?));
        }
    }
    if residuals.last().map(|r| r.0) != Some(iter) {
        residuals.push((iter, relation_residual(&x)?));
    }
    Ok((
        x,
        FlowTrace {
            records,
            outcome,
            residuals,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub samples: usize,
    /// `min_g F(g·x) − F(x)` over the sampled `g`.
    pub min_margin: f64,
    pub pass: bool,
}

/// Sampling probe of `F(x) ≤ F(g·x)` over `g = exp(s·H)`, `‖H‖ = 1`,
/// `s ∈ (0, spread]`. A failure refutes minimality; a pass proves nothing.
pub fn verify_minimal(rep: &Rep, samples: usize, spread: f64, tol: f64, seed: u64) -> MinimalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = kn_energy(rep);
    let mut min_margin = f64::INFINITY;
    for _ in 0..samples {
        let h = random_hermitian_unit(rep.n(), &mut rng);
        // (0, spread]
        let s = spread * (1.0 - rng.random::<f64>());
        let eig = HermitianEigen::new(&h);
        let g = eig.map(|l| (s * l).exp());
        let g_inv = eig.map(|l| (-s * l).exp());
        let moved = conjugate_with_inverse(rep, &g, &g_inv);
        min_margin = min_margin.min(kn_energy(&moved) - base);
    }
    if samples == 0 {
        min_margin = 0.0;
    }
    MinimalityReport {
        samples,
        min_margin,
        pass: min_margin >= -tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsrep::{conjugate, from_orbit_datum, random_conditioned, random_unitary, BSGroup};
    use crate::census::OrbitDatum;
    use crate::numerics::{real_diag, RootOfUnity};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn g23() -> BSGroup {
        BSGroup::new(2, 3).unwrap()
    }

    fn block5(chi: Complex64) -> Rep {
        let d = OrbitDatum {
            p: 2,
            q: 3,
            modulus: 5,
            multiplier: 4,
            orbit: vec![1, 4],
            k: 2,
        };
        from_orbit_datum(&d, chi).unwrap()
    }

    #[test]
    fn energy_examples() {
        assert_eq!(kn_energy(&Rep::trivial(g23(), 2)), 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=4 {
            let u = Rep::new(g23(), random_unitary(n, &mut rng), random_unitary(n, &mut rng)).unwrap();
            assert!((kn_energy(&u) - 2.0 * n as f64).abs() < 1e-12);
        }
        let r = conjugate(&block5(c(1.0, 0.0)), &real_diag(&[2.0, 0.5])).unwrap();
        assert!(kn_energy(&r) > 4.0);
    }

    #[test]
    fn moment_map_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = Rep::new(g23(), random_unitary(3, &mut rng), random_unitary(3, &mut rng)).unwrap();
        assert!(hs_norm(&moment_map(&u, false)) < 1e-14);

        let a = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        let r = Rep::new(g23(), a, identity(2)).unwrap();
        let expected = real_diag(&[1.0, -1.0]);
        assert!(hs_norm(&(moment_map(&r, false) - expected)) < 1e-15);

        // Normal but not unitary.
        let r = Rep::new(g23(), real_diag(&[3.0, -0.5]), crate::numerics::diag(&[c(0., 2.), c(1., 1.)])).unwrap();
        assert_eq!(hs_norm(&moment_map(&r, false)), 0.0);
    }

    #[test]
    fn step_at_critical_point_is_identity() {
        let r = block5(c(0.0, 1.0));
        let s = flow_step(&r, 0.7, false).unwrap();
        assert!(hs_norm(&(&s.a - &r.a)) < 1e-12 && hs_norm(&(&s.b - &r.b)) < 1e-12);
    }

    #[test]
    fn small_step_decreases_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g = random_conditioned(2, 10.0, &mut rng);
            let r = conjugate(&block5(c(1.5, 0.5)), &g).unwrap();
            let s = flow_step(&r, 1e-4, false).unwrap();
            assert!(kn_energy(&s) < kn_energy(&r));
        }
    }

    #[test]
    fn sl_step_preserves_determinants() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_conditioned(2, 10.0, &mut rng);
        let r = conjugate(&block5(c(1.0, 0.0)), &g).unwrap();
        let r = r.to_special_linear(1e-12).unwrap();
        let s = flow_step(&r, 0.01, true).unwrap();
        assert!((s.a.determinant() - r.a.determinant()).norm() < 1e-10);
        assert!((s.b.determinant() - r.b.determinant()).norm() < 1e-10);
        assert!(hs_norm(&moment_map(&r, true)).is_finite());
        assert!(moment_map(&r, true).trace().norm() < 1e-12);
    }

    #[test]
    fn unitary_start_converges_immediately() {
        let (out, trace) = flow(&block5(c(0.6, 0.8)), &FlowConfig::default()).unwrap();
        assert_eq!(trace.outcome, FlowOutcome::Converged);
        assert_eq!(trace.iterations(), 0);
        assert_eq!(out, block5(c(0.6, 0.8)));
    }

    #[test]
    fn conjugated_block_flows_to_kn_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let g = random_conditioned(2, 10.0, &mut rng);
            let start = conjugate(&block5(c(1.0, 0.0)), &g).unwrap();
            let (end, trace) = flow(&start, &FlowConfig::default()).unwrap();
            assert_eq!(trace.outcome, FlowOutcome::Converged);
            assert!(trace.last().moment_norm <= 1e-8);
            assert!(kn_energy(&end) <= kn_energy(&start));
            assert!(trace.is_monotone());
            let r0 = trace.residuals[0].1;
            assert!(trace.max_residual() <= 10.0 * r0 + 1e-9);
            for z in crate::numerics::eigvals(&end.b).unwrap() {
                let root = crate::numerics::snap_root_of_unity(z, 5, 1e-6).unwrap();
                assert_eq!(root.order, 5);
            }
        }
    }

    #[test]
    fn minimality_probe() {
        let r = block5(RootOfUnity::new(3, 1).value());
        let rep = verify_minimal(&r, 1000, 2.0, 1e-9, 1);
        assert!(rep.pass, "{rep:?}");
        assert!(rep.min_margin >= -1e-9);

        let g = real_diag(&[3.0, 1.0 / 3.0]);
        let bad = conjugate(&r, &g).unwrap();
        let rep = verify_minimal(&bad, 1000, 2.0, 1e-9, 1);
        assert!(!rep.pass);
        assert!(rep.min_margin < 0.0);

        let (flowed, _) = flow(&bad, &FlowConfig::default()).unwrap();
        assert!(verify_minimal(&flowed, 1000, 2.0, 1e-6, 2).pass);
    }
}
