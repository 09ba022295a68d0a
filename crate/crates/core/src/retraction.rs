//! Retraction of a Kempf-Ness point onto a unitary representation.
//!
//! Once `⟨B⟩ ⊂ U(n)` and `A·B·A⁻¹ = B^j`, write `A = U·P` (polar). Uniqueness
//! of the polar decomposition forces `U·B·U† = B^j` and `[P, B] = 0`, so
//! `A_t = U·P^t` satisfies the defining relation for every `t ∈ [0, 1]` and
//! keeps the same exponent `j`. At `t = 0` the pair `(U, B)` is unitary.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::bsrep::{check_in_variety, relation_residual, Rep, REP_TOL};
use crate::census::order_bound;
use crate::compactify::{averaged_form, certify_finite_order, closest_power, conjugate_into_unitary, generated_group};
use crate::error::{Error, Result, Stage};
use crate::kempfness::{flow, FlowConfig, FlowOutcome, FlowTrace};
use crate::numerics::{hs_norm, hs_norm_sqr, polar, self_commutator, unitarity_defect, HermitianEigen, RootOfUnity};

/// Tolerance on `‖[P, B]‖ / ‖P‖` in [`retract_a`].
pub const POLAR_COMMUTATION_TOL: f64 = 1e-6;

/// `B` must be unitary to this before the polar retraction.
pub const UNITARY_INPUT_TOL: f64 = 1e-8;

pub const DEFAULT_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub rep: Rep,
}

/// Samples of `t ↦ (U·P^t, B)` from `t = 1` down to `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetractionPath {
    pub samples: Vec<PathSample>,
}

impl RetractionPath {
    pub fn start(&self) -> &Rep {
        &self.samples[0].rep
    }

    pub fn endpoint(&self) -> &Rep {
        &self.samples.last().expect("path is never empty").rep
    }

    /// Relation residual at every sample.
    pub fn residuals(&self) -> Result<Vec<f64>> {
        self.samples.iter().map(|s| relation_residual(&s.rep)).collect()
    }

    pub fn max_residual(&self) -> Result<f64> {
        Ok(self.residuals()?.into_iter().fold(0.0, f64::max))
    }

    /// The best exponent `j` with `A_t·B·A_t⁻¹ ≈ B^j` at each sample, with the
    /// achieved distance.
    pub fn exponents(&self, order: u64) -> Result<Vec<(u64, f64)>> {
        self.samples.iter().map(|s| closest_power(&s.rep, order)).collect()
    }
}

/// Polar-scaling path from `A` to its unitary factor.
pub fn retract_a(rep: &Rep, num_samples: usize) -> Result<RetractionPath> {
    if num_samples < 2 {
        return Err(Error::InvalidMatrix(format!("need at least 2 samples, got {num_samples}")));
    }
    let defect = unitarity_defect(&rep.b);
    if !(defect <= UNITARY_INPUT_TOL) {
        return Err(Error::NotUnitary { defect });
    }
    let (u, p) = polar(&rep.a)?;
    let commutator = &p * &rep.b - &rep.b * &p;
    let defect = hs_norm(&commutator) / hs_norm(&p);
    if !(defect <= POLAR_COMMUTATION_TOL) {
        return Err(Error::PolarObstruction { defect });
    }
    let eig = HermitianEigen::new(&p);
    let mut samples = Vec::with_capacity(num_samples);
    for i in 0..num_samples {
        let t = 1.0 - i as f64 / (num_samples - 1) as f64;
        let a = match i {
            0 => rep.a.clone(),
            _ if i == num_samples - 1 => u.clone(),
            _ => &u * eig.map(|l| l.powf(t)),
        };
        samples.push(PathSample {
            t,
            rep: Rep {
                group: rep.group,
                a,
                b: rep.b.clone(),
            },
        });
    }
    Ok(RetractionPath { samples })
}

/// `‖A†A − I‖, ‖B†B − I‖ ≤ tol` and relation residual `≤ tol`.
pub fn verify_unitary_rep(rep: &Rep, tol: f64) -> bool {
    unitarity_defect(&rep.a) <= tol
        && unitarity_defect(&rep.b) <= tol
        && relation_residual(rep).is_ok_and(|r| r <= tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub flow: FlowConfig,
    /// Input gate on the relation residual.
    pub rep_tol: f64,
    /// Eigenvalue snapping tolerance for order detection.
    pub snap_tol: f64,
    pub normality_tol: f64,
    pub num_samples: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            flow: FlowConfig::default(),
            rep_tol: REP_TOL,
            snap_tol: 1e-6,
            normality_tol: 1e-6,
            num_samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub outcome: FlowOutcome,
    pub iterations: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub final_moment_norm: f64,
    pub max_residual: f64,
    pub monotone: bool,
}

impl From<&FlowTrace> for FlowSummary {
    fn from(t: &FlowTrace) -> Self {
        FlowSummary {
            outcome: t.outcome,
            iterations: t.iterations(),
            initial_energy: t.initial().energy,
            final_energy: t.last().energy,
            final_moment_norm: t.last().moment_norm,
            max_residual: t.max_residual(),
            monotone: t.is_monotone(),
        }
    }
}

/// Everything measured along [`full_pipeline`]; stages that did not run are
/// `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub p: i64,
    pub q: i64,
    pub n: usize,
    pub initial_residual: Option<f64>,
    pub flow: Option<FlowSummary>,
    /// `∏|p^k − q^k|` in decimal.
    pub order_bound: String,
    pub detected_order: Option<u64>,
    pub order_within_bound: Option<bool>,
    pub eigenvalue_roots: Vec<RootOfUnity>,
    pub power_defect: Option<f64>,
    /// `‖[A, A†]‖ / ‖A‖²` at the Kempf-Ness point; zero iff `A` is normal,
    /// hence diagonalizable.
    pub a_normality_defect: Option<f64>,
    pub b_normality_defect: Option<f64>,
    /// `‖Q − I‖` for the averaged form.
    pub form_deviation: Option<f64>,
    /// `max_h ‖h†Qh − Q‖`.
    pub form_invariance_defect: Option<f64>,
    pub normality_exponent: Option<u64>,
    pub normality_distance: Option<f64>,
    pub exponent_constant_along_path: Option<bool>,
    pub max_path_residual: Option<f64>,
    pub endpoint_residual: Option<f64>,
    pub endpoint_unitarity_a: Option<f64>,
    pub endpoint_unitarity_b: Option<f64>,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct PipelineRun {
    pub result: Result<Rep>,
    pub diagnostics: Diagnostics,
    pub trace: Option<FlowTrace>,
    pub path: Option<RetractionPath>,
}

impl PipelineRun {
    pub fn is_success(&self) -> bool {
        self.result.is_ok()
    }
}

/// Flow to the Kempf-Ness set, detect `⟨B⟩`, conjugate it into `U(n)`, then
/// retract `A` to its unitary polar factor.
pub fn full_pipeline(rep: &Rep, cfg: &PipelineConfig) -> PipelineRun {
    let mut run = PipelineRun {
        result: Err(Error::NoConvergence),
        diagnostics: Diagnostics {
            p: rep.group.p(),
            q: rep.group.q(),
            n: rep.n(),
            order_bound: order_bound(rep.group.p(), rep.group.q(), rep.n()).to_string(),
            ..Default::default()
        },
        trace: None,
        path: None,
    };
    run.result = run_stages(rep, cfg, &mut run.diagnostics, &mut run.trace, &mut run.path);
    if let Err(e) = &run.result {
        run.diagnostics.failed_stage = e.stage();
        run.diagnostics.error = Some(e.to_string());
    }
    run
}

fn run_stages(
    rep: &Rep,
    cfg: &PipelineConfig,
    diag: &mut Diagnostics,
    trace_out: &mut Option<FlowTrace>,
    path_out: &mut Option<RetractionPath>,
) -> Result<Rep> {
    let residual = check_in_variety(rep, cfg.rep_tol).map_err(|e| e.at(Stage::Input))?;
    diag.initial_residual = Some(residual);

    let (kn, trace) = flow(rep, &cfg.flow).map_err(|e| e.at(Stage::Flow))?;
    let summary = FlowSummary::from(&trace);
    *trace_out = Some(trace);
    diag.flow = Some(summary.clone());
    diag.a_normality_defect = Some(normality_defect(&kn.a));
    diag.b_normality_defect = Some(normality_defect(&kn.b));
    if summary.outcome != FlowOutcome::Converged {
        let outcome = match summary.outcome {
            FlowOutcome::Stalled => "stalled",
            _ => "iteration budget exhausted",
        };
        return Err(Error::FlowNotConverged {
            outcome,
            iterations: summary.iterations,
            moment_norm: summary.final_moment_norm,
        }
        .at(Stage::Flow));
    }

    let bound = order_bound(rep.group.p(), rep.group.q(), rep.n());
    let max_order = bound.to_u64().unwrap_or(u64::MAX);
    let cert = certify_finite_order(&kn.b, max_order, cfg.snap_tol).map_err(|e| e.at(Stage::DetectOrder))?;
    diag.detected_order = Some(cert.order);
    diag.order_within_bound = Some(BigUint::from(cert.order) <= bound);
    diag.eigenvalue_roots = cert.roots.clone();
    diag.power_defect = Some(cert.power_defect);

    let group = generated_group(&kn.b, cert.order).map_err(|e| e.at(Stage::Group))?;
    let form = averaged_form(&group);
    diag.form_deviation = Some(form.deviation_from_identity());
    diag.form_invariance_defect = Some(form.invariance_defect(&group));
    let compact = conjugate_into_unitary(&kn, &form).map_err(|e| e.at(Stage::Compactify))?;

    let (j, distance) = closest_power(&compact, cert.order).map_err(|e| e.at(Stage::Normality))?;
    diag.normality_distance = Some(distance);
    if !(distance <= cfg.normality_tol) {
        return Err(Error::NotNormalizing {
            best_exponent: j,
            distance,
        }
        .at(Stage::Normality));
    }
    diag.normality_exponent = Some(j);

    let path = retract_a(&compact, cfg.num_samples).map_err(|e| e.at(Stage::Retract))?;
    let exponents = path.exponents(cert.order).map_err(|e| e.at(Stage::Retract))?;
    diag.exponent_constant_along_path = Some(
        exponents
            .iter()
            .all(|&(jt, d)| jt == j && d <= cfg.normality_tol),
    );
    diag.max_path_residual = Some(path.max_residual().map_err(|e| e.at(Stage::Retract))?);
    let end = path.endpoint().clone();
    diag.endpoint_residual = Some(relation_residual(&end).map_err(|e| e.at(Stage::Retract))?);
    diag.endpoint_unitarity_a = Some(unitarity_defect(&end.a));
    diag.endpoint_unitarity_b = Some(unitarity_defect(&end.b));
    *path_out = Some(path);
    Ok(end)
}

fn normality_defect(x: &crate::numerics::CMatrix) -> f64 {
    let scale = hs_norm_sqr(x);
    if scale == 0.0 {
        0.0
    } else {
        hs_norm(&self_commutator(x)) / scale
    }
}
