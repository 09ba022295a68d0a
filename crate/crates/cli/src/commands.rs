//! One function per subcommand. Each returns the process exit status and
//! reports problems on stderr.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use bsretract_core::bsrep::{check_in_variety, random_rep_with, relation_residual, BSGroup, LinearGroup, RandomRepOptions, Rep};
use bsretract_core::census::{enumerate_orbits, order_bound};
use bsretract_core::compactify::{averaged_form, certify_finite_order, closest_power, conjugate_into_unitary, generated_group};
use bsretract_core::kempfness::{flow, kn_energy, moment_map, FlowOutcome};
use bsretract_core::numerics::{hs_norm, unitarity_defect};
use bsretract_core::retraction::{full_pipeline, retract_a, verify_unitary_rep, FlowSummary, PipelineConfig};
use bsretract_core::{Error, Stage};

use crate::manifest::{Parameters, RunManifest};
use crate::output::{census_json_lines, census_summary_csv, path_csv, read_text, to_json, trace_csv, write_text};
use crate::suite::{run_suite, SuiteConfig};
use crate::Exit;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Globals {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub sl: bool,
    /// Print the full report document on stdout.
    pub json: bool,
    pub path_csv: Option<PathBuf>,
    pub trace_csv: Option<PathBuf>,
    /// Where to write the run manifest; stderr when absent.
    pub manifest: Option<PathBuf>,
}

impl Default for Globals {
    fn default() -> Self {
        let cfg = PipelineConfig::default();
        Globals {
            tol: cfg.flow.tol,
            max_iter: cfg.flow.max_iter,
            seed: 0,
            sl: false,
            json: false,
            path_csv: None,
            trace_csv: None,
            manifest: None,
        }
    }
}

impl Globals {
    pub fn pipeline_config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.flow.tol = self.tol;
        cfg.flow.max_iter = self.max_iter;
        cfg.flow.sl_mode = self.sl;
        cfg
    }

    fn parameters(&self) -> Parameters {
        Parameters::new(self.seed, &self.pipeline_config())
    }
}

/// Output locations of a command that produces a representation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    /// Endpoint representation; stdout when absent (unless `--json`).
    pub out: Option<PathBuf>,
    /// Report document: manifest plus command-specific diagnostics.
    pub report: Option<PathBuf>,
}

fn fail(exit: Exit, msg: impl std::fmt::Display) -> Exit {
    eprintln!("error: {msg}");
    exit
}

fn write_or_fail(path: Option<&Path>, text: &str) -> Result<(), Exit> {
    write_text(path, text).map_err(|e| {
        let target = path.map_or("stdout".to_string(), |p| p.display().to_string());
        fail(Exit::BadInput, format!("cannot write {target}: {e}"))
    })
}

fn emit_manifest(globals: &Globals, manifest: &RunManifest) -> Result<(), Exit> {
    match &globals.manifest {
        Some(path) => write_or_fail(Some(path), &to_json(manifest)),
        None => {
            eprintln!("manifest {}", serde_json::to_string(manifest).expect("manifest serializes"));
            Ok(())
        }
    }
}

/// Write the primary output, the report document and the manifest.
fn finish<T: Serialize>(
    globals: &Globals,
    outputs: &Outputs,
    mut manifest: RunManifest,
    exit: Exit,
    summary: String,
    rep: Option<&Rep>,
    details: T,
) -> Exit {
    if let Some(p) = &outputs.out {
        manifest.add_output(p);
    }
    if let Some(p) = &outputs.report {
        manifest.add_output(p);
    }
    manifest.finish(exit, summary.clone());
    let doc = json!({ "manifest": manifest, "result": rep, "details": details });
    let written = (|| {
        if let Some(rep) = rep {
            if outputs.out.is_some() || !globals.json {
                write_or_fail(outputs.out.as_deref(), &to_json(rep))?;
            }
        }
        if let Some(p) = &outputs.report {
            write_or_fail(Some(p), &to_json(&doc))?;
        }
        if globals.json {
            write_or_fail(None, &to_json(&doc))?;
        } else {
            emit_manifest(globals, &manifest)?;
        }
        Ok(())
    })();
    eprintln!("{summary}");
    match written {
        Ok(()) => exit,
        Err(e) => e,
    }
}

fn load_rep(path: &Path, globals: &Globals) -> Result<(Rep, String), Exit> {
    let text = read_text(path).map_err(|e| fail(Exit::BadInput, format!("cannot read {}: {e}", path.display())))?;
    let rep: Rep =
        serde_json::from_str(&text).map_err(|e| fail(Exit::BadInput, format!("invalid representation in {}: {e}", path.display())))?;
    let rep = if globals.sl {
        rep.to_special_linear(globals.pipeline_config().rep_tol)
            .map_err(|e| fail(Exit::BadInput, e))?
    } else {
        rep
    };
    Ok((rep, text))
}

fn input_manifest(command: &str, globals: &Globals, rep: &Rep, path: &Path, text: &str) -> RunManifest {
    let params = globals
        .parameters()
        .with_shape(rep.group.p(), rep.group.q(), Some(rep.n()));
    RunManifest::new(command, params, Some(path.display().to_string()), text.as_bytes())
}

pub fn census(p: i64, q: i64, n_max: usize, out: Option<&Path>, summary_csv: Option<&Path>, globals: &Globals) -> Exit {
    let group = match BSGroup::new(p, q) {
        Ok(g) => g,
        Err(e) => return fail(Exit::BadInput, e),
    };
    let census = enumerate_orbits(group, n_max);
    let params = globals.parameters().with_shape(p, q, Some(n_max));
    let mut manifest = RunManifest::new("census", params, None, &[]);
    let run = (|| {
        write_or_fail(out, &census_json_lines(&census))?;
        let csv = census_summary_csv(&census);
        match summary_csv {
            Some(path) => write_or_fail(Some(path), &csv)?,
            None => eprint!("{csv}"),
        }
        Ok(())
    })();
    if let Err(e) = run {
        return e;
    }
    for skipped in &census.skipped {
        eprintln!("warning: not enumerated: {skipped:?}");
    }
    out.into_iter().chain(summary_csv).for_each(|p| manifest.add_output(p));
    let summary = format!("{} orbits for BS({p},{q}) up to dimension {n_max}", census.orbits.len());
    manifest.finish(Exit::Ok, summary);
    match emit_manifest(globals, &manifest) {
        Ok(()) => Exit::Ok,
        Err(e) => e,
    }
}

pub fn construct(p: i64, q: i64, n: usize, outputs: &Outputs, globals: &Globals) -> Exit {
    let group = match BSGroup::new(p, q) {
        Ok(g) => g,
        Err(e) => return fail(Exit::BadInput, e),
    };
    if n == 0 {
        return fail(Exit::BadInput, "dimension must be positive");
    }
    let opts = RandomRepOptions {
        linear: if globals.sl { LinearGroup::Special } else { LinearGroup::General },
        ..Default::default()
    };
    let params = globals.parameters().with_shape(p, q, Some(n));
    let manifest = RunManifest::new("construct", params, None, &[]);
    match random_rep_with(group, n, globals.seed, &opts) {
        Ok(rep) => {
            let residual = relation_residual(&rep).unwrap_or(f64::NAN);
            let summary = format!("constructed BS({p},{q}) representation of dimension {n}, residual {residual:e}");
            finish(globals, outputs, manifest, Exit::Ok, summary, Some(&rep), json!({ "residual": residual }))
        }
        Err(e) => fail(Exit::from_error(&e), e),
    }
}

pub fn flow_cmd(input: &Path, outputs: &Outputs, globals: &Globals) -> Exit {
    let (rep, text) = match load_rep(input, globals) {
        Ok(x) => x,
        Err(e) => return e,
    };
    let manifest = input_manifest("flow", globals, &rep, input, &text);
    let cfg = globals.pipeline_config();
    if let Err(e) = check_in_variety(&rep, cfg.rep_tol) {
        return fail(Exit::BadInput, e);
    }
    let (end, trace) = match flow(&rep, &cfg.flow) {
        Ok(x) => x,
        Err(e) => {
            let e = e.at(Stage::Flow);
            return fail(Exit::from_error(&e), e);
        }
    };
    if let Some(path) = &globals.trace_csv {
        if let Err(e) = write_or_fail(Some(path), &trace_csv(&trace)) {
            return e;
        }
    }
    let summary = FlowSummary::from(&trace);
    let exit = if trace.outcome == FlowOutcome::Converged { Exit::Ok } else { Exit::FlowBudget };
    let line = format!(
        "flow {:?} after {} iterations: energy {:e} -> {:e}, moment norm {:e}",
        summary.outcome, summary.iterations, summary.initial_energy, summary.final_energy, summary.final_moment_norm
    );
    finish(globals, outputs, manifest, exit, line, Some(&end), json!({ "flow": summary }))
}

#[derive(Debug, Clone, Serialize)]
struct RetractDetails {
    max_path_residual: f64,
    endpoint_residual: f64,
    endpoint_unitarity_a: f64,
    endpoint_unitarity_b: f64,
}

pub fn retract(input: &Path, outputs: &Outputs, globals: &Globals) -> Exit {
    let (rep, text) = match load_rep(input, globals) {
        Ok(x) => x,
        Err(e) => return e,
    };
    let manifest = input_manifest("retract", globals, &rep, input, &text);
    let cfg = globals.pipeline_config();
    if let Err(e) = check_in_variety(&rep, cfg.rep_tol) {
        return fail(Exit::BadInput, e);
    }
    let measured = retract_a(&rep, cfg.num_samples).and_then(|path| {
        let details = RetractDetails {
            max_path_residual: path.max_residual()?,
            endpoint_residual: relation_residual(path.endpoint())?,
            endpoint_unitarity_a: unitarity_defect(&path.endpoint().a),
            endpoint_unitarity_b: unitarity_defect(&path.endpoint().b),
        };
        Ok((path, details))
    });
    let (path, details) = match measured {
        Ok(x) => x,
        Err(e) => {
            let e = e.at(Stage::Retract);
            return fail(Exit::from_error(&e), e);
        }
    };
    if let Some(p) = &globals.path_csv {
        if let Err(e) = write_or_fail(Some(p), &path_csv(&path)) {
            return e;
        }
    }
    let end = path.endpoint();
    let exit = if verify_unitary_rep(end, cfg.rep_tol) { Exit::Ok } else { Exit::Structural };
    let summary = format!(
        "retracted along {} samples; endpoint unitarity defect {:e}",
        path.samples.len(),
        details.endpoint_unitarity_a
    );
    finish(globals, outputs, manifest, exit, summary, Some(end), details)
}

pub fn pipeline(input: &Path, outputs: &Outputs, globals: &Globals) -> Exit {
    let (rep, text) = match load_rep(input, globals) {
        Ok(x) => x,
        Err(e) => return e,
    };
    let manifest = input_manifest("pipeline", globals, &rep, input, &text);
    let cfg = globals.pipeline_config();
    let run = full_pipeline(&rep, &cfg);
    if let (Some(p), Some(trace)) = (&globals.trace_csv, &run.trace) {
        if let Err(e) = write_or_fail(Some(p), &trace_csv(trace)) {
            return e;
        }
    }
    if let (Some(p), Some(path)) = (&globals.path_csv, &run.path) {
        if let Err(e) = write_or_fail(Some(p), &path_csv(path)) {
            return e;
        }
    }
    let (exit, summary) = match &run.result {
        Ok(end) if verify_unitary_rep(end, cfg.rep_tol) => (
            Exit::Ok,
            format!(
                "unitary endpoint: order {}, exponent {}",
                run.diagnostics.detected_order.unwrap_or(0),
                run.diagnostics.normality_exponent.unwrap_or(0)
            ),
        ),
        Ok(_) => (Exit::Structural, "endpoint failed the unitarity check".to_string()),
        Err(e) => (Exit::from_error(e), format!("error: {e}")),
    };
    finish(globals, outputs, manifest, exit, summary, run.result.as_ref().ok(), &run.diagnostics)
}

/// Structure found on a representation as given, without flowing it.
#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub order_bound: String,
    pub residual: f64,
    pub energy: f64,
    pub moment_norm: f64,
    pub detected_order: Option<u64>,
    pub power_defect: Option<f64>,
    pub normality_exponent: Option<u64>,
    pub normality_distance: Option<f64>,
    /// `‖Q − I‖` and `max_h ‖h†Qh − Q‖` for the averaged form.
    pub form_deviation: Option<f64>,
    pub form_invariance_defect: Option<f64>,
    pub unitary: bool,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
}

pub fn verify_structure(rep: &Rep, cfg: &PipelineConfig) -> VerifyReport {
    let mut report = VerifyReport {
        order_bound: order_bound(rep.group.p(), rep.group.q(), rep.n()).to_string(),
        residual: relation_residual(rep).unwrap_or(f64::NAN),
        energy: kn_energy(rep),
        moment_norm: hs_norm(&moment_map(rep, cfg.flow.sl_mode)),
        unitary: verify_unitary_rep(rep, cfg.rep_tol),
        ..Default::default()
    };
    let mut steps = || -> bsretract_core::Result<()> {
        let bound = order_bound(rep.group.p(), rep.group.q(), rep.n());
        let max_order = u64::try_from(&bound).unwrap_or(u64::MAX);
        let cert = certify_finite_order(&rep.b, max_order, cfg.snap_tol).map_err(|e| e.at(Stage::DetectOrder))?;
        report.detected_order = Some(cert.order);
        report.power_defect = Some(cert.power_defect);
        let group = generated_group(&rep.b, cert.order).map_err(|e| e.at(Stage::Group))?;
        let form = averaged_form(&group);
        report.form_deviation = Some(form.deviation_from_identity());
        report.form_invariance_defect = Some(form.invariance_defect(&group));
        let compact = conjugate_into_unitary(rep, &form).map_err(|e| e.at(Stage::Compactify))?;
        let (j, distance) = closest_power(&compact, cert.order).map_err(|e| e.at(Stage::Normality))?;
        report.normality_distance = Some(distance);
        if !(distance <= cfg.normality_tol) {
            return Err(Error::NotNormalizing {
                best_exponent: j,
                distance,
            }
            .at(Stage::Normality));
        }
        report.normality_exponent = Some(j);
        Ok(())
    };
    if let Err(e) = steps() {
        report.failed_stage = e.stage();
        report.error = Some(e.to_string());
    }
    report
}

pub fn verify(input: &Path, report_path: Option<&Path>, globals: &Globals) -> Exit {
    let (rep, text) = match load_rep(input, globals) {
        Ok(x) => x,
        Err(e) => return e,
    };
    let manifest = input_manifest("verify", globals, &rep, input, &text);
    let cfg = globals.pipeline_config();
    if let Err(e) = check_in_variety(&rep, cfg.rep_tol) {
        return fail(Exit::BadInput, e);
    }
    let report = verify_structure(&rep, &cfg);
    let (exit, summary) = match &report.error {
        None => (
            Exit::Ok,
            format!(
                "order {} (bound {}), exponent {}",
                report.detected_order.unwrap_or(0),
                report.order_bound,
                report.normality_exponent.unwrap_or(0)
            ),
        ),
        Some(e) => (Exit::Structural, format!("error: {e}")),
    };
    let outputs = Outputs {
        out: None,
        report: report_path.map(Path::to_path_buf),
    };
    // The report document is the primary output of this command.
    let globals = Globals {
        json: globals.json || report_path.is_none(),
        ..globals.clone()
    };
    finish(&globals, &outputs, manifest, exit, summary, None, report)
}

pub fn suite(cfg: &SuiteConfig, report_path: Option<&Path>, globals: &Globals) -> Exit {
    let report = match run_suite(cfg, globals.seed) {
        Ok(r) => r,
        Err(e) => return fail(Exit::BadInput, e),
    };
    let text = to_json(&report);
    if let Err(e) = write_or_fail(report_path, &text) {
        return e;
    }
    let s = &report.stats;
    eprintln!(
        "{} runs, {} converged, {} successful pipelines, {} invariant violations",
        s.runs, s.converged, s.succeeded, s.violations
    );
    if let Some(path) = &globals.manifest {
        if let Err(e) = write_or_fail(Some(path), &to_json(&report.manifest)) {
            return e;
        }
    }
    if s.violations > 0 {
        Exit::InvariantViolation
    } else {
        Exit::Ok
    }
}
