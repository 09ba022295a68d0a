use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::Serialize;

use bsretract_core::bsrep::relation_residual;
use bsretract_core::census::Census;
use bsretract_core::kempfness::FlowTrace;
use bsretract_core::numerics::unitarity_defect;
use bsretract_core::retraction::RetractionPath;

/// A float with 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write to `path`, or to stdout when `path` is `None` or `-`.
pub fn write_text(path: Option<&Path>, text: &str) -> io::Result<()> {
    match path {
        Some(p) if p != Path::new("-") => fs::write(p, text),
        _ => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

/// Read from `path`, or from stdin for `-`.
pub fn read_text(path: &Path) -> io::Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn census_json_lines(census: &Census) -> String {
    let mut s = String::new();
    for d in &census.orbits {
        s.push_str(&serde_json::to_string(d).expect("orbit datum serializes"));
        s.push('\n');
    }
    s
}

pub fn census_summary_csv(census: &Census) -> String {
    let mut s = String::from("k,N,count\n");
    for (k, modulus, count) in census.summary() {
        writeln!(s, "{k},{modulus},{count}").unwrap();
    }
    s
}

pub fn trace_csv(trace: &FlowTrace) -> String {
    let mut s = String::from("iter,energy,moment_norm,step\n");
    for r in &trace.records {
        writeln!(s, "{},{},{},{}", r.iter, fmt_f64(r.energy), fmt_f64(r.moment_norm), fmt_f64(r.step)).unwrap();
    }
    s
}

pub fn path_csv(path: &RetractionPath) -> String {
    let mut s = String::from("t,residual,unitarity_defect_A\n");
    for sample in &path.samples {
        let residual = relation_residual(&sample.rep).unwrap_or(f64::NAN);
        writeln!(
            s,
            "{},{},{}",
            fmt_f64(sample.t),
            fmt_f64(residual),
            fmt_f64(unitarity_defect(&sample.rep.a))
        )
        .unwrap();
    }
    s
}
