//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each, and exits non-zero if any fails.

use std::collections::BTreeSet;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bsretract_cli::suite::{run_suite, SuiteConfig, SuiteReport, RESIDUAL_ABS, RESIDUAL_FACTOR};
use bsretract_core::bsrep::{
    conjugate, from_orbit_datum, random_conditioned, random_hermitian_unit, random_rep, random_unitary,
    relation_residual, BSGroup, Rep,
};
use bsretract_core::census::{enumerate_orbits, order_bound, power_gap};
use bsretract_core::compactify::{averaged_form, detect_finite_order, generated_group};
use bsretract_core::kempfness::{energy_derivative, kn_energy, moment_map};
use bsretract_core::numerics::{cond, diag, exp_herm, hs_norm, RootOfUnity};
use bsretract_core::retraction::{full_pipeline, verify_unitary_rep, PipelineConfig};

const BASE_PAIRS: [(i64, i64); 5] = [(1, 2), (2, 3), (1, 3), (2, 5), (3, 5)];
const SUITE_SEED: u64 = 2024;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn grid_pairs() -> Vec<(i64, i64)> {
    BASE_PAIRS
        .iter()
        .flat_map(|&(p, q)| [(p, q), (-p, q), (p, -q), (-p, -q)])
        .collect()
}

fn grid_suite() -> (SuiteReport, Duration) {
    let cfg = SuiteConfig {
        pairs: grid_pairs(),
        n_max: 4,
        seeds: 5,
        pipeline: PipelineConfig::default(),
        check_idempotence: true,
    };
    let start = Instant::now();
    let report = run_suite(&cfg, SUITE_SEED).expect("suite runs");
    (report, start.elapsed())
}

fn criterion_1(report: &SuiteReport, elapsed: Duration) -> Verdict {
    let runs = &report.runs;
    let reached = runs
        .iter()
        .filter(|r| {
            r.diagnostics.flow.as_ref().is_some_and(|f| {
                f.iterations <= 100_000 && f.final_moment_norm <= 1e-8 * (1.0 + f.final_energy)
            })
        })
        .count();
    let monotone = runs.iter().filter(|r| r.diagnostics.flow.as_ref().is_some_and(|f| f.monotone)).count();
    let rate = reached as f64 / runs.len() as f64;
    let pass = runs.len() == 400 && rate >= 0.95 && monotone == runs.len() && elapsed.as_secs() <= 300;
    verdict(
        pass,
        format!(
            "{reached}/{} runs reach |mu| <= 1e-8(1+E) ({:.1}%), {monotone} monotone, {:.1}s",
            runs.len(),
            100.0 * rate,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(report: &SuiteReport) -> Verdict {
    let mut checked = 0;
    let mut failures = Vec::new();
    for r in report.runs.iter().filter(|r| r.converged) {
        checked += 1;
        let d = &r.diagnostics;
        let bound = order_bound(r.p, r.q, r.n);
        let gaps: Vec<BigUint> = (1..=r.n).map(|k| power_gap(r.p, r.q, k)).collect();
        let ok = match d.detected_order {
            Some(order) => {
                BigUint::from(order) <= bound
                    && d.eigenvalue_roots.len() == r.n
                    && d.eigenvalue_roots
                        .iter()
                        .all(|root| gaps.iter().any(|g| g % BigUint::from(root.order) == BigUint::ZERO))
                    && d.normality_exponent.is_some()
                    && d.normality_distance.is_some_and(|x| x <= 1e-6)
            }
            None => false,
        };
        if !ok {
            failures.push(format!("({},{}) n={} seed={}", r.p, r.q, r.n, r.seed));
        }
    }
    verdict(
        failures.is_empty() && checked > 0,
        format!("{}/{checked} converged endpoints show the predicted structure {failures:?}", checked - failures.len()),
    )
}

fn criterion_3(report: &SuiteReport) -> Verdict {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let mut paths = 0;
    for r in &report.runs {
        let d = &r.diagnostics;
        let Some(r0) = d.initial_residual else {
            violations += 1;
            continue;
        };
        let allowed = RESIDUAL_ABS + RESIDUAL_FACTOR * r0;
        let along = [d.flow.as_ref().map(|f| f.max_residual), d.max_path_residual];
        paths += d.max_path_residual.is_some() as usize;
        for x in along.into_iter().flatten() {
            worst = worst.max(x);
            if !(x <= allowed) {
                violations += 1;
            }
        }
        if r.converged && d.max_path_residual.is_none() {
            violations += 1;
        }
    }
    verdict(
        violations == 0,
        format!(
            "{violations} violations over {} flows (every step) and {paths} paths of 100 samples; worst residual {worst:.2e}",
            report.runs.len()
        ),
    )
}

fn criterion_4(report: &SuiteReport) -> Verdict {
    let converged: Vec<_> = report.runs.iter().filter(|r| r.converged).collect();
    let mut unitary = 0;
    let mut idempotent = 0;
    let mut worst: f64 = 0.0;
    for r in &converged {
        let d = &r.diagnostics;
        let ok = r.succeeded
            && d.endpoint_unitarity_a.is_some_and(|x| x <= 1e-8)
            && d.endpoint_unitarity_b.is_some_and(|x| x <= 1e-8)
            && d.endpoint_residual.is_some_and(|x| x <= 1e-8);
        unitary += ok as usize;
        if let Some(x) = r.idempotence_defect {
            worst = worst.max(x);
            idempotent += (x <= 1e-9) as usize;
        }
    }
    let n = converged.len();
    verdict(
        n > 0 && unitary == n && idempotent == n,
        format!("{unitary}/{n} unitary endpoints, {idempotent}/{n} idempotent (worst {worst:.2e})"),
    )
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut invariance_fail, mut identity_fail) = (0, 0);
    let (mut worst_invariance, mut worst_identity): (f64, f64) = (0.0, 0.0);
    let groups = 1000;
    for _ in 0..groups {
        let n = rng.random_range(1..=4);
        let max_order = rng.random_range(1..=24u64);
        let roots: Vec<Complex64> = (0..n)
            .map(|_| RootOfUnity::new(max_order, rng.random_range(0..max_order)).value())
            .collect();
        let d = diag(&roots);
        let order = detect_finite_order(&d, 24, 1e-10).expect("diagonal roots of unity");

        let s = random_conditioned(n, 100.0, &mut rng);
        assert!(cond(&s) <= 100.0 * (1.0 + 1e-9));
        let similar = &s * &d * s.clone().try_inverse().unwrap();
        let h = generated_group(&similar, order).unwrap();
        let defect = averaged_form(&h).invariance_defect(&h);
        worst_invariance = worst_invariance.max(defect);
        invariance_fail += (defect > 1e-8) as usize;

        let u = random_unitary(n, &mut rng);
        let h = generated_group(&(&u * &d * u.adjoint()), order).unwrap();
        let deviation = averaged_form(&h).deviation_from_identity();
        worst_identity = worst_identity.max(deviation);
        identity_fail += (deviation > 1e-10) as usize;
    }
    verdict(
        invariance_fail == 0 && identity_fail == 0,
        format!(
            "{groups} groups: invariance failures {invariance_fail} (worst {worst_invariance:.2e}), \
             unitary-group Q != I failures {identity_fail} (worst {worst_identity:.2e})"
        ),
    )
}

/// Orbits of `x ↦ u·x` on the units of `Z/N` with length exactly `k`, by
/// walking every residue.
fn brute_orbits(p: i64, q: i64, modulus: u64, k: usize) -> BTreeSet<Vec<u64>> {
    let m = modulus as i64;
    let p_inv = (0..m).find(|&x| (p.rem_euclid(m) * x).rem_euclid(m) == 1 % m).expect("p is a unit");
    let u = (q.rem_euclid(m) * p_inv).rem_euclid(m);
    let mut seen = vec![false; modulus as usize];
    let mut out = BTreeSet::new();
    for start in 0..m {
        if seen[start as usize] || gcd(start, m) != 1 {
            continue;
        }
        let mut orbit = vec![start];
        seen[start as usize] = true;
        let mut x = (u * start).rem_euclid(m);
        while x != start {
            seen[x as usize] = true;
            orbit.push(x);
            x = (u * x).rem_euclid(m);
        }
        if orbit.len() == k {
            out.insert(orbit.into_iter().map(|x| x as u64).collect());
        }
    }
    out
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

fn criterion_6() -> Verdict {
    let mut mismatches = Vec::new();
    let mut moduli = 0usize;
    let mut worst_residual: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for p in -7i64..=7 {
        for q in -7i64..=7 {
            let Ok(group) = BSGroup::new(p, q) else { continue };
            let census = enumerate_orbits(group, 4);
            if !census.skipped.is_empty() {
                mismatches.push(format!("({p},{q}) incomplete census"));
            }
            let listed: BTreeSet<(usize, u64, Vec<u64>)> = census
                .orbits
                .iter()
                .filter(|d| d.modulus <= 10_000)
                .map(|d| (d.k, d.modulus, d.orbit.clone()))
                .collect();
            let mut expected = BTreeSet::new();
            for k in 1..=4usize {
                let gap = power_gap(p, q, k);
                for modulus in 1..=10_000u64 {
                    if &gap % BigUint::from(modulus) != BigUint::ZERO {
                        continue;
                    }
                    moduli += 1;
                    for orbit in brute_orbits(p, q, modulus, k) {
                        expected.insert((k, modulus, orbit));
                    }
                }
            }
            if listed != expected {
                let missing = expected.difference(&listed).count();
                let extra = listed.difference(&expected).count();
                mismatches.push(format!("({p},{q}): {missing} missing, {extra} extra"));
            }
            for d in census.orbits.iter().filter(|d| d.modulus <= 10_000) {
                let chi = Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
                for c in [Complex64::new(1.0, 0.0), chi] {
                    let r = relation_residual(&from_orbit_datum(d, c).unwrap()).unwrap();
                    worst_residual = worst_residual.max(r);
                }
            }
        }
    }
    let small: Vec<(u64, Vec<u64>)> = enumerate_orbits(BSGroup::new(2, 3).unwrap(), 2)
        .orbits
        .iter()
        .map(|d| (d.modulus, d.orbit.clone()))
        .collect();
    let small_ok = small == vec![(1, vec![0]), (5, vec![1, 4]), (5, vec![2, 3])];
    verdict(
        mismatches.is_empty() && worst_residual <= 1e-12 && small_ok,
        format!(
            "{moduli} (k, N) pairs cross-checked, mismatches {mismatches:?}, worst block residual {worst_residual:.2e}, \
             BS(2,3) n=2 census {small:?}"
        ),
    )
}

fn criterion_7() -> Verdict {
    let pairs = grid_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let points = 100;
    for i in 0..points {
        let (p, q) = pairs[i % pairs.len()];
        let n = 2 + i % 3;
        let rep: Rep = random_rep(BSGroup::new(p, q).unwrap(), n, 700 + i as u64).unwrap();
        let h = random_hermitian_unit(n, &mut rng);
        let exact = energy_derivative(&rep, &h);
        let scale = exact.abs().max(2.0 * hs_norm(&moment_map(&rep, false)) * hs_norm(&h));
        let energy = kn_energy(&rep);
        for t in [1e-4, 1e-5] {
            let moved = conjugate(&rep, &exp_herm(&h.scale(t))).unwrap();
            let fd = (kn_energy(&moved) - energy) / t;
            let rel = (fd - exact).abs() / scale;
            worst = worst.max(rel);
            failures += (rel > 1e-3) as usize;
        }
    }
    verdict(
        failures == 0,
        format!("{points} points, t in {{1e-4, 1e-5}}: {failures} failures, worst relative error {worst:.2e}"),
    )
}

fn criterion_8() -> Verdict {
    let mut refused = Vec::new();
    for (p, q) in [(2i64, 2i64), (2, 4)] {
        let parse = BSGroup::new(p, q).is_err();
        let json = format!(
            r#"{{"p": {p}, "q": {q}, "n": 1, "A": {{"n": 1, "re": [[1.0]], "im": [[0.0]]}}, "B": {{"n": 1, "re": [[1.0]], "im": [[0.0]]}}}}"#
        );
        let rep_parse = serde_json::from_str::<Rep>(&json).is_err();
        let cli = |args: &[&str]| {
            Command::new(env!("CARGO_BIN_EXE_bsretract"))
                .args(args)
                .output()
                .expect("binary runs")
        };
        let (ps, qs) = (p.to_string(), q.to_string());
        let census = cli(&["census", "--p", &ps, "--q", &qs, "--n-max", "2"]);
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("rep.json");
        std::fs::write(&path, &json).unwrap();
        let pipeline = cli(&["pipeline", "-i", path.to_str().unwrap()]);
        let ok = parse
            && rep_parse
            && census.status.code() == Some(2)
            && census.stdout.is_empty()
            && pipeline.status.code() == Some(2)
            && pipeline.stdout.is_empty();
        refused.push(((p, q), ok));
    }
    // Valid neighbours are accepted, so the gate is not refusing everything.
    let accepted = BSGroup::new(2, 3).is_ok() && BSGroup::new(-2, 3).is_ok();
    let unitary = Rep::trivial(BSGroup::new(2, 3).unwrap(), 2);
    let trivial_ok = full_pipeline(&unitary, &PipelineConfig::default())
        .result
        .is_ok_and(|r| verify_unitary_rep(&r, 1e-8));
    verdict(
        refused.iter().all(|x| x.1) && accepted && trivial_ok,
        format!("refused at parse: {refused:?}"),
    )
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes arguments; this target ignores them.
    let (report, elapsed) = grid_suite();
    let results = [
        ("1 Kempf-Ness convergence", criterion_1(&report, elapsed)),
        ("2 structural predictions", criterion_2(&report)),
        ("3 variety conservation", criterion_3(&report)),
        ("4 unitary endpoints", criterion_4(&report)),
        ("5 averaged form", criterion_5()),
        ("6 census exactness", criterion_6()),
        ("7 gradient check", criterion_7()),
        ("8 hypothesis gate", criterion_8()),
    ];
    let mut all = true;
    for (name, v) in &results {
        all &= v.pass;
        println!("criterion {name}: {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
