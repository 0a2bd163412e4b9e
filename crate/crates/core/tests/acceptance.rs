//! Acceptance criteria 1 to 9 at their stated tolerances.
//!
//! Run with `cargo test -p horizon-core --release --test acceptance -- --nocapture`
//! to see one line per criterion.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use horizon_core::catalog::{build, EntryName, EntrySpec};
use horizon_core::expansion;
use horizon_core::foliation;
use horizon_core::verify::{self, CheckRecord, VerifyOptions};

/// Surface gravities from the closed-form formulas, typed in by hand.
fn reference_kappas() -> Vec<(EntrySpec, f64)> {
    vec![
        (EntrySpec::new(EntryName::Schwarzschild).m(0.5), 0.5),
        (EntrySpec::new(EntryName::Schwarzschild).m(1.0), 0.25),
        (EntrySpec::new(EntryName::Schwarzschild).m(2.0), 0.125),
        (EntrySpec::new(EntryName::Kerr).m(1.0).a(0.5), 0.2320508076),
        (
            EntrySpec::new(EntryName::TaubNut).m(0.0).l(FRAC_1_SQRT_2),
            1.0,
        ),
        (EntrySpec::new(EntryName::QuotientSchwarzschild).m(0.5), 1.0),
    ]
}

fn oracle_records() -> Vec<CheckRecord> {
    let mut out = Vec::new();
    for (spec, expected) in reference_kappas() {
        let sol = build(&spec).unwrap();
        let numeric = foliation::induce_numeric(&sol).unwrap();
        for (path, k) in [
            ("closed", sol.closed_form_data.surface_gravity()),
            ("induced", numeric.surface_gravity()),
        ] {
            out.push(record(
                1,
                &format!("kappa_{path}_vs_table"),
                &sol.label,
                (k - expected).abs(),
                1e-8,
            ));
        }
    }

    // Q1 frame values: product data gives Ric/κ on the sphere factor, Misner is flat with
    // parallel V, Taub-NUT is the radius-2 round S³ with Ric = σ/2 and |∇V|² = 1/4.
    let cases = [
        (
            EntrySpec::new(EntryName::Schwarzschild),
            vec![0.0, PI / 2.0, 0.0],
            -0.5,
            1.0,
        ),
        (
            EntrySpec::new(EntryName::Misner),
            vec![0.1, 0.2, 0.3],
            -2.0,
            0.0,
        ),
        (
            EntrySpec::new(EntryName::TaubNut),
            vec![0.0, 1.2, 0.0],
            -2.0,
            1.0,
        ),
    ];
    for (spec, y, vv, diag) in cases {
        let sol = build(&spec).unwrap();
        let q = expansion::q1(&sol.closed_form_data, &y).unwrap();
        let c = &q.q1_components;
        let mut worst = (c[(0, 0)] - vv).abs();
        for i in 0..3 {
            for j in 0..3 {
                if i == 0 && j == 0 {
                    continue;
                }
                let expected = if i == j { diag } else { 0.0 };
                worst = worst.max((c[(i, j)] - expected).abs());
            }
        }
        out.push(record(4, "q1_frame_values", &sol.label, worst, 1e-7));
    }
    out
}

fn record(
    criterion: u8,
    check: &str,
    spacetime: &str,
    residual: f64,
    threshold: f64,
) -> CheckRecord {
    CheckRecord {
        criterion,
        check: check.to_string(),
        spacetime: Some(spacetime.to_string()),
        residual,
        threshold,
        passed: residual.is_finite() && residual < threshold,
        detail: String::new(),
    }
}

#[test]
fn acceptance_criteria() {
    let report = verify::run(&VerifyOptions::default());
    let mut checks = report.checks.clone();
    checks.extend(oracle_records());
    checks.push(record(
        9,
        "verify_all_wall_time",
        "",
        report.elapsed_seconds,
        300.0,
    ));

    let mut all = true;
    for criterion in 1..=9u8 {
        let group: Vec<&CheckRecord> = checks.iter().filter(|c| c.criterion == criterion).collect();
        let failed: Vec<&&CheckRecord> = group.iter().filter(|c| !c.passed).collect();
        let ok = !group.is_empty() && failed.is_empty();
        all &= ok;
        let worst = group
            .iter()
            .map(|c| c.residual / c.threshold)
            .fold(0.0f64, f64::max);
        println!(
            "criterion {criterion}: {} ({} checks, worst residual/threshold {:.2e})",
            if ok { "PASS" } else { "FAIL" },
            group.len(),
            worst
        );
        for c in failed {
            println!(
                "    failed {} {}: {:e} >= {:e} {}",
                c.check,
                c.spacetime.as_deref().unwrap_or(""),
                c.residual,
                c.threshold,
                c.detail
            );
        }
    }
    println!("verify --all wall time {:.1} s", report.elapsed_seconds);
    assert!(all, "acceptance criteria failed");
}
