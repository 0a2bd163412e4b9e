//! The full residual suite over catalog entries.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{self, EntryName, EntrySpec, SpacetimeSolution};
use crate::expansion;
use crate::expr::Expression;
use crate::foliation;
use crate::geometry::{self, Chart, Coordinate, CoordinateChange};
use crate::initial_data::{InitialDataSet, ValidationOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub kappa: f64,
    pub ricci: f64,
    pub induced: f64,
    pub q1: f64,
    pub q1_kerr: f64,
    pub slope: f64,
    pub transversal_row: f64,
    pub commutator: f64,
    pub nabla_t_w: f64,
    pub transport: f64,
    pub reconstruction: f64,
    pub omega_v: f64,
    pub lie_omega: f64,
    pub kernel: f64,
    pub equivariance: f64,
    pub jet_fd: f64,
    pub bianchi: f64,
    pub null_drift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            kappa: 1e-8,
            ricci: 1e-8,
            induced: 1e-7,
            q1: 1e-7,
            q1_kerr: 1e-5,
            slope: 0.1,
            transversal_row: 1e-6,
            commutator: 1e-8,
            nabla_t_w: 1e-8,
            transport: 1e-6,
            reconstruction: 1e-12,
            omega_v: 1e-12,
            lie_omega: 1e-10,
            kernel: 1e-10,
            equivariance: 1e-8,
            jet_fd: 1e-6,
            bianchi: 1e-10,
            null_drift: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub entries: Vec<EntrySpec>,
    /// Horizon base points per entry.
    pub theta_grid: usize,
    /// Points per axis of the vacuum check grid.
    pub ricci_grid: usize,
    /// Points per axis of the structural-identity grid on the horizon.
    pub data_grid: usize,
    /// Differencing step.
    pub h: f64,
    /// Largest integrator step for the remainder fit.
    pub remainder_step: f64,
    pub validation: ValidationOptions,
    pub tolerances: Tolerances,
    /// Engine-level and coordinate-change checks that do not depend on the
    /// entry list.
    pub global_checks: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            entries: EntryName::ALL.iter().map(|&n| EntrySpec::new(n)).collect(),
            theta_grid: 7,
            ricci_grid: 5,
            data_grid: 5,
            h: 1e-3,
            remainder_step: 1e-4,
            validation: ValidationOptions::default(),
            tolerances: Tolerances::default(),
            global_checks: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub criterion: u8,
    pub check: String,
    pub spacetime: Option<String>,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckRecord {
    fn new(
        criterion: u8,
        check: &str,
        spacetime: Option<&str>,
        residual: f64,
        threshold: f64,
    ) -> Self {
        Self {
            criterion,
            check: check.to_string(),
            spacetime: spacetime.map(str::to_string),
            residual,
            threshold,
            passed: residual.is_finite() && residual < threshold,
            detail: String::new(),
        }
    }

    fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    fn failure(
        criterion: u8,
        check: &str,
        spacetime: Option<&str>,
        threshold: f64,
        err: impl std::fmt::Display,
    ) -> Self {
        Self::new(criterion, check, spacetime, f64::INFINITY, threshold)
            .detail(format!("error: {err}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
    pub elapsed_seconds: f64,
}

impl VerifyReport {
    /// Whether every check of `criterion` passed (and at least one ran).
    pub fn criterion_passed(&self, criterion: u8) -> bool {
        let mut any = false;
        for c in self.checks.iter().filter(|c| c.criterion == criterion) {
            any = true;
            if !c.passed {
                return false;
            }
        }
        any
    }
}

pub fn run(options: &VerifyOptions) -> VerifyReport {
    let start = Instant::now();
    let mut checks: Vec<CheckRecord> = options
        .entries
        .par_iter()
        .map(|spec| entry_checks(spec, options))
        .flatten()
        .collect();
    if options.global_checks {
        let tol = &options.tolerances;
        checks.extend(kappa_reference_checks(
            &options.validation,
            options.theta_grid,
            tol.kappa,
        ));
        checks.extend(equivariance_checks(&options.validation, tol.equivariance));
        checks.extend(jet_fd_check(tol.jet_fd));
    }
    checks.sort_by_key(|c| c.criterion);
    let passed = checks.iter().all(|c| c.passed);
    VerifyReport {
        checks,
        passed,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    }
}

fn entry_checks(spec: &EntrySpec, options: &VerifyOptions) -> Vec<CheckRecord> {
    let tol = &options.tolerances;
    let sol = match catalog::build(spec) {
        Ok(sol) => sol,
        Err(e) => {
            return vec![CheckRecord::failure(
                0,
                "build",
                Some(spec.name.as_str()),
                0.0,
                e,
            )]
        }
    };
    let name = sol.label.as_str();
    let mut out = Vec::new();

    // vacuum and algebraic curvature symmetries
    let grid = sol.chart.interior_grid(options.ricci_grid);
    let (mut ricci, mut bianchi): (f64, f64) = (0.0, 0.0);
    let mut err = None;
    for p in &grid {
        match catalog::ricci_residual(&sol, p) {
            Ok(r) => ricci = ricci.max(r),
            Err(e) => err = Some(e.to_string()),
        }
    }
    for p in sol.chart.interior_grid(2) {
        match geometry::riemann(&sol.metric, &p) {
            Ok(r) => bianchi = bianchi.max(r.symmetry_residual()),
            Err(e) => err = Some(e.to_string()),
        }
    }
    let note = err.map(|e| format!("error: {e}")).unwrap_or_default();
    out.push(
        CheckRecord::new(
            2,
            "ricci_residual",
            Some(name),
            if note.is_empty() {
                ricci
            } else {
                f64::INFINITY
            },
            tol.ricci,
        )
        .detail(format!("{} points {note}", grid.len())),
    );
    out.push(CheckRecord::new(
        9,
        "riemann_symmetries",
        Some(name),
        bianchi,
        tol.bianchi,
    ));

    // closed-form data structure
    out.extend(structure_checks(
        &sol.closed_form_data,
        options.data_grid,
        tol,
        name,
    ));
    let closed_kappa = sol.closed_form_data.surface_gravity();
    out.push(
        CheckRecord::new(
            1,
            "kappa_closed_form",
            Some(name),
            (closed_kappa - sol.kappa_closed_form).abs(),
            tol.kappa,
        )
        .detail(format!(
            "kappa = {closed_kappa:.12}, formula {:.12}",
            sol.kappa_closed_form
        )),
    );

    let bases = sol.base_points(options.theta_grid);
    match foliation::induce_numeric_with(&sol, &bases, &options.validation) {
        Ok(numeric) => {
            let k = numeric.surface_gravity();
            out.push(
                CheckRecord::new(
                    1,
                    "kappa_numeric",
                    Some(name),
                    (k - sol.kappa_closed_form).abs(),
                    tol.kappa,
                )
                .detail(format!("kappa = {k:.12}")),
            );
            out.push(induced_check(&sol, &numeric, &bases, tol.induced, name));
        }
        Err(e) => {
            out.push(CheckRecord::failure(
                1,
                "kappa_numeric",
                Some(name),
                tol.kappa,
                &e,
            ));
            out.push(CheckRecord::failure(
                3,
                "induced_data",
                Some(name),
                tol.induced,
                &e,
            ));
        }
    }

    out.extend(gauge_checks(&sol, &bases, options, name));
    out
}

fn structure_checks(
    data: &InitialDataSet,
    n: usize,
    tol: &Tolerances,
    name: &str,
) -> Vec<CheckRecord> {
    let kappa = data.surface_gravity();
    let omega_field = data.omega_field();
    let (mut recon, mut omega_v, mut lie, mut kernel): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let result = (|| -> Result<(), Box<dyn std::error::Error>> {
        for p in data.chart().interior_grid(n) {
            let s = data.sigma().value(&p)?;
            let w = data.connection_one_form(&p)?;
            let g = data.degenerate_metric(&p)?;
            let v = data.v().value(&p)?;
            recon = recon.max(
                geometry::frobenius(&(&s - (g + &w * w.transpose()))) / geometry::frobenius(&s),
            );
            omega_v = omega_v.max((w.dot(&v) - kappa).abs());
            lie = lie.max(geometry::lie_derivative_oneform(&omega_field, data.v(), &p)?.amax());
            let (ratio, sin) = data.kernel_check(&p)?;
            kernel = kernel.max(ratio).max(sin);
        }
        Ok(())
    })();
    let suffix = match result {
        Ok(()) => String::new(),
        Err(e) => {
            recon = f64::INFINITY;
            format!("error: {e}")
        }
    };
    vec![
        CheckRecord::new(7, "reconstruction", Some(name), recon, tol.reconstruction).detail(suffix),
        CheckRecord::new(7, "omega_of_v", Some(name), omega_v, tol.omega_v),
        CheckRecord::new(7, "lie_v_omega", Some(name), lie, tol.lie_omega),
        CheckRecord::new(7, "degenerate_kernel", Some(name), kernel, tol.kernel),
    ]
}

/// Largest componentwise gaps between numerically induced and closed-form data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InducedDeviation {
    pub sigma: f64,
    pub v: f64,
    pub omega: f64,
}

impl InducedDeviation {
    pub fn max(&self) -> f64 {
        self.sigma.max(self.v).max(self.omega)
    }
}

/// Compares `numeric` against the closed-form data of `sol` at `bases`.
pub fn induced_deviation(
    sol: &SpacetimeSolution,
    numeric: &InitialDataSet,
    bases: &[Vec<f64>],
) -> Result<InducedDeviation, String> {
    let closed = &sol.closed_form_data;
    let mut out = InducedDeviation {
        sigma: 0.0,
        v: 0.0,
        omega: 0.0,
    };
    for y in bases {
        let ds = numeric.sigma().value(y).map_err(|e| e.to_string())?
            - closed.sigma().value(y).map_err(|e| e.to_string())?;
        let dv = numeric.v().value(y).map_err(|e| e.to_string())?
            - closed.v().value(y).map_err(|e| e.to_string())?;
        let dw = numeric.connection_one_form(y).map_err(|e| e.to_string())?
            - sol.closed_form_omega.value(y).map_err(|e| e.to_string())?;
        out.sigma = out.sigma.max(ds.amax());
        out.v = out.v.max(dv.amax());
        out.omega = out.omega.max(dw.amax());
    }
    Ok(out)
}

fn induced_check(
    sol: &SpacetimeSolution,
    numeric: &InitialDataSet,
    bases: &[Vec<f64>],
    threshold: f64,
    name: &str,
) -> CheckRecord {
    match induced_deviation(sol, numeric, bases) {
        Ok(d) => CheckRecord::new(3, "induced_data", Some(name), d.max(), threshold)
            .detail(format!("{} base points", bases.len())),
        Err(e) => CheckRecord::failure(3, "induced_data", Some(name), threshold, e),
    }
}

/// Reference surface gravities, closed-form and induced.
pub fn kappa_references() -> Vec<(EntrySpec, f64)> {
    vec![
        (EntrySpec::new(EntryName::Schwarzschild).m(0.5), 0.5),
        (EntrySpec::new(EntryName::Schwarzschild).m(1.0), 0.25),
        (EntrySpec::new(EntryName::Schwarzschild).m(2.0), 0.125),
        (EntrySpec::new(EntryName::Kerr), 0.2320508076),
        (EntrySpec::new(EntryName::TaubNut), 1.0),
        (EntrySpec::new(EntryName::QuotientSchwarzschild), 1.0),
    ]
}

fn kappa_reference_checks(
    validation: &ValidationOptions,
    theta_grid: usize,
    threshold: f64,
) -> Vec<CheckRecord> {
    kappa_references()
        .par_iter()
        .map(|(spec, expected)| {
            let sol = match catalog::build(spec) {
                Ok(sol) => sol,
                Err(e) => {
                    return CheckRecord::failure(
                        1,
                        "kappa_reference",
                        Some(spec.name.as_str()),
                        threshold,
                        e,
                    )
                }
            };
            let closed = sol.closed_form_data.surface_gravity();
            match foliation::induce_numeric_with(&sol, &sol.base_points(theta_grid), validation) {
                Ok(numeric) => {
                    let k = numeric.surface_gravity();
                    let residual = (closed - expected).abs().max((k - expected).abs());
                    CheckRecord::new(1, "kappa_reference", Some(&sol.label), residual, threshold)
                        .detail(format!(
                            "expected {expected}, closed form {closed:.12}, induced {k:.12}"
                        ))
                }
                Err(e) => {
                    CheckRecord::failure(1, "kappa_reference", Some(&sol.label), threshold, e)
                }
            }
        })
        .collect()
}

fn gauge_checks(
    sol: &SpacetimeSolution,
    bases: &[Vec<f64>],
    options: &VerifyOptions,
    name: &str,
) -> Vec<CheckRecord> {
    let tol = &options.tolerances;
    let q1_tol = if sol.name == EntryName::Kerr {
        tol.q1_kerr
    } else {
        tol.q1
    };
    let h = options.h;
    let fmap = match foliation::evolve_stencil(sol, bases, h) {
        Ok(f) => f,
        Err(e) => {
            return [
                (4, "q1_deviation", q1_tol),
                (5, "remainder_slope", tol.slope),
                (6, "transversal_row", tol.transversal_row),
                (9, "null_drift", tol.null_drift),
            ]
            .into_iter()
            .map(|(c, n, t)| CheckRecord::failure(c, n, Some(name), t, &e))
            .collect();
        }
    };
    let per_base: Vec<
        Result<(expansion::DeviationReport, foliation::IdentityReport, f64), String>,
    > = (0..bases.len())
        .into_par_iter()
        .map(|b| {
            let rec =
                foliation::pullback_metric_jet(sol, &fmap, b, h, 3).map_err(|e| e.to_string())?;
            let dev = expansion::compare(&sol.closed_form_data, sol, &rec, options.remainder_step)
                .map_err(|e| e.to_string())?;
            let ids = foliation::check_identities(sol, &fmap, b, h).map_err(|e| e.to_string())?;
            let drift = foliation::evolve_at(
                sol,
                std::slice::from_ref(&bases[b]),
                &expansion::REMAINDER_TIMES,
                options.remainder_step,
            )
            .map_err(|e| e.to_string())?
            .meta
            .max_null_drift;
            Ok((dev, ids, drift))
        })
        .collect();
    let mut q1_dev: f64 = 0.0;
    let mut anchors: f64 = 0.0;
    let mut slope_dev: f64 = 0.0;
    let mut slopes = Vec::new();
    let mut exact = 0;
    let (mut row, mut comm, mut ntw, mut transport): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut drift = fmap.meta.max_null_drift;
    let mut failure = None;
    for r in per_base {
        match r {
            Ok((dev, ids, d)) => {
                q1_dev = q1_dev.max(dev.max_deviation);
                anchors = anchors.max(dev.anchor_vv).max(dev.anchor_ve);
                if dev.exact {
                    exact += 1;
                } else if let Some(s) = dev.slope {
                    slope_dev = slope_dev.max((s - 2.0).abs());
                    slopes.push(s);
                } else {
                    slope_dev = f64::INFINITY;
                }
                row = row.max(ids.transversal_row);
                comm = comm.max(ids.commutator);
                ntw = ntw.max(ids.nabla_t_w);
                transport = transport.max(ids.transport);
                drift = drift.max(ids.null_drift).max(d);
            }
            Err(e) => failure = Some(e),
        }
    }
    if let Some(e) = failure {
        for v in [
            &mut q1_dev,
            &mut slope_dev,
            &mut row,
            &mut comm,
            &mut ntw,
            &mut transport,
            &mut drift,
        ] {
            *v = f64::INFINITY;
        }
        slopes.clear();
        exact = 0;
        let _ = e;
    }
    let slope_detail = if exact == bases.len() {
        "exact: remainder at rounding level (solution linear in t)".to_string()
    } else {
        let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("slopes in [{lo:.4}, {hi:.4}], {exact} exact")
    };
    vec![
        CheckRecord::new(4, "q1_deviation", Some(name), q1_dev, q1_tol)
            .detail(format!("{} base points", bases.len())),
        CheckRecord::new(4, "q1_anchors", Some(name), anchors, 1e-12),
        CheckRecord::new(5, "remainder_slope", Some(name), slope_dev, tol.slope)
            .detail(slope_detail),
        CheckRecord::new(6, "transversal_row", Some(name), row, tol.transversal_row),
        CheckRecord::new(6, "commutator", Some(name), comm, tol.commutator),
        CheckRecord::new(6, "nabla_t_w", Some(name), ntw, tol.nabla_t_w),
        CheckRecord::new(6, "transport", Some(name), transport, tol.transport),
        CheckRecord::new(9, "null_drift", Some(name), drift, tol.null_drift),
    ]
}

fn equivariance_checks(validation: &ValidationOptions, threshold: f64) -> Vec<CheckRecord> {
    let changes = [
        (
            "stretch_v",
            vec![
                Coordinate::unbounded("vp"),
                Coordinate::new("theta", 0.05, PI - 0.05),
                Coordinate::unbounded("phi"),
            ],
            ["vp/2", "theta", "phi"],
        ),
        (
            "reparametrize_theta",
            vec![
                Coordinate::unbounded("v"),
                Coordinate::new("u", 0.05, PI - 0.05),
                Coordinate::unbounded("phi"),
            ],
            ["v", "u + sin(2*u)/10", "phi"],
        ),
    ];
    let sol = match catalog::build(&EntrySpec::new(EntryName::Schwarzschild)) {
        Ok(s) => s,
        Err(e) => return vec![CheckRecord::failure(8, "equivariance", None, threshold, e)],
    };
    let points = vec![
        vec![0.2, 0.7, 0.1],
        vec![-0.4, 1.6, 2.0],
        vec![0.0, 2.3, -1.0],
    ];
    changes
        .into_iter()
        .map(|(label, coords, map)| {
            let result = Chart::new(coords, vec![("m".into(), 1.0)])
                .map_err(|e| e.to_string())
                .and_then(|chart| CoordinateChange::new(chart, &map).map_err(|e| e.to_string()))
                .and_then(|change| {
                    expansion::pullback_equivariance(
                        &sol.closed_form_data,
                        &change,
                        &points,
                        validation,
                    )
                    .map_err(|e| e.to_string())
                });
            match result {
                Ok(r) => CheckRecord::new(8, label, Some(&sol.label), r, threshold),
                Err(e) => CheckRecord::failure(8, label, Some(&sol.label), threshold, e),
            }
        })
        .collect()
}

/// Random expression source over `x, y, z` built from total functions.
fn random_expression(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || rng.random_bool(0.25) {
        return match rng.random_range(0..4) {
            0 => "x".into(),
            1 => "y".into(),
            2 => "z".into(),
            _ => format!("{:.3}", rng.random_range(0.5..2.0)),
        };
    }
    let a = random_expression(rng, depth - 1);
    match rng.random_range(0..10) {
        0 => format!("({a} + {})", random_expression(rng, depth - 1)),
        1 => format!("({a} - {})", random_expression(rng, depth - 1)),
        2 => format!("({a} * {})", random_expression(rng, depth - 1)),
        3 => format!("({a} / (2 + sin({})))", random_expression(rng, depth - 1)),
        4 => format!("sin({a})"),
        5 => format!("cos({a})"),
        6 => format!("sqrt(1 + ({a})^2)"),
        7 => format!("log(2 + cos({a}))"),
        8 => format!("exp(sin({a}))"),
        _ => format!("({a})^{}", rng.random_range(2..4)),
    }
}

/// Jet gradients and Hessians against central differences.
pub fn jet_fd_residual(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = ["x", "y", "z"];
    let none: [&str; 0] = [];
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let src = random_expression(&mut rng, 4);
        let expr = Expression::parse(&src, &coords, &none).expect("generated expressions parse");
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jet = expr
            .eval_jet(&p, &[], 2)
            .expect("generated expressions are total");
        let f = |q: &[f64]| expr.eval(q, &[]).expect("total");
        let shifted = |d: &[(usize, f64)]| {
            let mut q = p.clone();
            for &(i, s) in d {
                q[i] += s;
            }
            f(&q)
        };
        let h = 1e-3;
        let weights = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
        let scale = DMatrix::from_fn(3, 3, |i, j| jet.partial(&[i, j]).abs())
            .amax()
            .max(jet.value().abs())
            .max(1.0);
        for i in 0..3 {
            let fd: f64 = weights
                .iter()
                .map(|&(k, w)| w * shifted(&[(i, k * h)]))
                .sum::<f64>()
                / (12.0 * h);
            worst = worst.max((fd - jet.partial(&[i])).abs() / scale);
            for j in 0..3 {
                let mut fd2 = 0.0;
                for &(ki, wi) in &weights {
                    for &(kj, wj) in &weights {
                        fd2 += wi * wj * shifted(&[(i, ki * h), (j, kj * h)]);
                    }
                }
                fd2 /= 144.0 * h * h;
                worst = worst.max((fd2 - jet.partial(&[i, j])).abs() / scale);
            }
        }
    }
    worst
}

fn jet_fd_check(threshold: f64) -> Vec<CheckRecord> {
    let samples = 200;
    vec![CheckRecord::new(
        9,
        "jet_vs_finite_differences",
        None,
        jet_fd_residual(samples, 7),
        threshold,
    )
    .detail(format!("{samples} random expressions"))]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_corpus_agrees_with_differences() {
        assert!(jet_fd_residual(50, 1) < 1e-6);
    }

    #[test]
    fn misner_suite_passes() {
        let options = VerifyOptions {
            entries: vec![EntrySpec::new(EntryName::Misner)],
            theta_grid: 3,
            global_checks: false,
            ..VerifyOptions::default()
        };
        let report = run(&options);
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
    }
}
