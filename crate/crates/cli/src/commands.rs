use horizon_core::catalog::{self, EntrySpec};
use horizon_core::expansion;
use horizon_core::foliation;
use horizon_core::initial_data::{self, InitialDataSet, ValidationOptions, ValidationReport};
use horizon_core::verify::{self, CheckRecord, InducedDeviation, Tolerances, VerifyOptions};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::report::{self, num, Report};
use crate::{input, CliError, ExpandArgs, InduceArgs, ValidateArgs, VerifyArgs};

fn validation(grid: Option<usize>, tolerance: Option<f64>) -> ValidationOptions {
    let d = ValidationOptions::default();
    ValidationOptions {
        grid: grid.unwrap_or(d.grid),
        tolerance: tolerance.unwrap_or(d.tolerance),
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

#[derive(Debug, Serialize)]
struct ValidateOutput {
    label: String,
    #[serde(flatten)]
    report: ValidationReport,
}

impl Report for ValidateOutput {
    fn header(&self) -> Vec<String> {
        [
            "label",
            "points",
            "max_killing_residual",
            "length_residual",
            "mean_length",
            "kappa",
            "tolerance",
            "passed",
        ]
        .map(String::from)
        .to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let r = &self.report;
        vec![vec![
            self.label.clone(),
            r.points.to_string(),
            num(r.max_killing_residual),
            num(r.length_residual),
            num(r.mean_length),
            num(r.kappa),
            num(r.tolerance),
            r.passed.to_string(),
        ]]
    }
}

pub fn validate(args: &ValidateArgs) -> Result<bool, CliError> {
    let data = input::load(&args.input)?;
    let options = validation(args.grid, args.tol_constraint);
    let report = initial_data::validate(&data.sigma, &data.v, &options).map_err(failed)?;
    let passed = report.passed;
    let out = ValidateOutput {
        label: data.label,
        report,
    };
    report::emit(&out, args.output.format, args.output.out.as_deref())?;
    if !passed {
        eprintln!(
            "constraint violated: killing residual {:e}, length residual {:e}, tolerance {:e}",
            out.report.max_killing_residual, out.report.length_residual, out.report.tolerance
        );
    }
    Ok(passed)
}

#[derive(Debug, Serialize)]
struct InduceRow {
    spacetime: String,
    points: usize,
    kappa_closed_form: f64,
    kappa_numeric: f64,
    kappa_deviation: f64,
    deviation: InducedDeviation,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct InduceOutput {
    rows: Vec<InduceRow>,
    passed: bool,
}

impl Report for InduceOutput {
    fn header(&self) -> Vec<String> {
        [
            "spacetime",
            "points",
            "kappa_closed_form",
            "kappa_numeric",
            "kappa_deviation",
            "sigma_deviation",
            "v_deviation",
            "omega_deviation",
            "passed",
        ]
        .map(String::from)
        .to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.spacetime.clone(),
                    r.points.to_string(),
                    num(r.kappa_closed_form),
                    num(r.kappa_numeric),
                    num(r.kappa_deviation),
                    num(r.deviation.sigma),
                    num(r.deviation.v),
                    num(r.deviation.omega),
                    r.passed.to_string(),
                ]
            })
            .collect()
    }
}

pub fn induce(args: &InduceArgs) -> Result<bool, CliError> {
    let specs = args.selection.specs()?;
    let tol = Tolerances::default();
    let tol_induced = args.tol_induced.unwrap_or(tol.induced);
    let tol_kappa = args.tol_kappa.unwrap_or(tol.kappa);
    let n = args
        .theta_grid
        .unwrap_or(VerifyOptions::default().theta_grid);
    let mut rows = Vec::new();
    for spec in &specs {
        let sol = catalog::build(spec)?;
        let bases = sol.base_points(n);
        let numeric = foliation::induce_numeric_with(&sol, &bases, &ValidationOptions::default())
            .map_err(failed)?;
        let deviation =
            verify::induced_deviation(&sol, &numeric, &bases).map_err(CliError::Failed)?;
        let kappa_numeric = numeric.surface_gravity();
        let kappa_deviation = (kappa_numeric - sol.kappa_closed_form).abs();
        rows.push(InduceRow {
            spacetime: sol.label.clone(),
            points: bases.len(),
            kappa_closed_form: sol.kappa_closed_form,
            kappa_numeric,
            kappa_deviation,
            deviation,
            passed: deviation.max() < tol_induced && kappa_deviation < tol_kappa,
        });
    }
    let passed = rows.iter().all(|r| r.passed);
    report::emit(
        &InduceOutput { rows, passed },
        args.output.format,
        args.output.out.as_deref(),
    )?;
    Ok(passed)
}

#[derive(Debug, Serialize)]
struct ExpandRow {
    label: String,
    coords: Vec<String>,
    point: Vec<f64>,
    kappa: f64,
    /// Frame vectors `V, e_2, …` in chart components.
    frame: Vec<Vec<f64>>,
    q1: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct ExpandOutput {
    rows: Vec<ExpandRow>,
}

fn frame_name(i: usize) -> String {
    if i == 0 {
        "V".to_string()
    } else {
        format!("e{}", i + 1)
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Report for ExpandOutput {
    fn header(&self) -> Vec<String> {
        let n = self.rows.first().map_or(0, |r| r.point.len());
        let mut h = vec!["label".to_string()];
        h.extend((0..n).map(|i| format!("p{i}")));
        h.push("kappa".to_string());
        for i in 0..n {
            for j in i..n {
                h.push(format!("q_{}_{}", frame_name(i), frame_name(j)));
            }
        }
        h
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let n = r.point.len();
                let mut row = vec![r.label.clone()];
                row.extend(r.point.iter().map(|&x| num(x)));
                row.push(num(r.kappa));
                for i in 0..n {
                    for j in i..n {
                        row.push(num(r.q1[i][j]));
                    }
                }
                row
            })
            .collect()
    }
}

pub fn expand(args: &ExpandArgs) -> Result<bool, CliError> {
    let mut sources: Vec<(InitialDataSet, Vec<Vec<f64>>)> = Vec::new();
    if let Some(path) = &args.input {
        if !args.selection.is_empty() {
            return Err(CliError::Usage(
                "--input cannot be combined with a catalog selection".into(),
            ));
        }
        let d = input::load(path)?;
        let options = validation(None, args.tol_constraint);
        let data = InitialDataSet::with_options(d.label, d.sigma, d.v, &options).map_err(failed)?;
        let points = data.chart().interior_grid(args.grid.unwrap_or(5));
        sources.push((data, points));
    } else {
        for spec in args.selection.specs()? {
            let sol = catalog::build(&spec)?;
            let points = sol.base_points(args.grid.unwrap_or(7));
            sources.push((sol.closed_form_data, points));
        }
    }
    let mut rows = Vec::new();
    for (data, points) in &sources {
        for p in points {
            let q = expansion::q1(data, p).map_err(failed)?;
            rows.push(ExpandRow {
                label: data.label().to_string(),
                coords: data
                    .chart()
                    .coord_names()
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                point: p.clone(),
                kappa: q.kappa,
                frame: q
                    .frame
                    .column_iter()
                    .map(|c| c.iter().copied().collect())
                    .collect(),
                q1: rows_of(&q.q1_components),
                a: rows_of(&q.a_components),
            });
        }
    }
    report::emit(
        &ExpandOutput { rows },
        args.output.format,
        args.output.out.as_deref(),
    )?;
    Ok(true)
}

#[derive(Debug, Serialize)]
struct CriterionSummary {
    criterion: u8,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct VerifyOutput {
    passed: bool,
    criteria: Vec<CriterionSummary>,
    checks: Vec<CheckRecord>,
}

impl Report for VerifyOutput {
    fn header(&self) -> Vec<String> {
        [
            "criterion",
            "check",
            "spacetime",
            "residual",
            "threshold",
            "passed",
            "detail",
        ]
        .map(String::from)
        .to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.checks
            .iter()
            .map(|c| {
                vec![
                    c.criterion.to_string(),
                    c.check.clone(),
                    c.spacetime.clone().unwrap_or_default(),
                    num(c.residual),
                    num(c.threshold),
                    c.passed.to_string(),
                    c.detail.clone(),
                ]
            })
            .collect()
    }
}

pub fn verify(args: &VerifyArgs) -> Result<bool, CliError> {
    let entries: Vec<EntrySpec> = args.selection.specs()?;
    let mut options = VerifyOptions {
        entries,
        global_checks: args.selection.all,
        ..VerifyOptions::default()
    };
    if let Some(n) = args.theta_grid {
        options.theta_grid = n;
    }
    if let Some(n) = args.grid {
        options.ricci_grid = n;
        options.data_grid = n;
    }
    if let Some(h) = args.h {
        options.h = h;
    }
    if let Some(t) = args.t_max {
        options.h = t / 3.0;
    }
    if let Some(t) = args.tolerances.tol_constraint {
        options.validation.tolerance = t;
    }
    args.tolerances.apply(&mut options.tolerances);

    let report = verify::run(&options);
    let mut criteria: Vec<u8> = report.checks.iter().map(|c| c.criterion).collect();
    criteria.dedup();
    let failed_count = report.checks.iter().filter(|c| !c.passed).count();
    let out = VerifyOutput {
        passed: report.passed,
        criteria: criteria
            .into_iter()
            .map(|c| CriterionSummary {
                criterion: c,
                passed: report.criterion_passed(c),
            })
            .collect(),
        checks: report.checks,
    };
    report::emit(&out, args.output.format, args.output.out.as_deref())?;
    eprintln!(
        "verify: {} checks, {} failed, {:.1} s",
        out.checks.len(),
        failed_count,
        report.elapsed_seconds
    );
    Ok(out.passed)
}
