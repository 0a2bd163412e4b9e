//! Exact vacuum spacetimes with non-degenerate Killing horizons and their
//! closed-form induced data.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{
    self, Chart, Coordinate, GeometryError, LocalMetric, MetricField, OneFormField, Signature,
    VectorField,
};
use crate::initial_data::{DataError, InitialDataSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("unknown spacetime `{0}`")]
    UnknownName(String),
    #[error("unknown horizon branch `{0}`")]
    UnknownBranch(String),
    #[error("branch {branch} does not apply to {name}")]
    BranchMismatch { name: EntryName, branch: Branch },
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = CatalogError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryName {
    Schwarzschild,
    Kerr,
    Misner,
    QuotientSchwarzschild,
    TaubNut,
}

impl EntryName {
    pub const ALL: [EntryName; 5] = [
        EntryName::Schwarzschild,
        EntryName::Kerr,
        EntryName::Misner,
        EntryName::QuotientSchwarzschild,
        EntryName::TaubNut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntryName::Schwarzschild => "schwarzschild",
            EntryName::Kerr => "kerr",
            EntryName::Misner => "misner",
            EntryName::QuotientSchwarzschild => "quotient_schwarzschild",
            EntryName::TaubNut => "taub_nut",
        }
    }
}

impl fmt::Display for EntryName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntryName {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        EntryName::ALL
            .into_iter()
            .find(|n| n.as_str() == key)
            .ok_or_else(|| CatalogError::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Outer,
    Inner,
    Plus,
    Minus,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Outer => "outer",
            Branch::Inner => "inner",
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        })
    }
}

impl FromStr for Branch {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outer" => Ok(Branch::Outer),
            "inner" => Ok(Branch::Inner),
            "plus" | "+" => Ok(Branch::Plus),
            "minus" | "-" => Ok(Branch::Minus),
            _ => Err(CatalogError::UnknownBranch(s.to_string())),
        }
    }
}

/// Catalog selector. Unset parameters take per-entry defaults:
/// schwarzschild `m = 1`; kerr `m = 1, a = 0.5`, outer; misner `α = −2`;
/// quotient_schwarzschild `m = 1/2`; taub_nut `m = 0, l = 1/√2`, plus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntrySpec {
    pub name: EntryName,
    pub m: Option<f64>,
    pub a: Option<f64>,
    pub l: Option<f64>,
    pub alpha: Option<f64>,
    pub branch: Option<Branch>,
}

impl EntrySpec {
    pub fn new(name: EntryName) -> Self {
        Self {
            name,
            m: None,
            a: None,
            l: None,
            alpha: None,
            branch: None,
        }
    }

    pub fn m(mut self, m: f64) -> Self {
        self.m = Some(m);
        self
    }

    pub fn a(mut self, a: f64) -> Self {
        self.a = Some(a);
        self
    }

    pub fn l(mut self, l: f64) -> Self {
        self.l = Some(l);
        self
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn branch(mut self, branch: Branch) -> Self {
        self.branch = Some(branch);
        self
    }
}

/// Hypersurface `{x^index = value}` of the spacetime chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonLocus {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SpacetimeSolution {
    pub name: EntryName,
    pub label: String,
    pub chart: Chart,
    pub metric: MetricField,
    /// Horizon Killing field, oriented so that the surface gravity is positive.
    pub w: VectorField,
    pub horizon: HorizonLocus,
    pub horizon_chart: Chart,
    pub closed_form_data: InitialDataSet,
    pub closed_form_omega: OneFormField,
    pub kappa_closed_form: f64,
    /// Horizon-chart axis swept by [`SpacetimeSolution::base_points`].
    pub sweep_axis: usize,
}

impl SpacetimeSolution {
    /// Spacetime point of a horizon-chart point.
    pub fn embed(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        x.insert(self.horizon.index, self.horizon.value);
        x
    }

    /// Spacetime indices of the horizon-chart coordinates.
    pub fn tangent_indices(&self) -> Vec<usize> {
        (0..self.chart.dim())
            .filter(|&i| i != self.horizon.index)
            .collect()
    }

    /// Copy with the horizon locus moved by `delta`; the closed-form data is
    /// kept, so only checks against the true horizon are meaningful.
    pub fn with_shifted_horizon(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.horizon.value += delta;
        out.label = format!("{} (horizon shifted by {delta})", self.label);
        out
    }

    /// `n` horizon points along the sweep axis over `[0.3, π − 0.3]`, the
    /// other horizon coordinates at their defaults.
    pub fn base_points(&self, n: usize) -> Vec<Vec<f64>> {
        let mut base = vec![0.0; self.horizon_chart.dim()];
        base[self.sweep_axis] = PI / 2.0;
        geometry::linspace(0.3, PI - 0.3, n)
            .into_iter()
            .map(|x| {
                let mut p = base.clone();
                p[self.sweep_axis] = x;
                p
            })
            .collect()
    }

    pub fn ricci_residual(&self, point: &[f64]) -> Result<f64> {
        ricci_residual(self, point)
    }
}

/// `‖Ric‖ / ‖Riem‖`, or `‖Ric‖` where the curvature norm is below `1e−10`.
pub fn ricci_residual(sol: &SpacetimeSolution, point: &[f64]) -> Result<f64> {
    let local = LocalMetric::new(&sol.metric, point, 2)?;
    let riem = local.riemann();
    let ric = geometry::ricci_from_riemann(&riem, &local.inverse);
    let ric_norm = geometry::frobenius(&ric);
    let riem_norm = riem.norm();
    Ok(if riem_norm >= 1e-10 {
        ric_norm / riem_norm
    } else {
        ric_norm
    })
}

pub fn induced_data_closed_form(sol: &SpacetimeSolution) -> &InitialDataSet {
    &sol.closed_form_data
}

pub fn build(spec: &EntrySpec) -> Result<SpacetimeSolution> {
    let branch_ok = matches!(
        (spec.name, spec.branch),
        (_, None)
            | (EntryName::Kerr, Some(Branch::Outer | Branch::Inner))
            | (EntryName::TaubNut, Some(Branch::Plus | Branch::Minus))
    );
    if !branch_ok {
        return Err(CatalogError::BranchMismatch {
            name: spec.name,
            branch: spec.branch.unwrap(),
        });
    }
    match spec.name {
        EntryName::Schwarzschild => schwarzschild(spec.m.unwrap_or(1.0)),
        EntryName::Kerr => kerr(
            spec.m.unwrap_or(1.0),
            spec.a.unwrap_or(0.5),
            spec.branch.unwrap_or(Branch::Outer),
        ),
        EntryName::Misner => misner(spec.alpha.unwrap_or(-2.0)),
        EntryName::QuotientSchwarzschild => quotient_schwarzschild(spec.m.unwrap_or(0.5)),
        EntryName::TaubNut => taub_nut(
            spec.m.unwrap_or(0.0),
            spec.l.unwrap_or(std::f64::consts::FRAC_1_SQRT_2),
            spec.branch.unwrap_or(Branch::Plus),
        ),
    }
}

fn polar() -> Coordinate {
    Coordinate::new("theta", 0.05, PI - 0.05)
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CatalogError::Parameter(format!(
            "{name} must be positive, got {value}"
        )))
    }
}

fn horizon_chart(chart: &Chart, index: usize, extra: Vec<(String, f64)>) -> Result<Chart> {
    let coords = chart
        .coords()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != index)
        .map(|(_, c)| c.clone())
        .collect();
    let mut params = chart.params().to_vec();
    params.extend(extra);
    Ok(Chart::new(coords, params)?)
}

struct Assembly {
    name: EntryName,
    label: String,
    chart: Chart,
    metric_upper: Vec<String>,
    w: Vec<String>,
    horizon: HorizonLocus,
    extra_params: Vec<(String, f64)>,
    sigma_upper: Vec<String>,
    v: Vec<String>,
    omega: Vec<String>,
    kappa: f64,
    sweep_axis: usize,
}

fn assemble(a: Assembly) -> Result<SpacetimeSolution> {
    let upper: Vec<&str> = a.metric_upper.iter().map(String::as_str).collect();
    let metric = MetricField::from_upper(a.chart.clone(), Signature::Lorentzian, &upper)?;
    let w_src: Vec<&str> = a.w.iter().map(String::as_str).collect();
    let w = VectorField::parse(a.chart.clone(), &w_src)?;
    let hchart = horizon_chart(&a.chart, a.horizon.index, a.extra_params)?;
    let sigma_src: Vec<&str> = a.sigma_upper.iter().map(String::as_str).collect();
    let sigma = MetricField::from_upper(hchart.clone(), Signature::Riemannian, &sigma_src)?;
    let v_src: Vec<&str> = a.v.iter().map(String::as_str).collect();
    let v = VectorField::parse(hchart.clone(), &v_src)?;
    let omega_src: Vec<&str> = a.omega.iter().map(String::as_str).collect();
    let omega = OneFormField::parse(hchart.clone(), &omega_src)?;
    let data = InitialDataSet::new(a.label.clone(), sigma, v)?;
    Ok(SpacetimeSolution {
        name: a.name,
        label: a.label,
        chart: a.chart,
        metric,
        w,
        horizon: a.horizon,
        horizon_chart: hchart,
        closed_form_data: data,
        closed_form_omega: omega,
        kappa_closed_form: a.kappa,
        sweep_axis: a.sweep_axis,
    })
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Ingoing Eddington–Finkelstein Schwarzschild, `(r, v, θ, φ)`.
fn schwarzschild(m: f64) -> Result<SpacetimeSolution> {
    positive("m", m)?;
    let chart = Chart::new(
        vec![
            Coordinate::new("r", m, 4.0 * m),
            Coordinate::unbounded("v"),
            polar(),
            Coordinate::unbounded("phi"),
        ],
        vec![("m".into(), m)],
    )?;
    assemble(Assembly {
        name: EntryName::Schwarzschild,
        label: format!("schwarzschild m={m}"),
        chart,
        metric_upper: strings(&[
            "0",
            "1",
            "0",
            "0",
            "2*m/r - 1",
            "0",
            "0",
            "r^2",
            "0",
            "r^2*sin(theta)^2",
        ]),
        w: strings(&["0", "1", "0", "0"]),
        horizon: HorizonLocus {
            index: 0,
            value: 2.0 * m,
        },
        extra_params: vec![],
        sigma_upper: strings(&["1/(16*m^2)", "0", "0", "4*m^2", "0", "4*m^2*sin(theta)^2"]),
        v: strings(&["1", "0", "0"]),
        omega: strings(&["1/(4*m)", "0", "0"]),
        kappa: 1.0 / (4.0 * m),
        sweep_axis: 1,
    })
}

/// Schwarzschild with `w = v/2`, `(r, w, θ, φ)`.
fn quotient_schwarzschild(m: f64) -> Result<SpacetimeSolution> {
    positive("m", m)?;
    let chart = Chart::new(
        vec![
            Coordinate::new("r", m, 4.0 * m),
            Coordinate::unbounded("w"),
            polar(),
            Coordinate::unbounded("phi"),
        ],
        vec![("m".into(), m)],
    )?;
    assemble(Assembly {
        name: EntryName::QuotientSchwarzschild,
        label: format!("quotient_schwarzschild m={m}"),
        chart,
        metric_upper: strings(&[
            "0",
            "2",
            "0",
            "0",
            "4*(2*m/r - 1)",
            "0",
            "0",
            "r^2",
            "0",
            "r^2*sin(theta)^2",
        ]),
        w: strings(&["0", "1", "0", "0"]),
        horizon: HorizonLocus {
            index: 0,
            value: 2.0 * m,
        },
        extra_params: vec![],
        sigma_upper: strings(&["1/(4*m^2)", "0", "0", "4*m^2", "0", "4*m^2*sin(theta)^2"]),
        v: strings(&["1", "0", "0"]),
        omega: strings(&["1/(2*m)", "0", "0"]),
        kappa: 1.0 / (2.0 * m),
        sweep_axis: 1,
    })
}

/// Ingoing Kerr, `(r, v, θ, φ)`, horizon `r = r±`.
fn kerr(m: f64, a: f64, branch: Branch) -> Result<SpacetimeSolution> {
    positive("m", m)?;
    if !(a.is_finite() && a != 0.0 && a.abs() < m) {
        return Err(CatalogError::Parameter(format!(
            "kerr needs 0 < |a| < m (got a={a}, m={m}); |a| = m is a degenerate horizon"
        )));
    }
    let root = (m * m - a * a).sqrt();
    let rh = match branch {
        Branch::Inner => m - root,
        _ => m + root,
    };
    let kappa_signed = 0.5 * (1.0 / m - 1.0 / rh);
    let orient = kappa_signed.signum();
    let chart = Chart::new(
        vec![
            Coordinate::new("r", 0.2 * (m - root), 3.0 * (m + root)),
            Coordinate::unbounded("v"),
            polar(),
            Coordinate::unbounded("phi"),
        ],
        vec![("m".into(), m), ("a".into(), a), ("rh".into(), rh)],
    )?;
    let sg = "(r^2 + a^2*cos(theta)^2)";
    let s2 = "sin(theta)^2";
    let f = format!("(2*m*r/{sg} - 1)");
    let metric_upper = vec![
        "0".into(),
        "1".into(),
        "0".into(),
        format!("-a*{s2}"),
        f.clone(),
        "0".into(),
        format!("-a*{s2}*(1 + {f})"),
        sg.into(),
        "0".into(),
        format!("a^2*{s2}^2*(2 + {f}) + {sg}*{s2}"),
    ];
    let w = vec![
        "0".into(),
        format!("{orient}"),
        "0".into(),
        format!("{orient}*a/(rh^2 + a^2)"),
    ];

    // horizon chart (v, θ, φ); rh = r±, k = signed surface gravity
    let hs = "(rh^2 + a^2*cos(theta)^2)";
    let rho = "(rh^2 + a^2)";
    let g_vv = format!("{s2}*a^2/{hs}");
    let g_vp = format!("(-{s2}*a*{rho}/{hs})");
    let g_pp = format!("{s2}*{rho}^2/{hs}");
    let w_v = format!("(k*{rho}/{hs} + rh*a^2*{s2}/{hs}^2)");
    let w_t = format!("(-a^2*sin(2*theta)/(2*{hs}))");
    let w_p = format!("(-k*{rho}*a*{s2}/{hs} - rh*a*{s2}*{rho}/{hs}^2)");
    let sigma_upper = vec![
        format!("{g_vv} + {w_v}^2"),
        format!("{w_v}*{w_t}"),
        format!("{g_vp} + {w_v}*{w_p}"),
        format!("{hs} + {w_t}^2"),
        format!("{w_t}*{w_p}"),
        format!("{g_pp} + {w_p}^2"),
    ];
    let v = w[1..].to_vec();
    assemble(Assembly {
        name: EntryName::Kerr,
        label: format!("kerr m={m} a={a} {branch}"),
        chart,
        metric_upper,
        w,
        horizon: HorizonLocus {
            index: 0,
            value: rh,
        },
        extra_params: vec![("k".into(), kappa_signed)],
        sigma_upper,
        v,
        omega: vec![w_v, w_t, w_p],
        kappa: kappa_signed.abs(),
        sweep_axis: 1,
    })
}

/// `2 dt dx + α t dx² + dy² + dz²`, horizon `t = 0`.
fn misner(alpha: f64) -> Result<SpacetimeSolution> {
    if !(alpha.is_finite() && alpha != 0.0) {
        return Err(CatalogError::Parameter(format!(
            "misner needs alpha != 0, got {alpha}"
        )));
    }
    let orient = (-alpha).signum();
    let chart = Chart::new(
        vec![
            Coordinate::new("t", -1.0, 1.0),
            Coordinate::unbounded("x"),
            Coordinate::unbounded("y"),
            Coordinate::unbounded("z"),
        ],
        vec![("alpha".into(), alpha)],
    )?;
    assemble(Assembly {
        name: EntryName::Misner,
        label: format!("misner alpha={alpha}"),
        chart,
        metric_upper: strings(&["0", "1", "0", "0", "alpha*t", "0", "0", "1", "0", "1"]),
        w: vec!["0".into(), format!("{orient}"), "0".into(), "0".into()],
        horizon: HorizonLocus {
            index: 0,
            value: 0.0,
        },
        extra_params: vec![],
        sigma_upper: strings(&["alpha^2/4", "0", "0", "1", "0", "1"]),
        v: vec![format!("{orient}"), "0".into(), "0".into()],
        omega: strings(&["-alpha/2", "0", "0"]),
        kappa: alpha.abs() / 2.0,
        sweep_axis: 1,
    })
}

/// Taub-NUT in Euler angles `(t, ψ, θ, φ)` with `α₁ = dψ + cos θ dφ` and
/// `α₂² + α₃² = dθ² + sin²θ dφ²`; horizon `t = t±`, `W = E₁ = ∂_ψ`.
fn taub_nut(m: f64, l: f64, branch: Branch) -> Result<SpacetimeSolution> {
    if !(l.is_finite() && l != 0.0 && m.is_finite()) {
        return Err(CatalogError::Parameter(format!(
            "taub_nut needs l != 0, got l={l}, m={m}"
        )));
    }
    let root = (m * m + l * l).sqrt();
    let (tp, tm) = (m + root, m - root);
    let th = if branch == Branch::Minus { tm } else { tp };
    let sign = if branch == Branch::Minus { -1.0 } else { 1.0 };
    let kappa_signed = sign * 2.0 * l * root / (th * th + l * l);
    let orient = kappa_signed.signum();
    let chart = Chart::new(
        vec![
            Coordinate::new("t", tm - 1.0, tp + 1.0),
            Coordinate::unbounded("psi"),
            polar(),
            Coordinate::unbounded("phi"),
        ],
        vec![("m".into(), m), ("l".into(), l)],
    )?;
    let u = "((2*m*t + l^2 - t^2)/(t^2 + l^2))";
    let metric_upper = vec![
        "0".into(),
        "2*l".into(),
        "0".into(),
        "2*l*cos(theta)".into(),
        format!("4*l^2*{u}"),
        "0".into(),
        format!("4*l^2*{u}*cos(theta)"),
        "t^2 + l^2".into(),
        "0".into(),
        format!("4*l^2*{u}*cos(theta)^2 + (t^2 + l^2)*sin(theta)^2"),
    ];
    let sigma_upper = strings(&[
        "k^2",
        "0",
        "k^2*cos(theta)",
        "th^2 + l^2",
        "0",
        "k^2*cos(theta)^2 + (th^2 + l^2)*sin(theta)^2",
    ]);
    assemble(Assembly {
        name: EntryName::TaubNut,
        label: format!("taub_nut m={m} l={l} {branch}"),
        chart,
        metric_upper,
        w: vec!["0".into(), format!("{orient}"), "0".into(), "0".into()],
        horizon: HorizonLocus {
            index: 0,
            value: th,
        },
        extra_params: vec![("th".into(), th), ("k".into(), kappa_signed)],
        sigma_upper,
        v: vec![format!("{orient}"), "0".into(), "0".into()],
        omega: strings(&["k", "0", "k*cos(theta)"]),
        kappa: kappa_signed.abs(),
        sweep_axis: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::frobenius;

    fn all_defaults() -> Vec<SpacetimeSolution> {
        EntryName::ALL
            .iter()
            .map(|&n| build(&EntrySpec::new(n)).unwrap())
            .collect()
    }

    #[test]
    fn closed_form_kappa_values() {
        let s = build(&EntrySpec::new(EntryName::Schwarzschild).m(1.0)).unwrap();
        assert_eq!(s.kappa_closed_form, 0.25);
        let k = build(&EntrySpec::new(EntryName::Kerr)).unwrap();
        assert!((k.kappa_closed_form - 0.2320508076).abs() < 1e-10);
        let t = build(&EntrySpec::new(EntryName::TaubNut)).unwrap();
        assert!((t.kappa_closed_form - 1.0).abs() < 1e-15);
        let q = build(&EntrySpec::new(EntryName::QuotientSchwarzschild)).unwrap();
        assert_eq!(q.kappa_closed_form, 1.0);
    }

    #[test]
    fn kerr_horizon_rotation() {
        let k = build(&EntrySpec::new(EntryName::Kerr).m(1.0).a(0.5)).unwrap();
        let w = k.w.value(&k.embed(&[0.0, 1.0, 0.0])).unwrap();
        assert!((w[3] - 0.1339746).abs() < 1e-7);
        assert!((k.horizon.value - 1.8660254).abs() < 1e-7);
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(
            build(&EntrySpec::new(EntryName::Kerr).m(1.0).a(1.0)),
            Err(CatalogError::Parameter(_))
        ));
        assert!(build(&EntrySpec::new(EntryName::Kerr).m(1.0).a(1.5)).is_err());
        assert!(build(&EntrySpec::new(EntryName::Schwarzschild).m(-1.0)).is_err());
        assert!(build(&EntrySpec::new(EntryName::Misner).alpha(0.0)).is_err());
        assert!(build(&EntrySpec::new(EntryName::TaubNut).l(0.0)).is_err());
        assert!(matches!(
            build(&EntrySpec::new(EntryName::Schwarzschild).branch(Branch::Inner)),
            Err(CatalogError::BranchMismatch { .. })
        ));
        assert!("kerr-newman".parse::<EntryName>().is_err());
        assert_eq!("taub-nut".parse::<EntryName>().unwrap(), EntryName::TaubNut);
    }

    #[test]
    fn closed_form_surface_gravity_is_consistent() {
        for sol in all_defaults() {
            let k = sol.closed_form_data.surface_gravity();
            assert!(
                (k - sol.kappa_closed_form).abs() < 1e-10,
                "{}: {k}",
                sol.label
            );
        }
        for spec in [
            EntrySpec::new(EntryName::Kerr).branch(Branch::Inner),
            EntrySpec::new(EntryName::TaubNut)
                .branch(Branch::Minus)
                .m(0.3)
                .l(-0.8),
            EntrySpec::new(EntryName::Misner).alpha(3.0),
        ] {
            let sol = build(&spec).unwrap();
            let k = sol.closed_form_data.surface_gravity();
            assert!(
                (k - sol.kappa_closed_form).abs() < 1e-10,
                "{}: {k}",
                sol.label
            );
        }
    }

    #[test]
    fn killing_and_null_on_horizon() {
        for sol in all_defaults() {
            for p in sol.chart.interior_grid(3) {
                let lie = geometry::lie_derivative_metric(&sol.metric, &sol.w, &p).unwrap();
                assert!(frobenius(&lie) < 1e-10, "{} at {p:?}", sol.label);
            }
            for y in sol.base_points(4) {
                let x = sol.embed(&y);
                let g = sol.metric.value(&x).unwrap();
                let w = sol.w.value(&x).unwrap();
                assert!(w.dot(&(&g * &w)).abs() < 1e-12, "{}", sol.label);
                let mut off = x.clone();
                off[sol.horizon.index] += 0.1;
                let g = sol.metric.value(&off).unwrap();
                let w = sol.w.value(&off).unwrap();
                assert!(w.dot(&(&g * &w)).abs() > 1e-4, "{}", sol.label);
            }
        }
    }

    #[test]
    fn misner_is_flat() {
        let sol = build(&EntrySpec::new(EntryName::Misner)).unwrap();
        assert!(sol.ricci_residual(&[0.3, 0.1, 0.2, 0.4]).unwrap() < 1e-12);
        assert!(
            geometry::riemann(&sol.metric, &[0.3, 0.0, 0.0, 0.0])
                .unwrap()
                .norm()
                < 1e-14
        );
    }

    #[test]
    fn schwarzschild_vacuum_samples() {
        let sol = build(&EntrySpec::new(EntryName::Schwarzschild)).unwrap();
        for r in [1.5, 3.0] {
            assert!(sol.ricci_residual(&[r, 0.0, PI / 3.0, 0.0]).unwrap() < 1e-9);
        }
    }

    #[test]
    fn taub_nut_unit_sphere_case() {
        let sol = build(&EntrySpec::new(EntryName::TaubNut)).unwrap();
        let s = sol
            .closed_form_data
            .sigma()
            .value(&[0.0, 1.0, 0.0])
            .unwrap();
        // α₁² + α₂² + α₃² in Euler angles
        assert!((s[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((s[(0, 2)] - 1.0f64.cos()).abs() < 1e-15);
        assert!((s[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((s[(2, 2)] - 1.0).abs() < 1e-15);
        assert!(sol.ricci_residual(&[0.2, 0.1, 1.0, 0.3]).unwrap() < 1e-8);
    }

    #[test]
    fn quotient_unit_data() {
        let sol = build(&EntrySpec::new(EntryName::QuotientSchwarzschild)).unwrap();
        let s = sol
            .closed_form_data
            .sigma()
            .value(&[0.0, 0.5, 0.0])
            .unwrap();
        assert_eq!(s[(0, 0)], 1.0);
        assert_eq!(s[(1, 1)], 1.0);
        assert!((s[(2, 2)] - 0.5f64.sin().powi(2)).abs() < 1e-15);
    }
}
