//! First-order expansion of the metric off the horizon, computed from the
//! initial data alone, and its comparison with the foliation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::catalog::SpacetimeSolution;
use crate::foliation::{self, ExpansionRecord, FoliationError};
use crate::geometry::{self, CoordinateChange, GeometryError, LocalMetric};
use crate::initial_data::{DataError, InitialDataSet, ValidationOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpansionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Foliation(#[from] FoliationError),
    #[error("frame mismatch: record at {record:?}, data point {data:?}")]
    FrameMismatch { record: Vec<f64>, data: Vec<f64> },
}

pub type Result<T, E = ExpansionError> = std::result::Result<T, E>;

/// Times used for the remainder fit.
pub const REMAINDER_TIMES: [f64; 4] = [1e-2, 3e-3, 1e-3, 3e-4];

#[derive(Debug, Clone, PartialEq)]
pub struct Q1Result {
    pub base_point: Vec<f64>,
    /// Columns `V, e_2, …, e_n` in chart components.
    pub frame: DMatrix<f64>,
    /// `𝓛_t g` in that frame.
    pub q1_components: DMatrix<f64>,
    pub kappa: f64,
    /// `g(∇_X ∂_t, Y)` for `X, Y` in `e_2, …, e_n`.
    pub a_components: DMatrix<f64>,
    /// `𝓛_t g` in chart components, by tensorial extension of the frame values.
    pub coordinate_components: DMatrix<f64>,
}

/// Weight of `κ⁻² σ(∇_X V, ∇_Y V)` in [`q1`].
pub const TWIST_COEFFICIENT: f64 = 2.0;

/// Weight with which the twist term enters in the uncorrected form of the
/// formula; kept for comparison.
pub const UNCORRECTED_TWIST_COEFFICIENT: f64 = 1.0;

pub fn q1(data: &InitialDataSet, point: &[f64]) -> Result<Q1Result> {
    q1_with_twist(data, point, TWIST_COEFFICIENT)
}

/// [`q1`] with an explicit weight on the twist term.
pub fn q1_with_twist(data: &InitialDataSet, point: &[f64], twist: f64) -> Result<Q1Result> {
    let n = data.dim();
    let sigma = data.sigma();
    let local = LocalMetric::new(sigma, point, 2)?;
    let gamma = local.christoffel();
    let ric = geometry::ricci_from_riemann(&local.riemann(), &local.inverse);
    let v_jets = data.v().jets(point, 1)?;
    let nabla_v = geometry::cov_deriv_from_parts(&gamma, &v_jets);
    let v = DVector::from_iterator(n, v_jets.iter().map(|j| j.value()));
    let complement = geometry::orthogonal_complement_from_values(&local.g, &v, point)?;
    let mut frame = DMatrix::zeros(n, n);
    frame.set_column(0, &v);
    for (k, e) in complement.vectors.iter().enumerate() {
        frame.set_column(k + 1, e);
    }
    let kappa = data.surface_gravity();
    let domega = geometry::exterior_derivative_oneform(&data.omega_field(), point)?;

    // ∇_X V for each frame vector, as columns
    let nabla_frame = nabla_v.transpose() * &frame;
    let ric_f = frame.transpose() * &ric * &frame;
    let grad_f = nabla_frame.transpose() * &local.g * &nabla_frame;
    let d_f = frame.transpose() * &domega * &frame;

    let mut q = DMatrix::zeros(n, n);
    q[(0, 0)] = -2.0 * kappa;
    let mut a = DMatrix::zeros(n - 1, n - 1);
    for i in 1..n {
        for j in 1..n {
            let sym = ric_f[(i, j)] + twist * grad_f[(i, j)] / (kappa * kappa);
            q[(i, j)] = sym / kappa;
            a[(i - 1, j - 1)] = (sym + d_f[(i, j)]) / (2.0 * kappa);
        }
    }
    let inv = frame
        .clone()
        .try_inverse()
        .ok_or_else(|| GeometryError::Singular {
            point: point.to_vec(),
        })?;
    let coordinate_components = inv.transpose() * &q * &inv;
    Ok(Q1Result {
        base_point: point.to_vec(),
        frame,
        q1_components: q,
        kappa,
        a_components: a,
        coordinate_components,
    })
}

/// `A(X, Y) = g(∇_X ∂_t, Y)` on `V⊥`, in the frame of [`q1`].
pub fn transversal_gradient(data: &InitialDataSet, point: &[f64]) -> Result<DMatrix<f64>> {
    Ok(q1(data, point)?.a_components)
}

/// `ĝ(t, y) = ĝ(0, y) + t 𝓛_t ĝ(0, y)` in adapted coordinates `(t, y)`.
#[derive(Debug, Clone)]
pub struct FirstOrderMetric {
    data: InitialDataSet,
}

pub fn first_order_metric(data: &InitialDataSet) -> FirstOrderMetric {
    FirstOrderMetric { data: data.clone() }
}

impl FirstOrderMetric {
    /// `ĝ(∂_t, ∂_t) = 0`, `ĝ(∂_t, ∂_a) = ω_a / κ`, horizon block the
    /// degenerate metric.
    pub fn order0(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let hd = self.data.dim();
        let omega = self.data.connection_one_form(y)?;
        let g = self.data.degenerate_metric(y)?;
        let kappa = self.data.surface_gravity();
        let mut out = DMatrix::zeros(hd + 1, hd + 1);
        for a in 0..hd {
            out[(0, a + 1)] = omega[a] / kappa;
            out[(a + 1, 0)] = omega[a] / kappa;
            for b in 0..hd {
                out[(a + 1, b + 1)] = g[(a, b)];
            }
        }
        Ok(out)
    }

    /// Linear coefficient; the `∂_t` row is zero.
    pub fn order1(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let hd = self.data.dim();
        let q = q1(&self.data, y)?.coordinate_components;
        let mut out = DMatrix::zeros(hd + 1, hd + 1);
        out.view_mut((1, 1), (hd, hd)).copy_from(&q);
        Ok(out)
    }

    pub fn eval(&self, t: f64, y: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.order0(y)? + self.order1(y)? * t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub base_point: Vec<f64>,
    pub kappa: f64,
    /// `max |q1 − 𝓛_t ĝ|` over `{V, e_a}` frame entries.
    pub max_deviation: f64,
    /// `|q1(V, V) + 2κ|`.
    pub anchor_vv: f64,
    /// `max |q1(V, e_a)|`.
    pub anchor_ve: f64,
    /// `(t, ‖ĝ(t) − first order(t)‖)`.
    pub remainders: Vec<(f64, f64)>,
    /// Least-squares slope of `log ‖remainder‖` against `log t`; absent when
    /// the remainder is at rounding level.
    pub slope: Option<f64>,
    /// Remainder at rounding level for every `t`: the solution is exactly
    /// linear in `t`.
    pub exact: bool,
}

impl DeviationReport {
    pub fn slope_within(&self, lo: f64, hi: f64) -> bool {
        self.exact || self.slope.is_some_and(|s| s >= lo && s <= hi)
    }
}

fn fit_slope(samples: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(t, r)| (t.ln(), r.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Compares `q1(data)` with a numerically extracted record at the same base
/// point, then fits the remainder of the first-order metric against the
/// exact foliation of `sol`.
pub fn compare(
    data: &InitialDataSet,
    sol: &SpacetimeSolution,
    record: &ExpansionRecord,
    max_step: f64,
) -> Result<DeviationReport> {
    let y = &record.base_point;
    if y.len() != data.dim() || !data.chart().contains(y) {
        return Err(ExpansionError::FrameMismatch {
            record: y.clone(),
            data: data
                .chart()
                .coords()
                .iter()
                .map(|c| c.sample_range().0)
                .collect(),
        });
    }
    let q = q1(data, y)?;
    let hd = data.dim();
    let numeric = record.coordinate_components[1]
        .view((1, 1), (hd, hd))
        .into_owned();
    let numeric_f = q.frame.transpose() * numeric * &q.frame;
    let max_deviation = (&q.q1_components - numeric_f).amax();
    let anchor_vv = (q.q1_components[(0, 0)] + 2.0 * q.kappa).abs();
    let anchor_ve = q.q1_components.row(0).columns(1, hd - 1).amax();

    let fo = first_order_metric(data);
    let fmap = foliation::evolve_at(sol, std::slice::from_ref(y), &REMAINDER_TIMES, max_step)?;
    let scale = fo.order0(y)?.amax().max(1.0);
    let mut remainders = Vec::new();
    for &t in &REMAINDER_TIMES {
        let state = fmap.state(0, t).expect("sample requested");
        let exact = foliation::adapted_metric(&sol.metric, state)?;
        let diff = exact - fo.eval(t, y)?;
        remainders.push((t, geometry::frobenius(&diff)));
    }
    let exact = remainders.iter().all(|&(_, r)| r <= 1e-12 * scale);
    let slope =
        (!exact && remainders.iter().all(|&(_, r)| r > 0.0)).then(|| fit_slope(&remainders));
    Ok(DeviationReport {
        base_point: y.clone(),
        kappa: q.kappa,
        max_deviation,
        anchor_vv,
        anchor_ve,
        remainders,
        slope,
        exact,
    })
}

/// `max |q1(φ*σ, φ*V) − φ*q1(σ, V)|` in chart components at `y` of the new
/// chart, relative to the size of the expected tensor.
pub fn pullback_equivariance(
    data: &InitialDataSet,
    change: &CoordinateChange,
    points: &[Vec<f64>],
    options: &ValidationOptions,
) -> Result<f64> {
    let pulled = data.pullback(change, options)?;
    let mut worst: f64 = 0.0;
    for y in points {
        let x = change.apply(y)?;
        let j = change.jacobian(y)?;
        let expected = j.transpose() * q1(data, &x)?.coordinate_components * &j;
        let got = q1(&pulled, y)?.coordinate_components;
        worst = worst.max((got - &expected).amax() / expected.amax().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build, EntryName, EntrySpec};
    use crate::geometry::{Chart, Coordinate};
    use std::f64::consts::PI;

    #[test]
    fn schwarzschild_q1() {
        let sol = build(&EntrySpec::new(EntryName::Schwarzschild)).unwrap();
        let r = q1(&sol.closed_form_data, &[0.0, PI / 2.0, 0.0]).unwrap();
        assert_eq!(r.q1_components[(0, 0)], -0.5);
        assert_eq!(r.q1_components[(0, 1)], 0.0);
        assert!((r.q1_components[(1, 1)] - 1.0).abs() < 1e-13);
        assert!((r.q1_components[(2, 2)] - 1.0).abs() < 1e-13);
        // A is half of q1 on V⊥ since dω = 0
        let half = r.q1_components.view((1, 1), (2, 2)) * 0.5;
        assert!((&r.a_components - half).amax() < 1e-14);
    }

    #[test]
    fn misner_q1_vanishes_on_complement() {
        let sol = build(&EntrySpec::new(EntryName::Misner)).unwrap();
        let r = q1(&sol.closed_form_data, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(r.q1_components[(0, 0)], -2.0);
        assert!(r.q1_components.view((1, 1), (2, 2)).amax() == 0.0);
        assert!(r.a_components.amax() == 0.0);
    }

    #[test]
    fn taub_nut_twist_weight() {
        // radius-2 round S³: Ric = σ/2, |∇_X V|² = 1/4 for unit X ⊥ V
        let sol = build(&EntrySpec::new(EntryName::TaubNut)).unwrap();
        let y = [0.0, 1.2, 0.0];
        let r = q1(&sol.closed_form_data, &y).unwrap();
        assert!((r.q1_components.view((1, 1), (2, 2)) - DMatrix::identity(2, 2)).amax() < 1e-12);
        let old = q1_with_twist(&sol.closed_form_data, &y, UNCORRECTED_TWIST_COEFFICIENT).unwrap();
        assert!((old.q1_components[(1, 1)] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn kerr_a_antisymmetric_part_is_domega() {
        let sol = build(&EntrySpec::new(EntryName::Kerr)).unwrap();
        let data = &sol.closed_form_data;
        let y = [0.0, PI / 3.0, 0.0];
        let r = q1(data, &y).unwrap();
        let anti = (&r.a_components - r.a_components.transpose()) * 0.5;
        let d = geometry::exterior_derivative_oneform(&sol.closed_form_omega, &y).unwrap();
        let e = r.frame.columns(1, 2).into_owned();
        let expected = e.transpose() * d * e / (2.0 * r.kappa);
        assert!((anti - expected).amax() < 1e-9);
        let sym = &r.a_components + r.a_components.transpose();
        assert!((sym - r.q1_components.view((1, 1), (2, 2))).amax() < 1e-12);
    }

    #[test]
    fn first_order_schwarzschild_vv() {
        let sol = build(&EntrySpec::new(EntryName::Schwarzschild)).unwrap();
        let fo = first_order_metric(&sol.closed_form_data);
        let y = [0.0, 1.0, 0.0];
        let g = fo.eval(0.01, &y).unwrap();
        assert!((g[(1, 1)] + 0.005).abs() < 1e-14);
        assert_eq!(g[(0, 0)], 0.0);
        assert!((g[(0, 1)] - 1.0).abs() < 1e-15);
        let exact = 2.0 / 2.01 - 1.0;
        assert!((g[(1, 1)] - exact).abs() < 3e-5);
    }

    #[test]
    fn schwarzschild_compare_and_remainder() {
        let sol = build(&EntrySpec::new(EntryName::Schwarzschild)).unwrap();
        let h = 1e-3;
        let y = vec![0.0, 1.0, 0.0];
        let fmap = foliation::evolve_stencil(&sol, std::slice::from_ref(&y), h).unwrap();
        let rec = foliation::pullback_metric_jet(&sol, &fmap, 0, h, 1).unwrap();
        let rep = compare(&sol.closed_form_data, &sol, &rec, 1e-4).unwrap();
        assert!(rep.max_deviation < 1e-7, "{rep:?}");
        assert!(rep.slope_within(1.9, 2.1), "{rep:?}");
    }

    #[test]
    fn stretched_v_equivariance() {
        let sol = build(&EntrySpec::new(EntryName::Schwarzschild)).unwrap();
        let chart = Chart::new(
            vec![
                Coordinate::unbounded("vp"),
                Coordinate::new("theta", 0.05, PI - 0.05),
                Coordinate::unbounded("phi"),
            ],
            vec![("m".into(), 1.0)],
        )
        .unwrap();
        let change = CoordinateChange::new(chart, &["vp/2", "theta", "phi"]).unwrap();
        let opts = ValidationOptions {
            grid: 4,
            tolerance: 1e-9,
        };
        let r = pullback_equivariance(
            &sol.closed_form_data,
            &change,
            &[vec![0.2, 1.0, 0.1]],
            &opts,
        )
        .unwrap();
        assert!(r < 1e-8, "{r}");
    }
}
