//! Horizon initial data `(σ, V)` and the quantities it determines.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{
    self, Chart, CoordinateChange, GeometryError, JetSource, MetricField, OneFormField, Signature,
    VectorField,
};
use crate::jet::Jet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("sigma must be declared riemannian")]
    NotRiemannian,
    #[error("sigma and V live on different charts")]
    ChartMismatch,
    #[error("empty point list")]
    NoPoints,
    #[error("V is not Killing: residual {residual:.3e} exceeds {tolerance:.1e}")]
    NotKilling { residual: f64, tolerance: f64 },
    #[error("sigma(V, V) is not constant: residual {residual:.3e} exceeds {tolerance:.1e}")]
    NonConstantLength { residual: f64, tolerance: f64 },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Points per axis of the uniform validation grid.
    pub grid: usize,
    pub tolerance: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            grid: 11,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub points: usize,
    pub max_killing_residual: f64,
    pub length_residual: f64,
    pub mean_length: f64,
    pub kappa: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// A Riemannian metric `σ` with a Killing field `V` of constant length.
#[derive(Debug, Clone)]
pub struct InitialDataSet {
    label: String,
    sigma: MetricField,
    v: VectorField,
    kappa: f64,
}

impl InitialDataSet {
    /// Validates with default options.
    pub fn new(label: impl Into<String>, sigma: MetricField, v: VectorField) -> Result<Self> {
        Self::with_options(label, sigma, v, &ValidationOptions::default())
    }

    pub fn with_options(
        label: impl Into<String>,
        sigma: MetricField,
        v: VectorField,
        options: &ValidationOptions,
    ) -> Result<Self> {
        let report = validate(&sigma, &v, options)?;
        if report.max_killing_residual > options.tolerance {
            return Err(DataError::NotKilling {
                residual: report.max_killing_residual,
                tolerance: options.tolerance,
            });
        }
        if report.length_residual > options.tolerance {
            return Err(DataError::NonConstantLength {
                residual: report.length_residual,
                tolerance: options.tolerance,
            });
        }
        Ok(Self {
            label: label.into(),
            sigma,
            v,
            kappa: report.kappa,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn chart(&self) -> &Chart {
        self.sigma.chart()
    }

    pub fn sigma(&self) -> &MetricField {
        &self.sigma
    }

    pub fn v(&self) -> &VectorField {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// `κ = √σ(V, V)`, fixed at validation time.
    pub fn surface_gravity(&self) -> f64 {
        self.kappa
    }

    pub fn killing_residual(&self, point: &[f64]) -> Result<f64> {
        killing_residual(&self.sigma, &self.v, point)
    }

    pub fn length_residual(&self, points: &[Vec<f64>]) -> Result<f64> {
        Ok(length_stats(&self.sigma, &self.v, points)?.1)
    }

    /// `ω_i = σ_ij V^j / √σ(V, V)`.
    pub fn connection_one_form(&self, point: &[f64]) -> Result<DVector<f64>> {
        let s = self.sigma.value(point)?;
        let v = self.v.value(point)?;
        let sv = &s * &v;
        let len = v.dot(&sv).sqrt();
        Ok(sv / len)
    }

    /// `g = σ − σ(·, V) ⊗ σ(·, V) / σ(V, V)`.
    pub fn degenerate_metric(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.sigma.value(point)?;
        let v = self.v.value(point)?;
        let sv = &s * &v;
        let len2 = v.dot(&sv);
        Ok(s - &sv * sv.transpose() / len2)
    }

    /// `ω` as a field, for derivatives.
    pub fn omega_field(&self) -> OneFormField {
        let source = OmegaSource {
            sigma: self.sigma.clone(),
            v: self.v.clone(),
        };
        OneFormField::computed(self.chart().clone(), Arc::new(source))
            .expect("component count matches chart")
    }

    /// `|λ_min| / λ_max` of the degenerate metric and the sine of the angle
    /// (in chart components) between its kernel and `V`.
    pub fn kernel_check(&self, point: &[f64]) -> Result<(f64, f64)> {
        let g = self.degenerate_metric(point)?;
        let eig = SymmetricEigen::new(g);
        let (mut imin, mut max) = (0, 0.0_f64);
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l.abs() < eig.eigenvalues[imin].abs() {
                imin = i;
            }
            max = max.max(l.abs());
        }
        let kernel = eig.eigenvectors.column(imin).into_owned();
        let v = self.v.value(point)?;
        let cos = kernel.dot(&v).abs() / (kernel.norm() * v.norm());
        let sin = (1.0 - cos * cos).max(0.0).sqrt();
        Ok((eig.eigenvalues[imin].abs() / max, sin))
    }

    /// Re-expresses the data in the new chart of `change`, then revalidates.
    pub fn pullback(&self, change: &CoordinateChange, options: &ValidationOptions) -> Result<Self> {
        let sigma = change.pullback_metric(&self.sigma)?;
        let v = change.pullback_vector(&self.v)?;
        Self::with_options(format!("{} (pulled back)", self.label), sigma, v, options)
    }
}

/// Runs the constant-length Killing checks without rejecting the data.
pub fn validate(
    sigma: &MetricField,
    v: &VectorField,
    options: &ValidationOptions,
) -> Result<ValidationReport> {
    if sigma.signature() != Signature::Riemannian {
        return Err(DataError::NotRiemannian);
    }
    if sigma.chart() != v.chart() {
        return Err(DataError::ChartMismatch);
    }
    let points = sigma.chart().grid(options.grid);
    let mut max_killing: f64 = 0.0;
    for p in &points {
        sigma.check_signature(p)?;
        let r = killing_residual(sigma, v, p)?;
        max_killing = max_killing.max(if r.is_nan() { f64::INFINITY } else { r });
    }
    let (mean, spread) = length_stats(sigma, v, &points)?;
    for p in &points {
        let vv = v.value(p)?;
        if vv.norm() == 0.0 {
            return Err(GeometryError::VanishingVector { point: p.clone() }.into());
        }
    }
    Ok(ValidationReport {
        points: points.len(),
        max_killing_residual: max_killing,
        length_residual: spread,
        mean_length: mean,
        kappa: mean.sqrt(),
        tolerance: options.tolerance,
        passed: max_killing <= options.tolerance && spread <= options.tolerance,
    })
}

/// `‖𝓛_V σ‖ / ‖σ‖` at `point`.
pub fn killing_residual(sigma: &MetricField, v: &VectorField, point: &[f64]) -> Result<f64> {
    let lie = geometry::lie_derivative_metric(sigma, v, point)?;
    let s = sigma.value(point)?;
    Ok(geometry::frobenius(&lie) / geometry::frobenius(&s))
}

fn length_stats(sigma: &MetricField, v: &VectorField, points: &[Vec<f64>]) -> Result<(f64, f64)> {
    if points.is_empty() {
        return Err(DataError::NoPoints);
    }
    let lengths = points
        .iter()
        .map(|p| {
            let s = sigma.value(p)?;
            let vv = v.value(p)?;
            Ok(vv.dot(&(&s * &vv)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
    let spread = lengths.iter().fold(0.0_f64, |m, l| m.max((l - mean).abs())) / mean;
    Ok((mean, spread))
}

struct OmegaSource {
    sigma: MetricField,
    v: VectorField,
}

impl JetSource for OmegaSource {
    fn component_count(&self) -> usize {
        self.v.dim()
    }

    fn jets(&self, point: &[f64], order: usize) -> geometry::Result<Vec<Jet>> {
        let n = self.v.dim();
        let s = self.sigma.jets(point, order)?;
        let v = self.v.jets(point, order)?;
        let sv: Vec<Jet> = (0..n)
            .map(|i| {
                let mut acc = Jet::zero(n, order);
                for j in 0..n {
                    acc += &(&s[i * n + j] * &v[j]);
                }
                acc
            })
            .collect();
        let mut len2 = Jet::zero(n, order);
        for i in 0..n {
            len2 += &(&v[i] * &sv[i]);
        }
        let inv_len =
            len2.sqrt()
                .and_then(|l| l.recip())
                .map_err(|_| GeometryError::VanishingVector {
                    point: point.to_vec(),
                })?;
        Ok(sv.iter().map(|x| x * &inv_len).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Coordinate;
    use std::f64::consts::PI;

    fn torus_chart() -> Chart {
        Chart::new(
            vec![
                Coordinate::new("x", 0.0, 2.0 * PI),
                Coordinate::new("y", 0.0, 2.0 * PI),
                Coordinate::new("z", 0.0, 2.0 * PI),
            ],
            vec![],
        )
        .unwrap()
    }

    fn flat_torus() -> InitialDataSet {
        let chart = torus_chart();
        let sigma = MetricField::from_upper(
            chart.clone(),
            Signature::Riemannian,
            &["1", "0", "0", "1", "0", "1"],
        )
        .unwrap();
        let v = VectorField::parse(chart, &["1", "0", "0"]).unwrap();
        InitialDataSet::new("flat torus", sigma, v).unwrap()
    }

    fn round_product(bump: &str) -> (MetricField, VectorField) {
        let chart = Chart::new(
            vec![
                Coordinate::unbounded("v"),
                Coordinate::new("theta", 0.05, PI - 0.05),
                Coordinate::unbounded("phi"),
            ],
            vec![("m".into(), 1.0)],
        )
        .unwrap();
        let vv = format!("1/(16*m^2){bump}");
        let sigma = MetricField::from_upper(
            chart.clone(),
            Signature::Riemannian,
            &[&vv, "0", "0", "4*m^2", "0", "4*m^2*sin(theta)^2"],
        )
        .unwrap();
        let v = VectorField::parse(chart, &["1", "0", "0"]).unwrap();
        (sigma, v)
    }

    #[test]
    fn flat_torus_is_trivially_valid() {
        let d = flat_torus();
        assert_eq!(d.killing_residual(&[0.1, 0.2, 0.3]).unwrap(), 0.0);
        assert_eq!(d.surface_gravity(), 1.0);
        assert_eq!(
            d.connection_one_form(&[1.0, 1.0, 1.0]).unwrap().as_slice(),
            &[1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn schwarzschild_like_data() {
        let (sigma, v) = round_product("");
        let d = InitialDataSet::new("s", sigma, v).unwrap();
        assert!((d.surface_gravity() - 0.25).abs() < 1e-15);
        let pts = d.chart().grid(5);
        assert_eq!(d.length_residual(&pts).unwrap(), 0.0);
        let p = [0.3, 1.1, 2.0];
        let w = d.connection_one_form(&p).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && w[1] == 0.0 && w[2] == 0.0);
        let g = d.degenerate_metric(&p).unwrap();
        assert!(g[(0, 0)].abs() < 1e-16);
        assert!((g[(1, 1)] - 4.0).abs() < 1e-15);
        assert!((g[(2, 2)] - 4.0 * 1.1f64.sin().powi(2)).abs() < 1e-14);
        let (ratio, sin) = d.kernel_check(&p).unwrap();
        assert!(ratio < 1e-15 && sin < 1e-12);
    }

    #[test]
    fn non_constant_length_rejected() {
        let (sigma, v) = round_product("*(1 + 0.1*cos(theta))");
        let report = validate(&sigma, &v, &ValidationOptions::default()).unwrap();
        assert!(report.length_residual > 1e-3);
        assert!(report.max_killing_residual < 1e-14);
        assert!(!report.passed);
        assert!(matches!(
            InitialDataSet::new("bump", sigma, v),
            Err(DataError::NonConstantLength { .. })
        ));
    }

    #[test]
    fn non_killing_rejected() {
        let chart = torus_chart();
        let sigma = MetricField::from_upper(
            chart.clone(),
            Signature::Riemannian,
            &["1", "0", "0", "1", "0", "1"],
        )
        .unwrap();
        let v = VectorField::parse(chart, &["1", "sin(x)", "0"]).unwrap();
        assert!(matches!(
            InitialDataSet::new("bad", sigma, v),
            Err(DataError::NotKilling { .. })
        ));
    }

    #[test]
    fn empty_points_error() {
        assert_eq!(flat_torus().length_residual(&[]), Err(DataError::NoPoints));
    }

    #[test]
    fn omega_field_matches_pointwise_formula() {
        let (sigma, v) = round_product("");
        let d = InitialDataSet::new("s", sigma, v).unwrap();
        let field = d.omega_field().value(&[0.0, 0.7, 0.0]).unwrap();
        assert_eq!(field, d.connection_one_form(&[0.0, 0.7, 0.0]).unwrap());
        let lie =
            geometry::lie_derivative_oneform(&d.omega_field(), d.v(), &[0.0, 0.7, 0.0]).unwrap();
        assert_eq!(lie.norm(), 0.0);
    }
}
