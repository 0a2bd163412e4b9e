//! Chart-based tensor calculus evaluated pointwise from jets.
//!
//! Curvature conventions:
//!
//! * `R(X, Y, Z, W) = g(∇_X∇_Y Z − ∇_Y∇_X Z − ∇_{[X,Y]} Z, W)`, stored as
//!   `R_{ijkl} = R(∂_i, ∂_j, ∂_k, ∂_l)`. With this convention the sectional
//!   curvature of the plane spanned by `X, Y` is `R(X, Y, Y, X) / |X ∧ Y|²`.
//! * `Ric_{jk} = g^{il} R_{ijkl}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::jet::{self, Jet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("metric is singular at {point:?}")]
    Singular { point: Vec<f64> },
    #[error("operation needs an invertible metric; this one is lightlike")]
    Lightlike,
    #[error("metric at {point:?} does not have {expected} signature")]
    Signature {
        point: Vec<f64>,
        expected: Signature,
    },
    #[error("metric at {point:?} is not positive definite")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("vector field vanishes at {point:?}")]
    VanishingVector { point: Vec<f64> },
    #[error("expected {expected} components, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("metric components ({i}, {j}) and ({j}, {i}) differ")]
    NotSymmetric { i: usize, j: usize },
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("non-finite value at {point:?}")]
    NonFinite { point: Vec<f64> },
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

/// One chart coordinate with its open domain (bounds may be infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl Coordinate {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
        }
    }

    pub fn unbounded(name: impl Into<String>) -> Self {
        Self::new(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Finite sampling interval; infinite sides are replaced by a unit
    /// window next to the finite side (or `[-1, 1]`).
    pub fn sample_range(&self) -> (f64, f64) {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => (self.lower, self.upper),
            (true, false) => (self.lower, self.lower + 2.0),
            (false, true) => (self.upper - 2.0, self.upper),
            (false, false) => (-1.0, 1.0),
        }
    }
}

/// Local coordinates plus the named real parameters the component
/// expressions may refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    coords: Vec<Coordinate>,
    params: Vec<(String, f64)>,
}

impl Chart {
    pub fn new(coords: Vec<Coordinate>, params: Vec<(String, f64)>) -> Result<Self> {
        for (i, c) in coords.iter().enumerate() {
            if coords[..i].iter().any(|d| d.name == c.name) {
                return Err(GeometryError::InvalidChart(format!(
                    "duplicate coordinate `{}`",
                    c.name
                )));
            }
            if !(c.lower < c.upper) {
                return Err(GeometryError::InvalidChart(format!(
                    "empty domain for `{}`",
                    c.name
                )));
            }
        }
        for (i, (p, v)) in params.iter().enumerate() {
            if params[..i].iter().any(|(q, _)| q == p) || coords.iter().any(|c| c.name == *p) {
                return Err(GeometryError::InvalidChart(format!("duplicate name `{p}`")));
            }
            if !v.is_finite() {
                return Err(GeometryError::InvalidChart(format!(
                    "parameter `{p}` is not finite"
                )));
            }
        }
        if coords.len() > jet::MAX_DIM {
            return Err(GeometryError::InvalidChart(format!(
                "at most {} coordinates are supported",
                jet::MAX_DIM
            )));
        }
        Ok(Self { coords, params })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Coordinate] {
        &self.coords
    }

    pub fn coord_names(&self) -> Vec<&str> {
        self.coords.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn param_values(&self) -> Vec<f64> {
        self.params.iter().map(|&(_, v)| v).collect()
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c.name == name)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && self
                .coords
                .iter()
                .zip(point)
                .all(|(c, &x)| x > c.lower && x < c.upper)
    }

    /// Parses an expression against this chart's coordinates and parameters.
    pub fn parse(&self, source: &str) -> Result<Expression, ExprError> {
        Expression::parse(source, &self.coord_names(), &self.param_names())
    }

    /// Uniform tensor grid with `n` points per axis over the sample box.
    pub fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .coords
            .iter()
            .map(|c| {
                let (lo, hi) = c.sample_range();
                linspace(lo, hi, n)
            })
            .collect();
        cartesian(&axes)
    }

    /// Cell-centred grid with `n` points per axis; avoids the box faces.
    pub fn interior_grid(&self, n: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .coords
            .iter()
            .map(|c| {
                let (lo, hi) = c.sample_range();
                (0..n)
                    .map(|k| lo + (hi - lo) * (k as f64 + 0.5) / n as f64)
                    .collect()
            })
            .collect();
        cartesian(&axes)
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub(crate) fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &x in axis {
                let mut p = prefix.clone();
                p.push(x);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Something that produces component jets at a point: a metric,
/// a vector field or a one-form whose components are computed rather than
/// written down as expressions.
pub trait JetSource: Send + Sync {
    fn component_count(&self) -> usize;
    fn jets(&self, point: &[f64], order: usize) -> Result<Vec<Jet>>;
}

/// Component storage shared by metrics, vector fields and one-forms.
#[derive(Clone)]
pub enum Components {
    Analytic(Vec<Expression>),
    Computed(Arc<dyn JetSource>),
}

impl fmt::Debug for Components {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Components::Analytic(e) => {
                let printed: Vec<String> = e.iter().map(|x| x.to_string()).collect();
                f.debug_tuple("Analytic").field(&printed).finish()
            }
            Components::Computed(_) => f.write_str("Computed(..)"),
        }
    }
}

impl Components {
    fn len(&self) -> usize {
        match self {
            Components::Analytic(e) => e.len(),
            Components::Computed(s) => s.component_count(),
        }
    }

    fn jets(&self, chart: &Chart, point: &[f64], order: usize) -> Result<Vec<Jet>> {
        if point.len() != chart.dim() {
            return Err(GeometryError::Dimension {
                expected: chart.dim(),
                got: point.len(),
            });
        }
        let out = match self {
            Components::Analytic(exprs) => {
                let seeds = Jet::seed(point, order);
                let params = chart.param_values();
                exprs
                    .iter()
                    .map(|e| e.eval_inputs(&seeds, &params))
                    .collect::<Result<Vec<_>, _>>()?
            }
            Components::Computed(src) => src.jets(point, order)?,
        };
        if out.iter().any(|j| !j.is_finite()) {
            return Err(GeometryError::NonFinite {
                point: point.to_vec(),
            });
        }
        Ok(out)
    }

    fn parse(chart: &Chart, sources: &[&str]) -> Result<Self> {
        Ok(Components::Analytic(
            sources
                .iter()
                .map(|s| chart.parse(s))
                .collect::<Result<Vec<_>, _>>()?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signature {
    Riemannian,
    Lorentzian,
    /// Positive semidefinite with a one-dimensional kernel; never inverted.
    Lightlike,
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signature::Riemannian => "riemannian",
            Signature::Lorentzian => "lorentzian",
            Signature::Lightlike => "lightlike",
        })
    }
}

/// A symmetric (0,2)-tensor field on a chart.
#[derive(Debug, Clone)]
pub struct MetricField {
    chart: Chart,
    signature: Signature,
    components: Components,
}

impl MetricField {
    /// Builds a metric from a full `n × n` matrix of expression strings.
    /// Off-diagonal pairs must agree (structurally, or numerically on a
    /// coarse grid).
    pub fn parse(chart: Chart, signature: Signature, rows: &[Vec<&str>]) -> Result<Self> {
        let n = chart.dim();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(GeometryError::Dimension {
                expected: n * n,
                got: rows.iter().map(Vec::len).sum(),
            });
        }
        let flat: Vec<&str> = rows.iter().flatten().copied().collect();
        let components = Components::parse(&chart, &flat)?;
        let metric = Self {
            chart,
            signature,
            components,
        };
        metric.check_symmetric()?;
        Ok(metric)
    }

    /// Builds a metric from the upper triangle `(i <= j)` in row order; the
    /// lower triangle mirrors it.
    pub fn from_upper(chart: Chart, signature: Signature, upper: &[&str]) -> Result<Self> {
        let n = chart.dim();
        if upper.len() != n * (n + 1) / 2 {
            return Err(GeometryError::Dimension {
                expected: n * (n + 1) / 2,
                got: upper.len(),
            });
        }
        let mut rows = vec![vec![""; n]; n];
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                rows[i][j] = upper[k];
                rows[j][i] = upper[k];
                k += 1;
            }
        }
        Self::parse(chart, signature, &rows)
    }

    pub fn computed(
        chart: Chart,
        signature: Signature,
        source: Arc<dyn JetSource>,
    ) -> Result<Self> {
        let n = chart.dim();
        if source.component_count() != n * n {
            return Err(GeometryError::Dimension {
                expected: n * n,
                got: source.component_count(),
            });
        }
        Ok(Self {
            chart,
            signature,
            components: Components::Computed(source),
        })
    }

    fn check_symmetric(&self) -> Result<()> {
        let Components::Analytic(exprs) = &self.components else {
            return Ok(());
        };
        let n = self.dim();
        let probes = self.chart.grid(3);
        let params = self.chart.param_values();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (&exprs[i * n + j], &exprs[j * n + i]);
                if a == b {
                    continue;
                }
                for p in &probes {
                    let (x, y) = (a.eval(p, &params), b.eval(p, &params));
                    match (x, y) {
                        (Ok(x), Ok(y)) if (x - y).abs() <= 1e-12 * (1.0 + x.abs()) => {}
                        (Err(_), Err(_)) => {}
                        _ => return Err(GeometryError::NotSymmetric { i, j }),
                    }
                }
            }
        }
        Ok(())
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    /// Component jets in row-major order.
    pub fn jets(&self, point: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.components.jets(&self.chart, point, order)
    }

    pub fn value(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let jets = self.jets(point, 0)?;
        Ok(DMatrix::from_fn(n, n, |i, j| jets[i * n + j].value()))
    }

    /// Checks the declared signature numerically at `point`.
    pub fn check_signature(&self, point: &[f64]) -> Result<()> {
        let g = self.value(point)?;
        let eig = SymmetricEigen::new(g).eigenvalues;
        let scale = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        let neg = eig.iter().filter(|&&v| v < -tol).count();
        let zero = eig.iter().filter(|&&v| v.abs() <= tol).count();
        let ok = match self.signature {
            Signature::Riemannian => neg == 0 && zero == 0,
            Signature::Lorentzian => neg == 1 && zero == 0,
            Signature::Lightlike => neg == 0 && zero == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(GeometryError::Signature {
                point: point.to_vec(),
                expected: self.signature,
            })
        }
    }
}

/// Vector field or one-form components on a chart.
#[derive(Debug, Clone)]
pub struct ComponentField {
    chart: Chart,
    components: Components,
}

/// Contravariant vector field.
pub type VectorField = ComponentField;
/// Covariant one-form field.
pub type OneFormField = ComponentField;

impl ComponentField {
    pub fn parse(chart: Chart, components: &[&str]) -> Result<Self> {
        if components.len() != chart.dim() {
            return Err(GeometryError::Dimension {
                expected: chart.dim(),
                got: components.len(),
            });
        }
        let components = Components::parse(&chart, components)?;
        Ok(Self { chart, components })
    }

    pub fn computed(chart: Chart, source: Arc<dyn JetSource>) -> Result<Self> {
        if source.component_count() != chart.dim() {
            return Err(GeometryError::Dimension {
                expected: chart.dim(),
                got: source.component_count(),
            });
        }
        Ok(Self {
            chart,
            components: Components::Computed(source),
        })
    }

    pub fn zero(chart: Chart) -> Self {
        let n = chart.dim();
        let coords = chart.coord_names();
        let params = chart.param_names();
        let exprs = (0..n)
            .map(|_| Expression::constant(0.0, &coords, &params))
            .collect();
        Self {
            chart,
            components: Components::Analytic(exprs),
        }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn jets(&self, point: &[f64], order: usize) -> Result<Vec<Jet>> {
        debug_assert_eq!(self.components.len(), self.dim());
        self.components.jets(&self.chart, point, order)
    }

    pub fn value(&self, point: &[f64]) -> Result<DVector<f64>> {
        let jets = self.jets(point, 0)?;
        Ok(DVector::from_iterator(
            jets.len(),
            jets.iter().map(Jet::value),
        ))
    }
}

/// Christoffel symbols `Γ^k_{ij}` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `Γ^k_{ij}`.
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.n + i) * self.n + j] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `Γ^k_{ij} u^i w^j` for every `k`.
    pub fn contract(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += self.get(k, i, j) * u[i] * w[j];
                    }
                }
                s
            })
            .collect()
    }
}

/// Fully covariant Riemann tensor `R_{ijkl}` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Riemann {
    n: usize,
    data: Vec<f64>,
}

impl Riemann {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        self.data[((i * n + j) * n + k) * n + l]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `R(X, Y, Z, W)` for coordinate-component vectors.
    pub fn apply(&self, x: &[f64], y: &[f64], z: &[f64], w: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                for k in 0..n {
                    for l in 0..n {
                        s += self.get(i, j, k, l) * xy * z[k] * w[l];
                    }
                }
            }
        }
        s
    }

    /// Largest violation of the algebraic curvature symmetries (both
    /// antisymmetries, pair symmetry and the first Bianchi identity),
    /// relative to the tensor norm.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = self.get(i, j, k, l);
                        worst = worst
                            .max((r + self.get(j, i, k, l)).abs())
                            .max((r + self.get(i, j, l, k)).abs())
                            .max((r - self.get(k, l, i, j)).abs())
                            .max((r + self.get(j, k, i, l) + self.get(k, i, j, l)).abs());
                    }
                }
            }
        }
        worst / self.norm().max(1.0)
    }
}

/// Metric value and derivatives at a point, the common input of every
/// curvature computation.
#[derive(Debug, Clone)]
pub struct LocalMetric {
    pub point: Vec<f64>,
    pub g: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// `dg[k][(i, j)] = ∂_k g_ij`
    pub dg: Vec<DMatrix<f64>>,
    /// `ddg[k * n + l][(i, j)] = ∂_k ∂_l g_ij`, present when built at order 2.
    pub ddg: Option<Vec<DMatrix<f64>>>,
}

impl LocalMetric {
    /// Evaluates metric jets at `order` (1 or 2) and inverts the value.
    pub fn new(metric: &MetricField, point: &[f64], order: usize) -> Result<Self> {
        if metric.signature() == Signature::Lightlike {
            return Err(GeometryError::Lightlike);
        }
        let jets = metric.jets(point, order)?;
        Self::from_jets(&jets, metric.dim(), point)
    }

    pub fn from_jets(jets: &[Jet], n: usize, point: &[f64]) -> Result<Self> {
        let order = jets[0].order();
        let g = DMatrix::from_fn(n, n, |i, j| jets[i * n + j].value());
        let inverse = invert_checked(&g).ok_or_else(|| GeometryError::Singular {
            point: point.to_vec(),
        })?;
        let dg = (0..n)
            .map(|k| {
                DMatrix::from_fn(n, n, |i, j| {
                    if order >= 1 {
                        jets[i * n + j].partial(&[k])
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let ddg = (order >= 2).then(|| {
            (0..n * n)
                .map(|kl| {
                    let (k, l) = (kl / n, kl % n);
                    DMatrix::from_fn(n, n, |i, j| jets[i * n + j].partial(&[k, l]))
                })
                .collect()
        });
        Ok(Self {
            point: point.to_vec(),
            g,
            inverse,
            dg,
            ddg,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// Lowered symbols `Γ_{m,ij} = ½(∂_i g_jm + ∂_j g_im − ∂_m g_ij)`.
    fn lowered(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n * n];
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    out[(m * n + i) * n + j] =
                        0.5 * (self.dg[i][(j, m)] + self.dg[j][(i, m)] - self.dg[m][(i, j)]);
                }
            }
        }
        out
    }

    pub fn christoffel(&self) -> Christoffel {
        let n = self.dim();
        let low = self.lowered();
        let mut gamma = Christoffel::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let v: f64 = (0..n)
                        .map(|m| self.inverse[(k, m)] * low[(m * n + i) * n + j])
                        .sum();
                    gamma.set(k, i, j, v);
                    gamma.set(k, j, i, v);
                }
            }
        }
        gamma
    }

    /// `∂_l Γ^k_{ij}` for each `l`; needs second derivatives.
    pub fn christoffel_derivatives(&self) -> Vec<Christoffel> {
        let n = self.dim();
        let ddg = self
            .ddg
            .as_ref()
            .expect("christoffel derivatives need an order-2 local metric");
        let low = self.lowered();
        (0..n)
            .map(|l| {
                // ∂_l g^{km} = −g^{ka} ∂_l g_ab g^{bm}
                let dinv = -(&self.inverse * &self.dg[l] * &self.inverse);
                let mut out = Christoffel::zeros(n);
                for k in 0..n {
                    for i in 0..n {
                        for j in i..n {
                            let mut v = 0.0;
                            for m in 0..n {
                                let dlow = 0.5
                                    * (ddg[l * n + i][(j, m)] + ddg[l * n + j][(i, m)]
                                        - ddg[l * n + m][(i, j)]);
                                v += dinv[(k, m)] * low[(m * n + i) * n + j]
                                    + self.inverse[(k, m)] * dlow;
                            }
                            out.set(k, i, j, v);
                            out.set(k, j, i, v);
                        }
                    }
                }
                out
            })
            .collect()
    }

    pub fn riemann(&self) -> Riemann {
        let gamma = self.christoffel();
        let dgamma = self.christoffel_derivatives();
        riemann_from_christoffel(&self.g, &gamma, &dgamma)
    }

    pub fn ricci(&self) -> DMatrix<f64> {
        ricci_from_riemann(&self.riemann(), &self.inverse)
    }
}

/// Assembles `R_{ijkl} = g_{lm} R^m_{kij}` with
/// `R^m_{kij} = ∂_iΓ^m_{jk} − ∂_jΓ^m_{ik} + Γ^m_{ip}Γ^p_{jk} − Γ^m_{jp}Γ^p_{ik}`.
pub fn riemann_from_christoffel(
    g: &DMatrix<f64>,
    gamma: &Christoffel,
    dgamma: &[Christoffel],
) -> Riemann {
    let n = gamma.dim();
    let mut up = vec![0.0; n * n * n * n];
    for m in 0..n {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = dgamma[i].get(m, j, k) - dgamma[j].get(m, i, k);
                    for p in 0..n {
                        v += gamma.get(m, i, p) * gamma.get(p, j, k)
                            - gamma.get(m, j, p) * gamma.get(p, i, k);
                    }
                    up[((m * n + k) * n + i) * n + j] = v;
                }
            }
        }
    }
    let mut data = vec![0.0; n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    data[((i * n + j) * n + k) * n + l] = (0..n)
                        .map(|m| g[(l, m)] * up[((m * n + k) * n + i) * n + j])
                        .sum();
                }
            }
        }
    }
    Riemann { n, data }
}

/// `Ric_{jk} = g^{il} R_{ijkl}`.
pub fn ricci_from_riemann(riem: &Riemann, inverse: &DMatrix<f64>) -> DMatrix<f64> {
    let n = riem.dim();
    let mut ric = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                for l in 0..n {
                    s += inverse[(i, l)] * riem.get(i, j, k, l);
                }
            }
            ric[(j, k)] = s;
        }
    }
    // symmetrize away rounding
    (&ric + ric.transpose()) * 0.5
}

fn invert_checked(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = g.nrows();
    if n == 0 {
        return Some(g.clone());
    }
    let svd = g.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min <= 1e-13 * max {
        return None;
    }
    g.clone().try_inverse()
}

pub fn christoffel(g: &MetricField, point: &[f64]) -> Result<Christoffel> {
    Ok(LocalMetric::new(g, point, 1)?.christoffel())
}

pub fn riemann(g: &MetricField, point: &[f64]) -> Result<Riemann> {
    Ok(LocalMetric::new(g, point, 2)?.riemann())
}

pub fn ricci(g: &MetricField, point: &[f64]) -> Result<DMatrix<f64>> {
    Ok(LocalMetric::new(g, point, 2)?.ricci())
}

/// `(∇_i X)^j = ∂_i X^j + Γ^j_{ik} X^k`, returned with row `i`, column `j`.
pub fn cov_deriv_vector(g: &MetricField, x: &VectorField, point: &[f64]) -> Result<DMatrix<f64>> {
    let local = LocalMetric::new(g, point, 1)?;
    let xj = x.jets(point, 1)?;
    Ok(cov_deriv_from_parts(&local.christoffel(), &xj))
}

pub(crate) fn cov_deriv_from_parts(gamma: &Christoffel, x: &[Jet]) -> DMatrix<f64> {
    let n = gamma.dim();
    DMatrix::from_fn(n, n, |i, j| {
        let mut v = x[j].partial(&[i]);
        for k in 0..n {
            v += gamma.get(j, i, k) * x[k].value();
        }
        v
    })
}

/// `(𝓛_X g)_{ij} = X^k ∂_k g_ij + g_kj ∂_i X^k + g_ik ∂_j X^k`.
pub fn lie_derivative_metric(
    g: &MetricField,
    x: &VectorField,
    point: &[f64],
) -> Result<DMatrix<f64>> {
    let gj = g.jets(point, 1)?;
    let xj = x.jets(point, 1)?;
    Ok(lie_derivative_from_jets(&gj, &xj))
}

pub(crate) fn lie_derivative_from_jets(g: &[Jet], x: &[Jet]) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        let mut v = 0.0;
        for k in 0..n {
            v += x[k].value() * g[i * n + j].partial(&[k])
                + g[k * n + j].value() * x[k].partial(&[i])
                + g[i * n + k].value() * x[k].partial(&[j]);
        }
        v
    })
}

/// `(𝓛_X ω)_i = X^k ∂_k ω_i + ω_k ∂_i X^k`.
pub fn lie_derivative_oneform(
    omega: &OneFormField,
    x: &VectorField,
    point: &[f64],
) -> Result<DVector<f64>> {
    let w = omega.jets(point, 1)?;
    let xj = x.jets(point, 1)?;
    let n = xj.len();
    Ok(DVector::from_fn(n, |i, _| {
        (0..n)
            .map(|k| xj[k].value() * w[i].partial(&[k]) + w[k].value() * xj[k].partial(&[i]))
            .sum()
    }))
}

/// `dω_{ij} = ∂_i ω_j − ∂_j ω_i`.
pub fn exterior_derivative_oneform(omega: &OneFormField, point: &[f64]) -> Result<DMatrix<f64>> {
    let w = omega.jets(point, 1)?;
    Ok(exterior_derivative_from_jets(&w))
}

pub(crate) fn exterior_derivative_from_jets(w: &[Jet]) -> DMatrix<f64> {
    let n = w.len();
    DMatrix::from_fn(n, n, |i, j| w[j].partial(&[i]) - w[i].partial(&[j]))
}

/// Numeric vectors at a base point, given by coordinate components.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub base_point: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
}

impl Frame {
    /// Matrix with the frame vectors as columns.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.vectors.first().map_or(0, |v| v.len());
        DMatrix::from_fn(n, self.vectors.len(), |i, a| self.vectors[a][i])
    }
}

/// σ-orthonormal basis of `{X : σ(X, V) = 0}` at `point`.
///
/// The coordinate basis vector most aligned with `V` (largest
/// `|σ(∂_i, V)| / √(σ(∂_i, ∂_i) σ(V, V))`, first index on ties) is dropped;
/// the rest are Gram–Schmidt orthonormalized against `V` and each other in
/// chart order.
pub fn orthogonal_complement_basis(
    sigma: &MetricField,
    v: &VectorField,
    point: &[f64],
) -> Result<Frame> {
    let s = sigma.value(point)?;
    let vv = v.value(point)?;
    orthogonal_complement_from_values(&s, &vv, point)
}

pub(crate) fn orthogonal_complement_from_values(
    s: &DMatrix<f64>,
    v: &DVector<f64>,
    point: &[f64],
) -> Result<Frame> {
    let n = s.nrows();
    if s.clone().cholesky().is_none() {
        return Err(GeometryError::NotPositiveDefinite {
            point: point.to_vec(),
        });
    }
    let inner = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * s * b)[(0, 0)];
    let vnorm2 = inner(v, v);
    let scale = s.diagonal().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if !(vnorm2 > 1e-28 * scale.max(1.0)) {
        return Err(GeometryError::VanishingVector {
            point: point.to_vec(),
        });
    }
    let sv = s * v;
    let mut drop = 0;
    let mut best = -1.0;
    for i in 0..n {
        let align = sv[i].abs() / (s[(i, i)] * vnorm2).sqrt();
        if align > best + 1e-15 {
            best = align;
            drop = i;
        }
    }
    let mut accepted: Vec<DVector<f64>> = vec![v / vnorm2.sqrt()];
    for i in (0..n).filter(|&i| i != drop) {
        let mut w = DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
        for _pass in 0..2 {
            for u in &accepted {
                let c = inner(&w, u);
                w -= u * c;
            }
        }
        let norm = inner(&w, &w).sqrt();
        w /= norm;
        accepted.push(w);
    }
    Ok(Frame {
        base_point: point.to_vec(),
        vectors: accepted.split_off(1),
    })
}

/// Old coordinates written as expressions of new ones. Fields are pulled
/// back by composing jets, so no derivative of the map is written by hand.
#[derive(Debug, Clone)]
pub struct CoordinateChange {
    new_chart: Chart,
    old_of_new: Arc<Vec<Expression>>,
}

impl CoordinateChange {
    /// `old_of_new[i]` is the `i`-th old coordinate as an expression in the
    /// new chart's coordinates and parameters.
    pub fn new(new_chart: Chart, old_of_new: &[&str]) -> Result<Self> {
        let exprs = old_of_new
            .iter()
            .map(|s| new_chart.parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            new_chart,
            old_of_new: Arc::new(exprs),
        })
    }

    pub fn new_chart(&self) -> &Chart {
        &self.new_chart
    }

    fn map_jets(&self, y: &[f64], order: usize) -> Result<Vec<Jet>> {
        let seeds = Jet::seed(y, order);
        let params = self.new_chart.param_values();
        Ok(self
            .old_of_new
            .iter()
            .map(|e| e.eval_inputs(&seeds, &params))
            .collect::<Result<Vec<_>, _>>()?)
    }

    /// Old coordinates of the new point `y`.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.map_jets(y, 0)?.iter().map(Jet::value).collect())
    }

    /// `J[(i, a)] = ∂x^i/∂y^a`.
    pub fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let jets = self.map_jets(y, 1)?;
        Ok(DMatrix::from_fn(jets.len(), y.len(), |i, a| {
            jets[i].partial(&[a])
        }))
    }

    pub fn pullback_metric(&self, g: &MetricField) -> Result<MetricField> {
        let source = Pullback {
            change: self.clone(),
            inner: g.clone().into_field(),
            kind: PullbackKind::Metric,
        };
        MetricField::computed(self.new_chart.clone(), g.signature(), Arc::new(source))
    }

    /// Pushes a vector field through the inverse of the map.
    pub fn pullback_vector(&self, v: &VectorField) -> Result<VectorField> {
        let source = Pullback {
            change: self.clone(),
            inner: v.clone(),
            kind: PullbackKind::Vector,
        };
        VectorField::computed(self.new_chart.clone(), Arc::new(source))
    }

    pub fn pullback_oneform(&self, w: &OneFormField) -> Result<OneFormField> {
        let source = Pullback {
            change: self.clone(),
            inner: w.clone(),
            kind: PullbackKind::OneForm,
        };
        OneFormField::computed(self.new_chart.clone(), Arc::new(source))
    }
}

impl MetricField {
    fn into_field(self) -> ComponentField {
        ComponentField {
            chart: self.chart,
            components: self.components,
        }
    }
}

#[derive(Clone, Copy)]
enum PullbackKind {
    Metric,
    Vector,
    OneForm,
}

struct Pullback {
    change: CoordinateChange,
    inner: ComponentField,
    kind: PullbackKind,
}

impl JetSource for Pullback {
    fn component_count(&self) -> usize {
        let n = self.change.new_chart.dim();
        match self.kind {
            PullbackKind::Metric => n * n,
            _ => n,
        }
    }

    fn jets(&self, y: &[f64], order: usize) -> Result<Vec<Jet>> {
        let n = y.len();
        let m = self.inner.dim();
        let phi = self.change.map_jets(y, order + 1)?;
        let x: Vec<f64> = phi.iter().map(Jet::value).collect();
        let phi_k: Vec<Jet> = phi.iter().map(|j| j.truncate(order)).collect();
        // jac[i * n + a] = ∂_a φ^i, as jets of order `order`
        let jac: Vec<Jet> = (0..m)
            .flat_map(|i| (0..n).map(move |a| (i, a)))
            .map(|(i, a)| phi[i].derivative(a))
            .collect();
        let inner: Vec<Jet> = self
            .inner
            .components
            .jets(&self.inner.chart, &x, order)?
            .iter()
            .map(|j| j.compose(&phi_k))
            .collect();
        let zero = || Jet::zero(n, order);
        match self.kind {
            PullbackKind::Metric => {
                let mut out = Vec::with_capacity(n * n);
                for a in 0..n {
                    for b in 0..n {
                        let mut s = zero();
                        for i in 0..m {
                            for j in 0..m {
                                let t = &(&jac[i * n + a] * &jac[j * n + b]) * &inner[i * m + j];
                                s += &t;
                            }
                        }
                        out.push(s);
                    }
                }
                Ok(out)
            }
            PullbackKind::OneForm => Ok((0..n)
                .map(|a| {
                    let mut s = zero();
                    for i in 0..m {
                        s += &(&jac[i * n + a] * &inner[i]);
                    }
                    s
                })
                .collect()),
            PullbackKind::Vector => {
                if m != n {
                    return Err(GeometryError::Dimension {
                        expected: n,
                        got: m,
                    });
                }
                let inv = jet::invert_matrix(&jac, n)
                    .ok_or_else(|| GeometryError::Singular { point: y.to_vec() })?;
                Ok((0..n)
                    .map(|a| {
                        let mut s = zero();
                        for i in 0..n {
                            s += &(&inv[a * n + i] * &inner[i]);
                        }
                        s
                    })
                    .collect())
            }
        }
    }
}

/// Frobenius norm.
pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sphere(radius2: &str) -> MetricField {
        let chart = Chart::new(
            vec![
                Coordinate::new("theta", 0.05, PI - 0.05),
                Coordinate::unbounded("phi"),
            ],
            vec![],
        )
        .unwrap();
        let g_pp = format!("{radius2}*sin(theta)^2");
        MetricField::from_upper(chart, Signature::Riemannian, &[radius2, "0", &g_pp]).unwrap()
    }

    fn euclidean3() -> MetricField {
        let chart = Chart::new(
            vec![
                Coordinate::unbounded("x"),
                Coordinate::unbounded("y"),
                Coordinate::unbounded("z"),
            ],
            vec![],
        )
        .unwrap();
        MetricField::from_upper(
            chart,
            Signature::Riemannian,
            &["1", "0", "0", "1", "0", "1"],
        )
        .unwrap()
    }

    #[test]
    fn euclidean_christoffels_vanish() {
        let g = euclidean3();
        let gamma = christoffel(&g, &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(gamma.max_abs(), 0.0);
        assert!(riemann(&g, &[0.0, 0.0, 0.0]).unwrap().norm() == 0.0);
        assert!(frobenius(&ricci(&g, &[0.0, 0.0, 0.0]).unwrap()) == 0.0);
    }

    #[test]
    fn sphere_christoffel() {
        let g = sphere("1");
        let gamma = christoffel(&g, &[PI / 4.0, 0.0]).unwrap();
        assert!((gamma.get(0, 1, 1) + 0.5).abs() < 1e-15);
        // Γ^φ_{θφ} = cot θ
        assert!((gamma.get(1, 0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_curvature_sign_convention() {
        let g = sphere("1");
        let th = PI / 3.0;
        let r = riemann(&g, &[th, 0.4]).unwrap();
        let s2 = th.sin().powi(2);
        // sectional curvature +1: R(∂θ, ∂φ, ∂φ, ∂θ) = sin²θ
        assert!((r.get(0, 1, 1, 0) - s2).abs() < 1e-14);
        assert!((r.get(0, 1, 0, 1) + s2).abs() < 1e-14);
        let ric = ricci(&g, &[th, 0.4]).unwrap();
        assert!((ric[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((ric[(1, 1)] - s2).abs() < 1e-14);
        assert!(ric[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn scaled_sphere_curvature() {
        let g = sphere("4");
        let r = riemann(&g, &[PI / 2.0, 0.0]).unwrap();
        assert!((r.get(0, 1, 1, 0) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn lie_derivative_of_rotation() {
        let g = sphere("1");
        let x = VectorField::parse(g.chart().clone(), &["0", "1"]).unwrap();
        let l = lie_derivative_metric(&g, &x, &[0.7, 0.1]).unwrap();
        assert!(frobenius(&l) < 1e-15);
        let zero = VectorField::zero(g.chart().clone());
        assert_eq!(
            frobenius(&lie_derivative_metric(&g, &zero, &[0.7, 0.1]).unwrap()),
            0.0
        );
        // ∂_θ is not Killing
        let y = VectorField::parse(g.chart().clone(), &["1", "0"]).unwrap();
        assert!(frobenius(&lie_derivative_metric(&g, &y, &[0.7, 0.1]).unwrap()) > 0.1);
    }

    #[test]
    fn exterior_derivative_basics() {
        let chart = Chart::new(
            vec![Coordinate::unbounded("x"), Coordinate::unbounded("y")],
            vec![],
        )
        .unwrap();
        let w = OneFormField::parse(chart.clone(), &["0", "x"]).unwrap();
        let d = exterior_derivative_oneform(&w, &[0.2, 0.3]).unwrap();
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(1, 0)], -1.0);
        // exact form d(x² y + sin y)
        let exact = OneFormField::parse(chart, &["2*x*y", "x^2 + cos(y)"]).unwrap();
        let d = exterior_derivative_oneform(&exact, &[0.2, 0.3]).unwrap();
        assert!(frobenius(&d) < 1e-15);
    }

    #[test]
    fn constant_field_is_parallel_on_flat_chart() {
        let g = euclidean3();
        let x = VectorField::parse(g.chart().clone(), &["1", "2", "3"]).unwrap();
        assert_eq!(
            frobenius(&cov_deriv_vector(&g, &x, &[1.0, 1.0, 1.0]).unwrap()),
            0.0
        );
    }

    #[test]
    fn complement_of_x_axis() {
        let g = euclidean3();
        let v = VectorField::parse(g.chart().clone(), &["1", "0", "0"]).unwrap();
        let f = orthogonal_complement_basis(&g, &v, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.vectors.len(), 2);
        assert_eq!(f.vectors[0].as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(f.vectors[1].as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn complement_errors() {
        let g = euclidean3();
        let v = VectorField::zero(g.chart().clone());
        assert!(matches!(
            orthogonal_complement_basis(&g, &v, &[0.0, 0.0, 0.0]),
            Err(GeometryError::VanishingVector { .. })
        ));
        let chart = g.chart().clone();
        let bad = MetricField::from_upper(
            chart.clone(),
            Signature::Riemannian,
            &["1", "0", "0", "-1", "0", "1"],
        )
        .unwrap();
        let v = VectorField::parse(chart, &["1", "0", "0"]).unwrap();
        assert!(matches!(
            orthogonal_complement_basis(&bad, &v, &[0.0, 0.0, 0.0]),
            Err(GeometryError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn singular_and_lightlike_metrics_rejected() {
        let chart = Chart::new(
            vec![Coordinate::unbounded("x"), Coordinate::unbounded("y")],
            vec![],
        )
        .unwrap();
        let g = MetricField::from_upper(chart.clone(), Signature::Riemannian, &["x^2", "0", "1"])
            .unwrap();
        assert!(matches!(
            christoffel(&g, &[0.0, 0.0]),
            Err(GeometryError::Singular { .. })
        ));
        let l = MetricField::from_upper(chart, Signature::Lightlike, &["1", "0", "0"]).unwrap();
        assert_eq!(christoffel(&l, &[0.0, 0.0]), Err(GeometryError::Lightlike));
        assert!(l.check_signature(&[0.0, 0.0]).is_ok());
    }

    #[test]
    fn asymmetric_metric_rejected() {
        let chart = Chart::new(
            vec![Coordinate::unbounded("x"), Coordinate::unbounded("y")],
            vec![],
        )
        .unwrap();
        let rows = vec![vec!["1", "x"], vec!["y", "1"]];
        assert!(matches!(
            MetricField::parse(chart.clone(), Signature::Riemannian, &rows),
            Err(GeometryError::NotSymmetric { i: 0, j: 1 })
        ));
        let rows = vec![vec!["1", "2*x"], vec!["x*2", "1"]];
        assert!(MetricField::parse(chart, Signature::Riemannian, &rows).is_ok());
    }

    #[test]
    fn chart_validation() {
        assert!(Chart::new(
            vec![Coordinate::unbounded("x"), Coordinate::unbounded("x")],
            vec![]
        )
        .is_err());
        assert!(Chart::new(vec![Coordinate::new("x", 1.0, 1.0)], vec![]).is_err());
        assert!(Chart::new(vec![Coordinate::unbounded("x")], vec![("x".into(), 1.0)]).is_err());
        let c = Chart::new(
            vec![Coordinate::new("x", 0.0, 1.0), Coordinate::unbounded("y")],
            vec![],
        )
        .unwrap();
        assert_eq!(c.grid(3).len(), 9);
        assert!(c.contains(&[0.5, 100.0]));
        assert!(!c.contains(&[1.0, 0.0]));
    }

    #[test]
    fn pullback_of_sphere_under_stretch() {
        // θ = u/2 on the unit sphere: σ' = ¼ du² + sin²(u/2) dφ²
        let g = sphere("1");
        let new_chart = Chart::new(
            vec![
                Coordinate::new("u", 0.1, 2.0 * PI - 0.1),
                Coordinate::unbounded("phi"),
            ],
            vec![],
        )
        .unwrap();
        let change = CoordinateChange::new(new_chart, &["u/2", "phi"]).unwrap();
        let pulled = change.pullback_metric(&g).unwrap();
        let y = [1.3, 0.2];
        let m = pulled.value(&y).unwrap();
        assert!((m[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((m[(1, 1)] - (0.65f64).sin().powi(2)).abs() < 1e-15);
        // curvature is invariant: Ric = σ' for the unit sphere
        let ric = ricci(&pulled, &y).unwrap();
        assert!((&ric - &m).amax() < 1e-13);
        let v = VectorField::parse(g.chart().clone(), &["1", "0"]).unwrap();
        let pv = change.pullback_vector(&v).unwrap();
        assert!((pv.value(&y).unwrap()[0] - 2.0).abs() < 1e-15);
    }
}
