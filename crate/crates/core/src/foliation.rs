//! Null-time gauge on exact solutions: canonical transversal, geodesic
//! foliation with sensitivities, and numerically extracted metric jets.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::SpacetimeSolution;
use crate::geometry::{
    self, GeometryError, JetSource, LocalMetric, MetricField, Signature, VectorField,
};
use crate::initial_data::{DataError, InitialDataSet, ValidationOptions};
use crate::jet::{self, Jet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FoliationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("transversal system is degenerate at {point:?}")]
    DegenerateTransversal { point: Vec<f64> },
    #[error(
        "covariant derivative of W is not parallel to W at {point:?} (residual {residual:.3e})"
    )]
    NotParallel { point: Vec<f64>, residual: f64 },
    #[error("geodesic left the chart at t = {t} (point {point:?})")]
    ChartExit { t: f64, point: Vec<f64> },
    #[error("non-finite integrator state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size {0:e} is too small")]
    StepUnderflow(f64),
    #[error("t samples do not contain the differencing stencil for h = {h}")]
    InsufficientSamples { h: f64 },
    #[error("extrapolation diverged for m = {m}")]
    Extrapolation { m: usize },
    #[error("base point {0} is not part of the foliation map")]
    UnknownBase(usize),
}

pub type Result<T, E = FoliationError> = std::result::Result<T, E>;

/// Relative tolerance for `∇_X W ∥ W` at horizon points.
pub const PARALLEL_TOLERANCE: f64 = 1e-8;

/// Canonical transversal at one horizon point, with its first derivatives
/// along the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TransversalSolve {
    /// Horizon-chart point.
    pub point: Vec<f64>,
    /// Spacetime point.
    pub position: Vec<f64>,
    pub l: DVector<f64>,
    /// `dl[(μ, a)] = ∂L^μ/∂y^a`.
    pub dl: DMatrix<f64>,
    /// Connection one-form in horizon-chart components.
    pub omega: DVector<f64>,
    /// `ω(V)` at this point.
    pub kappa: f64,
    /// `g(L, V) − 1`, `max_a |g(L, e_a)|`, `g(L, L)`.
    pub residuals: [f64; 3],
    /// `‖∇W − ω ⊗ W‖ / ‖W‖` over horizon directions.
    pub parallel_residual: f64,
}

impl TransversalSolve {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }
}

/// Jets of `ω` (horizon-chart components, `order` in the horizon
/// variables), of the restricted metric `g_{μν}` and of `W^μ` at `y`.
struct HorizonJets {
    omega: Vec<Jet>,
    g: Vec<Jet>,
    w: Vec<Jet>,
}

fn horizon_jets(sol: &SpacetimeSolution, y: &[f64], order: usize) -> Result<HorizonJets> {
    let n = sol.chart.dim();
    let x = sol.embed(y);
    let g = sol.metric.jets(&x, order + 1)?;
    let w = sol.w.jets(&x, order + 1)?;
    let rho = sol.horizon.index;
    let keep = sol.tangent_indices();
    let g_k: Vec<Jet> = g.iter().map(|j| j.truncate(order)).collect();
    let w_k: Vec<Jet> = w.iter().map(|j| j.truncate(order)).collect();
    // ∂_k g_ij as order-`order` jets
    let dg: Vec<Vec<Jet>> = (0..n)
        .map(|k| g.iter().map(|j| j.derivative(k)).collect())
        .collect();
    let mut den = Jet::zero(n, order);
    for mu in 0..n {
        den += &(&g_k[rho * n + mu] * &w_k[mu]);
    }
    let inv_den = den
        .recip()
        .map_err(|_| FoliationError::DegenerateTransversal { point: y.to_vec() })?;
    let omega = keep
        .iter()
        .map(|&a| {
            let mut num = Jet::zero(n, order);
            for mu in 0..n {
                num += &(&g_k[rho * n + mu] * &w[mu].derivative(a));
            }
            for nu in 0..n {
                // Γ_{ρ, aν}
                let low = (&(&dg[a][nu * n + rho] + &dg[nu][a * n + rho]) - &dg[rho][a * n + nu])
                    .scale(0.5);
                num += &(&w_k[nu] * &low);
            }
            (&num * &inv_den).restrict(&keep)
        })
        .collect();
    Ok(HorizonJets {
        omega,
        g: g_k.iter().map(|j| j.restrict(&keep)).collect(),
        w: w_k.iter().map(|j| j.restrict(&keep)).collect(),
    })
}

pub fn canonical_transversal(sol: &SpacetimeSolution, y: &[f64]) -> Result<TransversalSolve> {
    let n = sol.chart.dim();
    let keep = sol.tangent_indices();
    let hd = keep.len();
    let hj = horizon_jets(sol, y, 1)?;
    let degenerate = || FoliationError::DegenerateTransversal { point: y.to_vec() };

    let mut kappa = Jet::zero(hd, 1);
    for (a, &i) in keep.iter().enumerate() {
        kappa += &(&hj.omega[a] * &hj.w[i]);
    }
    let inv_kappa = kappa.recip().map_err(|_| degenerate())?;
    // rows of A are g(∂_a, ·); b_a = ω_a / κ
    let rows: Vec<Vec<&Jet>> = keep
        .iter()
        .map(|&i| (0..n).map(|mu| &hj.g[i * n + mu]).collect())
        .collect();
    let b: Vec<Jet> = hj.omega.iter().map(|o| o * &inv_kappa).collect();
    let mut gram = Vec::with_capacity(hd * hd);
    for a in 0..hd {
        for c in 0..hd {
            let mut s = Jet::zero(hd, 1);
            for mu in 0..n {
                s += &(rows[a][mu] * rows[c][mu]);
            }
            gram.push(s);
        }
    }
    let gram_inv = jet::invert_matrix(&gram, hd).ok_or_else(degenerate)?;
    let coef: Vec<Jet> = (0..hd)
        .map(|a| {
            let mut s = Jet::zero(hd, 1);
            for c in 0..hd {
                s += &(&gram_inv[a * hd + c] * &b[c]);
            }
            s
        })
        .collect();
    let l0: Vec<Jet> = (0..n)
        .map(|mu| {
            let mut s = Jet::zero(hd, 1);
            for a in 0..hd {
                s += &(rows[a][mu] * &coef[a]);
            }
            s
        })
        .collect();
    let pair = |u: &[Jet], v: &[Jet]| {
        let mut s = Jet::zero(hd, 1);
        for i in 0..n {
            for j in 0..n {
                s += &(&(&u[i] * &v[j]) * &hj.g[i * n + j]);
            }
        }
        s
    };
    let l0l0 = pair(&l0, &l0);
    let l0w = pair(&l0, &hj.w);
    let shift = -(&l0l0 * &l0w.scale(2.0).recip().map_err(|_| degenerate())?);
    let l: Vec<Jet> = (0..n).map(|mu| &l0[mu] + &(&shift * &hj.w[mu])).collect();

    let position = sol.embed(y);
    let g = DMatrix::from_fn(n, n, |i, j| hj.g[i * n + j].value());
    let lv = DVector::from_iterator(n, l.iter().map(Jet::value));
    let wv = DVector::from_iterator(n, hj.w.iter().map(Jet::value));
    let omega = DVector::from_iterator(hd, hj.omega.iter().map(Jet::value));
    let kappa_value = kappa.value();

    // frame residuals against σ = g|_H + ω ⊗ ω
    let g_h = DMatrix::from_fn(hd, hd, |a, c| g[(keep[a], keep[c])]);
    let sigma = &g_h + &omega * omega.transpose();
    let v_h = DVector::from_fn(hd, |a, _| wv[keep[a]]);
    let frame = geometry::orthogonal_complement_from_values(&sigma, &v_h, y)?;
    let gl = &g * &lv;
    let e_res = frame
        .vectors
        .iter()
        .map(|e| {
            keep.iter()
                .enumerate()
                .map(|(a, &i)| e[a] * gl[i])
                .sum::<f64>()
                .abs()
        })
        .fold(0.0_f64, f64::max);
    let residuals = [gl.dot(&wv) - 1.0, e_res, gl.dot(&lv)];

    let local = LocalMetric::new(&sol.metric, &position, 1)?;
    let w1 = sol.w.jets(&position, 1)?;
    let nabla_w = geometry::cov_deriv_from_parts(&local.christoffel(), &w1);
    let mut diff: f64 = 0.0;
    for (a, &i) in keep.iter().enumerate() {
        for mu in 0..n {
            diff += (nabla_w[(i, mu)] - omega[a] * wv[mu]).powi(2);
        }
    }
    let parallel_residual = diff.sqrt() / wv.norm();

    Ok(TransversalSolve {
        point: y.to_vec(),
        position,
        dl: DMatrix::from_fn(n, hd, |mu, a| l[mu].partial(&[a])),
        l: lv,
        omega,
        kappa: kappa_value,
        residuals,
        parallel_residual,
    })
}

/// Position, velocity and sensitivities along one geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicState {
    pub t: f64,
    pub x: DVector<f64>,
    pub p: DVector<f64>,
    /// `∂x/∂y`, one column per horizon coordinate.
    pub jx: DMatrix<f64>,
    /// `∂p/∂y`.
    pub jp: DMatrix<f64>,
}

impl GeodesicState {
    /// `[p | ∂x/∂y]`: the differential of the foliation map in adapted
    /// coordinates `(t, y)`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let n = self.x.len();
        DMatrix::from_fn(n, n, |i, j| {
            if j == 0 {
                self.p[i]
            } else {
                self.jx[(i, j - 1)]
            }
        })
    }

    fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.x.len() * (1 + self.jx.ncols()));
        v.extend(self.x.iter());
        v.extend(self.p.iter());
        v.extend(self.jx.iter());
        v.extend(self.jp.iter());
        v
    }

    fn unpack(t: f64, v: &[f64], n: usize, hd: usize) -> Self {
        let (x, rest) = v.split_at(n);
        let (p, rest) = rest.split_at(n);
        let (jx, jp) = rest.split_at(n * hd);
        Self {
            t,
            x: DVector::from_column_slice(x),
            p: DVector::from_column_slice(p),
            jx: DMatrix::from_column_slice(n, hd, jx),
            jp: DMatrix::from_column_slice(n, hd, jp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorMeta {
    pub max_step: f64,
    pub steps: usize,
    /// Largest `|g(γ', γ')|` seen at any step.
    pub max_null_drift: f64,
}

#[derive(Debug, Clone)]
pub struct FoliationMap {
    pub horizon_base: Vec<Vec<f64>>,
    pub t_samples: Vec<f64>,
    /// `states[b][k]` is base `b` at `t_samples[k]`.
    pub states: Vec<Vec<GeodesicState>>,
    pub transversals: Vec<TransversalSolve>,
    pub meta: IntegratorMeta,
}

impl FoliationMap {
    pub fn state(&self, base: usize, t: f64) -> Option<&GeodesicState> {
        let k = self
            .t_samples
            .iter()
            .position(|&s| (s - t).abs() <= 1e-15 * (1.0 + t.abs()))?;
        self.states.get(base).map(|s| &s[k])
    }
}

/// Geodesic plus variational right-hand side.
fn rhs(metric: &MetricField, n: usize, hd: usize, v: &[f64]) -> Result<Vec<f64>> {
    let x = &v[..n];
    let p = &v[n..2 * n];
    let jx = &v[2 * n..2 * n + n * hd];
    let jp = &v[2 * n + n * hd..];
    let local = LocalMetric::new(metric, x, 2)?;
    let gamma = local.christoffel();
    let dgamma = local.christoffel_derivatives();
    let mut out = vec![0.0; v.len()];
    out[..n].copy_from_slice(p);
    let acc = gamma.contract(p, p);
    for mu in 0..n {
        out[n + mu] = -acc[mu];
    }
    out[2 * n..2 * n + n * hd].copy_from_slice(jp);
    for a in 0..hd {
        let col_x = &jx[a * n..(a + 1) * n];
        let col_p = &jp[a * n..(a + 1) * n];
        let mixed = gamma.contract(p, col_p);
        for mu in 0..n {
            let mut d = 0.0;
            for (lam, dg) in dgamma.iter().enumerate() {
                if col_x[lam] != 0.0 {
                    let pp: f64 = (0..n)
                        .map(|al| p[al] * (0..n).map(|be| dg.get(mu, al, be) * p[be]).sum::<f64>())
                        .sum();
                    d += col_x[lam] * pp;
                }
            }
            out[2 * n + n * hd + a * n + mu] = -d - 2.0 * mixed[mu];
        }
    }
    Ok(out)
}

fn rk4_step(metric: &MetricField, n: usize, hd: usize, v: &[f64], dt: f64) -> Result<Vec<f64>> {
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + s * y).collect()
    };
    let k1 = rhs(metric, n, hd, v)?;
    let k2 = rhs(metric, n, hd, &axpy(v, 0.5 * dt, &k1))?;
    let k3 = rhs(metric, n, hd, &axpy(v, 0.5 * dt, &k2))?;
    let k4 = rhs(metric, n, hd, &axpy(v, dt, &k3))?;
    Ok((0..v.len())
        .map(|i| v[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn null_norm(metric: &MetricField, x: &[f64], p: &[f64]) -> Result<f64> {
    let g = metric.value(x)?;
    let p = DVector::from_column_slice(p);
    Ok(p.dot(&(&g * &p)))
}

/// Integrates one geodesic family member to each requested time (sorted
/// or not, of either sign) with classical RK4 and steps no longer than
/// `max_step`.
fn integrate(
    sol: &SpacetimeSolution,
    start: &GeodesicState,
    samples: &[f64],
    max_step: f64,
) -> Result<(Vec<GeodesicState>, usize, f64)> {
    if !(max_step > 1e-14) {
        return Err(FoliationError::StepUnderflow(max_step));
    }
    let n = start.x.len();
    let hd = start.jx.ncols();
    let mut out: Vec<Option<GeodesicState>> = vec![None; samples.len()];
    let mut steps = 0;
    let mut drift: f64 = 0.0;
    for direction in [1.0, -1.0] {
        let mut order: Vec<usize> = (0..samples.len())
            .filter(|&k| samples[k] * direction > 0.0 || (samples[k] == 0.0 && direction > 0.0))
            .collect();
        order.sort_by(|&a, &b| (samples[a] * direction).total_cmp(&(samples[b] * direction)));
        let mut t = 0.0;
        let mut v = start.pack();
        for k in order {
            let target = samples[k];
            let span = target - t;
            let count = (span.abs() / max_step).ceil() as usize;
            for i in 0..count {
                let dt = span / count as f64;
                v = rk4_step(&sol.metric, n, hd, &v, dt)?;
                steps += 1;
                let ti = t + dt * (i + 1) as f64;
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(FoliationError::NonFinite { t: ti });
                }
                if !sol.chart.contains(&v[..n]) {
                    return Err(FoliationError::ChartExit {
                        t: ti,
                        point: v[..n].to_vec(),
                    });
                }
                drift = drift.max(null_norm(&sol.metric, &v[..n], &v[n..2 * n])?.abs());
            }
            t = target;
            out[k] = Some(GeodesicState::unpack(target, &v, n, hd));
        }
    }
    Ok((
        out.into_iter()
            .map(|s| s.expect("every sample visited"))
            .collect(),
        steps,
        drift,
    ))
}

fn initial_state(sol: &SpacetimeSolution, ts: &TransversalSolve) -> GeodesicState {
    let n = sol.chart.dim();
    let keep = sol.tangent_indices();
    GeodesicState {
        t: 0.0,
        x: DVector::from_column_slice(&ts.position),
        p: ts.l.clone(),
        jx: DMatrix::from_fn(n, keep.len(), |mu, a| if keep[a] == mu { 1.0 } else { 0.0 }),
        jp: ts.dl.clone(),
    }
}

/// Evolves the null-time foliation from each base point to the times in
/// `t_samples` (`0` is always included).
pub fn evolve_at(
    sol: &SpacetimeSolution,
    base_grid: &[Vec<f64>],
    t_samples: &[f64],
    max_step: f64,
) -> Result<FoliationMap> {
    let mut samples = t_samples.to_vec();
    if !samples.contains(&0.0) {
        samples.push(0.0);
    }
    samples.sort_by(f64::total_cmp);
    samples.dedup();
    let per_base: Vec<(TransversalSolve, Vec<GeodesicState>, usize, f64)> = base_grid
        .par_iter()
        .map(|y| {
            let ts = canonical_transversal(sol, y)?;
            if ts.parallel_residual > PARALLEL_TOLERANCE {
                return Err(FoliationError::NotParallel {
                    point: y.clone(),
                    residual: ts.parallel_residual,
                });
            }
            let start = initial_state(sol, &ts);
            let (states, steps, drift) = integrate(sol, &start, &samples, max_step)?;
            Ok((ts, states, steps, drift))
        })
        .collect::<Result<_>>()?;
    let mut meta = IntegratorMeta {
        max_step,
        steps: 0,
        max_null_drift: 0.0,
    };
    let mut states = Vec::new();
    let mut transversals = Vec::new();
    for (ts, s, steps, drift) in per_base {
        meta.steps += steps;
        meta.max_null_drift = meta
            .max_null_drift
            .max(drift)
            .max(null_norm(&sol.metric, &ts.position, ts.l.as_slice())?.abs());
        transversals.push(ts);
        states.push(s);
    }
    Ok(FoliationMap {
        horizon_base: base_grid.to_vec(),
        t_samples: samples,
        states,
        transversals,
        meta,
    })
}

/// Samples `k t_max / steps` for `k = −steps..=steps`, integrated with that
/// step size.
pub fn evolve_foliation(
    sol: &SpacetimeSolution,
    base_grid: &[Vec<f64>],
    t_max: f64,
    steps: usize,
) -> Result<FoliationMap> {
    if steps == 0 || !(t_max > 0.0) {
        return Err(FoliationError::StepUnderflow(t_max / steps.max(1) as f64));
    }
    let dt = t_max / steps as f64;
    let samples: Vec<f64> = (-(steps as i64)..=steps as i64)
        .map(|k| k as f64 * dt)
        .collect();
    evolve_at(sol, base_grid, &samples, dt)
}

/// Stencil samples `{0, ±h, ±2h, ±3h}` integrated with steps of at most `h/10`.
pub fn evolve_stencil(
    sol: &SpacetimeSolution,
    base_grid: &[Vec<f64>],
    h: f64,
) -> Result<FoliationMap> {
    let samples: Vec<f64> = (-3..=3).map(|k| k as f64 * h).collect();
    evolve_at(sol, base_grid, &samples, h / 10.0)
}

/// `ĝ = Jᵀ g(x) J` in adapted coordinates `(t, y)`.
pub fn adapted_metric(metric: &MetricField, state: &GeodesicState) -> Result<DMatrix<f64>> {
    let j = state.jacobian();
    let g = metric.value(state.x.as_slice())?;
    Ok(j.transpose() * g * j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Numeric,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionRecord {
    pub base_point: Vec<f64>,
    /// Columns `∂_t, V, e_2, …` in adapted coordinates at `t = 0`.
    pub frame: DMatrix<f64>,
    /// `(𝓛_t^m ĝ)(frame, frame)` for `m = 0..=m_max`.
    pub components: Vec<DMatrix<f64>>,
    /// The same tensors in adapted coordinates.
    pub coordinate_components: Vec<DMatrix<f64>>,
    pub provenance: Provenance,
    /// Extrapolation residual per `m` (max abs entry).
    pub error_estimates: Vec<f64>,
}

impl ExpansionRecord {
    /// `max |𝓛_t^m ĝ(∂_t, ·)|` over `m ∈ 1..=m_max`.
    pub fn transversal_row_residual(&self, m_max: usize) -> f64 {
        self.components[1..=m_max.min(self.components.len() - 1)]
            .iter()
            .map(|c| c.row(0).amax())
            .fold(0.0, f64::max)
    }
}

/// Central-difference derivatives at 0 from samples at `{0, ±h, ±2h, ±3h}`.
/// Returns the estimate and its extrapolation residual.
fn stencil_derivative<T>(f: &dyn Fn(i32) -> T, h: f64, m: usize) -> (T, T)
where
    T: Clone
        + std::ops::Sub<Output = T>
        + std::ops::Add<Output = T>
        + std::ops::Mul<f64, Output = T>,
{
    match m {
        0 => (f(0), f(0) * 0.0),
        1 => {
            let d = |s: i32| (f(s) - f(-s)) * (1.0 / (2.0 * s as f64 * h));
            let (d1, d2) = (d(1), d(2));
            let r = (d1.clone() * 4.0 - d2) * (1.0 / 3.0);
            (r.clone(), r - d1)
        }
        2 => {
            let d = |s: i32| (f(s) - f(0) * 2.0 + f(-s)) * (1.0 / (s as f64 * h).powi(2));
            let (d1, d2) = (d(1), d(2));
            let r = (d1.clone() * 4.0 - d2) * (1.0 / 3.0);
            (r.clone(), r - d1)
        }
        3 => {
            let hi = (f(-3) - f(3) + (f(2) - f(-2)) * 8.0 + (f(-1) - f(1)) * 13.0)
                * (1.0 / (8.0 * h.powi(3)));
            let lo = (f(2) - f(-2) + (f(-1) - f(1)) * 2.0) * (1.0 / (2.0 * h.powi(3)));
            (hi.clone(), hi - lo)
        }
        _ => unreachable!("m_max is at most 3"),
    }
}

fn stencil_states(fmap: &FoliationMap, base: usize, h: f64) -> Result<Vec<&GeodesicState>> {
    (-3..=3)
        .map(|k| {
            fmap.state(base, k as f64 * h)
                .ok_or(FoliationError::InsufficientSamples { h })
        })
        .collect()
}

/// Frame `{∂_t, V, e_a}` in adapted coordinates, from the closed-form data.
pub fn adapted_frame(sol: &SpacetimeSolution, y: &[f64]) -> Result<DMatrix<f64>> {
    let data = &sol.closed_form_data;
    let sigma = data.sigma().value(y)?;
    let v = data.v().value(y)?;
    let frame = geometry::orthogonal_complement_from_values(&sigma, &v, y)?;
    let hd = v.len();
    let mut f = DMatrix::zeros(hd + 1, hd + 1);
    f[(0, 0)] = 1.0;
    for a in 0..hd {
        f[(a + 1, 1)] = v[a];
        for (k, e) in frame.vectors.iter().enumerate() {
            f[(a + 1, k + 2)] = e[a];
        }
    }
    Ok(f)
}

/// Extracts `𝓛_t^m ĝ|_{t=0}` for `m = 0..=m_max` at base index `base`.
/// The step `h` is `t_max / 3` of a stencil map.
pub fn pullback_metric_jet(
    sol: &SpacetimeSolution,
    fmap: &FoliationMap,
    base: usize,
    h: f64,
    m_max: usize,
) -> Result<ExpansionRecord> {
    let y = fmap
        .horizon_base
        .get(base)
        .ok_or(FoliationError::UnknownBase(base))?;
    let states = stencil_states(fmap, base, h)?;
    let ghat = states
        .iter()
        .map(|s| adapted_metric(&sol.metric, s))
        .collect::<Result<Vec<_>, _>>()?;
    let sample = |k: i32| ghat[(k + 3) as usize].clone();
    let frame = adapted_frame(sol, y)?;
    let mut components = Vec::new();
    let mut coordinate_components = Vec::new();
    let mut error_estimates = Vec::new();
    for m in 0..=m_max.min(3) {
        let (d, err) = stencil_derivative(&sample, h, m);
        if !d.iter().all(|v| v.is_finite()) {
            return Err(FoliationError::Extrapolation { m });
        }
        components.push(frame.transpose() * &d * &frame);
        coordinate_components.push(d);
        error_estimates.push(err.amax());
    }
    Ok(ExpansionRecord {
        base_point: y.clone(),
        frame,
        components,
        coordinate_components,
        provenance: Provenance::Numeric,
        error_estimates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub base_point: Vec<f64>,
    /// `max |𝓛_t^m ĝ(∂_t, ·)|`, `m ∈ {1, 2}`.
    pub transversal_row: f64,
    /// `|[W, ∂_t]|` at `t = 0`.
    pub commutator: f64,
    /// `|∇_t W + κ ∂_t|` at `t = 0`.
    pub nabla_t_w: f64,
    /// `max |∇_t A + A² − R(∂_t, ·, ∂_t, ·)|` on horizon coordinate fields.
    pub transport: f64,
    /// `max |g(γ', γ')|` along the stencil tracks.
    pub null_drift: f64,
    pub parallel: f64,
    pub transversal: f64,
}

/// Residuals of the gauge identities at base index `base` of a stencil map.
pub fn check_identities(
    sol: &SpacetimeSolution,
    fmap: &FoliationMap,
    base: usize,
    h: f64,
) -> Result<IdentityReport> {
    let record = pullback_metric_jet(sol, fmap, base, h, 2)?;
    let states = stencil_states(fmap, base, h)?;
    let n = sol.chart.dim();
    let hd = n - 1;
    let ts = &fmap.transversals[base];
    let kappa = sol.kappa_closed_form;

    // [W, ∂_t] = −∂_t (J⁻¹ W)
    let w_adapted = states
        .iter()
        .map(|s| {
            let w = sol.w.value(s.x.as_slice())?;
            s.jacobian().lu().solve(&w).ok_or_else(|| {
                GeometryError::Singular {
                    point: s.x.as_slice().to_vec(),
                }
                .into()
            })
        })
        .collect::<Result<Vec<DVector<f64>>>>()?;
    let w_sample = |k: i32| w_adapted[(k + 3) as usize].clone();
    let commutator = stencil_derivative(&w_sample, h, 1).0.amax();

    // ∇_L W + κ L at the horizon
    let local = LocalMetric::new(&sol.metric, &ts.position, 1)?;
    let gamma = local.christoffel();
    let nabla = geometry::cov_deriv_from_parts(&gamma, &sol.w.jets(&ts.position, 1)?);
    let nabla_l = nabla.transpose() * &ts.l;
    let nabla_t_w = (nabla_l + &ts.l * kappa).amax();

    // A(a, b)(t) = g(∇_{∂a} ∂t, ∂b) along the stencil
    let theta_of = |s: &GeodesicState| -> Result<(DMatrix<f64>, DMatrix<f64>, LocalMetric)> {
        let local = LocalMetric::new(&sol.metric, s.x.as_slice(), 2)?;
        let gamma = local.christoffel();
        let mut theta = s.jp.clone();
        for a in 0..hd {
            let col: Vec<f64> = s.jx.column(a).iter().copied().collect();
            let corr = gamma.contract(&col, s.p.as_slice());
            for mu in 0..n {
                theta[(mu, a)] += corr[mu];
            }
        }
        let a_mat = theta.transpose() * &local.g * &s.jx;
        Ok((theta, a_mat, local))
    };
    let parts = states
        .iter()
        .map(|s| theta_of(s))
        .collect::<Result<Vec<_>>>()?;
    let a_sample = |k: i32| parts[(k + 3) as usize].1.clone();
    let dt_a = stencil_derivative(&a_sample, h, 1).0;
    let (theta0, _, local0) = &parts[3];
    let riem = local0.riemann();
    let s0 = states[3];
    let p0: Vec<f64> = s0.p.iter().copied().collect();
    let mut transport: f64 = 0.0;
    let theta_gram = theta0.transpose() * &local0.g * theta0;
    for a in 0..hd {
        let xa: Vec<f64> = s0.jx.column(a).iter().copied().collect();
        for b in 0..hd {
            let xb: Vec<f64> = s0.jx.column(b).iter().copied().collect();
            let r = riem.apply(&p0, &xa, &p0, &xb);
            transport = transport.max((dt_a[(a, b)] - theta_gram[(a, b)] - r).abs());
        }
    }

    let mut null_drift: f64 = 0.0;
    for s in &states {
        null_drift = null_drift.max(null_norm(&sol.metric, s.x.as_slice(), s.p.as_slice())?.abs());
    }
    Ok(IdentityReport {
        base_point: record.base_point.clone(),
        transversal_row: record.transversal_row_residual(2),
        commutator,
        nabla_t_w,
        transport,
        null_drift,
        parallel: ts.parallel_residual,
        transversal: ts.max_residual(),
    })
}

struct InducedSigma {
    sol: SpacetimeSolution,
}

impl JetSource for InducedSigma {
    fn component_count(&self) -> usize {
        let hd = self.sol.horizon_chart.dim();
        hd * hd
    }

    fn jets(&self, y: &[f64], order: usize) -> geometry::Result<Vec<Jet>> {
        let n = self.sol.chart.dim();
        let keep = self.sol.tangent_indices();
        let hj = horizon_jets(&self.sol, y, order).map_err(|e| match e {
            FoliationError::Geometry(g) => g,
            _ => GeometryError::Singular { point: y.to_vec() },
        })?;
        let mut out = Vec::with_capacity(keep.len() * keep.len());
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                out.push(&hj.g[i * n + j] + &(&hj.omega[a] * &hj.omega[b]));
            }
        }
        Ok(out)
    }
}

struct RestrictedW {
    sol: SpacetimeSolution,
}

impl JetSource for RestrictedW {
    fn component_count(&self) -> usize {
        self.sol.horizon_chart.dim()
    }

    fn jets(&self, y: &[f64], order: usize) -> geometry::Result<Vec<Jet>> {
        let keep = self.sol.tangent_indices();
        let w = self.sol.w.jets(&self.sol.embed(y), order)?;
        Ok(keep.iter().map(|&i| w[i].restrict(&keep)).collect())
    }
}

/// Induced data `(g|_H + ω ⊗ ω, W|_H)` computed from the spacetime alone.
/// Fails if `∇W ∦ W` at any of `probe` horizon points.
pub fn induce_numeric_with(
    sol: &SpacetimeSolution,
    probe: &[Vec<f64>],
    options: &ValidationOptions,
) -> Result<InitialDataSet> {
    for y in probe {
        let ts = canonical_transversal(sol, y)?;
        if ts.parallel_residual > PARALLEL_TOLERANCE {
            return Err(FoliationError::NotParallel {
                point: y.clone(),
                residual: ts.parallel_residual,
            });
        }
    }
    let hchart = sol.horizon_chart.clone();
    let sigma = MetricField::computed(
        hchart.clone(),
        Signature::Riemannian,
        Arc::new(InducedSigma { sol: sol.clone() }),
    )?;
    let v = VectorField::computed(hchart, Arc::new(RestrictedW { sol: sol.clone() }))?;
    Ok(InitialDataSet::with_options(
        format!("{} (numeric)", sol.label),
        sigma,
        v,
        options,
    )?)
}

pub fn induce_numeric(sol: &SpacetimeSolution) -> Result<InitialDataSet> {
    induce_numeric_with(sol, &sol.base_points(7), &ValidationOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build, EntryName, EntrySpec};
    use std::f64::consts::PI;

    #[test]
    fn schwarzschild_transversal_is_d_r() {
        let sol = build(&EntrySpec::new(EntryName::Schwarzschild)).unwrap();
        let ts = canonical_transversal(&sol, &[0.3, 1.0, 0.2]).unwrap();
        assert!((&ts.l - DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);
        assert!(ts.dl.amax() < 1e-14);
        assert!((ts.kappa - 0.25).abs() < 1e-15);
        assert!(ts.max_residual() < 1e-14);
        assert!(ts.parallel_residual < 1e-14);
    }

    #[test]
    fn misner_transversal_is_d_t() {
        let sol = build(&EntrySpec::new(EntryName::Misner)).unwrap();
        let ts = canonical_transversal(&sol, &[0.1, 0.2, 0.3]).unwrap();
        assert!((&ts.l - DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);
        assert!((ts.omega[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kerr_transversal_residuals() {
        let sol = build(&EntrySpec::new(EntryName::Kerr)).unwrap();
        let ts = canonical_transversal(&sol, &[0.0, PI / 2.0, 0.0]).unwrap();
        assert!(ts.max_residual() < 1e-12, "{:?}", ts.residuals);
        assert!(ts.parallel_residual < 1e-12);
    }

    #[test]
    fn shifted_horizon_is_detected() {
        let sol = build(&EntrySpec::new(EntryName::Schwarzschild)).unwrap();
        let shifted = sol.with_shifted_horizon(0.01);
        let ts = canonical_transversal(&shifted, &[0.0, 1.0, 0.0]).unwrap();
        assert!(ts.parallel_residual > 1e-4);
        assert!(matches!(
            evolve_stencil(&shifted, &[vec![0.0, 1.0, 0.0]], 1e-3),
            Err(FoliationError::NotParallel { .. })
        ));
    }

    #[test]
    fn schwarzschild_geodesics_are_radial_lines() {
        let sol = build(&EntrySpec::new(EntryName::Schwarzschild)).unwrap();
        let fmap = evolve_foliation(&sol, &[vec![0.5, 1.0, 0.3]], 0.05, 10).unwrap();
        for s in &fmap.states[0] {
            let expect = [2.0 + s.t, 0.5, 1.0, 0.3];
            assert!(
                (s.x.as_slice()
                    .iter()
                    .zip(expect)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max))
                    < 1e-14
            );
            let id = DMatrix::from_fn(4, 3, |i, j| if i == j + 1 { 1.0 } else { 0.0 });
            assert!((&s.jx - id).amax() < 1e-13);
        }
        assert!(fmap.meta.max_null_drift < 1e-14);
    }

    #[test]
    fn kerr_null_norm_conserved() {
        let sol = build(&EntrySpec::new(EntryName::Kerr)).unwrap();
        let fmap = evolve_foliation(&sol, &[vec![0.0, 1.0, 0.0]], 0.1, 200).unwrap();
        assert!(
            fmap.meta.max_null_drift < 1e-10,
            "{}",
            fmap.meta.max_null_drift
        );
    }

    #[test]
    fn schwarzschild_first_order_components() {
        let sol = build(&EntrySpec::new(EntryName::Schwarzschild)).unwrap();
        let h = 1e-3;
        let fmap = evolve_stencil(&sol, &[vec![0.0, PI / 2.0, 0.0]], h).unwrap();
        let rec = pullback_metric_jet(&sol, &fmap, 0, h, 3).unwrap();
        let c0 = &rec.components[0];
        assert!((c0[(0, 1)] - 1.0).abs() < 1e-12);
        assert!(c0[(0, 0)].abs() < 1e-14 && c0[(1, 1)].abs() < 1e-14);
        let c1 = &rec.components[1];
        assert!((c1[(1, 1)] + 0.5).abs() < 1e-9, "{}", c1[(1, 1)]);
        assert!((c1[(2, 2)] - 1.0).abs() < 1e-9, "{}", c1[(2, 2)]);
        assert!(rec.transversal_row_residual(2) < 1e-6);
        // 𝓛_t² g_vv = ∂_r²(2/r)|₂ = 0.5
        assert!((rec.components[2][(1, 1)] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn identities_hold_on_schwarzschild() {
        let sol = build(&EntrySpec::new(EntryName::Schwarzschild)).unwrap();
        let h = 1e-3;
        let fmap = evolve_stencil(&sol, &[vec![0.0, 1.2, 0.0]], h).unwrap();
        let r = check_identities(&sol, &fmap, 0, h).unwrap();
        assert!(r.commutator < 1e-8 && r.nabla_t_w < 1e-8, "{r:?}");
        assert!(r.transport < 1e-6 && r.transversal_row < 1e-6, "{r:?}");
    }

    #[test]
    fn third_derivative_stencil_is_exact_on_quintics() {
        let f = |k: i32| {
            let t = k as f64 * 0.1;
            DMatrix::from_element(1, 1, 2.0 * t.powi(3) - t.powi(5) + t)
        };
        let (d3, _) = stencil_derivative(&f, 0.1, 3);
        assert!((d3[(0, 0)] - 12.0).abs() < 1e-9);
        let (d1, _) = stencil_derivative(&f, 0.1, 1);
        assert!((d1[(0, 0)] - 1.0).abs() < 1e-3);
    }
}
