//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] stores the normalized Taylor coefficients `∂^α f / α!` of a
//! scalar function for every multi-index `|α| <= order`. Coefficients are laid
//! out in graded lexicographic order: all multi-indices of degree 0, then
//! degree 1, and so on; within a degree, exponent tuples are sorted in
//! descending lexicographic order. For two variables and order 2 this gives
//! `1, x, y, x², xy, y²`.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::sync::OnceLock;

/// Largest number of active variables supported by the layout tables.
pub const MAX_DIM: usize = 6;
/// Largest truncation order supported by the layout tables.
pub const MAX_ORDER: usize = 5;

pub(crate) struct Layout {
    dim: usize,
    order: usize,
    indices: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// `(i, j, k)` with `α_i + α_j = α_k`, covering every product term.
    products: Vec<(u16, u16, u16)>,
    /// `α!` for each coefficient.
    factorials: Vec<f64>,
}

impl Layout {
    fn build(dim: usize, order: usize) -> Self {
        let mut indices = Vec::new();
        for degree in 0..=order {
            let mut current = vec![0u8; dim];
            push_degree(&mut indices, &mut current, 0, degree);
        }
        let lookup: HashMap<Vec<u8>, usize> = indices
            .iter()
            .enumerate()
            .map(|(k, alpha)| (alpha.clone(), k))
            .collect();
        let degree = |alpha: &[u8]| alpha.iter().map(|&a| a as usize).sum::<usize>();
        let mut products = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            let da = degree(a);
            for (j, b) in indices.iter().enumerate() {
                if da + degree(b) > order {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i as u16, j as u16, lookup[&sum] as u16));
            }
        }
        let factorials = indices
            .iter()
            .map(|alpha| alpha.iter().map(|&a| factorial(a as usize)).product())
            .collect();
        Self {
            dim,
            order,
            indices,
            lookup,
            products,
            factorials,
        }
    }

    fn len(&self) -> usize {
        self.indices.len()
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, current: &mut [u8], var: usize, remaining: usize) {
    if current.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if var == current.len() - 1 {
        current[var] = remaining as u8;
        out.push(current.to_vec());
        current[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e as u8;
        push_degree(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn layouts() -> &'static [Layout] {
    static LAYOUTS: OnceLock<Vec<Layout>> = OnceLock::new();
    LAYOUTS.get_or_init(|| {
        let mut all = Vec::with_capacity((MAX_DIM + 1) * (MAX_ORDER + 1));
        for dim in 0..=MAX_DIM {
            for order in 0..=MAX_ORDER {
                all.push(Layout::build(dim, order));
            }
        }
        all
    })
}

fn layout(dim: usize, order: usize) -> &'static Layout {
    assert!(
        dim <= MAX_DIM && order <= MAX_ORDER,
        "jet layout ({dim}, {order}) exceeds ({MAX_DIM}, {MAX_ORDER})"
    );
    &layouts()[dim * (MAX_ORDER + 1) + order]
}

/// Number of multi-indices of degree at most `order` in `dim` variables.
pub fn coefficient_count(dim: usize, order: usize) -> usize {
    layout(dim, order).len()
}

/// The multi-indices of a `(dim, order)` jet in storage order.
pub fn multi_indices(dim: usize, order: usize) -> &'static [Vec<u8>] {
    &layout(dim, order).indices
}

/// A univariate function was evaluated outside its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainError {
    pub function: &'static str,
    pub argument: f64,
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} is not analytic at {}", self.function, self.argument)
    }
}

impl std::error::Error for DomainError {}

/// Truncated Taylor expansion of a scalar around a point.
#[derive(Clone)]
pub struct Jet {
    layout: &'static Layout,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.layout.dim)
            .field("order", &self.layout.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn zero(dim: usize, order: usize) -> Self {
        let layout = layout(dim, order);
        Self {
            layout,
            coeffs: vec![0.0; layout.len()],
        }
    }

    pub fn constant(dim: usize, order: usize, value: f64) -> Self {
        let mut jet = Self::zero(dim, order);
        jet.coeffs[0] = value;
        jet
    }

    /// The coordinate function `x_var` expanded around `value`.
    pub fn variable(dim: usize, order: usize, var: usize, value: f64) -> Self {
        assert!(var < dim, "variable {var} out of range for dim {dim}");
        let mut jet = Self::constant(dim, order, value);
        if order >= 1 {
            jet.coeffs[1 + var] = 1.0;
        }
        jet
    }

    /// Builds a jet from coefficients in storage order.
    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Self {
        let layout = layout(dim, order);
        assert_eq!(coeffs.len(), layout.len(), "coefficient count mismatch");
        Self { layout, coeffs }
    }

    /// Seeds one variable jet per coordinate of `point`.
    pub fn seed(point: &[f64], order: usize) -> Vec<Jet> {
        let dim = point.len();
        point
            .iter()
            .enumerate()
            .map(|(i, &x)| Jet::variable(dim, order, i, x))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Normalized coefficient `∂^α f / α!` for the multi-index `alpha`.
    pub fn coeff(&self, alpha: &[u8]) -> f64 {
        self.layout
            .lookup
            .get(alpha)
            .map_or(0.0, |&k| self.coeffs[k])
    }

    /// Mixed partial derivative over the listed variables, e.g. `[0, 0, 2]`
    /// for `∂³f/∂x₀²∂x₂`.
    pub fn partial(&self, vars: &[usize]) -> f64 {
        let mut alpha = vec![0u8; self.dim()];
        for &v in vars {
            alpha[v] += 1;
        }
        match self.layout.lookup.get(&alpha) {
            Some(&k) => self.coeffs[k] * self.layout.factorials[k],
            None => 0.0,
        }
    }

    /// First partial derivatives.
    pub fn gradient(&self) -> Vec<f64> {
        if self.order() == 0 {
            return vec![0.0; self.dim()];
        }
        self.coeffs[1..=self.dim()].to_vec()
    }

    fn same_shape(&self, other: &Jet) {
        assert!(
            std::ptr::eq(self.layout, other.layout),
            "jet shape mismatch: ({}, {}) vs ({}, {})",
            self.dim(),
            self.order(),
            other.dim(),
            other.order()
        );
    }

    pub fn scale(&self, factor: f64) -> Jet {
        Jet {
            layout: self.layout,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn add_scalar(&self, value: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += value;
        out
    }

    fn nilpotent(&self) -> Jet {
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        h
    }

    /// Composes a univariate Taylor series `Σ c_n (u - u₀)^n` with this jet.
    pub fn compose_series(&self, series: &[f64]) -> Jet {
        let order = self.order();
        let h = self.nilpotent();
        let top = order.min(series.len().saturating_sub(1));
        let mut acc = Jet::constant(self.dim(), order, *series.get(top).unwrap_or(&0.0));
        for n in (0..top).rev() {
            acc = &acc * &h;
            acc.coeffs[0] += series[n];
        }
        acc
    }

    pub fn recip(&self) -> Result<Jet, DomainError> {
        let a = self.value();
        if a == 0.0 || !a.is_finite() {
            return Err(DomainError {
                function: "division",
                argument: a,
            });
        }
        let series: Vec<f64> = (0..=self.order())
            .map(|n| {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sign / a.powi(n as i32 + 1)
            })
            .collect();
        Ok(self.compose_series(&series))
    }

    pub fn try_div(&self, other: &Jet) -> Result<Jet, DomainError> {
        Ok(self * &other.recip()?)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let series: Vec<f64> = (0..=self.order()).map(|n| e / factorial(n)).collect();
        self.compose_series(&series)
    }

    pub fn ln(&self) -> Result<Jet, DomainError> {
        let a = self.value();
        if a <= 0.0 || !a.is_finite() {
            return Err(DomainError {
                function: "log",
                argument: a,
            });
        }
        let mut series = vec![a.ln()];
        for n in 1..=self.order() {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            series.push(sign / (n as f64 * a.powi(n as i32)));
        }
        Ok(self.compose_series(&series))
    }

    fn trig_series(a: f64, order: usize, phase: usize) -> Vec<f64> {
        let (s, c) = a.sin_cos();
        let cycle = [s, c, -s, -c];
        (0..=order)
            .map(|n| cycle[(n + phase) % 4] / factorial(n))
            .collect()
    }

    pub fn sin(&self) -> Jet {
        self.compose_series(&Self::trig_series(self.value(), self.order(), 0))
    }

    pub fn cos(&self) -> Jet {
        self.compose_series(&Self::trig_series(self.value(), self.order(), 1))
    }

    pub fn tan(&self) -> Result<Jet, DomainError> {
        let c = self.cos();
        if c.value() == 0.0 {
            return Err(DomainError {
                function: "tan",
                argument: self.value(),
            });
        }
        Ok(&self.sin() * &c.recip()?)
    }

    pub fn atan(&self) -> Jet {
        let a = self.value();
        let order = self.order();
        // 1/(1 + (a+h)²) = 1/(p0 + p1 h + h²), expanded by recurrence.
        let p0 = 1.0 + a * a;
        let p1 = 2.0 * a;
        let mut q = Vec::with_capacity(order);
        for n in 0..order {
            let mut r = if n == 0 { 1.0 } else { 0.0 };
            if n >= 1 {
                r -= p1 * q[n - 1];
            }
            if n >= 2 {
                r -= q[n - 2];
            }
            q.push(r / p0);
        }
        let mut series = vec![a.atan()];
        for n in 1..=order {
            series.push(q[n - 1] / n as f64);
        }
        self.compose_series(&series)
    }

    /// Real power with a non-integer exponent; requires a positive base.
    pub fn powf(&self, exponent: f64) -> Result<Jet, DomainError> {
        let a = self.value();
        let order = self.order();
        if !(a > 0.0 || (a == 0.0 && order == 0 && exponent > 0.0)) || !a.is_finite() {
            return Err(DomainError {
                function: "pow",
                argument: a,
            });
        }
        if order == 0 {
            return Ok(Jet::constant(self.dim(), 0, a.powf(exponent)));
        }
        let mut series = Vec::with_capacity(order + 1);
        let mut binom = 1.0;
        for n in 0..=order {
            if n > 0 {
                binom *= (exponent - (n as f64 - 1.0)) / n as f64;
            }
            series.push(binom * a.powf(exponent - n as f64));
        }
        Ok(self.compose_series(&series))
    }

    pub fn sqrt(&self) -> Result<Jet, DomainError> {
        self.powf(0.5).map_err(|e| DomainError {
            function: "sqrt",
            ..e
        })
    }

    /// Integer power by repeated squaring; negative exponents divide.
    pub fn powi(&self, exponent: i64) -> Result<Jet, DomainError> {
        let mut base = self.clone();
        let mut n = exponent.unsigned_abs();
        let mut acc = Jet::constant(self.dim(), self.order(), 1.0);
        while n > 0 {
            if n & 1 == 1 {
                acc = &acc * &base;
            }
            n >>= 1;
            if n > 0 {
                base = &base * &base;
            }
        }
        if exponent < 0 {
            acc.recip()
        } else {
            Ok(acc)
        }
    }

    /// Partial derivative jet `∂f/∂x_var`, one order lower.
    pub fn derivative(&self, var: usize) -> Jet {
        assert!(self.order() >= 1, "cannot differentiate an order-0 jet");
        assert!(var < self.dim());
        let target = layout(self.dim(), self.order() - 1);
        let mut coeffs = vec![0.0; target.len()];
        for (k, alpha) in target.indices.iter().enumerate() {
            let mut raised = alpha.clone();
            raised[var] += 1;
            let src = self.layout.lookup[&raised];
            coeffs[k] = self.coeffs[src] * raised[var] as f64;
        }
        Jet {
            layout: target,
            coeffs,
        }
    }

    /// Drops all terms above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        assert!(order <= self.order());
        let target = layout(self.dim(), order);
        Jet {
            layout: target,
            coeffs: self.coeffs[..target.len()].to_vec(),
        }
    }

    /// Restricts to the listed variables, evaluating the others at their
    /// expansion point. The result has `keep.len()` variables in that order.
    pub fn restrict(&self, keep: &[usize]) -> Jet {
        let target = layout(keep.len(), self.order());
        let mut coeffs = vec![0.0; target.len()];
        let mut full = vec![0u8; self.dim()];
        for (k, alpha) in target.indices.iter().enumerate() {
            full.iter_mut().for_each(|e| *e = 0);
            for (pos, &var) in keep.iter().enumerate() {
                full[var] = alpha[pos];
            }
            coeffs[k] = self.coeffs[self.layout.lookup[&full]];
        }
        Jet {
            layout: target,
            coeffs,
        }
    }

    /// Evaluates the truncated Taylor polynomial at `point + displacement`.
    pub fn eval_polynomial(&self, displacement: &[f64]) -> f64 {
        assert_eq!(displacement.len(), self.dim());
        self.layout
            .indices
            .iter()
            .zip(&self.coeffs)
            .map(|(alpha, c)| {
                c * alpha
                    .iter()
                    .zip(displacement)
                    .map(|(&e, &d)| d.powi(e as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Composes this jet (a Taylor polynomial in its own variables) with
    /// `inner`, one jet per variable, whose values are the expansion point.
    /// The result lives in the variables of `inner`.
    pub fn compose(&self, inner: &[Jet]) -> Jet {
        assert_eq!(inner.len(), self.dim(), "composition arity mismatch");
        let (dim, order) = match inner.first() {
            Some(j) => (j.dim(), j.order()),
            None => return Jet::constant(0, 0, self.value()),
        };
        assert!(
            order <= self.order(),
            "outer jet order too low for composition"
        );
        // powers[i][e] = (inner_i - value)^e
        let powers: Vec<Vec<Jet>> = inner
            .iter()
            .map(|j| {
                let h = j.nilpotent();
                let mut p = vec![Jet::constant(dim, order, 1.0)];
                for e in 1..=order {
                    let next = &p[e - 1] * &h;
                    p.push(next);
                }
                p
            })
            .collect();
        let mut out = Jet::zero(dim, order);
        for (alpha, &c) in self.layout.indices.iter().zip(&self.coeffs) {
            if c == 0.0 || alpha.iter().map(|&e| e as usize).sum::<usize>() > order {
                continue;
            }
            let mut term = Jet::constant(dim, order, c);
            for (i, &e) in alpha.iter().enumerate() {
                if e > 0 {
                    term = &term * &powers[i][e as usize];
                }
            }
            out += &term;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.same_shape(rhs);
        Jet {
            layout: self.layout,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.same_shape(rhs);
        Jet {
            layout: self.layout,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.same_shape(rhs);
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.layout.products {
            coeffs[k as usize] += self.coeffs[i as usize] * rhs.coeffs[j as usize];
        }
        Jet {
            layout: self.layout,
            coeffs,
        }
    }
}

impl<'a> Div<&'a Jet> for &'a Jet {
    type Output = Jet;
    /// Panics on a zero denominator value; use [`Jet::try_div`] to recover.
    fn div(self, rhs: &Jet) -> Jet {
        self.try_div(rhs).expect("jet division by zero")
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &self * &rhs
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        self.same_shape(rhs);
        self.coeffs
            .iter_mut()
            .zip(&rhs.coeffs)
            .for_each(|(a, b)| *a += b);
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        self.same_shape(rhs);
        self.coeffs
            .iter_mut()
            .zip(&rhs.coeffs)
            .for_each(|(a, b)| *a -= b);
    }
}

/// Inverts a square matrix of jets (row-major) by Gauss–Jordan elimination
/// with partial pivoting on the constant terms.
pub fn invert_matrix(entries: &[Jet], n: usize) -> Option<Vec<Jet>> {
    assert_eq!(entries.len(), n * n);
    if n == 0 {
        return Some(Vec::new());
    }
    let (dim, order) = (entries[0].dim(), entries[0].order());
    let mut a: Vec<Jet> = entries.to_vec();
    let mut inv: Vec<Jet> = (0..n * n)
        .map(|k| Jet::constant(dim, order, if k / n == k % n { 1.0 } else { 0.0 }))
        .collect();
    let scale = entries
        .iter()
        .map(|j| j.value().abs())
        .fold(0.0_f64, f64::max);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| {
                a[r * n + col]
                    .value()
                    .abs()
                    .total_cmp(&a[s * n + col].value().abs())
            })
            .unwrap();
        if a[pivot * n + col].value().abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
                inv.swap(pivot * n + k, col * n + k);
            }
        }
        let p = a[col * n + col].recip().ok()?;
        for k in 0..n {
            a[col * n + k] = &a[col * n + k] * &p;
            inv[col * n + k] = &inv[col * n + k] * &p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row * n + col].clone();
            for k in 0..n {
                let da = &factor * &a[col * n + k];
                let di = &factor * &inv[col * n + k];
                a[row * n + k] -= &da;
                inv[row * n + k] -= &di;
            }
        }
    }
    Some(inv)
}
