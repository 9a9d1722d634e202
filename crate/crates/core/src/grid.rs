//! Uniform time grids and piecewise-linear time-dependent parameter fields.
//!
//! Every time-dependent quantity in this crate — weight matrices w(t), biases
//! b(t), gauge matrices G(t), scalar reparametrizations ε(t) — is stored as one
//! value per grid node and interpolated linearly in between. Interpolation is
//! exact at the nodes; derivatives are formed by centered differences at
//! interior nodes and second-order one-sided stencils at the endpoints.

use nalgebra::{DMatrix, DVector};

use crate::error::{GaugeError, Result};

/// Uniform discretization of [0, T] into `n_steps` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
    step: f64,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(GaugeError::GridMismatch(format!(
                "t_end must be positive and finite, got {t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(GaugeError::GridMismatch("n_steps must be >= 1".into()));
        }
        Ok(Self { t_end, n_steps, step: t_end / n_steps as f64 })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Time of node `k`, `k * step`.
    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(|k| self.node(k))
    }

    /// True if `t` lies in [0, T] up to a relative slack of one part in 1e9
    /// of a step (guards against accumulated roundoff at the right endpoint).
    pub fn contains(&self, t: f64) -> bool {
        let slack = self.step * 1e-9;
        t >= -slack && t <= self.t_end + slack
    }

    /// A grid over the same interval with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        TimeGrid::new(self.t_end, self.n_steps * factor)
    }
}

/// Values that can live on a grid: scalars, d-vectors and d×d matrices.
pub trait FieldValue: Clone + PartialEq {
    /// Linear combination Σ cᵢ·vᵢ. The slice must be non-empty.
    fn linear_combination(terms: &[(f64, &Self)]) -> Self;

    fn is_finite_value(&self) -> bool;

    /// Shape tag used to enforce uniformity across nodes.
    fn shape(&self) -> (usize, usize);
}

impl FieldValue for f64 {
    fn linear_combination(terms: &[(f64, &Self)]) -> Self {
        terms.iter().map(|(c, v)| c * *v).sum()
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }

    fn shape(&self) -> (usize, usize) {
        (1, 1)
    }
}

impl FieldValue for DVector<f64> {
    fn linear_combination(terms: &[(f64, &Self)]) -> Self {
        let mut out = terms[0].1 * terms[0].0;
        for (c, v) in &terms[1..] {
            out.axpy(*c, v, 1.0);
        }
        out
    }

    fn is_finite_value(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
}

impl FieldValue for DMatrix<f64> {
    fn linear_combination(terms: &[(f64, &Self)]) -> Self {
        let mut out = terms[0].1 * terms[0].0;
        for (c, v) in &terms[1..] {
            out.zip_apply(*v, |o, vi| *o += c * vi);
        }
        out
    }

    fn is_finite_value(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    fn shape(&self) -> (usize, usize) {
        self.shape()
    }
}

/// A time-dependent value on a [`TimeGrid`]: one value per node,
/// piecewise-linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesField<V: FieldValue> {
    grid: TimeGrid,
    values: Vec<V>,
}

impl<V: FieldValue> TimeSeriesField<V> {
    pub fn new(grid: TimeGrid, values: Vec<V>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(GaugeError::ShapeError(format!(
                "field needs {} node values, got {}",
                grid.n_nodes(),
                values.len()
            )));
        }
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err(GaugeError::ShapeError(
                "all node values must share one shape".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    /// Sample a function of time at every node.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> V) -> Result<Self> {
        let values = grid.times().map(f).collect();
        Self::new(grid, values)
    }

    /// Constant field.
    pub fn constant(grid: TimeGrid, value: V) -> Self {
        let values = vec![value; grid.n_nodes()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    /// Exact node value (no interpolation).
    pub fn value(&self, k: usize) -> &V {
        &self.values[k]
    }

    /// Mutable node value. The caller must preserve the value's shape.
    pub fn value_mut(&mut self, k: usize) -> &mut V {
        &mut self.values[k]
    }

    /// Piecewise-linear evaluation. Exact at nodes; times outside [0, T] are
    /// clamped to the boundary cells (callers validate domains where it
    /// matters, integrator stage times may overshoot by roundoff).
    pub fn eval(&self, t: f64) -> V {
        let n = self.grid.n_steps();
        let k = ((t / self.grid.step()).floor() as isize).clamp(0, n as isize - 1) as usize;
        // Anchor on the realized node time so that theta is exactly 0.0 there.
        let theta = ((t - self.grid.node(k)) / self.grid.step()).clamp(0.0, 1.0);
        V::linear_combination(&[(1.0 - theta, &self.values[k]), (theta, &self.values[k + 1])])
    }

    /// Slope of the interpolant inside the cell containing `t` (the exact
    /// a.e. derivative of the realized piecewise-linear field).
    pub fn slope(&self, t: f64) -> V {
        let n = self.grid.n_steps();
        let k = ((t / self.grid.step()).floor() as isize).clamp(0, n as isize - 1) as usize;
        let inv = 1.0 / self.grid.step();
        V::linear_combination(&[(-inv, &self.values[k]), (inv, &self.values[k + 1])])
    }

    /// Nodewise derivative estimate: centered differences at interior nodes,
    /// second-order one-sided stencils at the endpoints.
    pub fn derivative_field(&self) -> Self {
        let n = self.grid.n_steps();
        let h = self.grid.step();
        let v = &self.values;
        let mut out = Vec::with_capacity(v.len());
        if n == 1 {
            let slope = V::linear_combination(&[(-1.0 / h, &v[0]), (1.0 / h, &v[1])]);
            out.push(slope.clone());
            out.push(slope);
        } else {
            out.push(V::linear_combination(&[
                (-3.0 / (2.0 * h), &v[0]),
                (4.0 / (2.0 * h), &v[1]),
                (-1.0 / (2.0 * h), &v[2]),
            ]));
            for k in 1..n {
                out.push(V::linear_combination(&[
                    (-1.0 / (2.0 * h), &v[k - 1]),
                    (1.0 / (2.0 * h), &v[k + 1]),
                ]));
            }
            out.push(V::linear_combination(&[
                (3.0 / (2.0 * h), &v[n]),
                (-4.0 / (2.0 * h), &v[n - 1]),
                (1.0 / (2.0 * h), &v[n - 2]),
            ]));
        }
        Self { grid: self.grid, values: out }
    }

    pub fn map<B: FieldValue>(&self, f: impl Fn(&V) -> B) -> TimeSeriesField<B> {
        TimeSeriesField { grid: self.grid, values: self.values.iter().map(f).collect() }
    }

    pub fn zip_map<B: FieldValue, C: FieldValue>(
        &self,
        other: &TimeSeriesField<B>,
        f: impl Fn(&V, &B) -> C,
    ) -> Result<TimeSeriesField<C>> {
        if self.grid != other.grid {
            return Err(GaugeError::GridMismatch(
                "fields must share a grid".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| f(a, b))
            .collect();
        Ok(TimeSeriesField { grid: self.grid, values })
    }
}

/// Composite quadrature weights on a uniform grid with `n` cells of width
/// `step`: Simpson for even `n`, Simpson + 3/8-rule tail for odd `n >= 3`,
/// trapezoid for `n = 1`. Fourth-order accurate except in the n = 1 case.
pub fn quadrature_weights(n: usize, step: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    match n {
        0 => {}
        1 => {
            w[0] = 0.5 * step;
            w[1] = 0.5 * step;
        }
        _ => {
            let m = if n % 2 == 0 { n } else { n - 3 };
            // Composite Simpson over the first m cells (m even, possibly 0).
            if m >= 2 {
                w[0] += step / 3.0;
                w[m] += step / 3.0;
                for k in 1..m {
                    w[k] += if k % 2 == 1 { 4.0 * step / 3.0 } else { 2.0 * step / 3.0 };
                }
            }
            if n % 2 == 1 {
                // Simpson 3/8 over the last three cells.
                let c = 3.0 * step / 8.0;
                w[n - 3] += c;
                w[n - 2] += 3.0 * c;
                w[n - 1] += 3.0 * c;
                w[n] += c;
            }
        }
    }
    w
}
