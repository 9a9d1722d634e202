//! Neural ODE representations and a fixed-step RK4 integrator.
//!
//! Three model classes: a generic force F(t, x), the linear model
//! ẋ = w(t)x + b(t), and the spacetime extension with state (t(s), x(s)).
//! The integrator takes exactly one classical RK4 step per grid cell —
//! deterministic, fourth order, no adaptive stepping.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{GaugeError, Result};
use crate::grid::{TimeGrid, TimeSeriesField};

pub type ForceFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Step used by finite-difference Jacobians: h = max(1e-6, 1e-6·|x|)
/// per component.
pub const FD_STEP: f64 = 1e-6;

fn fd_step_for(x: f64) -> f64 {
    FD_STEP.max(FD_STEP * x.abs())
}

/// A generic neural ODE ẋ = F(t, x) with optional analytic derivatives.
/// When a derivative is absent, centered finite differences are used.
#[derive(Clone)]
pub struct GenericNode {
    dim: usize,
    force: ForceFn,
    jacobian_x: Option<JacobianFn>,
    time_derivative: Option<ForceFn>,
}

impl std::fmt::Debug for GenericNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenericNode")
            .field("dim", &self.dim)
            .field("jacobian_x", &self.jacobian_x.is_some())
            .field("time_derivative", &self.time_derivative.is_some())
            .finish()
    }
}

impl GenericNode {
    pub fn new(
        dim: usize,
        force: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, force: Arc::new(force), jacobian_x: None, time_derivative: None }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian_x = Some(Arc::new(jac));
        self
    }

    pub fn with_time_derivative(
        mut self,
        df_dt: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.time_derivative = Some(Arc::new(df_dt));
        self
    }

    /// Linear model as a generic node, with analytic ∂F/∂x = w(t) and
    /// ∂F/∂t taken from the exact slope of the piecewise-linear fields.
    pub fn from_linear(params: &LinearNodeParams) -> Self {
        let w = params.w.clone();
        let b = params.b.clone();
        let wj = params.w.clone();
        let ws = params.w.clone();
        let bs = params.b.clone();
        Self {
            dim: params.dim(),
            force: Arc::new(move |t, x| w.eval(t) * x + b.eval(t)),
            jacobian_x: Some(Arc::new(move |t, _| wj.eval(t))),
            time_derivative: Some(Arc::new(move |t, x| ws.slope(t) * x + bs.slope(t))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn force(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.force)(t, x)
    }

    pub fn force_fn(&self) -> ForceFn {
        self.force.clone()
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian_x.is_some()
    }

    /// ∂F/∂x, analytic when provided, otherwise centered differences.
    pub fn jacobian_x(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian_x {
            return j(t, x);
        }
        let d = self.dim;
        let mut jac = DMatrix::zeros(d, d);
        let mut xp = x.clone();
        for j in 0..d {
            let h = fd_step_for(x[j]);
            xp[j] = x[j] + h;
            let fp = self.force(t, &xp);
            xp[j] = x[j] - h;
            let fm = self.force(t, &xp);
            xp[j] = x[j];
            for i in 0..d {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// ∂F/∂t, analytic when provided, otherwise centered differences.
    pub fn time_derivative(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        if let Some(df) = &self.time_derivative {
            return df(t, x);
        }
        let h = fd_step_for(t);
        (self.force(t + h, x) - self.force(t - h, x)) / (2.0 * h)
    }
}

/// The linear neural ODE ẋ = w(t)x + b(t).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNodeParams {
    w: TimeSeriesField<DMatrix<f64>>,
    b: TimeSeriesField<DVector<f64>>,
}

impl LinearNodeParams {
    pub fn new(w: TimeSeriesField<DMatrix<f64>>, b: TimeSeriesField<DVector<f64>>) -> Result<Self> {
        if w.grid() != b.grid() {
            return Err(GaugeError::GridMismatch("w and b must share a grid".into()));
        }
        let (rows, cols) = w.value(0).shape();
        if rows != cols {
            return Err(GaugeError::ShapeError(format!("w must be square, got {rows}x{cols}")));
        }
        if b.value(0).len() != rows {
            return Err(GaugeError::ShapeError(format!(
                "b has length {} but w is {rows}x{rows}",
                b.value(0).len()
            )));
        }
        Ok(Self { w, b })
    }

    pub fn zero(grid: TimeGrid, dim: usize) -> Self {
        Self {
            w: TimeSeriesField::constant(grid, DMatrix::zeros(dim, dim)),
            b: TimeSeriesField::constant(grid, DVector::zeros(dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.value(0).nrows()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.w.grid()
    }

    pub fn w(&self) -> &TimeSeriesField<DMatrix<f64>> {
        &self.w
    }

    pub fn b(&self) -> &TimeSeriesField<DVector<f64>> {
        &self.b
    }

    /// Mutable access for in-place parameter sweeps (shape must be kept).
    pub fn w_mut(&mut self) -> &mut TimeSeriesField<DMatrix<f64>> {
        &mut self.w
    }

    pub fn b_mut(&mut self) -> &mut TimeSeriesField<DVector<f64>> {
        &mut self.b
    }

    pub fn force(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.w.eval(t) * x + self.b.eval(t)
    }
}

/// Integrated states on a grid; `states[k] ≈ x(t_k)` and `states[0]` is the
/// initial condition exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    /// Final state x(T).
    pub fn output(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// One classical RK4 step. The combination is divided by 6 before the final
/// scale so that a unit force component advances the state by exactly `h`
/// (this keeps the spacetime lift bit-identical to direct integration).
fn rk4_step(f: &impl Fn(f64, &DVector<f64>) -> DVector<f64>, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    let mut combo = k1;
    combo.axpy(2.0, &k2, 1.0);
    combo.axpy(2.0, &k3, 1.0);
    combo += &k4;
    combo.unscale_mut(6.0);
    x + combo * h
}

fn rk4_integrate(
    f: impl Fn(f64, &DVector<f64>) -> DVector<f64>,
    x0: &DVector<f64>,
    grid: TimeGrid,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(grid.n_nodes());
    states.push(x0.clone());
    let h = grid.step();
    let mut t = 0.0;
    let mut x = x0.clone();
    for _ in 0..grid.n_steps() {
        x = rk4_step(&f, t, &x, h);
        t += h;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(GaugeError::NonFiniteState { t });
        }
        states.push(x.clone());
    }
    Ok(Trajectory { grid, states })
}

/// Integrate a generic neural ODE from `x0` over `grid` with RK4.
pub fn integrate(node: &GenericNode, x0: &DVector<f64>, grid: TimeGrid) -> Result<Trajectory> {
    if x0.len() != node.dim() {
        return Err(GaugeError::ShapeError(format!(
            "initial condition has length {}, node dim is {}",
            x0.len(),
            node.dim()
        )));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(GaugeError::NonFiniteState { t: 0.0 });
    }
    rk4_integrate(|t, x| node.force(t, x), x0, grid)
}

/// Specialized allocation-free RK4 sweep for the linear model. Stage one and
/// four hit grid nodes exactly; the middle stages use the cell midpoint of
/// the piecewise-linear fields. Training loops differentiate through this by
/// finite differences, so the inner loop avoids heap traffic.
fn linear_rk4_sweep(
    params: &LinearNodeParams,
    x0: &DVector<f64>,
    mut states: Option<&mut Vec<DVector<f64>>>,
) -> Result<DVector<f64>> {
    let grid = params.grid();
    let d = params.dim();
    let h = grid.step();
    let mut x = x0.clone();
    if let Some(states) = states.as_deref_mut() {
        states.push(x.clone());
    }
    let mut w_mid = DMatrix::zeros(d, d);
    let mut b_mid = DVector::zeros(d);
    let mut k1 = DVector::zeros(d);
    let mut k2 = DVector::zeros(d);
    let mut k3 = DVector::zeros(d);
    let mut k4 = DVector::zeros(d);
    let mut stage = DVector::zeros(d);
    for k in 0..grid.n_steps() {
        let w0 = params.w().value(k);
        let w1 = params.w().value(k + 1);
        let b0 = params.b().value(k);
        let b1 = params.b().value(k + 1);
        w_mid.copy_from(w0);
        w_mid.zip_apply(w1, |o, v| *o = 0.5 * *o + 0.5 * v);
        b_mid.copy_from(b0);
        b_mid.zip_apply(b1, |o, v| *o = 0.5 * *o + 0.5 * v);

        k1.copy_from(b0);
        k1.gemv(1.0, w0, &x, 1.0);
        stage.copy_from(&x);
        stage.axpy(0.5 * h, &k1, 1.0);
        k2.copy_from(&b_mid);
        k2.gemv(1.0, &w_mid, &stage, 1.0);
        stage.copy_from(&x);
        stage.axpy(0.5 * h, &k2, 1.0);
        k3.copy_from(&b_mid);
        k3.gemv(1.0, &w_mid, &stage, 1.0);
        stage.copy_from(&x);
        stage.axpy(h, &k3, 1.0);
        k4.copy_from(b1);
        k4.gemv(1.0, w1, &stage, 1.0);

        k1.axpy(2.0, &k2, 1.0);
        k1.axpy(2.0, &k3, 1.0);
        k1 += &k4;
        k1.unscale_mut(6.0);
        x.axpy(h, &k1, 1.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(GaugeError::NonFiniteState { t: grid.node(k + 1) });
        }
        if let Some(states) = states.as_deref_mut() {
            states.push(x.clone());
        }
    }
    Ok(x)
}

/// Integrate the linear model on its own grid.
pub fn integrate_linear(params: &LinearNodeParams, x0: &DVector<f64>) -> Result<Trajectory> {
    if x0.len() != params.dim() {
        return Err(GaugeError::ShapeError(format!(
            "initial condition has length {}, model dim is {}",
            x0.len(),
            params.dim()
        )));
    }
    let mut states = Vec::with_capacity(params.grid().n_nodes());
    linear_rk4_sweep(params, x0, Some(&mut states))?;
    Ok(Trajectory { grid: *params.grid(), states })
}

/// x(T) of the linear model without storing the trajectory.
pub fn integrate_linear_output(params: &LinearNodeParams, x0: &DVector<f64>) -> Result<DVector<f64>> {
    if x0.len() != params.dim() {
        return Err(GaugeError::ShapeError(format!(
            "initial condition has length {}, model dim is {}",
            x0.len(),
            params.dim()
        )));
    }
    linear_rk4_sweep(params, x0, None)
}

/// The spacetime extension: state x̂ = (t, x) with force F̂ = (F⁰, F).
/// The spatial force is evaluated at the time *component* of the state, so a
/// generalized F⁰ genuinely reparametrizes the flow.
#[derive(Clone)]
pub struct SpacetimeNode {
    spatial_dim: usize,
    system: GenericNode,
}

impl std::fmt::Debug for SpacetimeNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpacetimeNode").field("spatial_dim", &self.spatial_dim).finish()
    }
}

impl SpacetimeNode {
    /// Build from an arbitrary extended force F̂(s, x̂) of dimension d+1.
    pub fn from_extended_force(
        spatial_dim: usize,
        force: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { spatial_dim, system: GenericNode::new(spatial_dim + 1, force) }
    }

    /// Replace the time component F⁰ ≡ 1 by a caller-supplied f0(s, x̂).
    pub fn with_time_force(
        node: &GenericNode,
        f0: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let force = node.force_fn();
        let d = node.dim();
        Self::from_extended_force(d, move |s, xhat| {
            let spatial = xhat.rows(1, d).into_owned();
            let fs = force(xhat[0], &spatial);
            let mut out = DVector::zeros(d + 1);
            out[0] = f0(s, xhat);
            out.rows_mut(1, d).copy_from(&fs);
            out
        })
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    /// The extended (d+1)-dimensional system as a generic node.
    pub fn system(&self) -> &GenericNode {
        &self.system
    }

    /// (0, x0) — the spacetime initial condition for a spatial input.
    pub fn lift_input(&self, x0: &DVector<f64>) -> DVector<f64> {
        let mut xhat = DVector::zeros(self.spatial_dim + 1);
        xhat.rows_mut(1, self.spatial_dim).copy_from(x0);
        xhat
    }

    /// Integrate the extended system from (0, x0).
    pub fn integrate(&self, x0: &DVector<f64>, grid: TimeGrid) -> Result<Trajectory> {
        if x0.len() != self.spatial_dim {
            return Err(GaugeError::ShapeError(format!(
                "initial condition has length {}, spatial dim is {}",
                x0.len(),
                self.spatial_dim
            )));
        }
        integrate(&self.system, &self.lift_input(x0), grid)
    }

    /// Spatial components of a state of the extended system.
    pub fn spatial(&self, xhat: &DVector<f64>) -> DVector<f64> {
        xhat.rows(1, self.spatial_dim).into_owned()
    }

    /// t(s) along an extended trajectory.
    pub fn time_component(trajectory: &Trajectory) -> Vec<f64> {
        trajectory.states().iter().map(|x| x[0]).collect()
    }
}

/// Extend a node with the trivial time flow F⁰ ≡ 1, so that t(s) = s.
pub fn lift_to_spacetime(node: &GenericNode) -> SpacetimeNode {
    let force = node.force_fn();
    let d = node.dim();
    SpacetimeNode::from_extended_force(d, move |_s, xhat| {
        let spatial = xhat.rows(1, d).into_owned();
        let fs = force(xhat[0], &spatial);
        let mut out = DVector::zeros(d + 1);
        out[0] = 1.0;
        out.rows_mut(1, d).copy_from(&fs);
        out
    })
}
