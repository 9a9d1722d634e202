//! Finite and infinitesimal gauge transformations of neural ODEs.
//!
//! Finite transformations act on the linear model through time-dependent
//! pairs (G(t), c(t)) with G(0) = G(T) = 1 and c(0) = c(T) = 0:
//!
//!   w ↦ G⁻¹ w G − G⁻¹ Ġ,   b ↦ G⁻¹ (b + w c − ċ).
//!
//! Infinitesimal deformations act on generic nodes through a spacetime
//! vector field ε^μ(t, x) vanishing at t = 0 and t = T; they leave the
//! input–output map intact to first order, so outputs move at O(ε²).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{GaugeError, Result};
use crate::grid::{TimeGrid, TimeSeriesField};
use crate::ode::{integrate, ForceFn, GenericNode, JacobianFn, LinearNodeParams, SpacetimeNode};

/// Condition-number ceiling above which a gauge matrix counts as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Tolerance on the boundary conditions G = 1, c = 0 at t ∈ {0, T}.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Largest-over-smallest singular value; infinite for a singular matrix.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn checked_inverse(m: &DMatrix<f64>, node: usize) -> Result<DMatrix<f64>> {
    let cond = condition_estimate(m);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(GaugeError::SingularGauge { node, cond });
    }
    m.clone()
        .try_inverse()
        .ok_or(GaugeError::SingularGauge { node, cond })
}

/// A finite gauge transformation of the linear neural ODE.
#[derive(Debug, Clone)]
pub struct GaugeTransformLinear {
    g: TimeSeriesField<DMatrix<f64>>,
    g_dot: Option<TimeSeriesField<DMatrix<f64>>>,
    c: TimeSeriesField<DVector<f64>>,
    c_dot: Option<TimeSeriesField<DVector<f64>>>,
}

impl GaugeTransformLinear {
    /// Validates the boundary conditions and invertibility of every G(t_k).
    /// Derivative fields are optional; when absent, centered differences of
    /// the sampled fields are used (one-sided at the endpoints).
    pub fn new(
        g: TimeSeriesField<DMatrix<f64>>,
        g_dot: Option<TimeSeriesField<DMatrix<f64>>>,
        c: TimeSeriesField<DVector<f64>>,
        c_dot: Option<TimeSeriesField<DVector<f64>>>,
    ) -> Result<Self> {
        if g.grid() != c.grid() {
            return Err(GaugeError::GridMismatch("G and c must share a grid".into()));
        }
        let d = g.value(0).nrows();
        if g.value(0).ncols() != d {
            return Err(GaugeError::ShapeError("G values must be square".into()));
        }
        if c.value(0).len() != d {
            return Err(GaugeError::ShapeError("c length must match G dimension".into()));
        }
        let eye = DMatrix::identity(d, d);
        let n = g.grid().n_steps();
        for (k, label) in [(0usize, "t = 0"), (n, "t = T")] {
            if (g.value(k) - &eye).amax() > BOUNDARY_TOL {
                return Err(GaugeError::StructureError(format!(
                    "G({label}) must be the identity"
                )));
            }
            if c.value(k).amax() > BOUNDARY_TOL {
                return Err(GaugeError::StructureError(format!("c({label}) must vanish")));
            }
        }
        for k in 0..=n {
            let cond = condition_estimate(g.value(k));
            if !cond.is_finite() || cond > CONDITION_LIMIT {
                return Err(GaugeError::SingularGauge { node: k, cond });
            }
        }
        if let Some(gd) = &g_dot {
            if gd.grid() != g.grid() {
                return Err(GaugeError::GridMismatch("G-dot grid mismatch".into()));
            }
        }
        if let Some(cd) = &c_dot {
            if cd.grid() != c.grid() {
                return Err(GaugeError::GridMismatch("c-dot grid mismatch".into()));
            }
        }
        Ok(Self { g, g_dot, c, c_dot })
    }

    /// Skips the boundary checks. Used to build deliberately invalid gauges
    /// for negative controls.
    pub fn new_unchecked(
        g: TimeSeriesField<DMatrix<f64>>,
        g_dot: Option<TimeSeriesField<DMatrix<f64>>>,
        c: TimeSeriesField<DVector<f64>>,
        c_dot: Option<TimeSeriesField<DVector<f64>>>,
    ) -> Self {
        Self { g, g_dot, c, c_dot }
    }

    /// The trivial gauge G ≡ 1, c ≡ 0, with exact zero derivatives.
    pub fn identity(grid: TimeGrid, dim: usize) -> Self {
        Self {
            g: TimeSeriesField::constant(grid, DMatrix::identity(dim, dim)),
            g_dot: Some(TimeSeriesField::constant(grid, DMatrix::zeros(dim, dim))),
            c: TimeSeriesField::constant(grid, DVector::zeros(dim)),
            c_dot: Some(TimeSeriesField::constant(grid, DVector::zeros(dim))),
        }
    }

    /// Sample analytic G, Ġ, c, ċ on a grid.
    pub fn from_fns(
        grid: TimeGrid,
        g: impl Fn(f64) -> DMatrix<f64>,
        g_dot: impl Fn(f64) -> DMatrix<f64>,
        c: impl Fn(f64) -> DVector<f64>,
        c_dot: impl Fn(f64) -> DVector<f64>,
    ) -> Result<Self> {
        Self::new(
            TimeSeriesField::from_fn(grid, g)?,
            Some(TimeSeriesField::from_fn(grid, g_dot)?),
            TimeSeriesField::from_fn(grid, c)?,
            Some(TimeSeriesField::from_fn(grid, c_dot)?),
        )
    }

    pub fn dim(&self) -> usize {
        self.g.value(0).nrows()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.g.grid()
    }

    pub fn g(&self) -> &TimeSeriesField<DMatrix<f64>> {
        &self.g
    }

    pub fn c(&self) -> &TimeSeriesField<DVector<f64>> {
        &self.c
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.g_dot.is_some() && self.c_dot.is_some()
    }

    /// Ġ — analytic when provided, otherwise centered differences.
    pub fn g_dot_field(&self) -> TimeSeriesField<DMatrix<f64>> {
        self.g_dot.clone().unwrap_or_else(|| self.g.derivative_field())
    }

    /// ċ — analytic when provided, otherwise centered differences.
    pub fn c_dot_field(&self) -> TimeSeriesField<DVector<f64>> {
        self.c_dot.clone().unwrap_or_else(|| self.c.derivative_field())
    }

    /// Nodewise w ↦ G⁻¹ w G − G⁻¹ Ġ.
    pub fn transform_w(
        &self,
        w: &TimeSeriesField<DMatrix<f64>>,
    ) -> Result<TimeSeriesField<DMatrix<f64>>> {
        if w.grid() != self.grid() {
            return Err(GaugeError::GridMismatch("gauge and w must share a grid".into()));
        }
        let g_dot = self.g_dot_field();
        let mut values = Vec::with_capacity(w.grid().n_nodes());
        for k in 0..w.grid().n_nodes() {
            let g = self.g.value(k);
            let g_inv = checked_inverse(g, k)?;
            values.push(&g_inv * (w.value(k) * g - g_dot.value(k)));
        }
        TimeSeriesField::new(*w.grid(), values)
    }

    /// Composition law: applying `self` first and then `other` equals the
    /// single gauge with G = G_self · G_other and c = G_self c_other + c_self.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let g = self.g.zip_map(&other.g, |a, b| a * b)?;
        let c = self
            .g
            .zip_map(&other.c, |ga, cb| ga * cb)?
            .zip_map(&self.c, |v, ca| v + ca)?;
        let (g_dot, c_dot) = if self.has_analytic_derivatives() && other.has_analytic_derivatives()
        {
            let ga_dot = self.g_dot_field();
            let gb_dot = other.g_dot_field();
            let ca_dot = self.c_dot_field();
            let cb_dot = other.c_dot_field();
            let mut gd = Vec::new();
            let mut cd = Vec::new();
            for k in 0..self.grid().n_nodes() {
                gd.push(ga_dot.value(k) * other.g.value(k) + self.g.value(k) * gb_dot.value(k));
                cd.push(
                    ga_dot.value(k) * other.c.value(k)
                        + self.g.value(k) * cb_dot.value(k)
                        + ca_dot.value(k),
                );
            }
            (
                Some(TimeSeriesField::new(*self.grid(), gd)?),
                Some(TimeSeriesField::new(*self.grid(), cd)?),
            )
        } else {
            (None, None)
        };
        Self::new(g, g_dot, c, c_dot)
    }
}

/// Transformed parameters w' = G⁻¹ w G − G⁻¹ Ġ, b' = G⁻¹ (b + w c − ċ),
/// evaluated at every grid node.
pub fn apply_linear_gauge(
    params: &LinearNodeParams,
    gauge: &GaugeTransformLinear,
) -> Result<LinearNodeParams> {
    if params.grid() != gauge.grid() {
        return Err(GaugeError::GridMismatch("gauge and params must share a grid".into()));
    }
    if params.dim() != gauge.dim() {
        return Err(GaugeError::ShapeError(format!(
            "gauge dim {} vs params dim {}",
            gauge.dim(),
            params.dim()
        )));
    }
    let g_dot = gauge.g_dot_field();
    let c_dot = gauge.c_dot_field();
    let n = params.grid().n_nodes();
    let mut w_values = Vec::with_capacity(n);
    let mut b_values = Vec::with_capacity(n);
    for k in 0..n {
        let g = gauge.g.value(k);
        let g_inv = checked_inverse(g, k)?;
        w_values.push(&g_inv * (params.w().value(k) * g - g_dot.value(k)));
        b_values.push(
            &g_inv * (params.b().value(k) + params.w().value(k) * gauge.c.value(k) - c_dot.value(k)),
        );
    }
    LinearNodeParams::new(
        TimeSeriesField::new(*params.grid(), w_values)?,
        TimeSeriesField::new(*params.grid(), b_values)?,
    )
}

/// The gauge realizing an infinitesimal time reparametrization t ↦ t + ε(t):
/// G = 1 + ε w and c = ε b. Derivative fields are assembled by the product
/// rule from the sampled ε̇, ẇ, ḃ.
pub fn time_reparam_as_gauge(
    params: &LinearNodeParams,
    eps0: &TimeSeriesField<f64>,
) -> Result<GaugeTransformLinear> {
    if eps0.grid() != params.grid() {
        return Err(GaugeError::GridMismatch("eps0 and params must share a grid".into()));
    }
    let d = params.dim();
    let eye = DMatrix::identity(d, d);
    let eps_dot = eps0.derivative_field();
    let w_dot = params.w().derivative_field();
    let b_dot = params.b().derivative_field();
    let n = params.grid().n_nodes();
    let mut g = Vec::with_capacity(n);
    let mut g_dot = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut c_dot = Vec::with_capacity(n);
    for k in 0..n {
        let e = *eps0.value(k);
        let e_dot = *eps_dot.value(k);
        g.push(&eye + params.w().value(k) * e);
        g_dot.push(params.w().value(k) * e_dot + w_dot.value(k) * e);
        c.push(params.b().value(k) * e);
        c_dot.push(params.b().value(k) * e_dot + b_dot.value(k) * e);
    }
    let grid = *params.grid();
    GaugeTransformLinear::new(
        TimeSeriesField::new(grid, g)?,
        Some(TimeSeriesField::new(grid, g_dot)?),
        TimeSeriesField::new(grid, c)?,
        Some(TimeSeriesField::new(grid, c_dot)?),
    )
}

/// A scalar function of time with an optional analytic derivative.
#[derive(Clone)]
pub struct TimeScalar {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    df: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl TimeScalar {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), df: None }
    }

    pub fn with_derivative(mut self, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.df = Some(Arc::new(df));
        self
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match &self.df {
            Some(df) => df(t),
            None => {
                let h = 1e-6f64.max(1e-6 * t.abs());
                ((self.f)(t + h) - (self.f)(t - h)) / (2.0 * h)
            }
        }
    }
}

/// Generator ε^μ(t, x) of an infinitesimal spacetime diffeomorphism.
/// Component 0 is the time part ε⁰; components 1..d are the spatial part.
#[derive(Clone)]
pub struct DiffeoGenerator {
    spatial_dim: usize,
    epsilon: ForceFn,
    d_dt: Option<ForceFn>,
    d_dx: Option<JacobianFn>,
}

impl DiffeoGenerator {
    pub fn new(
        spatial_dim: usize,
        epsilon: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { spatial_dim, epsilon: Arc::new(epsilon), d_dt: None, d_dx: None }
    }

    /// Purely spatial generator (ε⁰ ≡ 0) from a d-component field.
    pub fn spatial(
        spatial_dim: usize,
        eps: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self::new(spatial_dim, move |t, x| {
            let e = eps(t, x);
            let mut out = DVector::zeros(e.len() + 1);
            out.rows_mut(1, e.len()).copy_from(&e);
            out
        })
    }

    /// Analytic ∂ε/∂t, a (d+1)-vector.
    pub fn with_time_derivative(
        mut self,
        d_dt: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.d_dt = Some(Arc::new(d_dt));
        self
    }

    /// Analytic ∂ε^μ/∂x^j, a (d+1)×d matrix.
    pub fn with_space_jacobian(
        mut self,
        d_dx: impl Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.d_dx = Some(Arc::new(d_dx));
        self
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    pub fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.epsilon)(t, x)
    }

    pub fn d_dt(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        match &self.d_dt {
            Some(f) => f(t, x),
            None => {
                let h = 1e-6f64.max(1e-6 * t.abs());
                ((self.epsilon)(t + h, x) - (self.epsilon)(t - h, x)) / (2.0 * h)
            }
        }
    }

    pub fn d_dx(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        if let Some(f) = &self.d_dx {
            return f(t, x);
        }
        let d = self.spatial_dim;
        let mut jac = DMatrix::zeros(d + 1, d);
        let mut xp = x.clone();
        for j in 0..d {
            let h = 1e-6f64.max(1e-6 * x[j].abs());
            xp[j] = x[j] + h;
            let fp = (self.epsilon)(t, &xp);
            xp[j] = x[j] - h;
            let fm = (self.epsilon)(t, &xp);
            xp[j] = x[j];
            for i in 0..=d {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// Largest |ε^μ| over the probes at t = 0 and t = T (should vanish for a
    /// boundary-respecting generator).
    pub fn boundary_residual(&self, t_end: f64, probes: &[DVector<f64>]) -> f64 {
        let mut worst = 0.0f64;
        for x in probes {
            worst = worst.max(self.eval(0.0, x).amax());
            worst = worst.max(self.eval(t_end, x).amax());
        }
        worst
    }
}

/// Deformed node under a spatial diffeomorphism with amplitude `a`:
/// F′ = F + a (F,_j ε^j − ε^i,_j F^j − ∂_t ε^i). The generator's time
/// component is ignored (spatial case, ε⁰ ≡ 0).
pub fn spatial_diffeo_deform(node: &GenericNode, eps: &DiffeoGenerator, amplitude: f64) -> GenericNode {
    let base = node.clone();
    let eps = eps.clone();
    let d = node.dim();
    GenericNode::new(d, move |t, x| {
        let f = base.force(t, x);
        let jf = base.jacobian_x(t, x);
        let e_spatial = eps.eval(t, x).rows(1, d).into_owned();
        let et_spatial = eps.d_dt(t, x).rows(1, d).into_owned();
        let ex_spatial = eps.d_dx(t, x).rows(1, d).into_owned();
        &f + (jf * e_spatial - ex_spatial * &f - et_spatial) * amplitude
    })
}

/// Deformed node under a space-independent time reparametrization:
/// F′ = F + a (F ε̇⁰ + ∂_t F ε⁰).
pub fn time_reparam_deform(node: &GenericNode, eps0: &TimeScalar, amplitude: f64) -> GenericNode {
    let base = node.clone();
    let eps0 = eps0.clone();
    GenericNode::new(node.dim(), move |t, x| {
        let f = base.force(t, x);
        let ft = base.time_derivative(t, x);
        let e = eps0.eval(t);
        let e_dot = eps0.derivative(t);
        &f + (&f * e_dot + ft * e) * amplitude
    })
}

/// Full Lie-derivative deformation on the spacetime lift:
/// F′^μ = F^μ + a (ε^ν ∂_ν F^μ − F^ν ∂_ν ε^μ), with F̂ = (1, F).
pub fn lie_deform(node: &GenericNode, eps: &DiffeoGenerator, amplitude: f64) -> SpacetimeNode {
    let base = node.clone();
    let eps = eps.clone();
    let d = node.dim();
    SpacetimeNode::from_extended_force(d, move |_s, xhat| {
        let t = xhat[0];
        let x = xhat.rows(1, d).into_owned();
        let f = base.force(t, &x);
        let jf = base.jacobian_x(t, &x);
        let ft = base.time_derivative(t, &x);
        let e = eps.eval(t, &x);
        let et = eps.d_dt(t, &x);
        let ex = eps.d_dx(t, &x);
        let e_spatial = e.rows(1, d).into_owned();
        let mut out = DVector::zeros(d + 1);
        // F^ν ∂_ν ε⁰ with F⁰ = 1
        out[0] = 1.0 - amplitude * (et[0] + ex.row(0).transpose().dot(&f));
        let advect = &jf * &e_spatial + &ft * e[0];
        let drag = ex.rows(1, d) * &f + et.rows(1, d);
        for i in 0..d {
            out[1 + i] = f[i] + amplitude * (advect[i] - drag[i]);
        }
        out
    })
}

/// Outcome of one probe input in an invariance check.
#[derive(Debug, Clone)]
pub struct InvarianceTrial {
    pub index: usize,
    pub abs_deviation: Option<f64>,
    pub rel_deviation: Option<f64>,
    pub error: Option<String>,
}

/// Max output deviation between two nodes over a set of inputs.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub tolerance: f64,
    pub trials: Vec<InvarianceTrial>,
    pub max_abs_deviation: f64,
    pub max_rel_deviation: f64,
    pub passed: bool,
}

/// Integrate both nodes from every input and compare x(T). Per-input
/// integration failures are recorded in the report, not propagated.
pub fn verify_invariance(
    node_a: &GenericNode,
    node_b: &GenericNode,
    inputs: &[DVector<f64>],
    grid: TimeGrid,
    tolerance: f64,
) -> InvarianceReport {
    let mut trials = Vec::with_capacity(inputs.len());
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut any_error = false;
    for (index, x0) in inputs.iter().enumerate() {
        let outcome = integrate(node_a, x0, grid).and_then(|ta| {
            integrate(node_b, x0, grid).map(|tb| {
                let abs = (ta.output() - tb.output()).norm();
                let scale = ta.output().norm().max(1e-300);
                (abs, abs / scale)
            })
        });
        match outcome {
            Ok((abs, rel)) => {
                max_abs = max_abs.max(abs);
                max_rel = max_rel.max(rel);
                trials.push(InvarianceTrial {
                    index,
                    abs_deviation: Some(abs),
                    rel_deviation: Some(rel),
                    error: None,
                });
            }
            Err(e) => {
                any_error = true;
                trials.push(InvarianceTrial {
                    index,
                    abs_deviation: None,
                    rel_deviation: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    InvarianceReport {
        tolerance,
        trials,
        max_abs_deviation: max_abs,
        max_rel_deviation: max_rel,
        passed: !any_error && max_abs <= tolerance,
    }
}
