//! Uniform-motion regularizer, finite-difference training of linear neural
//! ODEs, and gauge-orbit geometry of the loss landscape.
//!
//! Uniform motion (ẍ = 0 for every trajectory) is characterized by
//! ẇ + w² = 0 and ḃ + w b = 0; the regularizer integrates the squared
//! Frobenius/Euclidean norms of these residuals. The data loss is invariant
//! along gauge orbits, so its gradient is orthogonal to orbit tangents; the
//! regularizer is not, which is what makes it a gauge fixing.

use nalgebra::{DMatrix, DVector};

use crate::error::{GaugeError, Result};
use crate::gauge::{apply_linear_gauge, GaugeTransformLinear};
use crate::grid::{quadrature_weights, TimeGrid, TimeSeriesField};
use crate::ode::{integrate_linear_output, LinearNodeParams};
use crate::sampling;

/// Central-difference step for the orbit-tangent derivative in the gauge
/// amplitude.
pub const ORBIT_FD_STEP: f64 = 1e-5;

/// Regularizer strength λ ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerConfig {
    pub strength: f64,
}

impl RegularizerConfig {
    pub fn new(strength: f64) -> Result<Self> {
        if !(strength >= 0.0) {
            return Err(GaugeError::ShapeError(format!(
                "regularizer strength must be >= 0, got {strength}"
            )));
        }
        Ok(Self { strength })
    }
}

/// Full-batch gradient-descent settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Central-difference step for the objective gradient.
    pub fd_step: f64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, iterations: usize, seed: u64, fd_step: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !(fd_step > 0.0) {
            return Err(GaugeError::ShapeError(
                "learning rate and fd step must be positive".into(),
            ));
        }
        Ok(Self { learning_rate, iterations, seed, fd_step })
    }
}

/// Supervised pairs (input, target) of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pairs: Vec<(DVector<f64>, DVector<f64>)>,
}

impl Dataset {
    pub fn new(pairs: Vec<(DVector<f64>, DVector<f64>)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(GaugeError::ShapeError("dataset must be non-empty".into()));
        }
        let d = pairs[0].0.len();
        if pairs.iter().any(|(x, y)| x.len() != d || y.len() != d) {
            return Err(GaugeError::ShapeError("dataset dimensions are inconsistent".into()));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(DVector<f64>, DVector<f64>)] {
        &self.pairs
    }

    pub fn dim(&self) -> usize {
        self.pairs[0].0.len()
    }
}

/// Nodewise uniform-motion residuals (R_w, R_b) = (ẇ + w², ḃ + w b), with
/// derivatives by centered differences (one-sided at the endpoints).
pub fn uniform_motion_residual(
    params: &LinearNodeParams,
) -> (TimeSeriesField<DMatrix<f64>>, TimeSeriesField<DVector<f64>>) {
    let w_dot = params.w().derivative_field();
    let b_dot = params.b().derivative_field();
    let r_w = params
        .w()
        .zip_map(&w_dot, |w, wd| wd + w * w)
        .expect("fields share the params grid");
    let r_b = params
        .w()
        .zip_map(params.b(), |w, b| w * b)
        .and_then(|wb| wb.zip_map(&b_dot, |wb, bd| bd + wb))
        .expect("fields share the params grid");
    (r_w, r_b)
}

/// λ ∫₀ᵀ (‖ẇ + w²‖_F² + ‖ḃ + w b‖₂²) dt by composite Simpson on the grid.
pub fn regularizer(params: &LinearNodeParams, cfg: &RegularizerConfig) -> f64 {
    let (r_w, r_b) = uniform_motion_residual(params);
    let grid = params.grid();
    let weights = quadrature_weights(grid.n_steps(), grid.step());
    let mut total = 0.0;
    for k in 0..grid.n_nodes() {
        let w_term = r_w.value(k).norm_squared();
        let b_term = r_b.value(k).norm_squared();
        total += weights[k] * (w_term + b_term);
    }
    cfg.strength * total
}

/// Mean squared error of the integrated outputs against the targets.
pub fn data_loss(params: &LinearNodeParams, data: &Dataset) -> Result<f64> {
    if data.dim() != params.dim() {
        return Err(GaugeError::ShapeError(format!(
            "data dim {} vs model dim {}",
            data.dim(),
            params.dim()
        )));
    }
    let mut total = 0.0;
    for (input, target) in data.pairs() {
        let out = integrate_linear_output(params, input)?;
        total += (out - target).norm_squared();
    }
    Ok(total / data.pairs().len() as f64)
}

/// One parameter vector per grid: all w node values (row-major), then all b
/// node values.
pub fn flatten(params: &LinearNodeParams) -> DVector<f64> {
    let d = params.dim();
    let n_nodes = params.grid().n_nodes();
    let mut out = DVector::zeros(n_nodes * d * d + n_nodes * d);
    let mut at = 0;
    for k in 0..n_nodes {
        let w = params.w().value(k);
        for i in 0..d {
            for j in 0..d {
                out[at] = w[(i, j)];
                at += 1;
            }
        }
    }
    for k in 0..n_nodes {
        let b = params.b().value(k);
        for i in 0..d {
            out[at] = b[i];
            at += 1;
        }
    }
    out
}

/// Inverse of [`flatten`] for a known grid and dimension.
pub fn unflatten(theta: &DVector<f64>, grid: TimeGrid, dim: usize) -> Result<LinearNodeParams> {
    let n_nodes = grid.n_nodes();
    if theta.len() != n_nodes * dim * dim + n_nodes * dim {
        return Err(GaugeError::ShapeError(format!(
            "parameter vector has length {}, expected {}",
            theta.len(),
            n_nodes * dim * dim + n_nodes * dim
        )));
    }
    let mut at = 0;
    let mut w_values = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let mut w = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                w[(i, j)] = theta[at];
                at += 1;
            }
        }
        w_values.push(w);
    }
    let mut b_values = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let mut b = DVector::zeros(dim);
        for i in 0..dim {
            b[i] = theta[at];
            at += 1;
        }
        b_values.push(b);
    }
    LinearNodeParams::new(
        TimeSeriesField::new(grid, w_values)?,
        TimeSeriesField::new(grid, b_values)?,
    )
}

/// Central-difference gradient of the data loss over all node parameters,
/// in the same stacking order as [`flatten`]. Perturbs node values in place
/// so the sweep over a few thousand parameters stays allocation-free.
pub fn loss_gradient_fd(params: &LinearNodeParams, data: &Dataset, fd_step: f64) -> Result<DVector<f64>> {
    let dim = params.dim();
    let n_nodes = params.grid().n_nodes();
    let mut work = params.clone();
    let mut grad = DVector::zeros(n_nodes * dim * dim + n_nodes * dim);
    let mut at = 0;
    for k in 0..n_nodes {
        for i in 0..dim {
            for j in 0..dim {
                let orig = work.w().value(k)[(i, j)];
                work.w_mut().value_mut(k)[(i, j)] = orig + fd_step;
                let plus = data_loss(&work, data)?;
                work.w_mut().value_mut(k)[(i, j)] = orig - fd_step;
                let minus = data_loss(&work, data)?;
                work.w_mut().value_mut(k)[(i, j)] = orig;
                grad[at] = (plus - minus) / (2.0 * fd_step);
                at += 1;
            }
        }
    }
    for k in 0..n_nodes {
        for i in 0..dim {
            let orig = work.b().value(k)[i];
            work.b_mut().value_mut(k)[i] = orig + fd_step;
            let plus = data_loss(&work, data)?;
            work.b_mut().value_mut(k)[i] = orig - fd_step;
            let minus = data_loss(&work, data)?;
            work.b_mut().value_mut(k)[i] = orig;
            grad[at] = (plus - minus) / (2.0 * fd_step);
            at += 1;
        }
    }
    Ok(grad)
}

/// Infinitesimal gauge direction (δG, δc), vanishing at both endpoints.
#[derive(Debug, Clone)]
pub struct OrbitGenerator {
    delta_g: TimeSeriesField<DMatrix<f64>>,
    delta_g_dot: Option<TimeSeriesField<DMatrix<f64>>>,
    delta_c: TimeSeriesField<DVector<f64>>,
    delta_c_dot: Option<TimeSeriesField<DVector<f64>>>,
}

impl OrbitGenerator {
    pub fn new(
        delta_g: TimeSeriesField<DMatrix<f64>>,
        delta_g_dot: Option<TimeSeriesField<DMatrix<f64>>>,
        delta_c: TimeSeriesField<DVector<f64>>,
        delta_c_dot: Option<TimeSeriesField<DVector<f64>>>,
    ) -> Result<Self> {
        if delta_g.grid() != delta_c.grid() {
            return Err(GaugeError::GridMismatch("generator fields must share a grid".into()));
        }
        let n = delta_g.grid().n_steps();
        for k in [0, n] {
            if delta_g.value(k).amax() > 1e-12 || delta_c.value(k).amax() > 1e-12 {
                return Err(GaugeError::StructureError(
                    "orbit generator must vanish at t = 0 and t = T".into(),
                ));
            }
        }
        Ok(Self { delta_g, delta_g_dot, delta_c, delta_c_dot })
    }

    /// Smooth random generator δG = sin(π t/T) S, δc = sin(π t/T) v with
    /// analytic derivatives.
    pub fn random_smooth(grid: TimeGrid, dim: usize, amplitude: f64, seed: u64) -> Self {
        let mut rng = sampling::rng_from_seed(seed);
        let s = sampling::random_matrix_scaled(dim, amplitude, &mut rng);
        let v = sampling::random_vector_scaled(dim, amplitude, &mut rng);
        let t_end = grid.t_end();
        let pi = std::f64::consts::PI;
        Self {
            delta_g: TimeSeriesField::from_fn(grid, |t| &s * (pi * t / t_end).sin()).unwrap(),
            delta_g_dot: Some(
                TimeSeriesField::from_fn(grid, |t| &s * (pi / t_end) * (pi * t / t_end).cos())
                    .unwrap(),
            ),
            delta_c: TimeSeriesField::from_fn(grid, |t| &v * (pi * t / t_end).sin()).unwrap(),
            delta_c_dot: Some(
                TimeSeriesField::from_fn(grid, |t| &v * (pi / t_end) * (pi * t / t_end).cos())
                    .unwrap(),
            ),
        }
    }

    /// The finite gauge G = 1 + a δG, c = a δc at amplitude `a`.
    pub fn gauge_at(&self, amplitude: f64) -> Result<GaugeTransformLinear> {
        let dim = self.delta_g.value(0).nrows();
        let eye = DMatrix::identity(dim, dim);
        let g = self.delta_g.map(|dg| &eye + dg * amplitude);
        let g_dot = self
            .delta_g_dot
            .clone()
            .unwrap_or_else(|| self.delta_g.derivative_field())
            .map(|dgd| dgd * amplitude);
        let c = self.delta_c.map(|dc| dc * amplitude);
        let c_dot = self
            .delta_c_dot
            .clone()
            .unwrap_or_else(|| self.delta_c.derivative_field())
            .map(|dcd| dcd * amplitude);
        GaugeTransformLinear::new(g, Some(g_dot), c, Some(c_dot))
    }
}

/// d/da at a = 0 of apply_linear_gauge(params, 1 + a δG, a δc), stacked over
/// all node parameters, by central differences in the amplitude.
pub fn orbit_tangent(params: &LinearNodeParams, generator: &OrbitGenerator) -> Result<DVector<f64>> {
    let plus = apply_linear_gauge(params, &generator.gauge_at(ORBIT_FD_STEP)?)?;
    let minus = apply_linear_gauge(params, &generator.gauge_at(-ORBIT_FD_STEP)?)?;
    Ok((flatten(&plus) - flatten(&minus)) / (2.0 * ORBIT_FD_STEP))
}

/// d/da at a = 0 of the regularizer along the same orbit direction.
pub fn regularizer_directional_derivative(
    params: &LinearNodeParams,
    generator: &OrbitGenerator,
    cfg: &RegularizerConfig,
) -> Result<f64> {
    let plus = regularizer(&apply_linear_gauge(params, &generator.gauge_at(ORBIT_FD_STEP)?)?, cfg);
    let minus = regularizer(&apply_linear_gauge(params, &generator.gauge_at(-ORBIT_FD_STEP)?)?, cfg);
    Ok((plus - minus) / (2.0 * ORBIT_FD_STEP))
}

/// Objective trace of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub loss: f64,
    /// Raw uniform-motion integral (strength-independent), so runs with
    /// different λ are directly comparable.
    pub regularizer: f64,
    /// Displacement of the parameters along the (normalized) initial orbit
    /// tangent of a fixed seeded probe generator.
    pub orbit_drift: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub records: Vec<TrainRecord>,
}

/// Full-batch gradient descent on data_loss + regularizer over every node
/// value of w and b. Deterministic for a fixed config; the seed feeds the
/// orbit-drift probe direction.
pub fn train(
    params0: &LinearNodeParams,
    data: &Dataset,
    tcfg: &TrainConfig,
    rcfg: &RegularizerConfig,
) -> Result<(LinearNodeParams, TrainHistory)> {
    let grid = *params0.grid();
    let dim = params0.dim();
    let raw_cfg = RegularizerConfig { strength: 1.0 };
    // returns (data loss, raw uniform-motion integral)
    let objective = |theta: &DVector<f64>| -> Result<(f64, f64)> {
        let p = unflatten(theta, grid, dim)?;
        Ok((data_loss(&p, data)?, regularizer(&p, &raw_cfg)))
    };

    let probe = OrbitGenerator::random_smooth(grid, dim, 1.0, tcfg.seed);
    let tangent = orbit_tangent(params0, &probe)?;
    let tangent_norm = tangent.norm();
    let tangent_unit =
        if tangent_norm > 0.0 { tangent / tangent_norm } else { tangent };

    let theta0 = flatten(params0);
    let mut theta = theta0.clone();
    let mut history = TrainHistory::default();
    let (loss0, reg0) = objective(&theta)?;
    history.records.push(TrainRecord { iteration: 0, loss: loss0, regularizer: reg0, orbit_drift: 0.0 });

    for iter in 1..=tcfg.iterations {
        // central-difference gradient of the full objective; a state blow-up
        // anywhere in the sweep means the descent has left the finite region
        let diverged = |_| GaugeError::Divergence(iter);
        let mut grad = DVector::zeros(theta.len());
        for i in 0..theta.len() {
            let orig = theta[i];
            theta[i] = orig + tcfg.fd_step;
            let (lp, rp) = objective(&theta).map_err(diverged)?;
            theta[i] = orig - tcfg.fd_step;
            let (lm, rm) = objective(&theta).map_err(diverged)?;
            theta[i] = orig;
            grad[i] = ((lp + rcfg.strength * rp) - (lm + rcfg.strength * rm))
                / (2.0 * tcfg.fd_step);
        }
        theta -= grad * tcfg.learning_rate;
        let (loss, reg) = objective(&theta).map_err(diverged)?;
        if !loss.is_finite() || !reg.is_finite() {
            return Err(GaugeError::Divergence(iter));
        }
        let drift = (&theta - &theta0).dot(&tangent_unit);
        history.records.push(TrainRecord { iteration: iter, loss, regularizer: reg, orbit_drift: drift });
    }
    Ok((unflatten(&theta, grid, dim)?, history))
}
