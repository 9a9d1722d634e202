//! Discrete architectures and their parameter-space gauges: linear
//! feedforward stacks, ReLU networks with per-unit rescaling, single-channel
//! CNNs with L_s pooling, and the discretization bridge that carries a linear
//! neural ODE onto a layer stack so the continuous and discrete gauges can be
//! compared layer by layer (the commuting diagram).

use nalgebra::{DMatrix, DVector};

use crate::error::{GaugeError, Result};
use crate::gauge::{apply_linear_gauge, condition_estimate, GaugeTransformLinear, CONDITION_LIMIT};
use crate::grid::{quadrature_weights, TimeGrid, TimeSeriesField};
use crate::ode::LinearNodeParams;
use crate::sampling;

/// Seed for the internal probe inputs of [`commuting_diagram_check`].
const DIAGRAM_PROBE_SEED: u64 = 0xD1A6;

/// One affine layer x ↦ w x + b.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// A stack of affine layers of a common width, no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardLinearNet {
    layers: Vec<LinearLayer>,
}

fn check_layers(layers: &[LinearLayer]) -> Result<usize> {
    if layers.is_empty() {
        return Err(GaugeError::ShapeError("a network needs at least one layer".into()));
    }
    let d = layers[0].weight.nrows();
    for (n, layer) in layers.iter().enumerate() {
        if layer.weight.shape() != (d, d) || layer.bias.len() != d {
            return Err(GaugeError::ShapeError(format!(
                "layer {n} does not match width {d}"
            )));
        }
    }
    Ok(d)
}

impl FeedforwardLinearNet {
    pub fn new(layers: Vec<LinearLayer>) -> Result<Self> {
        check_layers(&layers)?;
        Ok(Self { layers })
    }

    pub fn dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }
}

/// Iterates x(n+1) = w̄ₙ x(n) + b̄ₙ and returns x(N).
pub fn forward_linear(net: &FeedforwardLinearNet, x0: &DVector<f64>) -> Result<DVector<f64>> {
    if x0.len() != net.dim() {
        return Err(GaugeError::ShapeError(format!(
            "input has length {}, network width is {}",
            x0.len(),
            net.dim()
        )));
    }
    let mut x = x0.clone();
    for layer in &net.layers {
        x = &layer.weight * x + &layer.bias;
    }
    Ok(x)
}

/// Boundary-respecting discrete gauge data: N+1 invertible matrices with
/// G₀ = G_N = 1 and N+1 shift vectors with c₀ = c_N = 0, both exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGauge {
    g: Vec<DMatrix<f64>>,
    c: Vec<DVector<f64>>,
}

impl DiscreteGauge {
    pub fn new(g: Vec<DMatrix<f64>>, c: Vec<DVector<f64>>) -> Result<Self> {
        if g.len() != c.len() || g.len() < 2 {
            return Err(GaugeError::ShapeError(
                "gauge needs N+1 matrices and N+1 vectors, N >= 1".into(),
            ));
        }
        let d = g[0].nrows();
        let eye = DMatrix::identity(d, d);
        let last = g.len() - 1;
        if g[0] != eye || g[last] != eye {
            return Err(GaugeError::StructureError("G_0 and G_N must equal the identity".into()));
        }
        if c[0] != DVector::zeros(d) || c[last] != DVector::zeros(d) {
            return Err(GaugeError::StructureError("c_0 and c_N must vanish".into()));
        }
        for (k, m) in g.iter().enumerate() {
            if m.shape() != (d, d) || c[k].len() != d {
                return Err(GaugeError::ShapeError(format!("gauge entry {k} has a wrong shape")));
            }
            let cond = condition_estimate(m);
            if !cond.is_finite() || cond > CONDITION_LIMIT {
                return Err(GaugeError::SingularGauge { node: k, cond });
            }
        }
        Ok(Self { g, c })
    }

    pub fn identity(dim: usize, n_layers: usize) -> Self {
        Self {
            g: vec![DMatrix::identity(dim, dim); n_layers + 1],
            c: vec![DVector::zeros(dim); n_layers + 1],
        }
    }

    /// Random interior entries G_n = 1 + S_n, boundary entries exact.
    pub fn random(dim: usize, n_layers: usize, amplitude: f64, seed: u64) -> Self {
        let mut rng = sampling::rng_from_seed(seed);
        let mut g = Vec::with_capacity(n_layers + 1);
        let mut c = Vec::with_capacity(n_layers + 1);
        for n in 0..=n_layers {
            if n == 0 || n == n_layers {
                g.push(DMatrix::identity(dim, dim));
                c.push(DVector::zeros(dim));
            } else {
                g.push(
                    DMatrix::identity(dim, dim)
                        + sampling::random_matrix_scaled(dim, amplitude, &mut rng),
                );
                c.push(sampling::random_vector_scaled(dim, amplitude, &mut rng));
            }
        }
        Self { g, c }
    }

    pub fn n_layers(&self) -> usize {
        self.g.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.g[0].nrows()
    }

    pub fn g(&self) -> &[DMatrix<f64>] {
        &self.g
    }

    pub fn c(&self) -> &[DVector<f64>] {
        &self.c
    }
}

/// Transformed parameters w̄'ₙ = G_{n+1}⁻¹ w̄ₙ Gₙ and
/// b̄'ₙ = G_{n+1}⁻¹ (b̄ₙ + w̄ₙ cₙ − c_{n+1}).
pub fn apply_discrete_gauge(
    net: &FeedforwardLinearNet,
    gauge: &DiscreteGauge,
) -> Result<FeedforwardLinearNet> {
    if gauge.n_layers() != net.depth() {
        return Err(GaugeError::ShapeError(format!(
            "gauge has {} layers, network has {}",
            gauge.n_layers(),
            net.depth()
        )));
    }
    if gauge.dim() != net.dim() {
        return Err(GaugeError::ShapeError("gauge and network widths differ".into()));
    }
    let mut layers = Vec::with_capacity(net.depth());
    for (n, layer) in net.layers.iter().enumerate() {
        let cond = condition_estimate(&gauge.g[n + 1]);
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(GaugeError::SingularGauge { node: n + 1, cond });
        }
        let g_next_inv = gauge.g[n + 1]
            .clone()
            .try_inverse()
            .ok_or(GaugeError::SingularGauge { node: n + 1, cond })?;
        layers.push(LinearLayer {
            weight: &g_next_inv * &layer.weight * &gauge.g[n],
            bias: &g_next_inv * (&layer.bias + &layer.weight * &gauge.c[n] - &gauge.c[n + 1]),
        });
    }
    FeedforwardLinearNet::new(layers)
}

/// Integrated discretization of the linear neural ODE into N layers:
/// w̄ₙ is the Wilson line across the layer window and b̄ₙ is the windowed
/// bias integral, so the stack reproduces the ODE's input–output map up to
/// quadrature error. N must divide the parameter grid.
pub fn discretize(params: &LinearNodeParams, n_layers: usize) -> Result<FeedforwardLinearNet> {
    let grid = params.grid();
    if n_layers == 0 || grid.n_steps() % n_layers != 0 {
        return Err(GaugeError::GridMismatch(format!(
            "{} grid steps cannot be split into {n_layers} layers",
            grid.n_steps()
        )));
    }
    let m = grid.n_steps() / n_layers;
    let d = params.dim();
    let weights = quadrature_weights(m, grid.step());
    let mut layers = Vec::with_capacity(n_layers);
    for n in 0..n_layers {
        let start = n * m;
        let mut forward = DMatrix::identity(d, d);
        let mut reverse = DMatrix::identity(d, d);
        let mut integral = params.b().value(start) * weights[0];
        for j in 0..m {
            let k = start + j;
            let mid = 0.5 * (grid.node(k) + grid.node(k + 1));
            let delta = grid.node(k + 1) - grid.node(k);
            forward = (params.w().eval(mid) * delta).exp() * forward;
            reverse *= (params.w().eval(mid) * (-delta)).exp();
            integral += (&reverse * params.b().value(k + 1)) * weights[j + 1];
        }
        let bias = &forward * integral;
        layers.push(LinearLayer { weight: forward, bias });
    }
    FeedforwardLinearNet::new(layers)
}

/// Smooth continuous gauge through the discrete gauge's knots: cubic Hermite
/// with zero derivative at every knot, so G(nΔ) = Gₙ and c(nΔ) = cₙ exactly
/// and Ġ vanishes at the knots. Fails with `SingularGauge` if interpolation
/// passes through a singular matrix at a fine node.
pub fn lift_gauge(gauge: &DiscreteGauge, grid: TimeGrid) -> Result<GaugeTransformLinear> {
    let n_layers = gauge.n_layers();
    if grid.n_steps() % n_layers != 0 {
        return Err(GaugeError::GridMismatch(format!(
            "{} grid steps cannot host {n_layers} gauge knots",
            grid.n_steps()
        )));
    }
    let m = grid.n_steps() / n_layers;
    let knot_width = grid.t_end() / n_layers as f64;
    let n_nodes = grid.n_nodes();
    let mut g = Vec::with_capacity(n_nodes);
    let mut g_dot = Vec::with_capacity(n_nodes);
    let mut c = Vec::with_capacity(n_nodes);
    let mut c_dot = Vec::with_capacity(n_nodes);
    for k in 0..n_nodes {
        let (j, r) = if k == grid.n_steps() { (n_layers - 1, m) } else { (k / m, k % m) };
        let theta = r as f64 / m as f64;
        let h00 = (2.0 * theta - 3.0) * theta * theta + 1.0;
        let h01 = theta * theta * (3.0 - 2.0 * theta);
        let dh = 6.0 * theta * theta - 6.0 * theta; // d(h00)/dθ = -d(h01)/dθ
        g.push(&gauge.g[j] * h00 + &gauge.g[j + 1] * h01);
        g_dot.push((&gauge.g[j] - &gauge.g[j + 1]) * (dh / knot_width));
        c.push(&gauge.c[j] * h00 + &gauge.c[j + 1] * h01);
        c_dot.push((&gauge.c[j] - &gauge.c[j + 1]) * (dh / knot_width));
    }
    GaugeTransformLinear::new(
        TimeSeriesField::new(grid, g)?,
        Some(TimeSeriesField::new(grid, g_dot)?),
        TimeSeriesField::new(grid, c)?,
        Some(TimeSeriesField::new(grid, c_dot)?),
    )
}

/// Deviations between the two paths around the discretization square:
/// gauge-then-discretize versus discretize-then-gauge.
#[derive(Debug, Clone)]
pub struct DiagramReport {
    pub weight_deviation: Vec<f64>,
    pub bias_deviation: Vec<f64>,
    pub max_weight_deviation: f64,
    pub max_bias_deviation: f64,
    /// Max output deviation of the two networks over 10 seeded probes.
    pub io_deviation: f64,
}

/// Builds NN_B two ways — apply_discrete_gauge(discretize(params)) and
/// discretize(apply_linear_gauge(params, lift_gauge(dg))) — and reports
/// per-layer and input–output deviations.
pub fn commuting_diagram_check(
    params: &LinearNodeParams,
    gauge: &DiscreteGauge,
    n_layers: usize,
) -> Result<DiagramReport> {
    if gauge.n_layers() != n_layers {
        return Err(GaugeError::ShapeError(format!(
            "gauge has {} layers, expected {n_layers}",
            gauge.n_layers()
        )));
    }
    let discrete_first = apply_discrete_gauge(&discretize(params, n_layers)?, gauge)?;
    let lifted = lift_gauge(gauge, *params.grid())?;
    let continuous_first = discretize(&apply_linear_gauge(params, &lifted)?, n_layers)?;
    let mut weight_deviation = Vec::with_capacity(n_layers);
    let mut bias_deviation = Vec::with_capacity(n_layers);
    for (a, b) in discrete_first.layers().iter().zip(continuous_first.layers()) {
        weight_deviation.push((&a.weight - &b.weight).amax());
        bias_deviation.push((&a.bias - &b.bias).amax());
    }
    let probes = sampling::standard_normal_probes(params.dim(), 10, DIAGRAM_PROBE_SEED);
    let mut io_deviation = 0.0f64;
    for x0 in &probes {
        let ya = forward_linear(&discrete_first, x0)?;
        let yb = forward_linear(&continuous_first, x0)?;
        io_deviation = io_deviation.max((ya - yb).norm());
    }
    Ok(DiagramReport {
        max_weight_deviation: weight_deviation.iter().cloned().fold(0.0, f64::max),
        max_bias_deviation: bias_deviation.iter().cloned().fold(0.0, f64::max),
        weight_deviation,
        bias_deviation,
        io_deviation,
    })
}

/// Equal-width ReLU network; the activation is applied after every layer,
/// including the last.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNet {
    layers: Vec<LinearLayer>,
}

impl ReluNet {
    pub fn new(layers: Vec<LinearLayer>) -> Result<Self> {
        check_layers(&layers)?;
        Ok(Self { layers })
    }

    pub fn dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }
}

fn relu(v: &mut DVector<f64>) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// x(n+1) = ReLU(w⁽ⁿ⁾ x(n) + b⁽ⁿ⁾), layer by layer.
pub fn forward_relu(net: &ReluNet, x0: &DVector<f64>) -> Result<DVector<f64>> {
    if x0.len() != net.dim() {
        return Err(GaugeError::ShapeError(format!(
            "input has length {}, network width is {}",
            x0.len(),
            net.dim()
        )));
    }
    let mut x = x0.clone();
    for layer in &net.layers {
        x = &layer.weight * x + &layer.bias;
        relu(&mut x);
    }
    Ok(x)
}

/// Strictly positive per-unit scales for each interior layer of a ReLU net
/// (entry i applies to the units between layers i and i+1).
#[derive(Debug, Clone, PartialEq)]
pub struct RescaleParams {
    alpha: Vec<DVector<f64>>,
}

impl RescaleParams {
    pub fn new(alpha: Vec<DVector<f64>>) -> Result<Self> {
        for a in &alpha {
            for &v in a.iter() {
                if !(v > 0.0) {
                    return Err(GaugeError::NonPositiveAlpha(v));
                }
            }
        }
        Ok(Self { alpha })
    }

    pub fn ones(dim: usize, interior_layers: usize) -> Self {
        Self { alpha: vec![DVector::from_element(dim, 1.0); interior_layers] }
    }

    pub fn alpha(&self) -> &[DVector<f64>] {
        &self.alpha
    }
}

/// Per-unit rescaling: row j of w⁽ⁱ⁾ and b⁽ⁱ⁾_j are multiplied by α⁽ⁱ⁺¹⁾_j,
/// column j of w⁽ⁱ⁺¹⁾ is divided by it, b⁽ⁱ⁺¹⁾ is untouched. ReLU's positive
/// homogeneity makes the network output invariant.
pub fn rescale_relu(net: &ReluNet, alpha: &RescaleParams) -> Result<ReluNet> {
    let interior = net.depth() - 1;
    if alpha.alpha.len() != interior {
        return Err(GaugeError::ShapeError(format!(
            "need {interior} interior scale vectors, got {}",
            alpha.alpha.len()
        )));
    }
    let d = net.dim();
    let mut layers = net.layers.clone();
    for (i, a) in alpha.alpha.iter().enumerate() {
        if a.len() != d {
            return Err(GaugeError::ShapeError(format!(
                "scale vector {i} has length {}, width is {d}",
                a.len()
            )));
        }
        for j in 0..d {
            let s = a[j];
            for k in 0..d {
                layers[i].weight[(j, k)] *= s;
                layers[i + 1].weight[(k, j)] /= s;
            }
            layers[i].bias[j] *= s;
        }
    }
    ReluNet::new(layers)
}

/// One stage of a single-channel CNN.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvLayer {
    /// Valid-mode convolution with an f×f filter, followed by ReLU.
    Conv { filter: DMatrix<f64> },
    /// L_s pooling over non-overlapping `window`×`window` tiles;
    /// `exponent` = ∞ is max pooling.
    Pool { exponent: f64, window: usize },
}

/// Ordered single-channel convolutional pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    layers: Vec<ConvLayer>,
}

impl ConvNet {
    pub fn new(layers: Vec<ConvLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(GaugeError::ShapeError("a network needs at least one layer".into()));
        }
        for (n, layer) in layers.iter().enumerate() {
            match layer {
                ConvLayer::Conv { filter } => {
                    if filter.nrows() == 0 || filter.ncols() == 0 {
                        return Err(GaugeError::ShapeError(format!("empty filter at layer {n}")));
                    }
                }
                ConvLayer::Pool { exponent, window } => {
                    if *window == 0 {
                        return Err(GaugeError::ShapeError(format!("empty pool window at layer {n}")));
                    }
                    if !(*exponent >= 1.0) {
                        return Err(GaugeError::ShapeError(format!(
                            "pool exponent must satisfy s >= 1, got {exponent}"
                        )));
                    }
                }
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }
}

fn conv_valid(image: &DMatrix<f64>, filter: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (ir, ic) = image.shape();
    let (fr, fc) = filter.shape();
    if ir < fr || ic < fc {
        return Err(GaugeError::ShapeError(format!(
            "image {ir}x{ic} smaller than filter {fr}x{fc}"
        )));
    }
    let mut out = DMatrix::zeros(ir - fr + 1, ic - fc + 1);
    for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            let mut acc = 0.0;
            for p in 0..fr {
                for q in 0..fc {
                    acc += image[(i + p, j + q)] * filter[(p, q)];
                }
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

fn pool_tiles(image: &DMatrix<f64>, exponent: f64, window: usize) -> Result<DMatrix<f64>> {
    let (ir, ic) = image.shape();
    if ir % window != 0 || ic % window != 0 {
        return Err(GaugeError::ShapeError(format!(
            "image {ir}x{ic} not tiled by {window}x{window} pool windows"
        )));
    }
    let mut out = DMatrix::zeros(ir / window, ic / window);
    let count = (window * window) as f64;
    for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            let mut cell = 0.0f64;
            if exponent.is_infinite() {
                for p in 0..window {
                    for q in 0..window {
                        cell = cell.max(image[(i * window + p, j * window + q)]);
                    }
                }
            } else {
                for p in 0..window {
                    for q in 0..window {
                        cell += image[(i * window + p, j * window + q)].powf(exponent);
                    }
                }
                cell = (cell / count).powf(1.0 / exponent);
            }
            out[(i, j)] = cell;
        }
    }
    Ok(out)
}

/// Run the pipeline on an image: valid convolutions with ReLU, L_s pooling.
pub fn forward_conv(net: &ConvNet, image: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut x = image.clone();
    for layer in &net.layers {
        match layer {
            ConvLayer::Conv { filter } => {
                x = conv_valid(&x, filter)?;
                for v in x.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            ConvLayer::Pool { exponent, window } => {
                x = pool_tiles(&x, *exponent, *window)?;
            }
        }
    }
    Ok(x)
}

/// Filter rescaling between consecutive conv layers (pooling passes the
/// scale through): filter k gains α_k and loses α_{k-1}. `alpha` carries one
/// entry per adjacent conv pair, so the last conv layer absorbs the final
/// inverse factor and the output is unchanged.
pub fn rescale_conv(net: &ConvNet, alpha: &[f64]) -> Result<ConvNet> {
    let conv_indices: Vec<usize> = net
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| matches!(l, ConvLayer::Conv { .. }).then_some(i))
        .collect();
    if conv_indices.len() < 2 {
        return Err(GaugeError::StructureError(
            "no downstream conv layer exists to absorb the inverse factor".into(),
        ));
    }
    if alpha.len() != conv_indices.len() - 1 {
        return Err(GaugeError::ShapeError(format!(
            "need {} scale factors for {} conv layers, got {}",
            conv_indices.len() - 1,
            conv_indices.len(),
            alpha.len()
        )));
    }
    for &a in alpha {
        if !(a > 0.0) {
            return Err(GaugeError::NonPositiveAlpha(a));
        }
    }
    let mut layers = net.layers.clone();
    for (pair, &a) in alpha.iter().enumerate() {
        if let ConvLayer::Conv { filter } = &mut layers[conv_indices[pair]] {
            *filter *= a;
        }
        if let ConvLayer::Conv { filter } = &mut layers[conv_indices[pair + 1]] {
            *filter /= a;
        }
    }
    ConvNet::new(layers)
}
