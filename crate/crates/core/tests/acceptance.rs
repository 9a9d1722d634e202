//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured figure (run with `--nocapture` to see them). Every tolerance
//! is pinned here as a named constant.

use std::time::Instant;

use gauge_core::sampling;
use gauge_core::{
    apply_attention_gauge, apply_linear_gauge, build_attention_from_node,
    build_w_with_unit_holonomy, commuting_diagram_check, forward_conv, forward_relu,
    gauge_fix_qk, integrate, integrate_cubic_node, integrate_cubic_node_tokens,
    integrate_cubic_smoothed, integrate_linear, lie_deform, loss_gradient_fd, orbit_tangent,
    regularizer, regularizer_directional_derivative, rescale_conv, rescale_relu, self_attention,
    spatial_diffeo_deform, time_reparam_deform, train, Activation, AttentionGauge, AttentionLayer,
    ConvLayer, ConvNet, Dataset, DiffeoGenerator, DiscreteGauge, GaugeTransformLinear,
    GenericNode, InstantaneousCubic, LinearLayer, LinearNodeParams, OrbitGenerator,
    RegularizerConfig, ReluNet, RescaleParams, TimeGrid, TimeScalar, TimeSeriesField, TrainConfig,
    wilson_gauge_covariance,
};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

// ---- criterion 1: Wilson covariance -------------------------------------
const COVARIANCE_TRIALS: usize = 20;
const COVARIANCE_GRIDS: [usize; 4] = [256, 512, 1024, 2048];
const COVARIANCE_TOL_AT_2048: f64 = 1e-7;
/// "order in Δ ≥ 2", asserted as a fitted slope with a 0.1 fit allowance
/// (successive ratios measure 4.0000; least-squares slopes jitter to 1.99999).
const COVARIANCE_MIN_ORDER: f64 = 1.9;
const COVARIANCE_RUNTIME_LIMIT_S: f64 = 10.0;

// ---- criterion 2: finite gauge invariance --------------------------------
const INVARIANCE_GAUGES: usize = 20;
const INVARIANCE_INPUTS: usize = 10;
const INVARIANCE_TOL: f64 = 1e-6;
const NEGATIVE_CONTROL_MIN_DEVIATION: f64 = 1e-3;

// ---- criterion 3: infinitesimal deformations ------------------------------
const RATIO_SEEDS: u64 = 10;
const RATIO_AMPLITUDES: [f64; 2] = [1e-2, 1e-3];
const RATIO_LO: f64 = 3.5;
const RATIO_HI: f64 = 4.5;

// ---- criterion 4: commuting diagram --------------------------------------
const DIAGRAM_SEEDS: u64 = 5;
const DIAGRAM_LAYERS: usize = 4;
const DIAGRAM_BASE_GRID: usize = 1024;
const DIAGRAM_LAYER_TOL: f64 = 1e-4;
const DIAGRAM_MIN_IMPROVEMENT: f64 = 3.0;
/// The io figure is measured after two grid refinements (4096 steps): the
/// two-path deviation is second order in the step on every measurand, so
/// 1e-6 is reachable there while the layerwise bound is taken at 1024.
const DIAGRAM_IO_GRID: usize = 4096;
const DIAGRAM_IO_TOL: f64 = 1e-6;
const DIAGRAM_RUNTIME_LIMIT_S: f64 = 30.0;

// ---- criterion 5: ReLU rescaling -----------------------------------------
const RELU_NETS: usize = 20;
const RELU_INPUTS: usize = 20;
const RELU_DEPTH: usize = 4;
const RELU_RESCALE_TOL: f64 = 1e-12;

// ---- criterion 6: CNN rescaling ------------------------------------------
const CNN_SEEDS: u64 = 10;
const CNN_RESCALE_TOL: f64 = 1e-12;

// ---- criterion 7: attention gauge ----------------------------------------
const ATTENTION_SEEDS: u64 = 20;
const ATTENTION_GAUGE_TOL: f64 = 1e-12;
const QK_INVARIANCE_TOL: f64 = 1e-12;
const SOFTMAX_CONTROL_MIN_DEVIATION: f64 = 1e-3;

// ---- criterion 8: attention ↔ neural ODE ---------------------------------
const NODE_ATTENTION_TOL: f64 = 1e-8;
const TENSOR_ORACLE_TOL: f64 = 1e-10;
const KICK_MAGNITUDE: f64 = 1e-3;

// ---- criterion 9: regularizer --------------------------------------------
const REGULARIZER_ANALYTIC_TOL: f64 = 1e-8;
const REGULARIZER_ZERO_FAMILY_TOL: f64 = 1e-10;
const TRAIN_SEED_PAIRS: u64 = 10;

// ---- criterion 10: orbit orthogonality ------------------------------------
const ORTHOGONALITY_SEEDS: u64 = 10;
const ORTHOGONALITY_TOL: f64 = 1e-6;
const REGULARIZER_DIRECTIONAL_MIN: f64 = 1e-3;

fn fitted_order(steps: &[usize], residuals: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|&n| (n as f64).log2()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    -cov / var
}

fn smooth_field(grid: TimeGrid, dim: usize, scale: f64, seed: u64) -> TimeSeriesField<DMatrix<f64>> {
    let mut rng = sampling::rng_from_seed(seed);
    let a = sampling::random_matrix_scaled(dim, scale, &mut rng);
    let b = sampling::random_matrix_scaled(dim, scale, &mut rng);
    TimeSeriesField::from_fn(grid, |t| &a + &b * (PI * t).sin()).unwrap()
}

#[test]
fn criterion_01_wilson_covariance() {
    let start = Instant::now();
    let mut worst_residual = 0.0f64;
    let mut worst_order = f64::INFINITY;
    for seed in 0..COVARIANCE_TRIALS as u64 {
        let mut residuals = Vec::new();
        for &n in &COVARIANCE_GRIDS {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let w = smooth_field(grid, 3, 0.6, 3000 + seed);
            let gauge = sampling::random_smooth_gauge(grid, 3, 0.25, 4000 + seed);
            residuals.push(wilson_gauge_covariance(&w, &gauge, 1.0, 0.0).unwrap());
        }
        worst_residual = worst_residual.max(*residuals.last().unwrap());
        worst_order = worst_order.min(fitted_order(&COVARIANCE_GRIDS, &residuals));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        worst_residual <= COVARIANCE_TOL_AT_2048,
        "worst residual at 2048 steps: {worst_residual:.3e}"
    );
    assert!(worst_order >= COVARIANCE_MIN_ORDER, "worst fitted order {worst_order:.4}");
    assert!(elapsed <= COVARIANCE_RUNTIME_LIMIT_S, "runtime {elapsed:.2} s");
    println!(
        "criterion 1 (wilson covariance): PASS — worst residual {worst_residual:.3e} \
         (tol {COVARIANCE_TOL_AT_2048:.0e}), worst order {worst_order:.4}, {elapsed:.2} s"
    );
}

#[test]
fn criterion_02_continuous_gauge_invariance() {
    let mut worst = 0.0f64;
    for seed in 0..INVARIANCE_GAUGES as u64 {
        let grid = TimeGrid::new(1.0, 2048).unwrap();
        let params = sampling::random_linear_params(grid, 3, 0.6, 5000 + seed);
        let gauge = sampling::random_smooth_gauge(grid, 3, 0.25, 6000 + seed);
        let transformed = apply_linear_gauge(&params, &gauge).unwrap();
        for x0 in sampling::standard_normal_probes(3, INVARIANCE_INPUTS, 7000 + seed) {
            let a = integrate_linear(&params, &x0).unwrap();
            let b = integrate_linear(&transformed, &x0).unwrap();
            worst = worst.max((a.output() - b.output()).norm());
        }
    }
    assert!(worst <= INVARIANCE_TOL, "worst output deviation {worst:.3e}");

    // negative control: G(T) ≠ 1 is not a symmetry
    let grid = TimeGrid::new(1.0, 2048).unwrap();
    let params = sampling::random_linear_params(grid, 3, 0.6, 5100);
    let mut rng = sampling::rng_from_seed(6100);
    let s = sampling::random_matrix_scaled(3, 0.4, &mut rng);
    let eye = DMatrix::identity(3, 3);
    let bad = GaugeTransformLinear::new_unchecked(
        TimeSeriesField::from_fn(grid, |t| &eye + &s * (0.5 * PI * t).sin()).unwrap(),
        Some(TimeSeriesField::from_fn(grid, |t| &s * (0.5 * PI) * (0.5 * PI * t).cos()).unwrap()),
        TimeSeriesField::constant(grid, DVector::zeros(3)),
        Some(TimeSeriesField::constant(grid, DVector::zeros(3))),
    );
    let transformed = apply_linear_gauge(&params, &bad).unwrap();
    let mut control = 0.0f64;
    for x0 in sampling::standard_normal_probes(3, INVARIANCE_INPUTS, 7100) {
        let a = integrate_linear(&params, &x0).unwrap();
        let b = integrate_linear(&transformed, &x0).unwrap();
        control = control.max((a.output() - b.output()).norm());
    }
    assert!(
        control > NEGATIVE_CONTROL_MIN_DEVIATION,
        "negative control deviated only {control:.3e}"
    );
    println!(
        "criterion 2 (continuous gauge invariance): PASS — worst deviation {worst:.3e} \
         (tol {INVARIANCE_TOL:.0e}), boundary-violating control {control:.3e} > {NEGATIVE_CONTROL_MIN_DEVIATION:.0e}"
    );
}

fn analytic_linear_node(dim: usize, seed: u64) -> GenericNode {
    let mut rng = sampling::rng_from_seed(seed);
    let a = sampling::random_matrix_scaled(dim, 0.7, &mut rng);
    let b = sampling::random_vector_scaled(dim, 0.6, &mut rng);
    let af = a.clone();
    let aj = a.clone();
    GenericNode::new(dim, move |_, x| &af * x + &b)
        .with_jacobian(move |_, _| aj.clone())
        .with_time_derivative(move |_, x| DVector::zeros(x.len()))
}

fn analytic_time_dependent_node(dim: usize, seed: u64) -> GenericNode {
    let mut rng = sampling::rng_from_seed(seed);
    let a = sampling::random_matrix_scaled(dim, 0.6, &mut rng);
    let b_mat = sampling::random_matrix_scaled(dim, 0.6, &mut rng);
    let c = sampling::random_vector_scaled(dim, 0.5, &mut rng);
    let (af, bf, cf) = (a.clone(), b_mat.clone(), c.clone());
    let (aj, bj) = (a.clone(), b_mat.clone());
    let (bt, ct) = (b_mat, c);
    GenericNode::new(dim, move |t, x| (&af + &bf * (PI * t).sin()) * x + &cf * (PI * t).cos())
        .with_jacobian(move |t, _| &aj + &bj * (PI * t).sin())
        .with_time_derivative(move |t, x| {
            (&bt * x) * (PI * (PI * t).cos()) - &ct * (PI * (PI * t).sin())
        })
}

fn analytic_generator(dim: usize, with_time_part: bool, seed: u64) -> DiffeoGenerator {
    let mut rng = sampling::rng_from_seed(seed);
    let mut u = sampling::random_vector_scaled(dim + 1, 1.0, &mut rng);
    let mut v = DMatrix::from_fn(dim + 1, dim, |_, _| {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
    });
    v /= v.norm();
    if !with_time_part {
        u[0] = 0.0;
        for j in 0..dim {
            v[(0, j)] = 0.0;
        }
    }
    let (ue, ve) = (u.clone(), v.clone());
    let (ut, vt) = (u.clone(), v.clone());
    let vx = v;
    DiffeoGenerator::new(dim, move |t, x| (&ue + &ve * x) * (PI * t).sin())
        .with_time_derivative(move |t, x| (&ut + &vt * x) * (PI * (PI * t).cos()))
        .with_space_jacobian(move |t, _| &vx * (PI * t).sin())
}

#[test]
fn criterion_03_infinitesimal_deformation_scaling() {
    let grid = TimeGrid::new(1.0, 1024).unwrap();
    let mut worst_gap = 0.0f64; // |ratio − 4| over every check
    for seed in 0..RATIO_SEEDS {
        // spatial diffeomorphism
        let node = analytic_linear_node(2, 300 + seed);
        let eps = analytic_generator(2, false, 400 + seed);
        let x0 = sampling::standard_normal_probes(2, 1, 500 + seed).pop().unwrap();
        let base = integrate(&node, &x0, grid).unwrap().output().clone();
        for &a in &RATIO_AMPLITUDES {
            let dev = |amp: f64| {
                let deformed = spatial_diffeo_deform(&node, &eps, amp);
                (integrate(&deformed, &x0, grid).unwrap().output() - &base).norm()
            };
            let ratio = dev(a) / dev(0.5 * a);
            assert!(
                (RATIO_LO..=RATIO_HI).contains(&ratio),
                "spatial diffeo, seed {seed}, a = {a}: ratio {ratio}"
            );
            worst_gap = worst_gap.max((ratio - 4.0).abs());
        }

        // time reparametrization (non-autonomous force: for autonomous F the
        // truncated reparametrized force is an exact time rescaling)
        let node = analytic_time_dependent_node(1, 310 + seed);
        let eps0 = TimeScalar::new(|t| (PI * t).sin()).with_derivative(|t| PI * (PI * t).cos());
        let x0 = sampling::standard_normal_probes(1, 1, 510 + seed).pop().unwrap();
        let base = integrate(&node, &x0, grid).unwrap().output().clone();
        for &a in &RATIO_AMPLITUDES {
            let dev = |amp: f64| {
                let deformed = time_reparam_deform(&node, &eps0, amp);
                (integrate(&deformed, &x0, grid).unwrap().output() - &base).norm()
            };
            let ratio = dev(a) / dev(0.5 * a);
            assert!(
                (RATIO_LO..=RATIO_HI).contains(&ratio),
                "time reparam, seed {seed}, a = {a}: ratio {ratio}"
            );
            worst_gap = worst_gap.max((ratio - 4.0).abs());
        }

        // full Lie deformation on the spacetime lift
        let node = analytic_linear_node(2, 320 + seed);
        let eps = analytic_generator(2, true, 420 + seed);
        let x0 = sampling::standard_normal_probes(2, 1, 520 + seed).pop().unwrap();
        let base = integrate(&node, &x0, grid).unwrap().output().clone();
        for &a in &RATIO_AMPLITUDES {
            let dev = |amp: f64| {
                let deformed = lie_deform(&node, &eps, amp);
                let traj = deformed.integrate(&x0, grid).unwrap();
                (deformed.spatial(traj.output()) - &base).norm()
            };
            let ratio = dev(a) / dev(0.5 * a);
            assert!(
                (RATIO_LO..=RATIO_HI).contains(&ratio),
                "lie deformation, seed {seed}, a = {a}: ratio {ratio}"
            );
            worst_gap = worst_gap.max((ratio - 4.0).abs());
        }
    }
    println!(
        "criterion 3 (infinitesimal second-order scaling): PASS — all ratios within \
         [{RATIO_LO}, {RATIO_HI}] (worst |ratio − 4| = {worst_gap:.3})"
    );
}

#[test]
fn criterion_04_commuting_diagram() {
    let start = Instant::now();
    let mut worst_layer = 0.0f64;
    let mut worst_improvement = f64::INFINITY;
    let mut worst_io = 0.0f64;
    for seed in 0..DIAGRAM_SEEDS {
        let dg = DiscreteGauge::random(2, DIAGRAM_LAYERS, 0.3, 2000 + seed);
        let report_at = |n: usize| {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let params = sampling::random_linear_params(grid, 2, 0.6, 1000 + seed);
            commuting_diagram_check(&params, &dg, DIAGRAM_LAYERS).unwrap()
        };
        let base = report_at(DIAGRAM_BASE_GRID);
        let refined = report_at(2 * DIAGRAM_BASE_GRID);
        let fine = report_at(DIAGRAM_IO_GRID);
        let layer_dev = base.max_weight_deviation.max(base.max_bias_deviation);
        worst_layer = worst_layer.max(layer_dev);
        let refined_dev = refined.max_weight_deviation.max(refined.max_bias_deviation);
        worst_improvement = worst_improvement.min(layer_dev / refined_dev);
        worst_io = worst_io.max(fine.io_deviation);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        worst_layer <= DIAGRAM_LAYER_TOL,
        "worst layerwise deviation {worst_layer:.3e} at {DIAGRAM_BASE_GRID} steps"
    );
    assert!(
        worst_improvement >= DIAGRAM_MIN_IMPROVEMENT,
        "worst refinement improvement {worst_improvement:.2}"
    );
    assert!(
        worst_io <= DIAGRAM_IO_TOL,
        "worst io deviation {worst_io:.3e} at {DIAGRAM_IO_GRID} steps"
    );
    assert!(elapsed <= DIAGRAM_RUNTIME_LIMIT_S, "runtime {elapsed:.2} s");
    println!(
        "criterion 4 (commuting diagram): PASS — layer dev {worst_layer:.3e} \
         (tol {DIAGRAM_LAYER_TOL:.0e}), improvement {worst_improvement:.2}x, \
         io {worst_io:.3e} at {DIAGRAM_IO_GRID} steps, {elapsed:.2} s"
    );
}

#[test]
fn criterion_05_relu_rescaling() {
    let mut worst = 0.0f64;
    for seed in 0..RELU_NETS as u64 {
        let mut rng = sampling::rng_from_seed(8000 + seed);
        let d = 3;
        let layers: Vec<LinearLayer> = (0..RELU_DEPTH)
            .map(|_| LinearLayer {
                weight: sampling::random_matrix_scaled(d, 1.3, &mut rng),
                bias: sampling::random_vector_scaled(d, 0.9, &mut rng),
            })
            .collect();
        let net = ReluNet::new(layers).unwrap();
        let alpha = RescaleParams::new(
            (0..RELU_DEPTH - 1)
                .map(|_| DVector::from_fn(d, |_, _| sampling::log_uniform(0.1, 10.0, &mut rng)))
                .collect(),
        )
        .unwrap();
        let scaled = rescale_relu(&net, &alpha).unwrap();
        for x0 in sampling::standard_normal_probes(d, RELU_INPUTS, 9000 + seed) {
            let a = forward_relu(&net, &x0).unwrap();
            let b = forward_relu(&scaled, &x0).unwrap();
            worst = worst.max((&a - &b).norm() / a.norm().max(1e-300));
        }
        // powers of two rescale with zero rounding: bit-identical outputs
        let pow2 = [0.25, 0.5, 2.0, 4.0, 8.0];
        let alpha2 = RescaleParams::new(
            (0..RELU_DEPTH - 1)
                .map(|_| {
                    DVector::from_fn(d, |_, _| {
                        pow2[rand::Rng::random_range(&mut rng, 0..pow2.len())]
                    })
                })
                .collect(),
        )
        .unwrap();
        let scaled2 = rescale_relu(&net, &alpha2).unwrap();
        for x0 in sampling::standard_normal_probes(d, 5, 9500 + seed) {
            let a = forward_relu(&net, &x0).unwrap();
            let b = forward_relu(&scaled2, &x0).unwrap();
            for (va, vb) in a.iter().zip(b.iter()) {
                assert_eq!(va.to_bits(), vb.to_bits(), "power-of-two rescale must be exact");
            }
        }
    }
    assert!(worst <= RELU_RESCALE_TOL, "worst relative deviation {worst:.3e}");
    println!(
        "criterion 5 (relu rescaling): PASS — worst relative deviation {worst:.3e} \
         (tol {RELU_RESCALE_TOL:.0e}), power-of-two rescales bit-exact"
    );
}

#[test]
fn criterion_06_cnn_rescaling() {
    let mut worst = 0.0f64;
    for seed in 0..CNN_SEEDS {
        let mut rng = sampling::rng_from_seed(10_000 + seed);
        let mut filter = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| {
                rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
            })
        };
        // conv–pool(L1)–conv–pool(L2)–conv–pool(L∞): 16 → 14 → 7 → 6 → 3 → 2 → 1
        let net = ConvNet::new(vec![
            ConvLayer::Conv { filter: filter(3, 3) },
            ConvLayer::Pool { exponent: 1.0, window: 2 },
            ConvLayer::Conv { filter: filter(2, 2) },
            ConvLayer::Pool { exponent: 2.0, window: 2 },
            ConvLayer::Conv { filter: filter(2, 2) },
            ConvLayer::Pool { exponent: f64::INFINITY, window: 2 },
        ])
        .unwrap();
        let mut alpha_rng = sampling::rng_from_seed(11_000 + seed);
        let alpha: Vec<f64> = (0..2)
            .map(|_| sampling::log_uniform(0.2, 5.0, &mut alpha_rng))
            .collect();
        let scaled = rescale_conv(&net, &alpha).unwrap();
        let image = DMatrix::from_fn(16, 16, |i, j| ((i * 13 + j * 7 + seed as usize) % 17) as f64 / 17.0);
        let a = forward_conv(&net, &image).unwrap();
        let b = forward_conv(&scaled, &image).unwrap();
        worst = worst.max((&a - &b).norm() / a.norm().max(1e-300));
    }
    assert!(worst <= CNN_RESCALE_TOL, "worst relative deviation {worst:.3e}");
    println!(
        "criterion 6 (cnn rescaling with L1/L2/Linf pooling): PASS — worst relative \
         deviation {worst:.3e} (tol {CNN_RESCALE_TOL:.0e})"
    );
}

#[test]
fn criterion_07_attention_gauge() {
    let mut worst = 0.0f64;
    let mut worst_qk = 0.0f64;
    for seed in 0..ATTENTION_SEEDS {
        let mut rng = sampling::rng_from_seed(12_000 + seed);
        for activation in [Activation::Identity, Activation::Relu] {
            let layer = AttentionLayer::new(
                sampling::random_matrix_scaled(3, 1.0, &mut rng),
                sampling::random_matrix_scaled(3, 1.0, &mut rng),
                sampling::random_matrix_scaled(3, 1.0, &mut rng),
                activation,
                2,
            )
            .unwrap();
            let a_mat = DMatrix::identity(3, 3) + sampling::random_matrix_scaled(3, 0.5, &mut rng);
            let alpha = sampling::log_uniform(0.5, 3.0, &mut rng);
            let gauge = AttentionGauge::from_a(a_mat, alpha).unwrap();
            let transformed = apply_attention_gauge(&layer, &gauge).unwrap();
            for probe in 0..5u64 {
                let p = sampling::standard_normal_probes(6, 1, 13_000 + 10 * seed + probe)
                    .pop()
                    .unwrap();
                let x = DMatrix::from_fn(2, 3, |i, j| p[i * 3 + j]);
                let h0 = self_attention(&layer, &x).unwrap();
                let h1 = self_attention(&transformed, &x).unwrap();
                worst = worst.max((&h0 - &h1).norm() / h0.norm().max(1e-300));
            }
            // W^(qk) under an α = 1 gauge
            let a1 = DMatrix::identity(3, 3) + sampling::random_matrix_scaled(3, 0.4, &mut rng);
            let unit = AttentionGauge::from_a(a1, 1.0).unwrap();
            let fixed = apply_attention_gauge(&layer, &unit).unwrap();
            let qk_dev = (gauge_fix_qk(&layer) - gauge_fix_qk(&fixed)).amax();
            worst_qk = worst_qk.max(qk_dev);
        }
    }
    assert!(worst <= ATTENTION_GAUGE_TOL, "worst relative deviation {worst:.3e}");
    assert!(worst_qk <= QK_INVARIANCE_TOL, "worst W^(qk) deviation {worst_qk:.3e}");

    // softmax negative control with α ≠ 1
    let mut rng = sampling::rng_from_seed(14_000);
    let layer = AttentionLayer::new(
        sampling::random_matrix_scaled(3, 1.0, &mut rng),
        sampling::random_matrix_scaled(3, 1.0, &mut rng),
        sampling::random_matrix_scaled(3, 1.0, &mut rng),
        Activation::Softmax,
        2,
    )
    .unwrap();
    let gauge = AttentionGauge::new(DMatrix::identity(3, 3) * 2.0, DMatrix::identity(3, 3), 2.0)
        .unwrap();
    let transformed = apply_attention_gauge(&layer, &gauge).unwrap();
    let p = sampling::standard_normal_probes(6, 1, 14_001).pop().unwrap();
    let x = DMatrix::from_fn(2, 3, |i, j| p[i * 3 + j]);
    let h0 = self_attention(&layer, &x).unwrap();
    let h1 = self_attention(&transformed, &x).unwrap();
    let control = (h0 - h1).norm();
    assert!(
        control > SOFTMAX_CONTROL_MIN_DEVIATION,
        "softmax control deviated only {control:.3e}"
    );
    println!(
        "criterion 7 (attention gauge): PASS — worst relative deviation {worst:.3e} \
         (tol {ATTENTION_GAUGE_TOL:.0e}), W^(qk) dev {worst_qk:.3e}, softmax control {control:.3e}"
    );
}

#[test]
fn criterion_08_attention_node_correspondence() {
    let mut worst_two_path = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for dim in 1..=3usize {
        for tokens in 1..=2usize {
            for seed in 0..3u64 {
                let grid = TimeGrid::new(1.0, 1024).unwrap();
                let mut rng = sampling::rng_from_seed(15_000 + 100 * dim as u64 + 10 * tokens as u64 + seed);
                let m = sampling::random_matrix_scaled(dim, 0.9, &mut rng);
                let w = build_w_with_unit_holonomy(grid, &m);
                let kick = InstantaneousCubic::new(
                    0.25,
                    sampling::random_matrix_scaled(dim, 1.0, &mut rng),
                    sampling::random_matrix_scaled(dim, 1.0, &mut rng),
                    KICK_MAGNITUDE,
                )
                .unwrap();
                let layer = build_attention_from_node(&w, &kick, tokens).unwrap();
                let p = sampling::standard_normal_probes(dim * tokens, 1, 16_000 + seed)
                    .pop()
                    .unwrap();
                let x = DMatrix::from_fn(tokens, dim, |i, j| p[i * dim + j]);
                let node_path = integrate_cubic_node_tokens(&w, &kick, &x).unwrap();
                let attention_path = &x + self_attention(&layer, &x).unwrap();
                worst_two_path =
                    worst_two_path.max((&node_path - &attention_path).norm());

                // brute-force (d·n)^4 contraction through the same transport
                let before = gauge_core::wilson_line(&w, 0.25, 0.0).unwrap().matrix;
                let after = gauge_core::wilson_line(&w, 1.0, 0.25).unwrap().matrix;
                let y = &x * before.transpose();
                let dn = dim * tokens;
                let z: Vec<f64> = (0..dn).map(|a| y[(a / dim, a % dim)]).collect();
                let mut jumped = y.clone();
                for a_out in 0..dn {
                    let (cap_i, i) = (a_out / dim, a_out % dim);
                    let mut acc = 0.0;
                    for a1 in 0..dn {
                        let (cap_j, j) = (a1 / dim, a1 % dim);
                        for a2 in 0..dn {
                            let (cap_k, k) = (a2 / dim, a2 % dim);
                            if cap_k != cap_i {
                                continue; // δ^I_K
                            }
                            for a3 in 0..dn {
                                let (cap_l, l) = (a3 / dim, a3 % dim);
                                if cap_l != cap_j {
                                    continue; // δ_{JL}
                                }
                                acc += kick.lam[(i, j)]
                                    * kick.lam_tilde[(k, l)]
                                    * z[a1]
                                    * z[a2]
                                    * z[a3];
                            }
                        }
                    }
                    jumped[(cap_i, i)] += KICK_MAGNITUDE * acc;
                }
                let oracle = jumped * after.transpose();
                worst_oracle = worst_oracle.max((&node_path - oracle).norm());
            }
        }
    }
    assert!(worst_two_path <= NODE_ATTENTION_TOL, "two-path deviation {worst_two_path:.3e}");
    assert!(worst_oracle <= TENSOR_ORACLE_TOL, "tensor-oracle deviation {worst_oracle:.3e}");

    // smoothed delta: the gap against the pre-kick convention is O(m²)
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let w = TimeSeriesField::constant(grid, DMatrix::zeros(1, 1));
    let x0 = DVector::from_vec(vec![2.0]);
    let gap_at = |m: f64| {
        let kick = InstantaneousCubic::new(
            0.5,
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            m,
        )
        .unwrap();
        let smoothed = integrate_cubic_smoothed(&w, &kick, 0.125, &x0, 64).unwrap();
        let kicked = integrate_cubic_node(&w, &kick, &x0).unwrap();
        (smoothed[0] - kicked[0]).abs()
    };
    let ratio = gap_at(KICK_MAGNITUDE) / gap_at(0.5 * KICK_MAGNITUDE);
    assert!(
        (RATIO_LO..=RATIO_HI).contains(&ratio),
        "smoothed-delta magnitude ratio {ratio}"
    );
    println!(
        "criterion 8 (attention–node correspondence): PASS — two-path {worst_two_path:.3e} \
         (tol {NODE_ATTENTION_TOL:.0e}), (dn)^4 oracle {worst_oracle:.3e}, \
         smoothed-delta m² ratio {ratio:.2}"
    );
}

#[test]
fn criterion_09_regularizer() {
    // analytic value a⁴ for constant scalar w = a, T = 1
    let grid = TimeGrid::new(1.0, 128).unwrap();
    let params = LinearNodeParams::new(
        TimeSeriesField::constant(grid, DMatrix::from_element(1, 1, 2.0)),
        TimeSeriesField::constant(grid, DVector::zeros(1)),
    )
    .unwrap();
    let value = regularizer(&params, &RegularizerConfig::new(1.0).unwrap());
    assert!(
        (value - 16.0).abs() <= REGULARIZER_ANALYTIC_TOL,
        "constant-w regularizer {value}"
    );

    // zero-residual family w = w0/(1 + w0 t)
    let grid = TimeGrid::new(1.0, 2048).unwrap();
    let params = LinearNodeParams::new(
        TimeSeriesField::from_fn(grid, |t| DMatrix::from_element(1, 1, 1.0 / (1.0 + t))).unwrap(),
        TimeSeriesField::constant(grid, DVector::zeros(1)),
    )
    .unwrap();
    let family = regularizer(&params, &RegularizerConfig::new(1.0).unwrap());
    assert!(family <= REGULARIZER_ZERO_FAMILY_TOL, "zero-family regularizer {family:.3e}");

    // paired runs: λ > 0 ends strictly below the λ = 0 run's regularizer
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let data = Dataset::new(vec![
        (DVector::from_vec(vec![1.0]), DVector::from_vec(vec![1.8])),
        (DVector::from_vec(vec![-0.5]), DVector::from_vec(vec![-0.9])),
    ])
    .unwrap();
    let mut worst_margin = f64::INFINITY;
    for seed in 0..TRAIN_SEED_PAIRS {
        let params0 = sampling::random_linear_params(grid, 1, 0.6, 17_000 + seed);
        let tcfg = TrainConfig::new(0.05, 200, seed, 1e-6).unwrap();
        let free = train(&params0, &data, &tcfg, &RegularizerConfig::new(0.0).unwrap())
            .unwrap()
            .1;
        let fixed = train(&params0, &data, &tcfg, &RegularizerConfig::new(0.5).unwrap())
            .unwrap()
            .1;
        let reg_free = free.records.last().unwrap().regularizer;
        let reg_fixed = fixed.records.last().unwrap().regularizer;
        assert!(
            reg_fixed < reg_free,
            "seed {seed}: regularized {reg_fixed:.3e} not below free {reg_free:.3e}"
        );
        worst_margin = worst_margin.min(reg_free / reg_fixed);
    }
    println!(
        "criterion 9 (regularizer): PASS — a⁴ value {value:.12}, zero family {family:.3e}, \
         10 paired runs strictly ordered (min free/fixed ratio {worst_margin:.2})"
    );
}

#[test]
fn criterion_10_orbit_orthogonality() {
    let grid = TimeGrid::new(1.0, 1024).unwrap();
    let mut worst_cosine = 0.0f64;
    let mut worst_slope = f64::INFINITY;
    for seed in 0..ORTHOGONALITY_SEEDS {
        let params = sampling::random_linear_params(grid, 1, 0.5, 18_000 + seed);
        let inputs = sampling::standard_normal_probes(1, 3, 19_000 + seed);
        let data = Dataset::new(
            inputs
                .into_iter()
                .map(|x| {
                    let y = integrate_linear(&params, &x).unwrap().output() * 1.2;
                    (x, y)
                })
                .collect(),
        )
        .unwrap();
        let generator = OrbitGenerator::random_smooth(grid, 1, 1.0, 20_000 + seed);
        let tangent = orbit_tangent(&params, &generator).unwrap();
        let gradient = loss_gradient_fd(&params, &data, 1e-6).unwrap();
        let cosine = gradient.dot(&tangent).abs() / (gradient.norm() * tangent.norm());
        worst_cosine = worst_cosine.max(cosine);

        let slope = regularizer_directional_derivative(
            &params,
            &generator,
            &RegularizerConfig::new(1.0).unwrap(),
        )
        .unwrap()
        .abs();
        worst_slope = worst_slope.min(slope);
    }
    assert!(
        worst_cosine <= ORTHOGONALITY_TOL,
        "worst normalized inner product {worst_cosine:.3e}"
    );
    assert!(
        worst_slope > REGULARIZER_DIRECTIONAL_MIN,
        "regularizer directional derivative only {worst_slope:.3e}"
    );
    println!(
        "criterion 10 (orbit orthogonality): PASS — worst cosine {worst_cosine:.3e} \
         (tol {ORTHOGONALITY_TOL:.0e}), min regularizer slope {worst_slope:.3e}"
    );
}
