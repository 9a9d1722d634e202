//! Seeded generators for probe inputs, random parameter fields and smooth
//! random gauges. Everything is deterministic in the seed (ChaCha8), so
//! randomized suites are exactly reproducible.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::gauge::GaugeTransformLinear;
use crate::grid::{TimeGrid, TimeSeriesField};
use crate::ode::LinearNodeParams;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` standard-normal d-vectors from a seeded generator.
pub fn standard_normal_probes(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| DVector::from_fn(dim, |_, _| rng.sample(StandardNormal)))
        .collect()
}

/// Random matrix with standard-normal entries rescaled to Frobenius norm `scale`.
pub fn random_matrix_scaled(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = m.norm();
    if n == 0.0 {
        m
    } else {
        m * (scale / n)
    }
}

pub fn random_vector_scaled(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = v.norm();
    if n == 0.0 {
        v
    } else {
        v * (scale / n)
    }
}

/// Smooth random linear-ODE parameters:
/// w(t) = A₀ + A₁ sin(π t/T) + A₂ cos(2π t/T) and a matching form for b(t),
/// sampled on the grid. Coefficient norms are bounded by `scale`.
pub fn random_linear_params(grid: TimeGrid, dim: usize, scale: f64, seed: u64) -> LinearNodeParams {
    let mut rng = rng_from_seed(seed);
    let a0 = random_matrix_scaled(dim, scale, &mut rng);
    let a1 = random_matrix_scaled(dim, scale, &mut rng);
    let a2 = random_matrix_scaled(dim, 0.5 * scale, &mut rng);
    let b0 = random_vector_scaled(dim, scale, &mut rng);
    let b1 = random_vector_scaled(dim, scale, &mut rng);
    let t_end = grid.t_end();
    let pi = std::f64::consts::PI;
    let w = TimeSeriesField::from_fn(grid, |t| {
        &a0 + &a1 * (pi * t / t_end).sin() + &a2 * (2.0 * pi * t / t_end).cos()
    })
    .expect("grid sampling cannot fail");
    let b = TimeSeriesField::from_fn(grid, |t| {
        &b0 + &b1 * (pi * t / t_end).sin()
    })
    .expect("grid sampling cannot fail");
    LinearNodeParams::new(w, b).expect("shapes are consistent by construction")
}

/// Smooth random boundary-respecting gauge with analytic derivatives:
/// G(t) = 1 + sin(π t/T) S₁ + sin(2π t/T) S₂, c(t) of the same form.
/// `amplitude` bounds the Frobenius norm of each coefficient, so values well
/// below 1 keep every G(t) invertible.
pub fn random_smooth_gauge(
    grid: TimeGrid,
    dim: usize,
    amplitude: f64,
    seed: u64,
) -> GaugeTransformLinear {
    let mut rng = rng_from_seed(seed);
    let s1 = random_matrix_scaled(dim, amplitude, &mut rng);
    let s2 = random_matrix_scaled(dim, 0.5 * amplitude, &mut rng);
    let v1 = random_vector_scaled(dim, amplitude, &mut rng);
    let v2 = random_vector_scaled(dim, 0.5 * amplitude, &mut rng);
    let t_end = grid.t_end();
    let pi = std::f64::consts::PI;
    let eye = DMatrix::identity(dim, dim);
    GaugeTransformLinear::from_fns(
        grid,
        |t| &eye + &s1 * (pi * t / t_end).sin() + &s2 * (2.0 * pi * t / t_end).sin(),
        |t| {
            &s1 * (pi / t_end) * (pi * t / t_end).cos()
                + &s2 * (2.0 * pi / t_end) * (2.0 * pi * t / t_end).cos()
        },
        |t| &v1 * (pi * t / t_end).sin() + &v2 * (2.0 * pi * t / t_end).sin(),
        |t| {
            &v1 * (pi / t_end) * (pi * t / t_end).cos()
                + &v2 * (2.0 * pi / t_end) * (2.0 * pi * t / t_end).cos()
        },
    )
    .expect("sin(π t/T) vanishes at both endpoints to machine precision")
}

/// Log-uniform sample in [lo, hi].
pub fn log_uniform(lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(lo.ln()..hi.ln());
    u.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probes_are_deterministic_in_seed() {
        let a = standard_normal_probes(3, 4, 42);
        let b = standard_normal_probes(3, 4, 42);
        assert_eq!(a, b);
        let c = standard_normal_probes(3, 4, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn random_gauge_respects_boundaries() {
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let gauge = random_smooth_gauge(grid, 3, 0.3, 7);
        let eye = DMatrix::identity(3, 3);
        assert!((gauge.g().value(0) - &eye).amax() <= 1e-12);
        assert!((gauge.g().value(128) - &eye).amax() <= 1e-12);
        assert!(gauge.c().value(0).amax() <= 1e-12);
        assert!(gauge.c().value(128).amax() <= 1e-12);
    }

    #[test]
    fn log_uniform_stays_in_range() {
        let mut rng = rng_from_seed(9);
        for _ in 0..100 {
            let v = log_uniform(0.1, 10.0, &mut rng);
            assert!((0.1..=10.0).contains(&v));
        }
    }
}
