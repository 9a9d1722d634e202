//! Gauge symmetries of small machine-learning models, verified numerically:
//! neural ODEs and their spacetime reparametrizations, Wilson-line
//! propagators of the linear model, the discretization bridge onto layer
//! stacks, rescaling symmetries of ReLU/CNN/attention architectures, and the
//! uniform-motion regularizer that fixes the gauge during training.

pub mod attention;
pub mod discrete;
pub mod error;
pub mod gauge;
pub mod grid;
pub mod ode;
pub mod regularizer;
pub mod sampling;
pub mod wilson;

pub use error::{GaugeError, Result};
pub use grid::{quadrature_weights, FieldValue, TimeGrid, TimeSeriesField};
pub use ode::{
    integrate, integrate_linear, integrate_linear_output, lift_to_spacetime, GenericNode,
    LinearNodeParams, SpacetimeNode, Trajectory,
};
pub use wilson::{
    linear_solution, wilson_gauge_covariance, wilson_inverse_identity, wilson_line,
    InverseIdentityReport, Orientation, WilsonLine,
};
pub use gauge::{
    apply_linear_gauge, condition_estimate, lie_deform, spatial_diffeo_deform,
    time_reparam_as_gauge, time_reparam_deform, verify_invariance, DiffeoGenerator,
    GaugeTransformLinear, InvarianceReport, InvarianceTrial, TimeScalar,
};
pub use discrete::{
    apply_discrete_gauge, commuting_diagram_check, discretize, forward_conv, forward_linear,
    forward_relu, lift_gauge, rescale_conv, rescale_relu, ConvLayer, ConvNet, DiagramReport,
    DiscreteGauge, FeedforwardLinearNet, LinearLayer, ReluNet, RescaleParams,
};
pub use attention::{
    apply_attention_gauge, build_attention_from_node, build_w_with_unit_holonomy, gauge_fix_qk,
    integrate_cubic_node, integrate_cubic_node_tokens, integrate_cubic_smoothed, self_attention,
    verify_diffeo_induces_attention_gauge, Activation, AttentionGauge, AttentionLayer,
    DiffeoAttentionReport, InstantaneousCubic,
};
pub use regularizer::{
    data_loss, flatten, loss_gradient_fd, orbit_tangent, regularizer,
    regularizer_directional_derivative, train, unflatten, uniform_motion_residual, Dataset,
    OrbitGenerator, RegularizerConfig, TrainConfig, TrainHistory, TrainRecord,
};
