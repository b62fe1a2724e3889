//! Moment maps `f(ψ, Λ)` and `g(ψ, C)`, their derivatives, and coordinate charts.

pub mod chart;
pub mod jacobian;
pub mod maps;
pub mod quadrature;

pub use chart::{CoordinateChart, FactorBasis, FactorSpace, MomentValue, RangeBasis};
pub use jacobian::{
    assemble_jacobian_matrix, condition_numbers, h_inverse_jacobian, solve_jacobian_system, ConditionReport,
    JacobianMethod, NewtonDirection, SolveOptions,
};
pub use maps::{
    apply_g1_direction, apply_g2_statespace, apply_g2_unshifted, gramian, moment_g_statespace, ConvexPrior,
    PriorDirection, ShiftPolicy, SpectralPrior,
};
pub use quadrature::{
    apply_f2_quadrature, apply_g2_quadrature, grid_size, jacobian_quadrature, moment_quadrature, Denominator,
    MomentMap,
};
