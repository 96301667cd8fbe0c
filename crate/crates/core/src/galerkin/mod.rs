//! Galerkin projection of the flow equations onto POD bases.

mod discrete;
mod operators;
mod viscosity;

pub use discrete::{FlowOperators, Lift};
pub use operators::{
    build_momentum_operators, build_operators, direct_pressure_residual, direct_rhs, eval_rhs, eval_rhs_closed,
    GalerkinOperators,
};
pub use viscosity::{build_viscosity_model, build_viscosity_model_from, ViscosityModelSpec, ViscosityVariant};

/// Pressure coefficients solving the projected pressure equation.
pub fn build_pressure_operators<T: crate::Real>(
    ctx: &FlowOperators<T>,
    velocity: &crate::pod::PodBasis<T>,
    pressure: &crate::pod::PodBasis<T>,
    viscosity: &ViscosityModelSpec<T>,
) -> crate::Result<GalerkinOperators<T>> {
    build_operators(ctx, velocity, Some(pressure), viscosity)
}
