//! Continuous Lagrange spaces, assembly, norms and inter-mesh transfer.

mod assembly;
mod function;
mod poisson;
pub mod quadrature;
mod space;
mod transfer;

pub use assembly::{
    assemble_composed_load, assemble_load, assemble_mass, assemble_stiffness, assemble_weighted_mass,
};
pub use function::{FEFunction, Norms};
pub use poisson::inv_laplacian_norm;
pub use quadrature::{LineRule, QuadratureRule};
pub use space::{
    barycentric, basis_dlambda, basis_values, local_dofs, to_physical, BasisTable, ElementGeometry,
    FunctionSpace,
};
pub use transfer::transfer;
