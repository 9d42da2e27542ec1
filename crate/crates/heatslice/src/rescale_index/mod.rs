//! Getzler rescaling of kernels on normal charts, its limit at r → 0 and the local index density.

mod density;
mod family;
mod kr;

pub use density::{bundle_index_density, index_density, index_integral, sphere_euler_density, symbol_limit, DensityReport, IndexDensity};
pub use family::{
    action_on_one, clifford_image, homomorphism_residual, phi_r, wedge_action, ChartKernel, FlatHeat, FlatModelKernel,
    GaussianMatrixKernel, GrIdentityResiduals, LatticeQuadrature, RescaleFamily, Rescaled,
};
pub use kr::{kr_defects, kr_kernel, r_partition_study, DiracChartKernel, RPartitionRow, RPartitionStudy, RStudyOptions};
