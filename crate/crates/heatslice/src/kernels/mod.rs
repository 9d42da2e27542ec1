//! Grid kernels, ∗-products, partition products and their diagnostics.

mod diagnostics;
mod laplacian;
mod operator;
mod partition;

pub use diagnostics::{
    heat_residual, localization_defect, pointwise_semigroup_defect, semigroup_defect, DefectNorms, LocalQuadrature, LocalizationRow,
    LocalizationTable,
};
pub use laplacian::{
    approx_heat_kernel, approx_heat_kernel_with, h_kernel, ApproxHeatFamily, GeneralizedLaplacianSpec, PointKernel, Potential, PotentialFn,
};
pub use operator::{apply_kernel, star_product, star_product_with, OperatorKernel};
pub use partition::{
    partition_product, partition_product_with, refine_to_limit, refine_to_limit_with, ConvergenceRow, ConvergenceTable, KernelFamily,
    Partition, RefineSchedule,
};
