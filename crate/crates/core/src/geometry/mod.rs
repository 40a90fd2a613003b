//! Reference mesh, nodal fields and deformed-configuration geometry.

pub mod box_grid;
pub mod fields;
pub mod injectivity;
pub mod mesh;
pub mod raster;

pub use box_grid::BoxGrid;
pub use fields::{
    check_det_floor, deformation_gradient, DEFAULT_DET_FLOOR, determinant_stats, element_mean_det, magnetization_gradient,
    pullback_gradient, DeformationField, DeterminantStats, MagnetizationField, State,
};
pub use injectivity::{ciarlet_necas_residual, coverage_counts, default_probe};
pub use mesh::{BoundarySpec, Face, ReferenceMesh};
pub use raster::{rasterize_magnetization, CellField, RasterPlan};
