//! Rigid transforms, point clouds, meshes, occupancy grids and the spatial
//! queries built on them.

mod cloud;
mod grid;
mod mesh;
pub mod ply;
mod pose;
mod spatial;

pub use cloud::{PointCloud, Vec3};
pub use grid::{Cell, OccupancyGrid, Vec2};
pub use mesh::{ray_mesh_intersect, ray_triangle, TriangleMesh, MIN_TRIANGLE_AREA, RAY_EPSILON};
pub use pose::Pose;
pub use spatial::{nearest_neighbor, SpatialIndex};
