//! Discrete de Rham complex on curved polytopal meshes of 2D manifolds.

pub mod exterior;
pub mod polyspace;
pub mod geometry;
pub mod cells;
pub mod mesh;
pub mod meshgen;
pub mod sparse;
pub mod ddr;
pub mod maxwell;
