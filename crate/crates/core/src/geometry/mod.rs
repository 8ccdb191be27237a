//! Per-atom voxel meshes, array layouts and the multilevel block tree.

mod layout;
mod mesh;
mod tree;

pub use layout::{golden_angle, vogel_spiral, ArrayLayout};
pub use mesh::{build_voxel_sphere, build_voxel_sphere_on, Edge, Face, Ijk, Mesh, VoxelLattice};
pub use tree::{build_block_tree, classify_interactions, BlockTree, GridLevel, Interaction, PairKind};
