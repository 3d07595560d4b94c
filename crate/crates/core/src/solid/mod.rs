//! Linear-element FEM solids.

mod elastic;
mod material;
mod mesh;

pub use elastic::elastic_potential;
pub use material::{polar, MaterialKind, MaterialModel};
pub use mesh::{Element, SolidMesh};
