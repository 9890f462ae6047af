//! Unit-sphere discretization, real even-order spherical harmonics, and
//! direction sampling primitives used by the tracking inner loop.

mod sampling;
mod sh;
mod sphere;
mod vec3;

pub use sampling::{
    cone_angle_from_radius, sample_direction_in_cone, sample_direction_uniform_sphere,
};
pub use sh::{sh_basis, sh_eval_direction, ShBasis};
pub use sphere::{subdivide_icosahedron, DiscretizedSphere};
pub use vec3::{Affine, Vec3};
