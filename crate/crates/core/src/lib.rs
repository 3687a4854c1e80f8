pub mod eigen;
pub mod error;
pub mod exec;
pub mod family;
pub mod grid;
pub mod group;
pub mod inequality;
pub mod operator;
pub mod quad;
pub mod report;
pub mod sphere;

pub use error::{Error, Result};
pub use exec::{Exec, Reduction};
pub use grid::{GridSpec, SampledFunction};
pub use group::{
    compose, dilate, inverse, quasi_norm, GroupDescriptor, GroupOps, Point, QuasiNorm,
};
pub use operator::{
    apply_operator, gagliardo_seminorm, kernel, weak_form, FracParams, NearMode, QuadratureConfig,
    WeakScope,
};
pub use sphere::{ball_volume, build_sphere_quadrature, SphereQuadrature};
