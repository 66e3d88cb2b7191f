//! Sharp Caffarelli–Kohn–Nirenberg constants and the numerical machinery
//! around them: extremals, adaptive quadrature, Minkowski norms, volume
//! profiles of metric measure spaces, the Q-function comparison pipeline,
//! the radial Rayleigh quotient and anisotropic symmetrization on grids.

pub mod error;
pub mod interp;
pub mod minkowski;
pub mod mmspace;
pub mod params;
pub mod qengine;
pub mod quadrature;
pub mod special;
pub mod symmetrize;
pub mod variational;

pub use error::{CknError, Result};
pub use minkowski::{MinkowskiNorm, NormKind, NormSpec, NormalizedMeasure, VolumeEstimate};
pub use mmspace::{builtin_space, load_profile, BuiltinSpace, MetricMeasureSpace, PowerLaw, VolumeProfile};
pub use params::{extremal_profile, make_params, sharp_constant, CknParams, SharpConstant};
pub use qengine::{theorem1_pipeline, PipelineConfig, Theorem1Report};
pub use quadrature::{integrate_finite, integrate_improper, Integrand, QuadratureOptions, QuadratureResult};
pub use special::unit_ball_volume;
pub use symmetrize::{ckn_test, symmetrize, GridFunction, RearrangementPlan, TestFunction};
pub use variational::{minimize_quotient, rayleigh_quotient, verify_extremal, RadialProfile};
