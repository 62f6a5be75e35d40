//! Simulation and compressive reconstruction for snapshot interferometric
//! 3D imaging.
//!
//! A reflectivity volume is depth-encoded as a spectral interferogram
//! ([`interferometer`]), multiplexed onto one camera frame by a coded
//! aperture and a disperser ([`sensing`]), degraded by camera noise
//! ([`noise`]), and recovered with an ADMM solver using TV and wavelet
//! priors ([`recon`]). Depth is read back by an inverse DFT along the
//! spectral axis.
//!
//! Arrays are row-major with the last axis fastest: cubes are
//! `(x, y, λ)`, volumes `(x, y, z)` and frames `(x, y)`.

// `!(a > b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod interferometer;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod oracle;
pub mod phantoms;
pub mod recon;
pub mod sensing;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
pub use interferometer::{decode_depth, encode_depth, DepthVolume, EncodedCubes, ReferenceIntensity, SourceSpectrum};
pub use noise::NoiseConfig;
pub use recon::{solve, unshear, x_update, SolverConfig, SolverState};
pub use sensing::SensingOperator;
pub use types::{CameraModel, CodedAperture, CubeKind, DepthGrid, Measurement, ReflectivityVolume, SpectralCube, SpectralGrid, Validate};
