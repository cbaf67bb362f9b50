//! Stationary point processes on the flat torus and three ways of measuring
//! how "rigid" they are: number variance (real and Fourier space), the
//! truncated Coulomb energy of a compatible electric field, and the
//! Wasserstein cost of transporting the points onto Lebesgue measure.
//!
//! All computations happen on a periodic square box `[0, L)^2`. Point
//! configurations carry explicit multiplicities so that non-simple processes
//! (every point of a block collapsed onto its center) are represented exactly.

pub mod bessel;
pub mod coulomb;
pub mod error;
pub mod fft2;
pub mod generators;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod io;
pub mod nufft;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod transport;
pub mod variance;

pub use error::{Error, Result};
pub use generators::{DisplacementLaw, ProcessSpec};
pub use geometry::{periodic_distance, Point, PointConfiguration, TorusBox};
pub use grid::{ScalarFieldGrid, VectorFieldGrid};
pub use rng::RngSeed;

/// Constant in `-div E = c_d (X - Leb)` for the two-dimensional Coulomb kernel `-log|x|`.
pub const C_D: f64 = 2.0 * std::f64::consts::PI;

/// Size rayon's global pool from `HYPERLAB_THREADS`, if set. Call once, early.
pub fn configure_threads() {
    if let Some(n) = std::env::var("HYPERLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
