//! Spectra of one-dimensional Schrödinger operators `-psi'' + V psi` with
//! small analytic quasi-periodic potentials.
//!
//! The crate computes the Floquet-type dispersion `E(k)` by Fourier-Galerkin
//! truncation, assembles the labeled gap catalog, verifies gap-size decay and
//! gap separation, and certifies Carleson homogeneity of the spectrum by
//! exact interval arithmetic. A real-space finite-difference model provides
//! an independent check through the integrated density of states.
//!
//! All numerical code is generic over the scalar type; the `*64` aliases at
//! the crate root fix it to `f64`.

pub mod dispersion;
pub mod eigen;
pub mod error;
pub mod gaps;
pub mod homogeneity;
pub mod lattice;
pub mod oracle;
pub mod potential;
pub mod resonance;
pub mod scalar;

pub use error::{Error, Result};
pub use lattice::{LatticeBox, LatticePoint};
pub use scalar::Real;

pub type FrequencyVector64 = potential::FrequencyVector<f64>;
pub type FourierPotential64 = potential::FourierPotential<f64>;
pub type DispersionSample64 = dispersion::DispersionSample<f64>;
pub type GapEdges64 = dispersion::GapEdges<f64>;
pub type Gap64 = gaps::Gap<f64>;
pub type GapCatalog64 = gaps::GapCatalog<f64>;
pub type SpectrumSet64 = homogeneity::SpectrumSet<f64>;
pub type HomogeneityCertificate64 = homogeneity::HomogeneityCertificate<f64>;

pub type FourierPotential32 = potential::FourierPotential<f32>;
pub type GapCatalog32 = gaps::GapCatalog<f32>;
