//! Dense complex linear algebra, Haar sampling, tensor-mode kernels and
//! spectral-norm estimation.

pub mod haar;
pub mod matrix;
pub mod rng;
pub mod spectral;
pub mod subspace;
pub mod tensor;

pub use haar::haar_unitary;
pub use matrix::{inner, norm, ComplexMatrix, C64};
pub use rng::SeededRng;
pub use spectral::{
    spectral_norm, spectral_norm_deflated, LinearMap, SpectralEstimate, SpectralMethod, SpectralOptions,
};
pub use subspace::{max_principal_sine, max_principal_sine_complements, orthonormalize, OrthoBasis};
pub use tensor::{kron, kron_power, mode_apply};
