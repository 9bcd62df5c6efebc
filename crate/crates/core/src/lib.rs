//! Construction and numerical certification of quantum tensor product
//! expanders (qTPEs).
//!
//! An expander here is a [`UnitaryEnsemble`]: `s` unitaries on `C^n` mixed
//! with uniform weights. Its quality at order `t` is the distance `λ`
//! between the moment superoperator `M ↦ (1/s) Σ U_i^{⊗t} M U_i^{†⊗t}` and
//! the orthogonal projector onto the span of the register-permutation
//! matrices. [`moment::lambda`] measures it; [`zigzag`] builds larger
//! expanders from smaller ones and evaluates the matching closed-form
//! bounds.

pub mod ensemble;
pub mod epsgood;
pub mod error;
pub mod linalg;
pub mod moment;
pub mod perm;
pub mod zigzag;

pub use ensemble::{UnitaryEnsemble, ValidationReport};
pub use error::{QtpeError, Result};
pub use linalg::{ComplexMatrix, SeededRng, SpectralMethod, SpectralOptions, C64};
pub use moment::{FixedSpaceBasis, MomentOperator, SpectralReport};
pub use perm::Permutation;
