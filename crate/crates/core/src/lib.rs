#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod asymptotics;
pub mod compensated;
pub mod error;
pub mod math;
pub mod model;
pub mod montecarlo;
pub mod recursion;
pub mod spectral;
pub mod wide;

pub use error::CoreError;
pub use model::{ImmigrationLaw, MultiIndex, OffspringLaw};
pub use spectral::SpectralData;
