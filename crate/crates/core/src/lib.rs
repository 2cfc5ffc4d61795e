pub mod analysis;
pub mod data;
pub mod error;
pub mod masking;
pub mod model;
pub mod params;
pub mod persist;
pub mod reference;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
