pub mod complex;
pub mod error;
pub mod inverse;
pub mod mlmodel;
pub mod pimage;
pub mod pipeline;
pub mod reduce;
pub mod synth;
pub mod unionfind;

pub use error::{Error, Result};
