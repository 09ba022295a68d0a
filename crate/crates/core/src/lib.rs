pub mod bsrep;
pub mod census;
pub mod compactify;
pub mod error;
pub mod kempfness;
pub mod numerics;
pub mod retraction;

pub use error::{Error, Result, Stage};
