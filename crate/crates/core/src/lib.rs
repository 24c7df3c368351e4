pub mod apso;
pub mod cell;
pub mod datagen;
pub mod error;
pub mod identify;
pub mod net;
pub mod pipeline;
pub mod protocol;

pub use error::{Error, Result};
