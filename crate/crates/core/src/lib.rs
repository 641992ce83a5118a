pub mod acw;
pub mod cli;
pub mod error;
pub mod flowcore;
pub mod flownet;
pub mod losses;
pub mod meanteacher;
pub mod occlusion;
pub mod pipeline;
pub mod synthdata;
pub mod trainer;
pub mod warploss;

pub use error::{Error, Result};
