mod conv;
mod correlation;
mod elementwise;
mod filter;
mod sample;
mod shape;

pub use shape::concat_channels;
