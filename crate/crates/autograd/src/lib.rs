//! Reverse-mode automatic differentiation on a per-computation tape.
//!
//! Values are dense `f64` tensors; spatial ops use `[C,H,W]` layout. The op
//! set covers what a small convolutional flow network and image-matching
//! losses need: elementwise arithmetic, reductions, convolutions, local
//! correlation, bilinear warping and resizing, and box filtering.
//!
//! ```
//! use autograd::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::new(&[3], vec![1.0, -2.0, 3.0]));
//! let loss = x.square().sum();
//! let grads = tape.backward(loss);
//! assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, -4.0, 6.0]);
//! ```

// `Var::add` etc. take the tape lifetime and are called as methods on purpose.
#![allow(clippy::should_implement_trait)]

mod ops;
mod tape;
mod tensor;

pub use ops::concat_channels;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
