//! Hyperspectral object tracking with random spectral-spatial convolutional
//! features and a multichannel kernelized correlation filter.
//!
//! The pipeline, per frame:
//!
//! 1. crop a padded search window around the previous target position
//!    ([`hypercube`]);
//! 2. correlate it with a fixed bank of `w × w × D` filters cut from the
//!    first-frame target, giving one feature map per filter ([`convfeat`]);
//! 3. taper the maps with a Hann window and run detection with the kernelized
//!    correlation filter ([`kcf`], built on [`dft`]);
//! 4. move the box to the response peak and blend a freshly trained model
//!    into the running one ([`tracker`]).
//!
//! [`synth`] renders ground-truthed synthetic sequences and [`bench`]
//! computes center-error precision curves.

pub mod bench;
pub mod cli;
pub mod convfeat;
pub mod dft;
pub mod error;
pub mod hypercube;
pub mod kcf;
pub mod plane;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
