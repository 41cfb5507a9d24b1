//! Synthetic lesion implantation for liver-lesion segmentation: phantom
//! corpora, conditional lesion pairs, an adversarial lesion synthesizer, an
//! implanter and a segmentation experiment harness.

pub mod canny;
pub mod condmap;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod imgproc;
pub mod implanter;
pub mod phantom;
pub mod seed;
pub mod segmentation;
pub mod synthesis;
pub mod volume;

pub use error::{Error, Result, VolumeError};
pub use grid::{Grid, LabelMask, Mask, SliceImage, BACKGROUND, LESION, LIVER};
