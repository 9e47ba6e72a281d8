//! Graph-based image segmentation.
//!
//! An image is over-segmented into small regions (mean-shift or grid
//! superpixels), the regions become nodes of a region adjacency graph whose
//! edges are weighted by combined color and texture similarity, and a
//! community detection algorithm decides which adjacent regions merge. The
//! build/weight/detect/merge loop repeats until the segmentation stops
//! changing. The [`eval`] module scores results against ground truths.

pub mod community;
pub mod error;
pub mod eval;
pub mod features;
pub mod imgio;
pub mod partition;
pub mod pipeline;
pub mod presegment;
pub mod rag;

pub use error::{Error, Result};
pub use imgio::{GrayImage, LabImage, LabelMap, RgbImage};
pub use partition::Partition;
