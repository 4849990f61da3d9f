//! Concealed object detection with surrounding-aware supervision.
//!
//! The crate provides the pieces needed to train and evaluate a detector that
//! looks at the band of background immediately around an object:
//!
//! * [`surround`] builds soft surrounding labels from binary masks.
//! * [`scct`] rearranges feature maps so that contrastive pairs are drawn
//!   from spatially local neighbourhoods.
//! * [`sacloss`] is the contrastive loss between surrounding, object and
//!   background features, with analytic gradients.
//! * [`refine`] is the coarse-to-fine prediction chain.
//! * [`metrics`] implements S-measure, weighted F-measure, E-measure and MAE.
//! * [`pipeline`] is a small self-contained trainer on synthetic scenes.

pub mod bench;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod imageio;
pub mod metrics;
pub mod ops;
pub mod pipeline;
pub mod refine;
pub mod sacloss;
pub mod scct;
pub mod sct;
pub mod surround;
pub mod tensor;

pub use error::{Error, Result};
pub use sacloss::{SacConfig, SamplingMode, SignConvention};
pub use scct::{scct_forward, scct_inverse, ScctLayout};
pub use surround::{surrounding_label, SurroundingLabel};
pub use tensor::{Kernel2D, Mask, SoftMap, Tensor3};
