//! Stereo-pair convolutional feature fusion with a tree-topology classifier.
//!
//! The pipeline runs left and right images of a stereo pair through identical
//! frozen convolutional stacks ([`backbone`]), concatenates the flattened
//! outputs into a single Multi-FM vector, and routes that vector through a
//! hierarchy of small fully-connected softmax classifiers ([`treeclf`]) down to
//! one of the leaf classes. [`metrics`] scores the result and runs k-fold
//! cross-validation; [`dataio`] handles manifests, PPM/PGM images and
//! synthetic datasets.

pub mod backbone;
pub mod dataio;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod pipeline;
pub mod tensor;
pub mod treeclf;
pub mod weightfile;

pub use error::{Error, Result};
pub use tensor::{FeatureMap3, Vector1};
