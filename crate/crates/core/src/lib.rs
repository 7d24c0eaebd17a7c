//! Offline handwritten signature verification.
//!
//! The pipeline has two stages:
//!
//! 1. **Writer-independent feature learning.** A convolutional network is
//!    trained to classify the users of a development set. Once trained, the
//!    activations of its last hidden layer serve as a feature representation
//!    for any signature image.
//! 2. **Writer-dependent classification.** For every enrolled user an SVM is
//!    trained on those features, with the user's genuine signatures as the
//!    positive class and genuine signatures of development users as negatives
//!    (random forgeries).
//!
//! Modules map onto the stages:
//!
//! - [`imageprep`]: background removal, inversion, canvas centering, resizing
//!   and scaling of raw grayscale scans.
//! - [`nn`]: tensors, the layer library (conv, LRN, max-pool, fully connected,
//!   ReLU, dropout, softmax cross-entropy) with hand-derived backward passes,
//!   network instantiation, feature extraction and the model file format.
//! - [`training`]: Nesterov-momentum SGD with step decay and weight decay.
//! - [`svm`]: SMO-trained linear/RBF SVMs, feature standardization, class
//!   balancing and hyperparameter grid search.
//! - [`protocol`]: development/exploitation split, per-user train/test set
//!   construction and a synthetic signature corpus generator.
//! - [`metrics`]: FRR, FAR, ROC, EER, AUC and report aggregation.
//!
//! Data-parallel loops (mini-batch gradients, per-user SVM training, grid
//! search) go through [`par`], which uses rayon when the `parallel` feature
//! is enabled and plain iterators otherwise. Reductions happen in a fixed
//! order, so results are bit-identical either way.

pub mod error;
pub mod imageprep;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod protocol;
pub mod svm;
pub mod training;
pub(crate) mod wire;

pub use error::{Error, Result};
