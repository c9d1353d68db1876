//! Destination-port and ETA prediction for AIS vessel position streams.
//!
//! A hard-voting ensemble of four tree learners (random forest, extremely
//! randomized trees, gradient boosting and second-order boosting) classifies
//! the destination port of every incoming tuple. A feed-forward regressor
//! then predicts the remaining trip time in minutes, and the ETA is the tuple
//! timestamp plus that delta.
//!
//! The stages are exposed as modules so they can be tested and reused
//! independently:
//!
//! - [`model`]: shared domain types and the port lookup table
//! - [`ingest`]: CSV parsing, cleaning, trip segmentation, leakage-free splits
//! - [`trees`]: CART trees and the four base learners
//! - [`ensemble`]: hard voting and grid search
//! - [`neural`]: dense network, RMSProp, early stopping, min-max scaling
//! - [`cluster`]: mean-shift area encoding over lon/lat
//! - [`pipeline`]: feature engineering, per-tuple prediction, metrics, bundles
//! - [`synthgen`]: deterministic synthetic voyage corpora
//! - [`cli`]: the `voyagecast` subcommands

pub mod cli;
pub mod cluster;
pub mod ensemble;
pub mod error;
pub mod ingest;
pub mod model;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod synthgen;
pub mod trees;

pub use error::{Error, Result};
pub use model::{AisRecord, ClassFeatures, PortRegistry, Prediction, RegFeatures};
pub use pipeline::{predict_tuple, ModelBundle};
