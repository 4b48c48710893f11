//! Task-independent entity and row embeddings for single-table data.
//!
//! The pipeline turns one delimited table into a vector representation in
//! five steps:
//!
//! 1. [`table`] parses the file against a declarative [`schema`] into typed
//!    columns with missing-value masks.
//! 2. [`binning`] discretizes each numeric column into equal-frequency bins
//!    and computes fractional bin memberships that preserve the exact
//!    position of a value inside its bin.
//! 3. [`graph`] collects the unique entities (categorical values and numeric
//!    bins), links them through the rows they co-occur in and eliminates the
//!    row nodes into a weighted entity graph.
//! 4. [`gae`] trains a one-layer graph-convolutional autoencoder to
//!    reconstruct a matrix view ([`matrix`]) of that graph; the encoder
//!    output is one embedding per entity.
//! 5. [`store`] aggregates entity embeddings into weighted-mean row
//!    embeddings — including for unseen rows, without retraining — and
//!    persists everything as a single binary bundle.
//!
//! [`eval`] adds distance-based downstream prediction (k-NN classification
//! and regression) to measure embedding quality.

pub mod binning;
pub mod error;
pub mod eval;
pub mod gae;
pub mod graph;
pub mod matrix;
pub mod schema;
pub mod store;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
