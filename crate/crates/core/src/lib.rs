//! Learned cardinality estimation workbench.
//!
//! The crate covers the whole loop of training a multi-set convolutional
//! network (MSCN) to estimate join query cardinalities:
//!
//! * [`storage`] holds an immutable columnar database, column statistics,
//!   materialized samples and hash indexes, plus a correlated synthetic
//!   database generator.
//! * [`query`] defines the `(tables, joins, predicates)` query form, its
//!   line-oriented text format, and the random workload generator.
//! * [`executor`] computes exact cardinalities and sample bitmaps.
//! * [`baselines`] implements random sampling (RS) and index-based join
//!   sampling (IBJS).
//! * [`featurizer`] turns labeled queries into padded feature sets.
//! * [`neural`] is the small numeric kernel (dense layers, masked pooling,
//!   Adam, gradient checking).
//! * [`model`] is the MSCN itself: forward/backward, losses, training,
//!   prediction and the model file format.
//! * [`evalkit`] computes q-errors and percentile reports.
//! * [`cli`] wires everything into the `mscn` command line tool.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod evalkit;
pub mod executor;
pub mod featurizer;
pub mod model;
pub mod neural;
pub mod query;
pub mod storage;

pub use error::{Error, Result};
