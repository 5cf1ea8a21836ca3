//! Certified model merging: learn a handful of merge coefficients over a pool
//! of source models and attach a PAC-Bayes generalisation certificate to the
//! merged model.

pub mod bounds;
pub mod certify;
pub mod error;
pub mod harness;
pub mod merging;
pub mod param_space;
pub mod posterior;
pub mod seed;
pub mod toy_zoo;

pub use bounds::{CertificateRecord, Provenance};
pub use error::{Error, Result};
pub use merging::{MergeKind, MergeScheme};
pub use param_space::{ModelPool, ParamVector, TaskVector};
pub use posterior::{CategoricalSpec, CoeffDist, GaussianSpec, PointSpec};
