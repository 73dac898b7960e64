//! Identification of regionally stable Lur'e-type recurrent models.
//!
//! The model is a discrete-time linear system in feedback with an elementwise
//! deadzone. Training minimizes the prediction error while log-det barriers keep
//! the parameters inside a set of linear matrix inequalities; any point of that
//! set carries a certificate that the ellipsoid `E(P^-1 / s^2)` is forward
//! invariant for inputs bounded by `delta`, together with an input-to-state
//! stability bound.
//!
//! Module map:
//!
//! - [`model`]: the state-space model, simulation and error metrics.
//! - [`sector`]: generalized sector condition and the sets `L(H)`, `E(X)`.
//! - [`certificate`]: LMI assembly and Cholesky-based certificate checks.
//! - [`sdp`]: restoration, initialization and region maximization SDPs.
//! - [`trainer`]: barrier loss, exact gradients, Adam and the training loop.
//! - [`dataset`]: the synthetic benchmark system and dataset persistence.
//! - [`cli`]: command implementations behind the `lure-sysid` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

// Links the system OpenBLAS used by the conic solver's PSD cones.
use openblas_src as _;

pub mod certificate;
pub mod cli;
pub mod dataset;
mod error;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sdp;
pub mod sector;
pub mod trainer;

pub use certificate::{Certificate, CertificateReport};
pub use dataset::{Dataset, GenConfig};
pub use error::{Error, Result};
pub use model::{Dimensions, ModelParams, Trajectory};
pub use trainer::{Mode, TrainConfig};

/// Version of every JSON document written by this crate.
pub const SCHEMA_VERSION: u32 = 1;
