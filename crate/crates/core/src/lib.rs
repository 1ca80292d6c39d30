//! Numerical laboratory for two-layer teacher–student learning dynamics on
//! structured low-dimensional data.
//!
//! The crate simulates a student network trained by online SGD on inputs that
//! are nonlinear images of low-dimensional latent vectors, integrates the
//! matching order-parameter ODE system under the Gaussian-equivalence ansatz,
//! and provides the measurement machinery (distributional distances, blockwise
//! Berry–Esseen statistics, covariance-consistency residuals) needed to test
//! when the two descriptions agree.
//!
//! Module map:
//! - [`inputs`] — structured latent ensembles (dimension-wise mixtures,
//!   block-dependent mixtures, scalar laws, affine proxies) plus
//!   standardization; all ensembles live behind the [`inputs::InputModel`]
//!   trait and are selected by name through a registry.
//! - [`network`] — teacher/student weights, feature matrix, forward maps and
//!   weight-space order parameters.
//! - [`sgd`] — scaled online SGD runs and trajectory records.
//! - [`integrals`] — Gaussian statistics of the activations: the (a, b, c)
//!   constants, the two/three/four-point function correlations, a
//!   weak-correlation expansion, and a Monte-Carlo oracle.
//! - [`ode`] — spectral-density ODE integration of the order parameters.
//! - [`lab`] — universality diagnostics: W1/KS distances, block statistics,
//!   third-moment sums, residuals, scaling fits, correlation diagnostics.
//! - [`io`] — matrix and trajectory persistence (CSV + raw binary).

pub mod activations;
pub mod error;
pub mod inputs;
pub mod integrals;
pub mod io;
pub mod lab;
pub mod network;
pub mod ode;
pub mod sgd;
pub mod special;

pub use activations::Act;
pub use error::{Error, Result};
