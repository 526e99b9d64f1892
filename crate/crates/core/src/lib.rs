//! Multivariate batch-means estimation of the asymptotic covariance of MCMC
//! averages, with batch-size selection and a VAR(1) replication harness.
//!
//! ```
//! use mcbatch::{ChainMatrix, Estimator};
//!
//! let chain = ChainMatrix::from_column(&[1.0, 3.0, 5.0, 7.0, 9.0, 11.0]).unwrap();
//! let est = Estimator::Bm.estimate(&chain, 2).unwrap();
//! assert!((est.sigma[(0, 0)] - 32.0).abs() < 1e-12);
//! ```

pub mod chain;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod inference;
pub mod select;
pub mod var1;
pub mod window;

pub use chain::ChainMatrix;
pub use error::{Error, Result};
pub use estimators::{CovEstimate, Estimator};
pub use harness::{run_experiment, ExperimentConfig};
pub use select::{PilotEstimates, SelectionMethod};
pub use var1::Var1Spec;
pub use window::{Family, LagWindow, WindowKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
