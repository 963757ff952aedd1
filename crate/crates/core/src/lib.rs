//! Fair principal component analysis under a maximum mean discrepancy (MMD)
//! constraint.
//!
//! The loading matrix `V` lives on the Stiefel manifold `St(p, d)`. The fit
//! maximizes explained variance `tr(VᵀΣV)` subject to the MMD² between the
//! projected protected groups being (approximately) zero, solved by an exact
//! penalty method whose subproblems run Riemannian gradient descent.
//!
//! ```
//! use mbfpca::data::{split, synth1, SplitSpec};
//! use mbfpca::pipeline::{run, PipelineConfig};
//!
//! let ds = synth1(0);
//! let (train, test) = split(&ds, &SplitSpec { train_fraction: 0.7, seed: 0 }).unwrap();
//! let fit = run(&train, &test, &PipelineConfig::new(2)).unwrap();
//! assert!(fit.report.mmd2_test < fit.pca_report.mmd2_test);
//! ```

pub mod data;
mod error;
pub mod kernel;
pub mod metrics;
pub mod objective;
pub mod pca;
pub mod pipeline;
pub mod rng;
pub mod solver;
pub mod stiefel;

pub use error::{Error, Result};
pub use kernel::KernelConfig;
pub use solver::{FitOutcome, RepmsConfig, Status};
pub use stiefel::{StiefelPoint, TangentVector};
