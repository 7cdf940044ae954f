//! Linear-cost multivariate normal probabilities and truncated normal sampling
//! through Vecchia-factored, exponentially tilted separation of variables.

pub mod censored;
pub mod error;
pub mod estimate;
pub mod io;
pub mod kernels;
mod lbfgs;
mod linalg;
pub mod normal;
pub mod problem;
pub mod qmc;
#[cfg(feature = "oracle")]
pub mod reference;
pub mod reorder;
pub mod rng;
pub mod sampler;
pub mod scenarios;
pub mod tilt;
pub mod vecchia;

pub use censored::{CensoredDataset, KernelParams, Region};
pub use error::{Error, Result};
pub use estimate::{LogWeight, ProbabilityEstimate, SampleBatch};
pub use kernels::{CovarianceModel, DistanceMetric, KernelFamily, Locations};
pub use problem::ProblemSpec;
pub use reorder::{Permutation, ReorderMethod};
pub use sampler::{estimate_multilevel, estimate_mvn_prob, sample_tmvn, EstimateOptions, PreparedProblem};
pub use tilt::{solve_tilting, TiltOptions, TiltProblem, TiltSolution};
pub use vecchia::{ConditioningSets, VecchiaFactor};
