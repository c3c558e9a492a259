//! Distributionally robust optimization over grouped losses.
//!
//! * [`weights`]: simplex points, per-group losses, uncertainty sets, the
//!   chi-square divergence and size/temperature sampling distributions.
//! * [`solvers`]: exact best response over every set and projection onto the
//!   chi-square ball.
//! * [`objectives`]: weighted and robust risks, optionally baselined.
//! * [`optim`]: iterated best response and primal-dual training loops.
//! * [`tasks`]: synthetic grouped problems with per-example gradients.
//! * [`cli`]: the configuration-driven experiment runner behind the binary.

pub mod cli;
pub mod error;
pub mod objectives;
pub mod optim;
pub mod solvers;
pub mod tasks;
pub mod weights;

pub use error::{Error, Result};
pub use objectives::{robust_loss, weighted_loss, Baselines};
pub use optim::{
    erm_train, exponentiated_gradient_step, ibr_train, make_resample_plan, primal_dual_train,
    GradientMode, IbrOptions, LossTracker, LrSchedule, ModelParams, PrimalDualOptions,
    ResamplePlan, TrainOutcome, TrajectoryRecord,
};
pub use solvers::{best_response, project_chi_square, BestResponse, SolverConfig};
pub use tasks::{generate, GroupedDataset, Model, TaskSpec};
pub use weights::{
    chi_square_divergence, temperature_distribution, training_distribution, GroupLosses,
    GroupWeights, UncertaintySet,
};
