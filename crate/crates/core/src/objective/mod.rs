//! VICReg loss terms and their node/dimension-sampled variants.

mod terms;
mod vicreg;

pub use terms::{
    cov_buffer_peak, covariance_grad, covariance_loss, covariance_matrix, invariance_grad,
    invariance_loss, reset_cov_buffer_peak, variance_grad, variance_loss,
};
pub use vicreg::{vicreg_loss, LossBreakdown, LossMode, LossWeights, TermTimings};
pub(crate) use terms::covariance_value_grad;
pub(crate) use vicreg::vicreg_value_grad;
