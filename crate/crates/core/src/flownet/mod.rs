//! Flow network, parameter storage and gradient checking.

mod gradcheck;
mod model;
mod params;

pub use gradcheck::{gradient_check, CoordinateError, GradCheckConfig, GradCheckReport};
pub use model::{predict, FlowModel, FlowNet, FlowNetConfig, PARAM_BUDGET, STRIDE};
pub use params::{ParamSet, ParamSpec};
