//! Teacher parameters kept as an exponential moving average of the student.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flownet::ParamSet;

/// Default smoothing factor.
pub const DEFAULT_EMA_DECAY: f64 = 0.999;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherState {
    pub phi: ParamSet,
    pub step_count: u64,
}

/// Teacher starting as an exact copy of the student.
pub fn init_teacher(student: &ParamSet) -> TeacherState {
    TeacherState {
        phi: student.clone(),
        step_count: 0,
    }
}

/// `phi <- lambda * phi + (1 - lambda) * theta`, elementwise.
pub fn ema_update(state: &mut TeacherState, student: &ParamSet, lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("ema.lambda", format!("{lambda} outside [0, 1]")));
    }
    if !state.phi.same_layout(student) {
        return Err(Error::ShapeMismatch(
            "teacher and student parameter layouts differ".into(),
        ));
    }
    let keep = 1.0 - lambda;
    for (p, &t) in state.phi.values_mut().iter_mut().zip(student.values()) {
        *p = lambda * *p + keep * t;
    }
    state.step_count += 1;
    Ok(())
}
