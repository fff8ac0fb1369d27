//! Exact algebra and time responses of SISO LTI systems.

mod poly;
mod ss;
mod tf;

pub use poly::Polynomial;
pub use ss::{ss_to_tf, tf_to_ss_companion, StateSpaceModel};
pub use tf::{
    cancel_near_pole_zero, dominant_pole_reduce, impulse_response, poles, servo_closed_loop_tf,
    step_response, unity_feedback, zeros, TransferFunction,
};
