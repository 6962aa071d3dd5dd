//! Small differentiable Q-network: conv/dense encoder, fully-connected
//! layer, optional LSTM cell and a linear head over the five actions.
//!
//! Gradients are computed by hand-written reverse passes per layer and are
//! cross-checked against central finite differences in [`finite_diff_check`].

mod adam;
mod gradcheck;
mod net;
mod params;
mod spec;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use gradcheck::{compare_with_finite_differences, finite_diff_check, FD_STEP};
pub use net::{batch_loss, forward, loss_and_grads, QValues, Sample};
pub use params::{init_params, MemoryState, ParamSet, Tensor};
pub use spec::{Encoder, NetworkSpec, ACTIONS, REP_SIZES};
