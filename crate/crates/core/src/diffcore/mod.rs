//! Minimal reverse-mode MLP core: dense matrices, named parameter stores,
//! batched forward/backward passes, Adam, Polyak averaging and resets.

mod matrix;
mod mlp;
mod optim;
mod params;

pub use matrix::Matrix;
pub use mlp::{
    backward, forward, forward_batch, forward_cached, init_params, input_gradient, reset_params,
    value_and_grad, Activation, ForwardCache, Mlp, MlpSpec,
};
pub use optim::{optimizer_step, polyak_update, OptimizerConfig};
pub use params::{Param, ParamStore};
