//! Minimal CPU neural-network engine: parameters, layers, reverse-mode tape,
//! optimizers and the checkpoint container.

pub mod checkpoint;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use layers::{Conv2d, Linear, Residual};
pub use optim::{Optimizer, OptimizerConfig};
pub use params::{Gradients, Initializer, Param, ParamId, ParamSet};
pub use tape::{NodeId, SetHandle, Tape};
