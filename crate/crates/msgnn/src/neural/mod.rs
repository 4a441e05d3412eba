//! Minimal differentiable numeric core: a reverse-mode tape over dense f64
//! matrices, SELU MLPs with optional output normalization, Adam with global
//! gradient clipping, and checkpoint serialization. Everything the model and
//! trainer need, with no external framework.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod params;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use mlp::{mlp_forward, register_mlp, MlpSpec, NORM_EPS};
pub use params::{clip_gradients, ParamSet, ParamTensor};
pub use tape::{Tape, TapeGrads, Var, SELU_ALPHA, SELU_LAMBDA};
