//! Minimal dense-network core: MLPs with hand-written reverse mode, Adam,
//! global-norm clipping, categorical heads and GAE.

mod categorical;
mod gae;
mod mlp;
mod optim;

pub use categorical::Categorical;
pub use gae::{gae, GaeParams};
pub use mlp::{ForwardCache, Mlp};
pub use optim::{clip_global_norm, soft_update, Adam};
