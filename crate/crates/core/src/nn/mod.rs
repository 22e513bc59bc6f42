//! Small feed-forward network, likelihood heads and the optimizer used to train it.

mod adam;
mod head;
mod mlp;

pub use adam::Adam;
pub use head::{kld_gaussian, HeadKind};
pub use mlp::{Mlp, Trace};
