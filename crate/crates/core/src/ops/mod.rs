//! Operation kernels behind the graph API.

pub(crate) mod act;
pub(crate) mod conv;
pub(crate) mod dropout;
pub(crate) mod linear;
pub(crate) mod loss;
pub(crate) mod norm;
pub(crate) mod pool;
pub(crate) mod shape;

pub use conv::{out_extent, ConvCfg};
pub use dropout::DropoutStyle;
pub use norm::RunningStats;
