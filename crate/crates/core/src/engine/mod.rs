//! The simulated vector engine: elementwise tile ops, the dst register file,
//! and circular buffers linking the pipeline kernels.

mod cb;
mod dst;
mod ops;

pub use cb::{CircularBuffer, PushLog, DEFAULT_CB_CAPACITY};
pub use dst::{DstRegisterFile, Operand, DST_SLOTS};
pub use ops::{rsqrt_f32, tile_elementwise, TileOp};
