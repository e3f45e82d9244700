//! Memory kernels and sampled trajectories.

mod kernel;
mod trajectory;

pub use kernel::{Kernel, KernelTerm, Phase};
pub(crate) use trajectory::GRID_TOL;
pub use trajectory::{HistorySegment, Segment, Trajectory};
