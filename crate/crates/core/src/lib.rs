// Comparisons are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod delay_solver;
pub mod error;
pub mod io;
pub mod linalg;
pub mod measures;
pub mod oracle;
pub mod resolvent;
pub mod shift_diag;
pub mod signals;
pub mod spectral;
pub mod verify;

pub use delay_solver::{cross_validate, solve_direct_oracle, solve_mild, Method, SolveReport, SystemSpec};
pub use error::{Error, Result};
pub use io::{load_spec, parse_spec};
pub use measures::{Atom, DelayMeasure, DensityPiece};
pub use resolvent::ResolventFamily;
pub use shift_diag::{admissibility_check, composition_check, control_map, input_output_map, shift_apply, ShiftState};
pub use signals::{HistorySegment, Kernel, KernelTerm, Phase, Segment, Trajectory};
pub use spectral::{find_roots, spectral_abscissa, CharacteristicFunction, Rect, Root, SpectrumReport};
