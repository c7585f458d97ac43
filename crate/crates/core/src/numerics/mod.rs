//! Dense matrices, differentiable kernels and the autodiff tape.

pub mod gradcheck;
pub mod matrix;
pub mod ops;
pub mod param;
pub mod tape;

pub use gradcheck::{finite_diff_check, finite_diff_check_piecewise, GradCheckReport};
pub use matrix::{Matrix, Real};
pub use ops::{ConvMode, ConvSpec};
pub use param::{Param, ParamId, ParamStore};
pub use tape::{Tape, Var};
