//! Reverse-mode automatic differentiation over dense f64 tensors.

mod check;
mod graph;
mod kernels;
mod param;
mod tensor;

pub use check::{
    check_gradients, check_gradients_by, finite_difference_check, relative_error, FdOptions, FdReport, FdWorst,
    INVARIANT_NOISE,
};
pub(crate) use graph::batch_moments;
pub use graph::{sigmoid, softplus, CustomOp, Graph, Var};
pub use param::{prefixed, Param, ParamId, ParamList, Parameterized};
pub use tensor::Tensor;
