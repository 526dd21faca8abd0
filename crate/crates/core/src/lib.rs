//! Krylov-type recursions for third-order tensors and the Tucker
//! approximations built on them.

pub mod archive;
pub mod counter;
pub mod error;
pub mod io;
pub mod krylov;
pub mod linalg;
pub mod synth;
pub mod tensor;
pub mod tucker;

pub use counter::OpCounter;
pub use error::{Error, Result};
pub use tensor::{AnyTensor, DenseTensor3, Dims, Mode, SparseTensor3, Tensor3, TensorOp};
