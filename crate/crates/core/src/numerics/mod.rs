//! Dense tensors, a seedable generator and parameter initialization.

mod init;
mod rng;
mod tensor;

pub use init::glorot_uniform;
pub use rng::{derive_seed, Rng};
pub(crate) use tensor::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc};
pub use tensor::{elementwise, matmul, ElementwiseOp, Operand, Tensor};
