//! Dense tensors with reverse-mode automatic differentiation, providing
//! exactly the operator set a volumetric CNN/transformer hybrid needs:
//! 3D convolution and pooling, trilinear upsampling, batch/layer norm,
//! linear layers, softmax and multi-head self-attention, plus a finite-
//! difference gradient checker and a named-tensor checkpoint format.
//!
//! Tensors are immutable values flowing through pure ops; computations
//! are recorded on a tape and [`Tensor::backward`] accumulates gradients
//! into the `requires_grad` leaves. Compute is `f32` by default; every op
//! is generic over [`Element`] so gradient checks can run at `f64`.

pub mod checkpoint;
mod element;
mod gradcheck;
pub mod ops;
mod tensor;

pub use element::Element;
pub use gradcheck::grad_check;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {message}")]
    Invalid { op: &'static str, message: String },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn invalid(op: &'static str, message: impl Into<String>) -> NnError {
    NnError::Invalid {
        op,
        message: message.into(),
    }
}
