//! Minimal reverse-mode autodiff core.
//!
//! The design is a classic Wengert list: every op that touches a tracked
//! tensor appends one backward closure to a [`Tape`], and [`Tape::backward`]
//! replays the list in reverse from a scalar loss. Node ids are monotonic,
//! so an op's inputs always precede its output on the tape and a single
//! reverse sweep visits everything in valid order.
//!
//! Tensors are rank 1 or 2, row-major, and immutable; `f64` throughout.

mod ops;
mod tape;
mod tensor;


pub use ops::{
    add, bce_with_logits, concat, embedding_lookup, exp, gru_cell, l1, matmul, mean_all, mse, mul,
    neg, recip, reshape, row, sigmoid, sigmoid_scalar, slice, softmax, softplus, softplus_scalar,
    sub, sum_all, sum_axis, tanh, GruParams,
};
pub use tape::{NumError, Tape};
pub use tensor::{Real, Tensor};
