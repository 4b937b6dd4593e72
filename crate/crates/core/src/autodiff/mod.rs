//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Values live on a [`Tape`] and are addressed by [`Var`] handles. Trainable
//! parameters are [`Tensor`]s that are copied onto the tape as leaves for each
//! forward pass; after [`Tape::backward`] their gradients are accumulated back
//! with [`Gradients::accumulate_into`] and consumed by [`sgd_step`] or
//! [`Adam`].
//!
//! Besides the elementary operations the tape provides batched row
//! operations (`row_quadratic`, `row_linear`, `row_smooth_norm`) where each
//! row of a matrix is paired with its own constant matrix. They let a whole
//! training history be evaluated as one matrix pass.

mod optim;
mod tape;
mod tensor;

pub use optim::{clip_grad_norm, grad_inf_norm, sgd_step, Adam};
pub use tape::{Gradients, RowMatrices, Tape, Var};
pub use tensor::Tensor;
