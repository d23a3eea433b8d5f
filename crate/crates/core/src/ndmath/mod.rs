//! Dense linear algebra, activations and a seeded RNG.

mod activation;
mod linalg;
mod rng;

pub use activation::{
    leaky_relu, leaky_relu_grad, leaky_relu_grad_scalar, leaky_relu_scalar, log_softmax_at,
    one_hot, sample_categorical, softmax, softmax_into, DEFAULT_LEAKY_SLOPE,
};
pub use linalg::{affine_forward, argmax, axpy, dot, solve, Matrix, Shape, Vector};
pub use rng::{splitmix64, Rng, Stream};
