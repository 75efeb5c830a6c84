//! Dense networks with reverse-mode differentiation and SGD/Adam training.

pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod network;
pub mod optim;
pub mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Gradients, Graph, Var};
pub use network::{Activation, BoundNetwork, DenseLayer, LayerSpec, Network};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use tensor::Tensor;
