//! A small double-precision neural-network engine: sequential layer
//! chains, exact reverse-mode gradients, Adam, the three training losses,
//! and a finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod network;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{Layer, LayerSpec, Mode};
pub use losses::{cross_entropy_loss, dtae_loss, softmax, triplet_loss};
pub use network::{Activations, Gradients, Network, NetworkConfig};
pub use tensor::Tensor;
