//! Small deterministic feedforward network engine.
//!
//! Dense layers with `relu`/`sigmoid`/`identity` activations, inverted dropout with
//! reproducible masks, BCE and focal losses, exact backpropagation (parameters and
//! inputs) and Adam.

mod adam;
mod container;
mod layer;
mod loss;
mod network;

pub use adam::{AdamConfig, AdamState};
pub use container::{
    decode_network, decode_sections, encode_network, encode_sections, read_network, write_network,
    CONTAINER_VERSION,
};
pub use layer::{sigmoid, Activation, DenseLayer, LayerGradient};
pub use loss::{loss, LossKind, LossSpec, PROB_EPS};
pub use network::{
    stream_rng, Backward, DropoutMask, DropoutSpec, ForwardCache, GradientSeed, Gradients,
    MaskMode, NetworkParams,
};
