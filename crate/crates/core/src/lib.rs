//! Deterministic discrete-time simulator of a synfire-gated spiking
//! backpropagation circuit, its exact integer-arithmetic reference model,
//! and an MNIST training harness.
//!
//! The circuit trains a binarized two-layer perceptron entirely through
//! spikes: a 12-neuron gating ring routes one sample through a forward pass,
//! a signed error split, a backward pass through transposed weight copies,
//! and four Hebbian update steps per 12-step frame. The [`oracle`] module
//! computes the same model in closed form; the [`harness`] can run both in
//! lockstep and compare every spike and every weight after every frame.

pub mod checkpoint;
pub mod circuit;
pub mod dataio;
pub mod engine;
pub mod harness;
pub mod oracle;
pub mod plasticity;
pub mod quant;

pub use checkpoint::Checkpoint;
pub use circuit::{build, build_inference, CircuitNetwork, Dims};
pub use dataio::{Dataset, Geometry};
pub use engine::{FrameInput, FrameTrace, Network, NeuronParams, NeuronState, Validation};
pub use harness::{lockstep, train, LockstepReport, Mode, RunConfig, RunMetrics};
pub use oracle::{InitConfig, InitScheme, OracleNet};
pub use quant::{QuantMatrix, WeightRole};
