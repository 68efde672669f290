//! Monte Carlo study of over-the-air adversarial attacks against a
//! spectrum-sensing CNN when the attacker only has a surrogate classifier
//! trained on its own (channel-distorted) observations.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: complex baseband frames, QPSK, AWGN, dB helpers.
//! - [`channel`]: path loss + lognormal shadowing + Rayleigh fading.
//! - [`neuralnet`]: a small hand-differentiated CNN, Adam training and
//!   input gradients.
//! - [`attack`]: MRPP perturbation crafting with max-power and
//!   surrogate-driven power selection.
//! - [`experiment`]: datasets, node training, Monte Carlo curves and the
//!   topology sweeps.
//! - [`verify`]: small-scale invariant suites used by the `verify` command.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the double-precision variants used by the CLI.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod neuralnet;
pub mod rng;
pub mod scalar;
pub mod signal;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type IqFrame = signal::IqFrame<f64>;
pub type IqFrameF32 = signal::IqFrame<f32>;
pub type IqMatrix = signal::IqMatrix<f64>;
pub type LabeledFrame = signal::LabeledFrame<f64>;
pub type ChannelRealization = channel::ChannelRealization<f64>;
pub type FadingParams = channel::FadingParams<f64>;
pub type Topology = channel::Topology<f64>;
pub type Model = neuralnet::Model<f64>;
pub type ModelF32 = neuralnet::Model<f32>;
pub type LinearSoftmax = neuralnet::LinearSoftmax<f64>;
pub type AttackSpec = attack::AttackSpec<f64>;
pub type Perturbation = attack::Perturbation<f64>;
pub type ScenarioConfig = experiment::ScenarioConfig<f64>;
pub type ResultTable = experiment::ResultTable<f64>;
pub type CurvePoint = experiment::CurvePoint<f64>;

pub use signal::ClassLabel;
