//! Simulator for model-heterogeneous federated learning with representation
//! entanglement.
//!
//! Each client owns a private extractor of its own shape and a classifier
//! head whose shape is shared federation-wide. Every round a client maps its
//! local representations to a unified dimension, folds all of them into a
//! single weighted packet (representation plus soft label) and uploads it. The
//! server fits the shared classifier on the uploaded packets and broadcasts it
//! back.
//!
//! Module map:
//!
//! - [`nn`]: dense networks with exact manual gradients, soft-label
//!   cross-entropy and SGD.
//! - [`data`]: synthetic blobs, CSV import, Dirichlet / pathological /
//!   long-tail partitioners.
//! - [`entangle`]: representation mapping, the six weight mechanisms, packet
//!   construction, mixup and prototypes.
//! - [`protocol`]: clients, server, round loop and communication ledger.
//! - [`baselines`]: Local, FedAllRep, prototype-style strategies and
//!   fixed-sampling entanglement.
//! - [`privacy`]: white-box representation inversion and PSNR/MSE scoring.
//! - [`config`], [`runner`], [`export`]: experiment configuration, multi-seed
//!   runs and metric export.
//!
//! Everything is deterministic given a master seed, whether or not the
//! `parallel` feature is enabled.

pub mod baselines;
pub mod config;
pub mod data;
pub mod entangle;
pub mod error;
pub mod exec;
pub mod export;
pub mod nn;
pub mod privacy;
pub mod protocol;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
pub use exec::Execution;
