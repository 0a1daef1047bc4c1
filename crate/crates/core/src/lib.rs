//! ECG artifact removal for single-channel surface EMG.
//!
//! The crate bundles a 1-D fully convolutional denoising autoencoder with
//! hand-derived gradients, two conventional removers (zero-phase high-pass
//! and template subtraction), a noisy-corpus builder that mixes ECG into
//! clean sEMG at exact SNRs, and the evaluation metrics (RMSE, SNR
//! improvement, ARV and mean-frequency feature errors).

pub mod baselines;
pub mod dsp;
pub mod error;
pub mod exec;
pub mod harness;
pub mod ingestion;
pub mod metrics;
pub mod mixer;
pub mod neural;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Execution;
pub use ingestion::SignalSegment;
