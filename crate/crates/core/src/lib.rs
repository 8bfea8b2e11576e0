//! Ocular artifact removal for multi-channel EEG.
//!
//! The processing chain is: align EEG and EOG recordings on injected pulse
//! markers ([`preprocess::synchronize`]), bandpass both
//! ([`preprocess::design_butterworth`]), separate the EEG into independent
//! components ([`ica::fit_ica`]), attenuate the components that track the EOG
//! ([`artifact::denoise`]) and project back. [`cnn`] classifies the cleaned
//! windows; [`pipeline`] wires everything to a TOML config.

pub mod artifact;
pub mod cnn;
pub mod error;
pub mod ica;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod signal_io;
pub mod synth;

pub use error::{Error, Result};
pub use signal_io::{Dataset, Label, LabeledWindow, Recording};
