//! Cross-modal video forgery detection and localization on a synthetic
//! sensing world.
//!
//! A ground-truth scene of up to three people drives two sensing channels: an
//! emulated visual pose extractor and a physics-based WiFi CSI synthesizer.
//! The pipeline synchronizes and denoises the CSI stream, trains a network
//! that maps RF frames to pose features, and compares pose features across
//! the two channels to detect and localize tampered video frames.

pub mod csi2pose;
pub mod error;
pub mod features;
pub mod nn;
pub mod par;
pub mod preprocess;
pub mod scene;
pub mod sensors;

pub use error::{Error, Result};
