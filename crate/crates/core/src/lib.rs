//! Two-parameter quantum metrology with Hermite-Gaussian pointer modes.
//!
//! Modules build on each other bottom-up: [`fock`] supplies the truncated
//! single-mode algebra, [`estimation`] the quantum geometry and bound curves,
//! [`weak`] the weak-measurement pointer model, [`fisher`] classical Fisher
//! information for concrete measurements, [`beam`] free-space propagation and
//! the laboratory parameter mapping, and [`shot_noise`] the detection model
//! and Monte Carlo harness.

pub mod beam;
pub mod config;
pub mod error;
pub mod estimation;
pub mod expm;
pub mod fisher;
pub mod fock;
pub mod shot_noise;
pub mod validate;
pub mod weak;

pub use error::{QmetError, Result};
