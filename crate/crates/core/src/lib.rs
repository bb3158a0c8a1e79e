//! Long-term performance signatures for IaaS providers, noise bandwidth
//! modeling around them, and detection of signature changes from short
//! free-trial observations.
//!
//! The pipeline is
//! [`siggen`] (signatures from trials) → [`noise`] (initial band) →
//! [`detect`] (per-cohort case voting), with [`baseline`] providing a
//! CUSUM comparison and [`simlab`] the synthetic experiments.

pub mod baseline;
pub mod detect;
pub mod error;
pub mod io;
pub mod model;
pub mod noise;
pub mod siggen;
pub mod simlab;

pub use error::{Error, ErrorKind, Result};
pub use model::{
    relative_change, CategoricalSignature, GeneralSignature, QoSAttribute, Signature,
    SignatureSeries, Timeline, TrialObservation, WorkloadCategory, WorkloadRequest,
};
