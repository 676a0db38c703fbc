//! Fault localization for feedforward neural networks.
//!
//! Relevance is propagated from the predicted class back through the
//! network, each input contributes its critical decision path to a hit
//! spectrum, and spectrum-based suspiciousness measures rank hidden neurons.
//! The most suspicious neurons then steer gradient-based input synthesis.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod arch;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod localization;
pub mod network;
pub mod pathways;
pub mod relevance;
pub mod rng;
pub mod stats;
pub mod synthesis;
pub mod train;

pub use arch::Architecture;
pub use data::Dataset;
pub use error::{Error, Result};
pub use evaluation::{coverage_and_failures, synthesized_metrics, ActivationQuantifier, CoverageReport};
pub use localization::{
    accumulate_spectrum, rank_top_k, suspiciousness, HitSpectrum, Measure, SelectionMode, SuspiciousSet,
};
pub use network::{argmax, ActivationTrace, Layer, Network};
pub use pathways::{extract_cdp, AnalysisConfig, CriticalPath};
pub use relevance::{propagate_relevance, LrpRule, RelevanceMap};
pub use synthesis::{synthesize, SynthMethod, SynthesisParams, SynthesisResult};
pub use train::{train, TrainConfig};
