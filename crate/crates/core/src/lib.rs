//! Coupled autoregressive generation.
//!
//! Several token-level models are sampled under one shared source of
//! exogenous noise (coupled) or under disjoint noise streams (independent),
//! and their scores are compared with paired estimators: mean difference,
//! variance decomposition, win/tie rates, confidence intervals and
//! interval-based ranking. The [`oracle`] module holds closed forms and
//! reference simulations the rest of the crate is tested against.

pub mod error;
pub mod estimators;
pub mod models;
pub mod noise;
pub mod oracle;
pub mod runner;
pub mod scm;
pub mod scoring;

pub use error::{Error, Result};
pub use models::{model_distance, perturb, ModelKind, ModelSpec, PromptSet};
pub use noise::{derive_seed, NoiseBlock, NoiseKey, NoiseSource, Stream};
pub use runner::{Experiment, ScoreMatrix};
pub use scm::{
    generate, generate_coupled, generate_independent, gumbel_max_sample, inverse_transform_sample,
    temperature_scale, Coupling, GenerationConfig, NextTokenDistribution, PromptId, Sampler,
    TokenId, TokenSequence, Vocabulary,
};
pub use scoring::{compare, PairwiseOutcome, ScoreKey, Scorer};
