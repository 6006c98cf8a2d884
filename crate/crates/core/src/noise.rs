//! Keyed exogenous noise.
//!
//! Every noise value is derived from a key rather than from a running
//! generator state: the ChaCha8 key is an injective packing of
//! `(seed, namespace, prompt, replicate, stream, step)`, so two lookups with
//! the same key return bit-identical blocks regardless of call order or
//! thread, and distinct keys select distinct ChaCha streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scm::PromptId;

/// Separates unrelated consumers of the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Namespace {
    /// Per-step sampling noise `U_i`.
    Sampling = 1,
    /// Prompt draws `S_q ~ P_Q`.
    Prompt = 2,
    /// Scorer noise `Z`.
    Score = 3,
    /// Oracle (reference Monte Carlo) lineage, never shared with experiments.
    Oracle = 4,
    /// Sub-sampling for error curves.
    Subsample = 5,
    /// Random instance construction (models, rewards, perturbation directions).
    Instance = 6,
}

/// Which noise stream a model reads from.
///
/// Coupled generation gives every model `Shared`; independent generation
/// gives model `j` the stream `Model(j)`. The two never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Shared,
    Model(u32),
}

impl Stream {
    fn code(self) -> u32 {
        match self {
            Stream::Shared => 0,
            Stream::Model(j) => j.checked_add(1).expect("model index overflow"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub prompt: PromptId,
    pub replicate: u64,
    pub stream: Stream,
    pub step: u32,
}

impl NoiseKey {
    pub fn new(prompt: PromptId, replicate: u64, stream: Stream, step: u32) -> Self {
        Self {
            prompt,
            replicate,
            stream,
            step,
        }
    }
}

/// Exogenous noise for one generation step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlock {
    /// One Gumbel(0,1) draw per vocabulary entry.
    pub gumbels: Vec<f64>,
    /// A single uniform in the open interval (0, 1).
    pub uniform: f64,
}

impl NoiseBlock {
    /// Builds a block from explicit values, e.g. for hand-checked examples.
    pub fn from_parts(gumbels: Vec<f64>, uniform: f64) -> Self {
        Self { gumbels, uniform }
    }
}

/// Stateless, keyed noise derivation. Cheap to copy and safe to share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseSource {
    seed: u64,
    namespace: Namespace,
}

impl NoiseSource {
    /// Sampling-noise source for experiments.
    pub fn new(seed: u64) -> Self {
        Self::with_namespace(seed, Namespace::Sampling)
    }

    pub fn with_namespace(seed: u64, namespace: Namespace) -> Self {
        Self { seed, namespace }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn namespace(&self) -> Namespace {
        self.namespace
    }

    /// Same seed, different namespace.
    pub fn scoped(&self, namespace: Namespace) -> Self {
        Self::with_namespace(self.seed, namespace)
    }

    /// A fresh generator positioned at the start of the stream for `key`.
    pub fn rng(&self, key: NoiseKey) -> ChaCha8Rng {
        let mut bytes = [0u8; 32];
        bytes[0..8].copy_from_slice(&self.seed.to_le_bytes());
        bytes[8] = self.namespace as u8;
        bytes[9..13].copy_from_slice(&key.prompt.0.to_le_bytes());
        bytes[13..21].copy_from_slice(&key.replicate.to_le_bytes());
        bytes[21..25].copy_from_slice(&key.stream.code().to_le_bytes());
        bytes[25..29].copy_from_slice(&key.step.to_le_bytes());
        ChaCha8Rng::from_seed(bytes)
    }

    /// The noise block for `key`, sized for a vocabulary of `vocab_size`.
    ///
    /// The uniform is drawn first and the Gumbels after it, so both fields are
    /// populated from the same keyed draw whichever sampler consumes them.
    pub fn block(&self, key: NoiseKey, vocab_size: usize) -> NoiseBlock {
        let mut rng = self.rng(key);
        let uniform = open_unit(&mut rng);
        let gumbels = (0..vocab_size)
            .map(|_| standard_gumbel(open_unit(&mut rng)))
            .collect();
        NoiseBlock { gumbels, uniform }
    }

    /// A single open-interval uniform for `key`.
    pub fn uniform(&self, key: NoiseKey) -> f64 {
        open_unit(&mut self.rng(key))
    }
}

/// Child seed for the `index`-th sub-experiment (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on the open interval (0, 1) with 53 bits of resolution.
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse CDF of Gumbel(0,1).
pub fn standard_gumbel(u: f64) -> f64 {
    -(-u.ln()).ln()
}
