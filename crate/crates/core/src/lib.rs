//! Self-supervised speaker embeddings learned with an augmentation-driven bootstrap
//! (online/target) objective, plus the objective metrics used to score speaker similarity.
//!
//! The pipeline runs waveform → log-mel → augmented view pairs → online/target networks, and
//! at inference uses the online encoder alone to produce one embedding per utterance.

pub mod audio_io;
pub mod augment;
pub mod byol;
pub mod embedding;
pub mod evaluation;
pub mod features;
pub mod nn;
pub mod synth;

#[cfg(test)]
#[path = "../tests/common/oracles.rs"]
mod test_oracles;
