//! Desk-scale simulator of the control-and-readout electronics stack for
//! superconducting qubits: a distributed clock/trigger fabric, a 2 GSa/s
//! arbitrary waveform generator with compressed sequence storage, a 1 GSa/s
//! data acquisition path with fixed-point IQ demodulation and state-conditioned
//! feedback, a minimal dispersive two-level device, and the gate-fidelity /
//! noise-budget calculators that tie electronics specs to qubit error rates.
//!
//! Everything is deterministic given an explicit seed: time is an integer
//! count of picoseconds, fixed-point arithmetic is bit-exact, and random
//! draws come from seeded ChaCha streams.

pub mod awg;
pub mod demod;
pub mod device;
pub mod fidelity;
pub mod rng;
pub mod spectrum;
pub mod timing;

use serde::{Deserialize, Serialize};

/// Outcome of qubit state discrimination / projective readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QubitState {
    Ground,
    Excited,
}

impl QubitState {
    /// 0 for ground, 1 for excited.
    pub fn index(self) -> usize {
        match self {
            QubitState::Ground => 0,
            QubitState::Excited => 1,
        }
    }
}
