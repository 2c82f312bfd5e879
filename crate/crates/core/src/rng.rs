//! Deterministic random-number substreams.
//!
//! Every random draw in a simulation comes from a ChaCha8 stream whose id
//! encodes (trial, role, antenna, user). Draws are therefore a pure function
//! of the master seed and those indices, independent of evaluation order and
//! of how trials are distributed over worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. The discriminant is part of the stream id,
/// so streams for different roles never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StreamRole {
    ChannelTaps = 1,
    Noise = 2,
    DataBits = 3,
}

/// Substream factory for one Monte Carlo trial.
///
/// Streams are keyed by (trial, role, antenna, user) but not by sweep point
/// or detection scheme: runs that share a seed and trial index see the same
/// channel, noise, and source bits, which sharpens paired comparisons.
#[derive(Debug, Clone, Copy)]
pub struct TrialStreams {
    seed: u64,
    trial: u64,
}

impl TrialStreams {
    pub fn new(seed: u64, trial: u64) -> Self {
        Self { seed, trial }
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    /// Stream feeding the channel taps of antenna `q`, user `k`.
    pub fn channel_taps(&self, q: usize, k: usize) -> ChaCha8Rng {
        self.stream(StreamRole::ChannelTaps, q, k)
    }

    /// Stream feeding the receiver noise at antenna `q`.
    pub fn noise(&self, q: usize) -> ChaCha8Rng {
        self.stream(StreamRole::Noise, q, 0)
    }

    /// Stream feeding the source bits of user `k`.
    pub fn data_bits(&self, k: usize) -> ChaCha8Rng {
        self.stream(StreamRole::DataBits, 0, k)
    }

    fn stream(&self, role: StreamRole, q: usize, k: usize) -> ChaCha8Rng {
        // Layout: trial | role(4b) | q(16b) | k(8b). Holds Q <= 65536, K <= 256.
        assert!(
            q < (1 << 16),
            "antenna index {q} exceeds stream-id capacity"
        );
        assert!(k < (1 << 8), "user index {k} exceeds stream-id capacity");
        let id = (self.trial << 28) | ((role as u64) << 24) | ((q as u64) << 8) | k as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }
}
