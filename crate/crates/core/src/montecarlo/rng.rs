//! Deterministic, splittable random-number streams.
//!
//! Every stochastic routine in the crate draws from a `ChaCha8` stream
//! derived from a 64-bit master seed, a domain tag and a stream index.
//! Parallel work items (trajectories, acquisition segments) each own a
//! stream keyed by their index, so results are bit-identical regardless of
//! thread count or scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Namespaces for derived streams, so different consumers of the same
/// master seed never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    /// Kinetic Monte Carlo trajectory by index.
    Trajectory,
    /// Detector response (per trajectory or segment).
    Detection,
    /// Dark-count generation per channel.
    DarkCounts,
    /// Synthetic spectrum noise.
    Spectrum,
    /// General-purpose test streams.
    Aux,
}

impl StreamDomain {
    fn tag(self) -> u64 {
        match self {
            StreamDomain::Trajectory => 0x7472_616a,
            StreamDomain::Detection => 0x6465_7463,
            StreamDomain::DarkCounts => 0x6461_726b,
            StreamDomain::Spectrum => 0x7370_6563,
            StreamDomain::Aux => 0x6175_785f,
        }
    }
}

/// splitmix64 step; the standard 64-bit finalizer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha8 stream from `(master, domain, index)`.
pub fn derive_rng(master: u64, domain: StreamDomain, index: u64) -> ChaCha8Rng {
    let mut state = master ^ domain.tag().rotate_left(32) ^ index.wrapping_mul(0xd134_2543_de82_ef95);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
