//! Deterministic per-trial seed derivation.
//!
//! Trials must produce identical streams no matter how they are scheduled
//! across workers, so each trial derives its own RNG seed from the master
//! seed and its index through a splitmix64 finalizer — a bijective mixer
//! whose outputs are uncorrelated even for adjacent inputs.

/// One round of the splitmix64 output function.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `index` under `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ index)
}
