//! Deterministic seed derivation.
//!
//! Component seeds are `derive(master, label)`, so adding a component never
//! perturbs the randomness of the others.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a labelled component under `master`.
pub fn derive(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the master seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(master ^ mix64(h))
}

/// Seed for the `index`-th member of a family rooted at `seed`.
pub fn child(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_independent() {
        assert_ne!(derive(1, "simulate"), derive(1, "gtg"));
        assert_ne!(derive(1, "gtg"), derive(2, "gtg"));
        assert_eq!(derive(7, "gtg"), derive(7, "gtg"));
        assert_ne!(child(3, 0), child(3, 1));
    }
}
