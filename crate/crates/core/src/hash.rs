//! SHA3-512 digests and leading-zero-bit arithmetic.

use sha3::{Digest, Sha3_512};

use crate::canonical::{Canonical, DecodeError, Reader, Writer};

/// Digest length in bytes.
pub const DIGEST_LEN: usize = 64;

/// A SHA3-512 digest. Doubles as the identifier type for messages,
/// bundles, blocks and trade sessions.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HashDigest(pub [u8; DIGEST_LEN]);

impl HashDigest {
    /// The all-zero digest. Used as a placeholder parent at genesis.
    pub const ZERO: HashDigest = HashDigest([0u8; DIGEST_LEN]);

    /// Hash arbitrary bytes.
    pub fn compute(bytes: &[u8]) -> Self {
        let mut hasher = Sha3_512::new();
        hasher.update(bytes);
        HashDigest(hasher.finalize().into())
    }

    /// Hash the concatenation of several byte slices without copying.
    pub fn compute_parts(parts: &[&[u8]]) -> Self {
        let mut hasher = Sha3_512::new();
        for part in parts {
            hasher.update(part);
        }
        HashDigest(hasher.finalize().into())
    }

    /// Number of leading zero bits, 0..=512.
    pub fn leading_zero_bits(&self) -> u32 {
        let mut bits = 0u32;
        for byte in &self.0 {
            if *byte == 0 {
                bits += 8;
            } else {
                bits += byte.leading_zeros();
                break;
            }
        }
        bits
    }

    /// True when the digest has at least `bits` leading zero bits.
    pub fn meets_target(&self, bits: u32) -> bool {
        self.leading_zero_bits() >= bits
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let raw = hex::decode(s).ok()?;
        let arr: [u8; DIGEST_LEN] = raw.try_into().ok()?;
        Some(HashDigest(arr))
    }

    /// First eight hex characters, for logs and reports.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl std::fmt::Debug for HashDigest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "HashDigest({}..)", self.short())
    }
}

impl std::fmt::Display for HashDigest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Canonical for HashDigest {
    fn encode(&self, w: &mut Writer) {
        w.raw(&self.0);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        let mut arr = [0u8; DIGEST_LEN];
        arr.copy_from_slice(r.raw(DIGEST_LEN)?);
        Ok(HashDigest(arr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_64_bytes_and_stable() {
        let d = HashDigest::compute(b"abc");
        assert_eq!(d.0.len(), 64);
        assert_eq!(d, HashDigest::compute(b"abc"));
        assert_ne!(d, HashDigest::compute(b"abd"));
    }

    #[test]
    fn compute_parts_matches_concatenation() {
        let whole = HashDigest::compute(b"hello world");
        let parts = HashDigest::compute_parts(&[b"hello", b" ", b"world"]);
        assert_eq!(whole, parts);
    }

    #[test]
    fn leading_zero_bits_counts_bitwise() {
        let mut raw = [0xffu8; DIGEST_LEN];
        assert_eq!(HashDigest(raw).leading_zero_bits(), 0);
        raw[0] = 0x00;
        assert_eq!(HashDigest(raw).leading_zero_bits(), 8);
        raw[1] = 0x0f;
        assert_eq!(HashDigest(raw).leading_zero_bits(), 12);
        raw[1] = 0x01;
        assert_eq!(HashDigest(raw).leading_zero_bits(), 15);
        assert_eq!(HashDigest::ZERO.leading_zero_bits(), 512);
    }

    #[test]
    fn meets_target_is_a_threshold() {
        let mut raw = [0xffu8; DIGEST_LEN];
        raw[0] = 0x00;
        raw[1] = 0x7f;
        let d = HashDigest(raw);
        assert_eq!(d.leading_zero_bits(), 9);
        assert!(d.meets_target(0));
        assert!(d.meets_target(9));
        assert!(!d.meets_target(10));
    }

    #[test]
    fn hex_round_trip() {
        let d = HashDigest::compute(b"round trip");
        assert_eq!(HashDigest::from_hex(&d.to_hex()), Some(d));
        assert_eq!(HashDigest::from_hex("zz"), None);
        assert_eq!(HashDigest::from_hex("ab"), None);
    }

    #[test]
    fn empirical_zero_bit_frequency_matches_two_to_minus_z() {
        // Per-attempt success probability for a z-bit target must be 2^-z.
        // 10^5 distinct preimages, z = 4: expected rate 1/16.
        let z = 4u32;
        let n = 100_000u64;
        let mut hits = 0u64;
        for i in 0..n {
            let d = HashDigest::compute(&i.to_le_bytes());
            if d.meets_target(z) {
                hits += 1;
            }
        }
        let p = 2f64.powi(-(z as i32));
        let expect = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (hits as f64 - expect).abs();
        assert!(
            dev <= 3.0 * sd,
            "hits {hits} deviates from {expect:.1} by more than 3 standard errors ({sd:.1})"
        );
    }
}
