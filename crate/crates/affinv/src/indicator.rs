//! Word-packed indicator sets over F_p.
//!
//! Bit i of word w records membership of x = 64w + i. The two geometric
//! operations the defect machinery needs — translation x -> x + s and
//! dilation x -> a x — are implemented directly on the packed form:
//! translation reads a 64-bit window out of the doubled bitstream A || A,
//! dilation scatters set bits through a single modular multiplication each.
//! Sets can be persisted as a one-line JSON header (modulus, cardinality,
//! SHA-256 of the payload) followed by the raw little-endian words, so a
//! stored set is self-describing and tamper-evident.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::{AffineMapZp, Prime};
use crate::error::{Error, Result};

/// A subset of F_p as a packed bit vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorSet {
    p: Prime,
    words: Vec<u64>,
}

const BLOB_ENCODING: &str = "indicator-le64-v1";

fn word_count(p: u64) -> usize {
    ((p + 63) / 64) as usize
}

impl IndicatorSet {
    /// The empty subset of F_p.
    pub fn empty(p: Prime) -> IndicatorSet {
        IndicatorSet {
            p,
            words: vec![0; word_count(p.get())],
        }
    }

    /// Build from a membership predicate evaluated on all of F_p.
    pub fn from_fn(p: Prime, mut member: impl FnMut(u64) -> bool) -> IndicatorSet {
        let mut set = IndicatorSet::empty(p);
        for x in 0..p.get() {
            if member(x) {
                set.words[(x / 64) as usize] |= 1 << (x % 64);
            }
        }
        set
    }

    /// Build from explicit members; every member must lie in [0, p).
    pub fn from_members(p: Prime, members: impl IntoIterator<Item = u64>) -> Result<IndicatorSet> {
        let mut set = IndicatorSet::empty(p);
        for x in members {
            if x >= p.get() {
                return Err(Error::Format {
                    what: "set member",
                    reason: format!("{x} is outside [0, {})", p.get()),
                });
            }
            set.words[(x / 64) as usize] |= 1 << (x % 64);
        }
        Ok(set)
    }

    pub fn modulus(&self) -> Prime {
        self.p
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn contains(&self, x: u64) -> bool {
        debug_assert!(x < self.p.get());
        self.words[(x / 64) as usize] >> (x % 64) & 1 == 1
    }

    pub fn insert(&mut self, x: u64) {
        debug_assert!(x < self.p.get());
        self.words[(x / 64) as usize] |= 1 << (x % 64);
    }

    /// Cardinality |A|.
    pub fn len(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// |A| / p.
    pub fn density(&self) -> f64 {
        self.len() as f64 / self.p.get() as f64
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let base = 64 * w as u64;
            (0..64u64)
                .filter(move |i| word >> i & 1 == 1)
                .map(move |i| base + i)
        })
    }

    /// |A intersect B|, over a shared modulus.
    pub fn intersection_size(&self, other: &IndicatorSet) -> Result<u64> {
        if self.p != other.p {
            return Err(Error::MismatchedModulus {
                left: self.p.get(),
                right: other.p.get(),
            });
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum())
    }

    /// The complement F_p \ A.
    pub fn complement(&self) -> IndicatorSet {
        let mut out = IndicatorSet {
            p: self.p,
            words: self.words.iter().map(|w| !w).collect(),
        };
        out.mask_tail();
        out
    }

    /// |A symdiff B|, over a shared modulus.
    pub fn symdiff_size(&self, other: &IndicatorSet) -> Result<u64> {
        if self.p != other.p {
            return Err(Error::MismatchedModulus {
                left: self.p.get(),
                right: other.p.get(),
            });
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as u64)
            .sum())
    }

    /// The translate A + s = {x + s : x in A}.
    ///
    /// Reads the answer out of the doubled stream A || A: bit x of the
    /// result is bit (x - s mod p) of A, i.e. bit x + (p - s) of the
    /// doubled stream, so the whole translate is one staggered word copy.
    pub fn translate(&self, shift: i128) -> IndicatorSet {
        let p = self.p.get();
        let s = self.p.reduce_i128(shift).value();
        if s == 0 {
            return self.clone();
        }
        let words = self.words.len();
        // ext holds A || A as one contiguous 2p-bit stream.
        let mut ext = vec![0u64; 2 * words + 1];
        ext[..words].copy_from_slice(&self.words);
        let off = (p / 64) as usize;
        let r = (p % 64) as u32;
        for (j, &w) in self.words.iter().enumerate() {
            if r == 0 {
                ext[off + j] |= w;
            } else {
                ext[off + j] |= w << r;
                ext[off + j + 1] |= w >> (64 - r);
            }
        }
        let start = (p - s) as usize;
        let off = start / 64;
        let r = (start % 64) as u32;
        let mut out = vec![0u64; words];
        for (w, slot) in out.iter_mut().enumerate() {
            let lo = ext[off + w] >> r;
            let hi = if r == 0 { 0 } else { ext[off + w + 1] << (64 - r) };
            *slot = lo | hi;
        }
        let mut set = IndicatorSet { p: self.p, words: out };
        set.mask_tail();
        set
    }

    /// The dilate a A = {a x : x in A}; the factor must be nonzero mod p.
    pub fn dilate(&self, factor: i128) -> Result<IndicatorSet> {
        let p = self.p.get();
        let a = self.p.reduce_i128(factor).value();
        if a == 0 {
            return Err(Error::ZeroDilation { p });
        }
        if a == 1 {
            return Ok(self.clone());
        }
        let mut out = vec![0u64; self.words.len()];
        for (w, &word) in self.words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let i = bits.trailing_zeros() as u64;
                bits &= bits - 1;
                let x = 64 * w as u64 + i;
                let y = (a as u128 * x as u128 % p as u128) as u64;
                out[(y / 64) as usize] |= 1 << (y % 64);
            }
        }
        Ok(IndicatorSet { p: self.p, words: out })
    }

    /// The image {a x + b : x in A} under a reduced affine map.
    pub fn affine_image(&self, map: AffineMapZp) -> Result<IndicatorSet> {
        if map.modulus() != self.p {
            return Err(Error::MismatchedModulus {
                left: self.p.get(),
                right: map.modulus().get(),
            });
        }
        Ok(self
            .dilate(map.a().value() as i128)?
            .translate(map.b().value() as i128))
    }

    /// The reflection -A = {-x : x in A}.
    pub fn negate(&self) -> IndicatorSet {
        let p = self.p.get();
        let mut out = vec![0u64; self.words.len()];
        for (w, &word) in self.words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let i = bits.trailing_zeros() as u64;
                bits &= bits - 1;
                let x = 64 * w as u64 + i;
                let y = if x == 0 { 0 } else { p - x };
                out[(y / 64) as usize] |= 1 << (y % 64);
            }
        }
        IndicatorSet { p: self.p, words: out }
    }

    /// Whether A = -A.
    pub fn is_symmetric(&self) -> bool {
        *self == self.negate()
    }

    fn mask_tail(&mut self) {
        let r = self.p.get() % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        bytes
    }

    /// Serialize as a one-line JSON header plus the raw little-endian words.
    pub fn write_blob(&self, out: &mut impl Write) -> Result<()> {
        let payload = self.payload();
        let header = BlobHeader {
            encoding: BLOB_ENCODING.to_string(),
            p: self.p.get(),
            cardinality: self.len(),
            sha256: hex(&Sha256::digest(&payload)),
        };
        let header = serde_json::to_string(&header).map_err(|e| Error::Format {
            what: "indicator blob header",
            reason: e.to_string(),
        })?;
        out.write_all(header.as_bytes())?;
        out.write_all(b"\n")?;
        out.write_all(&payload)?;
        Ok(())
    }

    /// Inverse of [`IndicatorSet::write_blob`], validating encoding,
    /// length, checksum, tail bits, and cardinality.
    pub fn read_blob(input: &mut impl Read) -> Result<IndicatorSet> {
        let mut raw = Vec::new();
        input.read_to_end(&mut raw)?;
        let newline = raw
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| malformed("missing header line"))?;
        let header: BlobHeader = serde_json::from_slice(&raw[..newline])
            .map_err(|e| malformed(&format!("bad header: {e}")))?;
        if header.encoding != BLOB_ENCODING {
            return Err(malformed(&format!(
                "unsupported encoding {:?}",
                header.encoding
            )));
        }
        let p = Prime::new(header.p)?;
        let payload = &raw[newline + 1..];
        let expected = word_count(p.get()) * 8;
        if payload.len() != expected {
            return Err(malformed(&format!(
                "payload is {} bytes, expected {expected}",
                payload.len()
            )));
        }
        if hex(&Sha256::digest(payload)) != header.sha256 {
            return Err(malformed("checksum mismatch"));
        }
        let words: Vec<u64> = payload
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("chunks_exact(8)")))
            .collect();
        let set = IndicatorSet { p, words };
        let mut masked = set.clone();
        masked.mask_tail();
        if masked != set {
            return Err(malformed("set bits beyond p"));
        }
        if set.len() != header.cardinality {
            return Err(malformed(&format!(
                "cardinality {} does not match header {}",
                set.len(),
                header.cardinality
            )));
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.write_blob(&mut file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<IndicatorSet> {
        let mut file = std::fs::File::open(path)?;
        IndicatorSet::read_blob(&mut file)
    }
}

fn malformed(reason: &str) -> Error {
    Error::Format {
        what: "indicator blob",
        reason: reason.to_string(),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct BlobHeader {
    encoding: String,
    p: u64,
    cardinality: u64,
    sha256: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn prime(p: u64) -> Prime {
        Prime::new(p).unwrap()
    }

    /// A deterministic, irregular test set: quadratic residues shifted a bit.
    fn sample_set(p: u64) -> (IndicatorSet, BTreeSet<u64>) {
        let reference: BTreeSet<u64> = (0..p).filter(|x| (x * x + 3 * x) % 7 < 3).collect();
        let set = IndicatorSet::from_members(prime(p), reference.iter().copied()).unwrap();
        (set, reference)
    }

    #[test]
    fn membership_and_cardinality() {
        for p in [67u64, 101, 1009] {
            let (set, reference) = sample_set(p);
            assert_eq!(set.len(), reference.len() as u64);
            for x in 0..p {
                assert_eq!(set.contains(x), reference.contains(&x), "x = {x}, p = {p}");
            }
            let collected: Vec<u64> = set.iter().collect();
            let expected: Vec<u64> = reference.iter().copied().collect();
            assert_eq!(collected, expected);
        }
    }

    #[test]
    fn out_of_range_member_rejected() {
        assert!(matches!(
            IndicatorSet::from_members(prime(67), [67]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn translate_matches_pointwise() {
        for p in [67u64, 101, 1009] {
            let (set, reference) = sample_set(p);
            for shift in [0i128, 1, 7, -1, p as i128 - 1, 3 * p as i128 + 5] {
                let translated = set.translate(shift);
                let expected: BTreeSet<u64> = reference
                    .iter()
                    .map(|&x| ((x as i128 + shift).rem_euclid(p as i128)) as u64)
                    .collect();
                let got: BTreeSet<u64> = translated.iter().collect();
                assert_eq!(got, expected, "p = {p}, shift = {shift}");
                assert_eq!(translated.len(), set.len(), "translation is a bijection");
            }
        }
    }

    #[test]
    fn dilate_matches_pointwise() {
        for p in [67u64, 1009] {
            let (set, reference) = sample_set(p);
            for factor in [1i128, 2, 5, -3, p as i128 - 1] {
                let dilated = set.dilate(factor).unwrap();
                let expected: BTreeSet<u64> = reference
                    .iter()
                    .map(|&x| ((x as i128 * factor).rem_euclid(p as i128)) as u64)
                    .collect();
                let got: BTreeSet<u64> = dilated.iter().collect();
                assert_eq!(got, expected, "p = {p}, factor = {factor}");
            }
            assert!(matches!(
                set.dilate(0),
                Err(Error::ZeroDilation { .. })
            ));
            assert!(matches!(
                set.dilate(p as i128),
                Err(Error::ZeroDilation { .. })
            ));
        }
    }

    #[test]
    fn affine_image_composes_dilate_translate() {
        let p = prime(1009);
        let (set, reference) = sample_set(1009);
        let map = AffineMapZp::from_integers(p, 5, 17).unwrap();
        let image = set.affine_image(map).unwrap();
        let expected: BTreeSet<u64> = reference.iter().map(|&x| (5 * x + 17) % 1009).collect();
        let got: BTreeSet<u64> = image.iter().collect();
        assert_eq!(got, expected);

        let other = AffineMapZp::from_integers(prime(67), 2, 1).unwrap();
        assert!(matches!(
            set.affine_image(other),
            Err(Error::MismatchedModulus { .. })
        ));
    }

    #[test]
    fn negation_and_symmetry() {
        let p = prime(101);
        // Symmetric set: x and p - x together.
        let symmetric = IndicatorSet::from_members(p, [0u64, 1, 100, 40, 61]).unwrap();
        assert!(symmetric.is_symmetric());
        // Removing one side breaks it.
        let lopsided = IndicatorSet::from_members(p, [1u64, 40, 61]).unwrap();
        assert!(!lopsided.is_symmetric());
        let negated = lopsided.negate();
        let got: BTreeSet<u64> = negated.iter().collect();
        assert_eq!(got, BTreeSet::from([100u64, 61, 40]));
    }

    #[test]
    fn intersection_and_complement() {
        let (set, reference) = sample_set(101);
        let shifted = set.translate(5);
        let shifted_ref: BTreeSet<u64> = reference.iter().map(|&x| (x + 5) % 101).collect();
        let expected = reference.intersection(&shifted_ref).count() as u64;
        assert_eq!(set.intersection_size(&shifted).unwrap(), expected);

        let complement = set.complement();
        assert_eq!(complement.len() + set.len(), 101);
        assert_eq!(set.intersection_size(&complement).unwrap(), 0);
        assert_eq!(set.symdiff_size(&complement).unwrap(), 101);
        for x in 0..101 {
            assert_eq!(complement.contains(x), !set.contains(x));
        }
    }

    #[test]
    fn symdiff_matches_pointwise() {
        let (set, reference) = sample_set(1009);
        let shifted = set.translate(13);
        let expected = reference
            .iter()
            .map(|&x| (x + 13) % 1009)
            .collect::<BTreeSet<u64>>()
            .symmetric_difference(&reference)
            .count() as u64;
        assert_eq!(set.symdiff_size(&shifted).unwrap(), expected);
        assert_eq!(set.symdiff_size(&set).unwrap(), 0);
        let (other, _) = sample_set(67);
        assert!(matches!(
            set.symdiff_size(&other),
            Err(Error::MismatchedModulus { .. })
        ));
    }

    #[test]
    fn blob_roundtrip_is_byte_identical() {
        let (set, _) = sample_set(1009);
        let mut blob = Vec::new();
        set.write_blob(&mut blob).unwrap();
        let loaded = IndicatorSet::read_blob(&mut blob.as_slice()).unwrap();
        assert_eq!(loaded, set);
        let mut again = Vec::new();
        loaded.write_blob(&mut again).unwrap();
        assert_eq!(blob, again, "serialization is deterministic");
    }

    #[test]
    fn blob_corruption_detected() {
        let (set, _) = sample_set(1009);
        let mut blob = Vec::new();
        set.write_blob(&mut blob).unwrap();

        // Flip one payload bit: checksum must catch it.
        let mut corrupt = blob.clone();
        let last = corrupt.len() - 1;
        corrupt[last] ^= 1;
        assert!(matches!(
            IndicatorSet::read_blob(&mut corrupt.as_slice()),
            Err(Error::Format { .. })
        ));

        // Truncate the payload: length check must catch it.
        let short = &blob[..blob.len() - 8];
        assert!(matches!(
            IndicatorSet::read_blob(&mut &short[..]),
            Err(Error::Format { .. })
        ));

        // No header line at all.
        assert!(matches!(
            IndicatorSet::read_blob(&mut &b"abc"[..]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn blob_rejects_bits_beyond_modulus() {
        // Hand-craft a blob for p = 67 with a bit above p set in the top
        // word, with a valid checksum, so only the tail check can refuse it.
        let mut words = vec![0u64; 2];
        words[1] |= 1 << 10; // x = 74 > 67
        let mut payload = Vec::new();
        for w in &words {
            payload.extend_from_slice(&w.to_le_bytes());
        }
        let header = format!(
            "{{\"encoding\":\"{BLOB_ENCODING}\",\"p\":67,\"cardinality\":1,\"sha256\":\"{}\"}}",
            hex(&Sha256::digest(&payload))
        );
        let mut blob = header.into_bytes();
        blob.push(b'\n');
        blob.extend_from_slice(&payload);
        let err = IndicatorSet::read_blob(&mut blob.as_slice()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn save_and_load_via_files() {
        let dir = std::env::temp_dir().join("affinv-indicator-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sample.set");
        let (set, _) = sample_set(101);
        set.save(&path).unwrap();
        assert_eq!(IndicatorSet::load(&path).unwrap(), set);
        std::fs::remove_file(&path).ok();
    }
}
