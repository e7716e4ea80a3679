//! Byte-level tokenizer: ids 0..=255 are raw bytes, followed by four
//! special tokens.

use crate::error::{Error, Result};

pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const PAD: u32 = 258;
pub const SEP: u32 = 259;
pub const SPECIAL_TOKENS: usize = 4;

pub fn tokenize(text: &str) -> Vec<u32> {
    encode_bytes(text.as_bytes())
}

pub fn encode_bytes(bytes: &[u8]) -> Vec<u32> {
    bytes.iter().map(|&b| u32::from(b)).collect()
}

/// Raw bytes of `ids`; special and unused ids are dropped.
pub fn decode_bytes(ids: &[u32], vocab_size: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        if id as usize >= vocab_size {
            return Err(Error::TokenOutOfRange { id, vocab: vocab_size });
        }
        if let Ok(b) = u8::try_from(id) {
            out.push(b);
        }
    }
    Ok(out)
}

/// Text for `ids`, with invalid UTF-8 sequences replaced.
pub fn detokenize(ids: &[u32], vocab_size: usize) -> Result<String> {
    let bytes = decode_bytes(ids, vocab_size)?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

pub fn is_special(id: u32) -> bool {
    id >= 256
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};

    const VOCAB: usize = 260;

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn byte_values() {
        assert_eq!(tokenize("hi"), vec![104, 105]);
    }

    #[test]
    fn random_bytes_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut bytes = vec![0u8; 1024];
        rng.fill_bytes(&mut bytes);
        assert_eq!(decode_bytes(&encode_bytes(&bytes), VOCAB).unwrap(), bytes);
    }

    #[test]
    fn out_of_range_id_is_an_error() {
        assert!(matches!(
            detokenize(&[104, 260], VOCAB),
            Err(Error::TokenOutOfRange { id: 260, .. })
        ));
    }

    #[test]
    fn specials_are_dropped_from_text() {
        assert_eq!(detokenize(&[BOS, 104, SEP, 105, EOS], VOCAB).unwrap(), "hi");
    }
}
