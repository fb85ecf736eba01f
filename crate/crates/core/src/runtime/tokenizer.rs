// SPDX-License-Identifier: MIT OR Apache-2.0

//! Byte-level tokenizer: ids 0..=255 are bytes, then BOS, EOS, PAD.

use crate::error::{Error, Result};

pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const PAD: u32 = 258;
pub(crate) const NUM_SPECIAL_IDS: usize = 3;

/// Number of tokens [`encode_prompt`] places before the prompt bytes.
pub const PROMPT_OFFSET: usize = 1;

/// UTF-8 bytes of `text`. Never adds BOS.
pub fn tokenize(text: &str) -> Vec<u32> {
    text.bytes().map(u32::from).collect()
}

/// Inverse of [`tokenize`]. Special tokens are skipped; invalid UTF-8 from
/// sampled byte sequences is replaced with U+FFFD.
pub fn detokenize(ids: &[u32]) -> Result<String> {
    let mut bytes = Vec::with_capacity(ids.len());
    for &id in ids {
        match id {
            0..=255 => bytes.push(id as u8),
            BOS | EOS | PAD => {}
            other => return Err(Error::Decode(other)),
        }
    }
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// BOS followed by the prompt bytes.
pub fn encode_prompt(text: &str) -> Vec<u32> {
    let mut ids = Vec::with_capacity(text.len() + 1);
    ids.push(BOS);
    ids.extend(tokenize(text));
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("AB"), vec![65, 66]);
        assert_eq!(encode_prompt("A"), vec![BOS, 65]);
        assert_eq!(detokenize(&[BOS, 104, 105, EOS]).unwrap(), "hi");
        assert!(matches!(detokenize(&[300]), Err(Error::Decode(300))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip(text in any::<String>()) {
            prop_assert_eq!(detokenize(&tokenize(&text)).unwrap(), text);
        }
    }
}
