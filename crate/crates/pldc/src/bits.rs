//! Bit-string helpers shared across the crate.
//!
//! A length-`len` bit string is packed into a `u64` whose bit `j` (mask
//! `1 << j`) holds position `j`. Textual form lists position 0 first, so
//! `"110"` parses to `0b011` with `len = 3`.

/// Parse a bit string such as `"0101"` into `(word, len)`.
///
/// Position `k` of the text becomes bit `k` of the word.
pub fn parse_bits(s: &str) -> Result<(u64, usize), String> {
    if s.len() > 64 {
        return Err(format!("bit string longer than 64: {}", s.len()));
    }
    let mut word = 0u64;
    for (k, ch) in s.chars().enumerate() {
        match ch {
            '0' => {}
            '1' => word |= 1 << k,
            other => return Err(format!("invalid bit character {other:?} at position {k}")),
        }
    }
    Ok((word, s.len()))
}

/// Format `len` positions of `word` with position 0 first.
pub fn format_bits(word: u64, len: usize) -> String {
    (0..len)
        .map(|k| if word >> k & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Hamming weight of the low `len` bits.
pub fn weight(word: u64, len: usize) -> u32 {
    let mask = if len >= 64 { u64::MAX } else { (1u64 << len) - 1 };
    (word & mask).count_ones()
}

/// Bit at `pos` as a `usize` in `{0, 1}`.
#[inline]
pub fn bit(word: u64, pos: u32) -> usize {
    (word >> pos & 1) as usize
}

/// Extract the sub-word of `word` at sorted `positions`, most significant
/// bit first. The result equals the lexicographic rank of the extracted
/// substring among all strings of that length.
#[inline]
pub fn extract(word: u64, positions: &[u32]) -> u32 {
    let mut out = 0u32;
    for &pos in positions {
        out = out << 1 | (word >> pos & 1) as u32;
    }
    out
}
