//! Word counting helpers shared by the MapReduce mappers, reducers and
//! their oracle.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use core::fmt::Write as _;

pub type WordCount = BTreeMap<String, u64>;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Reducer responsible for `word` among `num_reducers`.
pub fn reducer_for(word: &str, num_reducers: usize) -> usize {
    assert!(num_reducers > 0, "need at least one reducer");
    (fnv1a64(word.as_bytes()) % num_reducers as u64) as usize
}

/// Whitespace tokens, case preserved, punctuation kept.
pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

pub fn count_words(text: &str) -> WordCount {
    let mut out = WordCount::new();
    for t in tokens(text) {
        *out.entry(t.into()).or_default() += 1;
    }
    out
}

pub fn merge_into(acc: &mut WordCount, other: &WordCount) {
    for (w, c) in other {
        *acc.entry(w.clone()).or_default() += c;
    }
}

/// One `<word> <count>` line per word, in lexicographic order.
pub fn render_partition(counts: &WordCount) -> String {
    let mut out = String::new();
    for (w, c) in counts {
        let _ = writeln!(out, "{w} {c}");
    }
    out
}

pub fn parse_partition(text: &str) -> Result<WordCount, String> {
    let mut out = WordCount::new();
    for (i, line) in text.lines().enumerate() {
        let (word, count) = line
            .rsplit_once(' ')
            .ok_or_else(|| format!("line {}: expected `<word> <count>`", i + 1))?;
        let count: u64 = count
            .parse()
            .map_err(|_| format!("line {}: bad count {count:?}", i + 1))?;
        if word.is_empty() || out.insert(word.into(), count).is_some() {
            return Err(format!("line {}: empty or repeated word", i + 1));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn count_split_on_whitespace() {
        let c = count_words("a b a\n\tThe the, the");
        assert_eq!(c["a"], 2);
        assert_eq!(c["b"], 1);
        assert_eq!(c["The"], 1);
        assert_eq!(c["the,"], 1);
        assert_eq!(c["the"], 1);
    }

    #[test]
    fn partition_format_round_trip() {
        let c = count_words("b a b");
        let text = render_partition(&c);
        assert_eq!(text, "a 1\nb 2\n");
        assert_eq!(parse_partition(&text).unwrap(), c);
        assert_eq!(parse_partition("").unwrap(), WordCount::new());
        assert!(parse_partition("x y").is_err());
    }

    #[test]
    fn routing_is_stable() {
        for n in 1..9 {
            assert_eq!(reducer_for("word", n), reducer_for("word", n));
            assert!(reducer_for("word", n) < n);
        }
    }
}
