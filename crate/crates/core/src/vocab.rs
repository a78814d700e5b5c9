//! Token vocabulary and the greedy longest-match tokenizer.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Ordered token table; a token's line number in `vocab.txt` is its id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, u32>,
    max_len: usize,
    byte_fallback: Vec<u32>,
}

impl Vocab {
    pub fn new(tokens: Vec<Vec<u8>>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Vocab("vocabulary is empty".into()));
        }
        let mut lookup = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Vocab(format!("token {i} is empty")));
            }
            lookup.entry(t.clone()).or_insert(i as u32);
        }
        let max_len = tokens.iter().map(Vec::len).max().unwrap_or(1);
        let unk = lookup.get(b"<unk>".as_slice()).copied().unwrap_or(0);
        let byte_fallback = (0..=255u8)
            .map(|b| {
                lookup
                    .get([b].as_slice())
                    .or_else(|| lookup.get(format!("<0x{b:02X}>").as_bytes()))
                    .copied()
                    .unwrap_or(unk)
            })
            .collect();
        Ok(Self {
            tokens,
            lookup,
            max_len,
            byte_fallback,
        })
    }

    /// One token per byte value: id `b` is the single byte `b`.
    pub fn byte_level() -> Self {
        Self::new((0..=255u8).map(|b| vec![b]).collect()).expect("non-empty")
    }

    pub fn from_strs<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        Self::new(tokens.into_iter().map(|t| t.as_bytes().to_vec()).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn id(&self, token: &[u8]) -> Option<u32> {
        self.lookup.get(token).copied()
    }

    /// Greedy longest match over vocabulary entries. A byte that starts no
    /// entry maps to its fallback id: the `<0xNN>` token if present, else
    /// `<unk>`, else id 0.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let bytes = text.as_bytes();
        let mut out = Vec::with_capacity(bytes.len());
        let mut i = 0;
        while i < bytes.len() {
            let longest = self.max_len.min(bytes.len() - i);
            let hit = (1..=longest)
                .rev()
                .find_map(|n| self.lookup.get(&bytes[i..i + n]).map(|&id| (id, n)));
            match hit {
                Some((id, n)) => {
                    out.push(id);
                    i += n;
                }
                None => {
                    out.push(self.byte_fallback[bytes[i] as usize]);
                    i += 1;
                }
            }
        }
        out
    }

    /// Concatenate token bytes; `<0xNN>` tokens decode to their byte.
    pub fn detokenize(&self, ids: &[u32]) -> Vec<u8> {
        let mut out = Vec::new();
        for &id in ids {
            let Some(t) = self.token(id) else { continue };
            match parse_byte_token(t) {
                Some(b) => out.push(b),
                None => out.extend_from_slice(t),
            }
        }
        out
    }

    /// `vocab.txt` contents: one escaped token per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            for &b in t {
                if (0x21..=0x7e).contains(&b) && b != b'\\' {
                    s.push(b as char);
                } else {
                    s.push_str(&format!("\\x{b:02X}"));
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            tokens.push(unescape(line).map_err(|m| Error::Parse {
                line: n + 1,
                message: m,
            })?);
        }
        Self::new(tokens)
    }
}

fn parse_byte_token(t: &[u8]) -> Option<u8> {
    let s = std::str::from_utf8(t).ok()?;
    let hex = s.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2 {
        return None;
    }
    u8::from_str_radix(hex, 16).ok()
}

fn unescape(line: &str) -> std::result::Result<Vec<u8>, String> {
    let b = line.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'\\' {
            let hex = b
                .get(i + 2..i + 4)
                .filter(|_| b.get(i + 1) == Some(&b'x'))
                .and_then(|h| std::str::from_utf8(h).ok())
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| format!("bad escape in `{line}`"))?;
            out.push(hex);
            i += 4;
        } else {
            out.push(b[i]);
            i += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_level_is_identity() {
        let v = Vocab::byte_level();
        assert_eq!(v.tokenize("ab"), vec![97, 98]);
        assert_eq!(v.tokenize(""), Vec::<u32>::new());
        let s = "héllo\n\\ wörld";
        assert_eq!(v.detokenize(&v.tokenize(s)), s.as_bytes());
    }

    #[test]
    fn longest_match_wins() {
        let v = Vocab::from_strs(["<unk>", "a", "b", "ab", "abc"]).unwrap();
        assert_eq!(v.tokenize("ab"), vec![3]);
        assert_eq!(v.tokenize("abcab"), vec![4, 3]);
        // 'z' has no entry: falls back to <unk>
        assert_eq!(v.tokenize("azb"), vec![1, 0, 2]);
    }

    #[test]
    fn byte_tokens_are_preferred_fallback() {
        let v = Vocab::from_strs(["<unk>", "<0x7A>", "a"]).unwrap();
        assert_eq!(v.tokenize("za"), vec![1, 2]);
        assert_eq!(v.detokenize(&[1, 2]), b"za");
    }

    #[test]
    fn text_round_trip_escapes_non_printables() {
        let v = Vocab::byte_level();
        let text = v.to_text();
        assert!(text.starts_with("\\x00\n"));
        assert!(text.contains("\n\\x20\n"));
        assert!(text.contains("\n\\x5C\n"));
        assert_eq!(Vocab::from_text(&text).unwrap(), v);
        assert!(Vocab::from_text("a\n\\q\n").is_err());
        assert!(Vocab::from_text("").is_err());
    }
}
