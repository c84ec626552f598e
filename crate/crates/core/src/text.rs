//! Word-level tokenizer and vocabulary shared by the captioner and the
//! metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];
const PUNCT: [char; 3] = ['.', ';', ','];

/// Lowercases and splits on whitespace; `.`, `;` and `,` become tokens of
/// their own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if PUNCT.contains(&ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Joins tokens with single spaces, attaching `.` and `,` to the previous
/// word: `["down", ".", ";", "because"]` → `"down. ; because"`.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        if !out.is_empty() && tok != "." && tok != "," {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Bijective token ↔ id map with four reserved ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = String;
    fn try_from(tokens: Vec<String>) -> std::result::Result<Self, String> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err("vocabulary must start with the reserved tokens".into());
        }
        let ids: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if ids.len() != tokens.len() {
            return Err("vocabulary has duplicate tokens".into());
        }
        Ok(Vocab { tokens, ids })
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Tokens ordered by descending frequency, ties lexicographic, after the
    /// reserved ids.
    pub fn build<S: AsRef<str>>(captions: &[S]) -> Result<Self> {
        if captions.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for c in captions {
            for t in tokenize(c.as_ref()) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut entries: Vec<(String, usize)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(entries.into_iter().map(|(t, _)| t))
            .collect::<Vec<_>>();
        Ok(Vocab::try_from(tokens).expect("reserved tokens never collide with words"))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(RESERVED[UNK], |s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `[BOS, tokens…, EOS]`
    pub fn encode(&self, text: &str) -> Vec<usize> {
        std::iter::once(BOS)
            .chain(tokenize(text).iter().map(|t| self.id(t)))
            .chain(std::iter::once(EOS))
            .collect()
    }

    /// Renders ids as text, skipping PAD/BOS/EOS.
    pub fn decode(&self, ids: &[usize]) -> String {
        let words: Vec<&str> = ids
            .iter()
            .filter(|&&i| i != PAD && i != BOS && i != EOS)
            .map(|&i| self.token(i))
            .collect();
        detokenize(&words)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_then_frequency_order() {
        let v = Vocab::build(&["a a b"]).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<bos>", "<eos>", "<unk>", "a", "b"]);
        let v = Vocab::build(&["b c", "c a"]).unwrap();
        assert_eq!(&v.tokens()[4..], &["c", "a", "b"]);
    }

    #[test]
    fn punctuation_is_split() {
        assert_eq!(
            tokenize("I will slow down. ; Because, really"),
            vec!["i", "will", "slow", "down", ".", ";", "because", ",", "really"]
        );
        assert_eq!(tokenize("down.;x"), vec!["down", ".", ";", "x"]);
    }

    #[test]
    fn detokenize_matches_corpus_style() {
        let toks = tokenize("i will slow down . ; because the front vehicle is stopped .");
        assert_eq!(detokenize(&toks), "i will slow down. ; because the front vehicle is stopped.");
        assert_eq!(tokenize(&detokenize(&toks)), toks);
    }

    #[test]
    fn build_is_deterministic_and_rejects_empty() {
        let corpus = ["x y z", "y z", "z"];
        assert_eq!(Vocab::build(&corpus).unwrap(), Vocab::build(&corpus).unwrap());
        assert!(matches!(Vocab::build::<&str>(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn encode_decode() {
        let v = Vocab::build(&["go left ."]).unwrap();
        let ids = v.encode("Go right.");
        assert_eq!(ids, vec![BOS, v.id("go"), UNK, v.id("."), EOS]);
        assert_eq!(v.decode(&ids), "go <unk>.");
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocab::build(&["a b ; c ."]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("c"), v.id("c"));
        assert!(serde_json::from_str::<Vocab>(r#"["a","b"]"#).is_err());
    }
}
