//! Corpus BLEU-4, sentence ROUGE-L and the whole / action / justification
//! scoring protocol.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

/// Recall weight of the ROUGE-L F-measure.
pub const ROUGE_BETA: f64 = 1.2;

/// A caption split at its first `;`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionPair {
    pub action: String,
    pub justification: String,
    pub raw: String,
    /// Set when the caption had no `;`.
    pub missing_delimiter: bool,
}

pub fn split_caption(raw: &str) -> CaptionPair {
    match raw.split_once(';') {
        Some((a, j)) => CaptionPair {
            action: a.trim().to_string(),
            justification: j.trim().to_string(),
            raw: raw.to_string(),
            missing_delimiter: false,
        },
        None => CaptionPair {
            action: raw.trim().to_string(),
            justification: String::new(),
            raw: raw.to_string(),
            missing_delimiter: true,
        },
    }
}

fn ngram_counts<S: Eq + std::hash::Hash>(tokens: &[S], n: usize) -> HashMap<&[S], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

/// Corpus-level BLEU-4 with a single reference per candidate and no
/// smoothing. Any zero n-gram precision yields 0.
pub fn bleu4<S: Eq + std::hash::Hash>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidates vs {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (cand, refr) in candidates.iter().zip(references) {
        c_len += cand.len();
        r_len += refr.len();
        for n in 1..=4 {
            let rc = ngram_counts(refr, n);
            for (gram, count) in ngram_counts(cand, n) {
                matched[n - 1] += count.min(rc.get(gram).copied().unwrap_or(0));
            }
            total[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }
    if c_len == 0 || matched.iter().any(|&m| m == 0) {
        return Ok(0.0);
    }
    let log_p: f64 = (0..4).map(|i| (matched[i] as f64 / total[i] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c_len <= r_len {
        (1.0 - r_len as f64 / c_len as f64).exp()
    } else {
        1.0
    };
    Ok(bp * log_p.exp())
}

/// Length of the longest common subsequence.
pub fn lcs_len<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure; precision is taken against the candidate length and
/// recall against the reference length.
pub fn rouge_l<S: PartialEq>(candidate: &[S], reference: &[S]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(candidate, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean sentence ROUGE-L over aligned pairs.
pub fn rouge_l_corpus<S: PartialEq>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidates vs {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let sum: f64 = candidates.iter().zip(references).map(|(c, r)| rouge_l(c, r)).sum();
    Ok(sum / candidates.len() as f64)
}

/// {whole, action, justification} × {BLEU-4, ROUGE-L}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub whole_b4: f64,
    pub whole_rl: f64,
    pub action_b4: f64,
    pub action_rl: f64,
    pub just_b4: f64,
    pub just_rl: f64,
}

impl EvalTable {
    pub fn values(&self) -> [f64; 6] {
        [
            self.whole_b4,
            self.whole_rl,
            self.action_b4,
            self.action_rl,
            self.just_b4,
            self.just_rl,
        ]
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let s = serde_json::to_string_pretty(self).expect("table serializes");
        std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::json(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: String,
    pub prediction: String,
    pub reference: String,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub table: EvalTable,
    pub samples: Vec<ScoredSample>,
}

impl EvalReport {
    pub fn write_per_sample_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Fraction of samples whose predicted action segment matches the
    /// reference token-for-token.
    pub fn action_accuracy(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let hits = self
            .samples
            .iter()
            .filter(|s| {
                tokenize(&split_caption(&s.prediction).action) == tokenize(&split_caption(&s.reference).action)
            })
            .count();
        hits as f64 / self.samples.len() as f64
    }
}

/// Scores `(id, prediction, reference)` triples on the three corpora.
pub fn score_predictions(items: &[(String, String, String)]) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut cands: [Vec<Vec<String>>; 3] = Default::default();
    let mut refs: [Vec<Vec<String>>; 3] = Default::default();
    let mut samples = Vec::with_capacity(items.len());
    for (id, pred, reference) in items {
        let (p, r) = (split_caption(pred), split_caption(reference));
        let whole = (tokenize(pred), tokenize(reference));
        samples.push(ScoredSample {
            id: id.clone(),
            prediction: pred.clone(),
            reference: reference.clone(),
            rouge_l: rouge_l(&whole.0, &whole.1),
        });
        cands[0].push(whole.0);
        refs[0].push(whole.1);
        cands[1].push(tokenize(&p.action));
        refs[1].push(tokenize(&r.action));
        cands[2].push(tokenize(&p.justification));
        refs[2].push(tokenize(&r.justification));
    }
    let b = |i: usize| bleu4(&cands[i], &refs[i]);
    let rl = |i: usize| rouge_l_corpus(&cands[i], &refs[i]);
    Ok(EvalReport {
        table: EvalTable {
            whole_b4: b(0)?,
            whole_rl: rl(0)?,
            action_b4: b(1)?,
            action_rl: rl(1)?,
            just_b4: b(2)?,
            just_rl: rl(2)?,
        },
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn split_examples() {
        let p = split_caption("I will slow down. ; Because the front vehicle is stopped.");
        assert_eq!(p.action, "I will slow down.");
        assert_eq!(p.justification, "Because the front vehicle is stopped.");
        assert!(!p.missing_delimiter);
        let p = split_caption("a ; b ; c");
        assert_eq!((p.action.as_str(), p.justification.as_str()), ("a", "b ; c"));
        let p = split_caption("no delimiter here");
        assert_eq!((p.action.as_str(), p.justification.as_str()), ("no delimiter here", ""));
        assert!(p.missing_delimiter);
    }

    #[test]
    fn bleu_fixtures() {
        let c = vec![toks("i will slow down now")];
        assert_eq!(bleu4(&c, &c).unwrap(), 1.0);
        let s = bleu4(&[toks("i will slow down")], &[toks("i will slow down .")]).unwrap();
        assert!((s - (1.0f64 - 5.0 / 4.0).exp()).abs() < 1e-12);
        assert!((s - 0.77880).abs() < 1e-5);
        let s = bleu4(&[toks("a b c d")], &[toks("a b c e")]).unwrap();
        assert_eq!(s, 0.0);
        assert!(bleu4::<String>(&[], &[]).is_err());
        assert_eq!(bleu4(&[vec![]], &[toks("x y z w")]).unwrap(), 0.0);
    }

    #[test]
    fn rouge_fixtures() {
        let a = toks("i will slow down");
        assert_eq!(rouge_l(&a, &a), 1.0);
        assert_eq!(rouge_l(&a, &toks("x y")), 0.0);
        let f = rouge_l(&a, &toks("i will stop"));
        assert!((f - 0.58653).abs() < 1e-4);
        assert_eq!(rouge_l(&[] as &[String], &a), 0.0);
    }

    #[test]
    fn rouge_direction() {
        // P = 2/4, R = 2/2 one way; swapped the other way
        let short = toks("a b");
        let long = toks("a x b y");
        let b2 = ROUGE_BETA * ROUGE_BETA;
        let f = |p: f64, r: f64| (1.0 + b2) * p * r / (r + b2 * p);
        assert!((rouge_l(&long, &short) - f(0.5, 1.0)).abs() < 1e-15);
        assert!((rouge_l(&short, &long) - f(1.0, 0.5)).abs() < 1e-15);
        assert!(rouge_l(&long, &short) > rouge_l(&short, &long));
    }

    #[test]
    fn echo_and_empty_predictions() {
        let refs = [
            "i will slow down . ; because the front vehicle is stopped .",
            "i will drive at a steady speed . ; because there is a safe distance from the front vehicle .",
        ];
        let echo: Vec<_> = refs.iter().enumerate().map(|(i, r)| (i.to_string(), r.to_string(), r.to_string())).collect();
        let rep = score_predictions(&echo).unwrap();
        assert_eq!(rep.table.values(), [1.0; 6]);
        assert_eq!(rep.action_accuracy(), 1.0);
        let empty: Vec<_> = refs.iter().enumerate().map(|(i, r)| (i.to_string(), String::new(), r.to_string())).collect();
        let rep = score_predictions(&empty).unwrap();
        assert_eq!(rep.table.values(), [0.0; 6]);
    }
}
