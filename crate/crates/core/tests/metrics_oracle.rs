use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use t2c_core::metrics::{bleu4, rouge_l, rouge_l_corpus, score_predictions, split_caption};
use t2c_core::text::tokenize;

/// Exhaustive BLEU-4: every n-gram is counted by explicit enumeration into
/// ordered maps, clipped, pooled.
fn bleu_oracle(cands: &[Vec<u8>], refs: &[Vec<u8>]) -> f64 {
    let count = |s: &[u8], n: usize| {
        let mut m: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        let mut i = 0;
        while i + n <= s.len() {
            *m.entry(s[i..i + n].to_vec()).or_default() += 1;
            i += 1;
        }
        m
    };
    let mut logs = 0.0;
    for n in 1..=4 {
        let (mut hit, mut tot) = (0usize, 0usize);
        for (c, r) in cands.iter().zip(refs) {
            let (cc, rc) = (count(c, n), count(r, n));
            for (g, k) in &cc {
                hit += (*k).min(*rc.get(g).unwrap_or(&0));
                tot += k;
            }
        }
        if hit == 0 {
            return 0.0;
        }
        logs += (hit as f64 / tot as f64).ln();
    }
    let c: usize = cands.iter().map(|v| v.len()).sum();
    let r: usize = refs.iter().map(|v| v.len()).sum();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (logs / 4.0).exp()
}

/// Memoized recursive LCS.
fn lcs_oracle(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; b.len()]; a.len()];
    go(a, b, 0, 0, &mut memo)
}

fn rouge_oracle(c: &[u8], r: &[u8]) -> f64 {
    let l = lcs_oracle(c, r) as f64;
    if c.is_empty() || r.is_empty() || l == 0.0 {
        return 0.0;
    }
    let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
    let b2 = 1.2f64 * 1.2;
    (1.0 + b2) * p * rec / (rec + b2 * p)
}

fn random_seq(rng: &mut ChaCha8Rng, alphabet: u8) -> Vec<u8> {
    let n = rng.random_range(0..16);
    (0..n).map(|_| rng.random_range(0..alphabet)).collect()
}

#[test]
fn metrics_match_oracles_on_1000_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut cands = Vec::new();
    let mut refs = Vec::new();
    for _ in 0..1000 {
        let alphabet = rng.random_range(2..7);
        let (c, r) = (random_seq(&mut rng, alphabet), random_seq(&mut rng, alphabet));
        worst = worst.max((rouge_l(&c, &r) - rouge_oracle(&c, &r)).abs());
        let one = bleu4(&[c.clone()], &[r.clone()]).unwrap();
        worst = worst.max((one - bleu_oracle(&[c.clone()], &[r.clone()])).abs());
        cands.push(c);
        refs.push(r);
    }
    for (cs, rs) in cands.chunks(10).zip(refs.chunks(10)) {
        worst = worst.max((bleu4(cs, rs).unwrap() - bleu_oracle(cs, rs)).abs());
    }
    worst = worst.max((bleu4(&cands, &refs).unwrap() - bleu_oracle(&cands, &refs)).abs());
    assert!(worst < 1e-12, "max gap {worst}");
}

#[test]
fn hand_derived_fixtures() {
    let b = bleu4(&[tokenize("i will slow down")], &[tokenize("i will slow down .")]).unwrap();
    assert!((b - 0.77880).abs() < 1e-5, "{b}");
    let r = rouge_l(&tokenize("i will slow down"), &tokenize("i will stop"));
    assert!((r - 0.58653).abs() < 1e-4, "{r}");
    let f = (2.44 * (0.5 * 2.0 / 3.0)) / (2.0 / 3.0 + 1.44 * 0.5);
    assert!((r - f).abs() < 1e-12);
}

#[test]
fn reference_caption_splits() {
    let p = split_caption("I will slow down. ; Because the front vehicle is stopped.");
    assert_eq!(p.action, "I will slow down.");
    assert_eq!(p.justification, "Because the front vehicle is stopped.");
    assert_eq!(format!("{} ; {}", p.action, p.justification), p.raw.trim());
}

#[test]
fn echo_oracle_scores_one() {
    let items: Vec<_> = [
        "i will stop. ; because the front vehicle is stopped.",
        "i will change lanes to the left. ; because the front vehicle is slow.",
    ]
    .iter()
    .enumerate()
    .map(|(i, s)| (i.to_string(), s.to_string(), s.to_string()))
    .collect();
    assert_eq!(score_predictions(&items).unwrap().table.values(), [1.0; 6]);
}

proptest! {
    #[test]
    fn bleu_is_order_invariant_and_bounded(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<(Vec<u8>, Vec<u8>)> = (0..n).map(|_| (random_seq(&mut rng, 3), random_seq(&mut rng, 3))).collect();
        let (c, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let (mut cr, mut rr) = (c.clone(), r.clone());
        cr.reverse();
        rr.reverse();
        let a = bleu4(&c, &r).unwrap();
        let b = bleu4(&cr, &rr).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
        let rl = rouge_l_corpus(&c, &r).unwrap();
        prop_assert!((0.0..=1.0).contains(&rl));
    }

    #[test]
    fn perfect_scores_only_for_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, r) = (random_seq(&mut rng, 3), random_seq(&mut rng, 3));
        if rouge_l(&c, &r) == 1.0 {
            prop_assert_eq!(&c, &r);
        }
        if bleu4(&[c.clone()], &[r.clone()]).unwrap() == 1.0 {
            prop_assert_eq!(c.len(), r.len());
        }
        if c.len() >= 4 {
            prop_assert_eq!(bleu4(&[c.clone()], &[c.clone()]).unwrap(), 1.0);
        }
    }
}
