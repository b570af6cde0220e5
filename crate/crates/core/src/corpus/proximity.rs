use std::collections::{HashMap, HashSet};

use super::encode::Corpus;
use super::vocab::{Vocab, UNK};
use crate::error::{KiError, Result};

fn top_words(
    corpus: &Corpus,
    vocab: &Vocab,
    top_n: usize,
    stopwords: &HashSet<String>,
) -> Result<HashSet<String>> {
    let mut counts: HashMap<u32, u64> = HashMap::new();
    for seq in &corpus.sequences {
        for &id in &seq.ids {
            if Vocab::is_special(id) || id == UNK {
                continue;
            }
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts
        .into_iter()
        .filter_map(|(id, n)| vocab.token(id).map(|w| (w, n)))
        .filter(|(w, _)| !stopwords.contains(*w))
        .collect();
    if ranked.is_empty() {
        return Err(KiError::EmptyCorpus(
            "no words left after stopword removal".into(),
        ));
    }
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked
        .into_iter()
        .take(top_n)
        .map(|(w, _)| w.to_string())
        .collect())
}

/// Vocabulary overlap of two corpora: the shared fraction of their `top_n`
/// most frequent non-stopword words, normalized by the smaller word set.
pub fn domain_proximity(
    a: &Corpus,
    vocab_a: &Vocab,
    b: &Corpus,
    vocab_b: &Vocab,
    top_n: usize,
    stopwords: &HashSet<String>,
) -> Result<f64> {
    if top_n == 0 {
        return Err(KiError::Config("top_n must be positive".into()));
    }
    let set_a = top_words(a, vocab_a, top_n, stopwords)?;
    let set_b = top_words(b, vocab_b, top_n, stopwords)?;
    let shared = set_a.intersection(&set_b).count();
    Ok(shared as f64 / set_a.len().min(set_b.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::encode::{encode_corpus, EncodeOptions};
    use crate::corpus::vocab::build_vocab;

    fn make(text: &str) -> (Vocab, Corpus) {
        let vocab = build_vocab([text], 100).unwrap();
        let c = encode_corpus([text], &vocab, &EncodeOptions::new(2, 0)).unwrap();
        (vocab, c)
    }

    #[test]
    fn identical_and_disjoint() {
        let none = HashSet::new();
        let (va, a) = make("p q r s p q r p q p");
        assert_eq!(domain_proximity(&a, &va, &a, &va, 3, &none).unwrap(), 1.0);
        let (vb, b) = make("x y z x y z x y z");
        assert_eq!(domain_proximity(&a, &va, &b, &vb, 3, &none).unwrap(), 0.0);
    }

    #[test]
    fn half_overlap_by_construction() {
        let none = HashSet::new();
        // A's top 4: w1..w4 ; B's top 4: w1 w2 x y
        let (va, a) = make("w1 w1 w1 w2 w2 w2 w3 w3 w3 w4 w4 w4 rare");
        let (vb, b) = make("w1 w1 w1 w2 w2 w2 x x x y y y w3");
        let p = domain_proximity(&a, &va, &b, &vb, 4, &none).unwrap();
        assert_eq!(p, 0.5);
        assert_eq!(p, domain_proximity(&b, &vb, &a, &va, 4, &none).unwrap());
    }

    #[test]
    fn stopwords_are_excluded() {
        let stop: HashSet<String> = ["the".to_string()].into();
        let (va, a) = make("the the the cat");
        let (vb, b) = make("the the the dog");
        assert_eq!(domain_proximity(&a, &va, &b, &vb, 2, &stop).unwrap(), 0.0);
        let (vc, c) = make("the the the the");
        assert!(matches!(
            domain_proximity(&a, &va, &c, &vc, 2, &stop),
            Err(KiError::EmptyCorpus(_))
        ));
    }
}
