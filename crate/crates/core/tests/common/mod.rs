//! Deterministic synthetic text for integration and acceptance tests.
//!
//! Each domain is a small toy language: documents pick one latent topic,
//! sentences follow a fixed phrase grammar, content words are drawn from a
//! Zipfian lexicon that mixes topic-specific and domain-wide words, and verbs
//! agree with their subject noun. Function words are shared across domains.
#![allow(dead_code)]

pub mod gradcheck;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DETS: &[&str] = &["the", "a", "this", "that", "every", "some", "no", "its"];
const PREPS: &[&str] = &["of", "in", "on", "with", "from", "under", "near", "beyond"];
const ADVS: &[&str] = &["quickly", "slowly", "often", "rarely", "again", "still"];
const CONJ: &[&str] = &["and", "but", "so", "while"];

#[derive(Debug, Clone)]
pub struct ToyLanguage {
    pub domain: String,
    topics: usize,
    nouns: Vec<Vec<String>>,
    verbs: Vec<Vec<String>>,
    adjs: Vec<Vec<String>>,
    general_nouns: Vec<String>,
    general_verbs: Vec<String>,
    general_adjs: Vec<String>,
}

fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Index in `0..n` with probability proportional to `1/(i+1)^s`.
fn zipf(rng: &mut ChaCha8Rng, n: usize, s: f64) -> usize {
    let total: f64 = (1..=n).map(|i| (i as f64).powf(-s)).sum();
    let mut u = rng.random::<f64>() * total;
    for i in 0..n {
        u -= ((i + 1) as f64).powf(-s);
        if u <= 0.0 {
            return i;
        }
    }
    n - 1
}

impl ToyLanguage {
    /// `tag` prefixes every content word so two domains share only function words.
    pub fn new(domain: &str, tag: &str, topics: usize) -> Self {
        ToyLanguage {
            domain: domain.to_string(),
            topics,
            nouns: (0..topics).map(|t| words(&format!("{tag}n{t}x"), 40)).collect(),
            verbs: (0..topics).map(|t| words(&format!("{tag}v{t}x"), 20)).collect(),
            adjs: (0..topics).map(|t| words(&format!("{tag}a{t}x"), 14)).collect(),
            general_nouns: words(&format!("{tag}gn"), 60),
            general_verbs: words(&format!("{tag}gv"), 30),
            general_adjs: words(&format!("{tag}ga"), 20),
        }
    }

    fn noun(&self, rng: &mut ChaCha8Rng, topic: usize) -> (usize, String) {
        if rng.random::<f64>() < 0.75 {
            let i = zipf(rng, 40, 1.0);
            (i, self.nouns[topic][i].clone())
        } else {
            let i = zipf(rng, 60, 1.0);
            (i, self.general_nouns[i].clone())
        }
    }

    /// Verbs agree with the subject: the preferred verb is a function of the
    /// subject's lexicon index.
    fn verb(&self, rng: &mut ChaCha8Rng, topic: usize, subject: usize) -> String {
        if rng.random::<f64>() < 0.8 {
            let i = (subject * 7 + zipf(rng, 3, 2.0)) % 20;
            self.verbs[topic][i].clone()
        } else {
            self.general_verbs[zipf(rng, 30, 1.1)].clone()
        }
    }

    fn adj(&self, rng: &mut ChaCha8Rng, topic: usize) -> String {
        if rng.random::<f64>() < 0.7 {
            self.adjs[topic][zipf(rng, 14, 1.0)].clone()
        } else {
            self.general_adjs[zipf(rng, 20, 1.0)].clone()
        }
    }

    fn noun_phrase(&self, rng: &mut ChaCha8Rng, topic: usize, out: &mut Vec<String>) -> usize {
        out.push(DETS[zipf(rng, DETS.len(), 1.2)].to_string());
        if rng.random::<f64>() < 0.4 {
            out.push(self.adj(rng, topic));
        }
        let (i, n) = self.noun(rng, topic);
        out.push(n);
        i
    }

    fn clause(&self, rng: &mut ChaCha8Rng, topic: usize, out: &mut Vec<String>) {
        let subj = self.noun_phrase(rng, topic, out);
        out.push(self.verb(rng, topic, subj));
        if rng.random::<f64>() < 0.7 {
            self.noun_phrase(rng, topic, out);
        } else {
            out.push(ADVS[zipf(rng, ADVS.len(), 1.0)].to_string());
        }
        if rng.random::<f64>() < 0.35 {
            out.push(PREPS[zipf(rng, PREPS.len(), 1.0)].to_string());
            self.noun_phrase(rng, topic, out);
        }
    }

    pub fn document(&self, rng: &mut ChaCha8Rng) -> String {
        let topic = rng.random_range(0..self.topics);
        let sentences = rng.random_range(4..16);
        let mut out = Vec::new();
        for _ in 0..sentences {
            self.clause(rng, topic, &mut out);
            if rng.random::<f64>() < 0.25 {
                out.push(CONJ[rng.random_range(0..CONJ.len())].to_string());
                self.clause(rng, topic, &mut out);
            }
            out.push(".".to_string());
        }
        out.join(" ")
    }

    /// Documents totalling at least `min_tokens` whitespace tokens.
    pub fn documents(&self, min_tokens: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut docs = Vec::new();
        let mut total = 0;
        while total < min_tokens {
            let d = self.document(&mut rng);
            total += d.split_whitespace().count() + 1;
            docs.push(d);
        }
        docs
    }
}

/// Source-domain language used by most tests.
pub fn prose() -> ToyLanguage {
    ToyLanguage::new("prose", "p", 8)
}

/// A second domain sharing only function words with [`prose`].
pub fn technical() -> ToyLanguage {
    ToyLanguage::new("tech", "t", 6)
}
