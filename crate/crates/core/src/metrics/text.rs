//! Corpus text metrics: BLEU-4, ROUGE-L, METEOR (exact + stem matching)
//! and CIDEr-D. Every score is returned on a 0..100 scale, except CIDEr-D
//! which is the usual x10 consensus score times 100.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use super::stable_sum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEvalPair {
    pub id: String,
    pub candidate: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextScores {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider_d: f64,
}

/// Lowercase, split on anything that is not an ASCII letter or digit.
pub fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit()))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

type Ngram<'a> = &'a [String];

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Ngram<'_>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

struct Tokenized {
    hyp: Vec<String>,
    refs: Vec<Vec<String>>,
}

fn tokenized(pairs: &[TextEvalPair]) -> Result<Vec<Tokenized>> {
    if pairs.is_empty() {
        return Err(Error::Metric("empty corpus".into()));
    }
    pairs
        .iter()
        .map(|p| {
            if p.references.is_empty() {
                return Err(Error::Metric(format!("pair '{}' has no references", p.id)));
            }
            Ok(Tokenized {
                hyp: tokenize(&p.candidate),
                refs: p.references.iter().map(|r| tokenize(r)).collect(),
            })
        })
        .collect()
}

/// Corpus BLEU-4, uniform weights, closest-reference brevity penalty, no
/// smoothing: any zero n-gram precision gives 0.
fn bleu4(corpus: &[Tokenized]) -> f64 {
    let mut num = [0usize; 4];
    let mut den = [0usize; 4];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for t in corpus {
        for n in 1..=4 {
            let h = ngram_counts(&t.hyp, n);
            let mut max_ref: HashMap<Ngram<'_>, usize> = HashMap::new();
            for r in &t.refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            num[n - 1] += h
                .iter()
                .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
            den[n - 1] += t.hyp.len().saturating_sub(n - 1).max(1);
        }
        let hl = t.hyp.len();
        hyp_len += hl;
        ref_len += t
            .refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&rl| (rl.abs_diff(hl), rl))
            .unwrap_or(0);
    }
    if num.iter().any(|&n| n == 0) {
        return 0.0;
    }
    let log_p: f64 = (0..4).map(|i| 0.25 * (num[i] as f64 / den[i] as f64).ln()).sum();
    let bp = if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    bp * log_p.exp()
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_l_pair(hyp: &[String], refs: &[Vec<String>]) -> f64 {
    refs.iter()
        .map(|r| {
            if hyp.is_empty() || r.is_empty() {
                return 0.0;
            }
            let l = lcs(r, hyp) as f64;
            let p = l / hyp.len() as f64;
            let rc = l / r.len() as f64;
            if p + rc == 0.0 {
                0.0
            } else {
                2.0 * p * rc / (p + rc)
            }
        })
        .fold(0.0, f64::max)
}

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Greedy one-to-one matching: hypothesis positions from last to first,
/// each taking the last still-free reference position with the same key.
fn greedy_match(
    hyp: &[(usize, String)],
    reference: &[(usize, String)],
    matches: &mut Vec<(usize, usize)>,
) -> (Vec<(usize, String)>, Vec<(usize, String)>) {
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, (_, w)) in reference.iter().enumerate() {
        positions.entry(w.as_str()).or_default().push(j);
    }
    let mut hyp_used = BTreeSet::new();
    let mut ref_used = BTreeSet::new();
    for i in (0..hyp.len()).rev() {
        if let Some(j) = positions.get_mut(hyp[i].1.as_str()).and_then(|p| p.pop()) {
            hyp_used.insert(i);
            ref_used.insert(j);
            matches.push((hyp[i].0, reference[j].0));
        }
    }
    let rest_h = hyp.iter().enumerate().filter(|(i, _)| !hyp_used.contains(i)).map(|(_, p)| p.clone()).collect();
    let rest_r = reference.iter().enumerate().filter(|(j, _)| !ref_used.contains(j)).map(|(_, p)| p.clone()).collect();
    (rest_h, rest_r)
}

fn count_chunks(matches: &[(usize, usize)]) -> usize {
    let mut chunks = 1;
    for w in matches.windows(2) {
        if !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1) {
            chunks += 1;
        }
    }
    chunks
}

fn meteor_single(hyp: &[String], reference: &[String], stemmer: &Stemmer) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let enum_h: Vec<(usize, String)> = hyp.iter().cloned().enumerate().collect();
    let enum_r: Vec<(usize, String)> = reference.iter().cloned().enumerate().collect();
    let mut matches = Vec::new();
    let (rest_h, rest_r) = greedy_match(&enum_h, &enum_r, &mut matches);
    let stem = |v: Vec<(usize, String)>| -> Vec<(usize, String)> {
        v.into_iter().map(|(i, w)| (i, stemmer.stem(&w).into_owned())).collect()
    };
    greedy_match(&stem(rest_h), &stem(rest_r), &mut matches);
    let m = matches.len();
    if m == 0 {
        return 0.0;
    }
    matches.sort_by_key(|p| p.0);
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let frag = count_chunks(&matches) as f64 / m as f64;
    let penalty = METEOR_GAMMA * frag.powf(METEOR_BETA);
    (1.0 - penalty) * fmean
}

fn meteor(corpus: &[Tokenized]) -> f64 {
    let stemmer = Stemmer::create(Algorithm::English);
    let per_pair = corpus
        .iter()
        .map(|t| {
            t.refs
                .iter()
                .map(|r| meteor_single(&t.hyp, r, &stemmer))
                .fold(0.0, f64::max)
        })
        .collect();
    stable_sum(per_pair) / corpus.len() as f64
}

pub const CIDER_N: usize = 4;
pub const CIDER_SIGMA: f64 = 6.0;

struct TfIdf {
    vec: [BTreeMap<Vec<String>, f64>; CIDER_N],
    norm: [f64; CIDER_N],
    /// Bigram count, which the reference scorer uses as the length.
    length: usize,
}

fn all_ngrams(tokens: &[String]) -> BTreeMap<Vec<String>, usize> {
    let mut m = BTreeMap::new();
    for n in 1..=CIDER_N {
        if tokens.len() >= n {
            for w in tokens.windows(n) {
                *m.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
    }
    m
}

fn tfidf(counts: &BTreeMap<Vec<String>, usize>, df: &HashMap<Vec<String>, usize>, log_n: f64) -> TfIdf {
    let mut out = TfIdf {
        vec: Default::default(),
        norm: [0.0; CIDER_N],
        length: 0,
    };
    for (g, &tf) in counts {
        let d = (df.get(g).copied().unwrap_or(0).max(1) as f64).ln();
        let n = g.len() - 1;
        let w = tf as f64 * (log_n - d);
        out.vec[n].insert(g.clone(), w);
        out.norm[n] += w * w;
        if n == 1 {
            out.length += tf;
        }
    }
    for v in &mut out.norm {
        *v = v.sqrt();
    }
    out
}

fn cider_sim(h: &TfIdf, r: &TfIdf) -> [f64; CIDER_N] {
    let delta = h.length as f64 - r.length as f64;
    let gauss = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut val = [0.0; CIDER_N];
    for n in 0..CIDER_N {
        for (g, &vh) in &h.vec[n] {
            let vr = r.vec[n].get(g).copied().unwrap_or(0.0);
            val[n] += vh.min(vr) * vr;
        }
        if h.norm[n] != 0.0 && r.norm[n] != 0.0 {
            val[n] /= h.norm[n] * r.norm[n];
        }
        val[n] *= gauss;
    }
    val
}

/// CIDEr-D with document frequencies over the corpus references.
fn cider_d(corpus: &[Tokenized]) -> f64 {
    let mut df: HashMap<Vec<String>, usize> = HashMap::new();
    let ref_counts: Vec<Vec<BTreeMap<Vec<String>, usize>>> =
        corpus.iter().map(|t| t.refs.iter().map(|r| all_ngrams(r)).collect()).collect();
    for refs in &ref_counts {
        let distinct: BTreeSet<&Vec<String>> = refs.iter().flat_map(|m| m.keys()).collect();
        for g in distinct {
            *df.entry(g.clone()).or_insert(0) += 1;
        }
    }
    let log_n = (corpus.len() as f64).ln();
    let mut per_pair = Vec::with_capacity(corpus.len());
    for (t, refs) in corpus.iter().zip(&ref_counts) {
        let h = tfidf(&all_ngrams(&t.hyp), &df, log_n);
        let mut acc = [0.0; CIDER_N];
        for r in refs {
            let s = cider_sim(&h, &tfidf(r, &df, log_n));
            for n in 0..CIDER_N {
                acc[n] += s[n];
            }
        }
        let mean = acc.iter().sum::<f64>() / CIDER_N as f64;
        per_pair.push(mean / refs.len() as f64 * 10.0);
    }
    stable_sum(per_pair) / corpus.len() as f64
}

pub fn score_text_corpus(pairs: &[TextEvalPair]) -> Result<TextScores> {
    let corpus = tokenized(pairs)?;
    let rouge = stable_sum(corpus.iter().map(|t| rouge_l_pair(&t.hyp, &t.refs)).collect()) / corpus.len() as f64;
    Ok(TextScores {
        bleu4: bleu4(&corpus) * 100.0,
        rouge_l: rouge * 100.0,
        meteor: meteor(&corpus) * 100.0,
        cider_d: cider_d(&corpus) * 100.0,
    })
}
