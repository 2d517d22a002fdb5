//! Candidate pre-filtering: the `k` nearest dialect terms of each German
//! lemma under Levenshtein distance.
//!
//! [`nearest_neighbors`] is exact. It visits vocabulary terms grouped by
//! length, closest lengths first, and uses the current k-th distance both to
//! stop early (the length difference is a lower bound on the distance) and to
//! abandon DP rows. The result is identical to [`nearest_neighbors_naive`],
//! including tie-breaking.

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stringsim::{levenshtein, levenshtein_within};
use crate::text::normalize;

/// Default neighbourhood size.
pub const DEFAULT_K: usize = 10;

/// Frequency-ranked term list: unique terms, frequency descending, ties in
/// lexicographic order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<(String, u64)>,
}

impl Vocabulary {
    /// Builds a vocabulary from raw `(term, frequency)` counts. Terms are
    /// normalized (NFC, optional lowercasing); entries that collide after
    /// normalization have their frequencies summed. Empty terms are dropped.
    pub fn from_counts<I, S>(counts: I, lowercase: bool) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut merged: HashMap<String, u64> = HashMap::new();
        for (term, freq) in counts {
            let term = normalize(term.as_ref().trim(), lowercase);
            if term.is_empty() {
                continue;
            }
            *merged.entry(term).or_default() += freq;
        }
        let mut entries: Vec<(String, u64)> = merged.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Vocabulary { entries }
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(t, _)| t.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keeps only the `n` most frequent entries.
    pub fn truncate(&mut self, n: usize) {
        self.entries.truncate(n);
    }

    /// Reads `term<TAB>frequency` lines. Blank lines and `#` comments are
    /// skipped.
    pub fn read_tsv(path: &Path, lowercase: bool) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut counts = Vec::new();
        for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(term), Some(freq), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::parse(path, lineno, "expected `term<TAB>frequency`"));
            };
            let freq: u64 = freq
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad frequency {freq:?}")))?;
            if term.trim().is_empty() {
                return Err(Error::parse(path, lineno, "empty term"));
            }
            counts.push((term.to_string(), freq));
        }
        Ok(Vocabulary::from_counts(counts, lowercase))
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (term, freq) in &self.entries {
            writeln!(out, "{term}\t{freq}")?;
        }
        Ok(())
    }
}

/// Counts a token stream into a vocabulary (lowercased, NFC), optionally
/// keeping only the `cap` most frequent terms.
pub fn extract_vocab<I, S>(tokens: I, cap: Option<usize>) -> Vocabulary
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for tok in tokens {
        *counts.entry(tok.as_ref().to_string()).or_default() += 1;
    }
    let mut vocab = Vocabulary::from_counts(counts, true);
    if let Some(cap) = cap {
        vocab.truncate(cap);
    }
    vocab
}

/// The nearest dialect terms of one lemma, sorted by (distance, term).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub lemma: String,
    pub candidates: Vec<(String, usize)>,
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    Ok(())
}

/// All-pairs reference implementation.
pub fn nearest_neighbors_naive(lemma: &str, vocab: &Vocabulary, k: usize) -> Result<CandidateSet> {
    check_k(k)?;
    let mut scored: Vec<(usize, &str)> = vocab.terms().map(|t| (levenshtein(lemma, t), t)).collect();
    scored.sort_unstable();
    scored.truncate(k);
    Ok(CandidateSet {
        lemma: lemma.to_string(),
        candidates: scored.into_iter().map(|(d, t)| (t.to_string(), d)).collect(),
    })
}

/// A vocabulary bucketed by term length (in characters) for pruned search.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    /// length -> terms of that length, as char vectors, with their string form.
    buckets: BTreeMap<usize, Vec<(Vec<char>, String)>>,
    max_len: usize,
}

impl NeighborIndex {
    pub fn new(vocab: &Vocabulary) -> Self {
        let mut buckets: BTreeMap<usize, Vec<(Vec<char>, String)>> = BTreeMap::new();
        for term in vocab.terms() {
            let chars: Vec<char> = term.chars().collect();
            buckets.entry(chars.len()).or_default().push((chars, term.to_string()));
        }
        let max_len = buckets.keys().next_back().copied().unwrap_or(0);
        NeighborIndex { buckets, max_len }
    }

    pub fn nearest(&self, lemma: &str, k: usize) -> Result<CandidateSet> {
        check_k(k)?;
        let query: Vec<char> = lemma.chars().collect();
        let len = query.len();
        // Max-heap on (distance, term): the top is the current worst kept entry.
        let mut heap: BinaryHeap<(usize, &str)> = BinaryHeap::with_capacity(k + 1);

        let reach = len.max(self.max_len);
        for delta in 0..=reach {
            if heap.len() == k && heap.peek().is_some_and(|&(worst, _)| delta > worst) {
                break;
            }
            let lengths = if delta == 0 {
                [Some(len), None]
            } else {
                [len.checked_sub(delta), Some(len + delta)]
            };
            for bucket_len in lengths.into_iter().flatten() {
                let Some(bucket) = self.buckets.get(&bucket_len) else {
                    continue;
                };
                for (chars, term) in bucket {
                    let limit = match heap.peek() {
                        Some(&(worst, _)) if heap.len() == k => worst,
                        _ => usize::MAX,
                    };
                    let Some(d) = levenshtein_within(&query, chars, limit) else {
                        continue;
                    };
                    if heap.len() < k {
                        heap.push((d, term.as_str()));
                    } else if (d, term.as_str()) < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push((d, term.as_str()));
                    }
                }
            }
        }

        let mut found = heap.into_vec();
        found.sort_unstable();
        Ok(CandidateSet {
            lemma: lemma.to_string(),
            candidates: found.into_iter().map(|(d, t)| (t.to_string(), d)).collect(),
        })
    }
}

/// The `k` vocabulary terms closest to `lemma`.
pub fn nearest_neighbors(lemma: &str, vocab: &Vocabulary, k: usize) -> Result<CandidateSet> {
    NeighborIndex::new(vocab).nearest(lemma, k)
}

/// One candidate set per lemma, in lemma order. Lemmas are processed in
/// parallel on the current rayon pool.
pub fn generate_candidates(
    lemmas: &Vocabulary,
    dialect_vocab: &Vocabulary,
    k: usize,
) -> Result<Vec<CandidateSet>> {
    check_k(k)?;
    let index = NeighborIndex::new(dialect_vocab);
    lemmas
        .entries()
        .par_iter()
        .map(|(lemma, _)| index.nearest(lemma, k))
        .collect()
}

/// Writes `lemma<TAB>candidate<TAB>distance` rows.
pub fn write_candidates<W: Write>(sets: &[CandidateSet], mut out: W) -> std::io::Result<()> {
    for set in sets {
        for (term, d) in &set.candidates {
            writeln!(out, "{}\t{term}\t{d}", set.lemma)?;
        }
    }
    Ok(())
}
