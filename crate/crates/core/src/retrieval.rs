//! BM25 retrieval, dictionary-based query expansion and the nDCG / recall
//! evaluation used to measure what the expansion buys.
//!
//! Scoring uses the Lucene-style BM25 formulation
//!
//! ```text
//! score(q, d) = sum over query tokens t of
//!     idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
//! idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
//! ```
//!
//! with `k1 = 0.9` and `b = 0.4` by default. A token repeated in the query
//! contributes once per occurrence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Dictionary;
use crate::text::normalize;

/// Lowercase, NFC, split on every character that is not alphanumeric.
/// No stemming and no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text, true)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(rename = "contents")]
    pub text: String,
}

/// Reads a JSON-lines collection with `id` and `contents` fields.
pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, idx + 1, format!("bad document: {e}")))?;
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

/// Inverted index over a document collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    /// term -> (doc number, term frequency), doc numbers ascending
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
}

impl Index {
    /// Indexes `docs` in order. Duplicate ids are rejected.
    pub fn build(docs: &[Document]) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(docs.len());
        for (n, doc) in docs.iter().enumerate() {
            if lookup.insert(doc.id.clone(), n as u32).is_some() {
                return Err(Error::DuplicateDocument(doc.id.clone()));
            }
        }
        let tokenized: Vec<Vec<String>> = docs.par_iter().map(|d| tokenize(&d.text)).collect();
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (n, tokens) in tokenized.iter().enumerate() {
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push((n as u32, count));
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        Ok(Index {
            doc_ids: docs.iter().map(|d| d.id.clone()).collect(),
            doc_lengths,
            avg_doc_length,
            postings,
            lookup,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, id: &str) -> Option<u32> {
        self.lookup.get(id).map(|&n| self.doc_lengths[n as usize])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.lookup.contains_key(id)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    #[inline]
    fn term_score(&self, idf: f64, tf: u32, doc: u32, params: &Bm25Params) -> f64 {
        let tf = f64::from(tf);
        let dl = f64::from(self.doc_lengths[doc as usize]);
        idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * dl / self.avg_doc_length))
    }

    /// BM25 score of one document for already-tokenized query terms.
    pub fn bm25_score(&self, query: &[String], doc_id: &str, params: &Bm25Params) -> Result<f64> {
        let &doc = self
            .lookup
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
        let mut score = 0.0;
        for term in query {
            let postings = self.postings(term);
            if let Ok(pos) = postings.binary_search_by_key(&doc, |&(d, _)| d) {
                score += self.term_score(self.idf(postings.len()), postings[pos].1, doc, params);
            }
        }
        Ok(score)
    }

    /// Top `k` documents by score, ties by id ascending. Documents scoring 0
    /// are left out.
    pub fn search(&self, query: &str, k: usize, params: &Bm25Params) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in tokenize(query) {
            let postings = self.postings(&term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(postings.len());
            for &(doc, tf) in postings {
                *scores.entry(doc).or_default() += self.term_score(idf, tf, doc, params);
            }
        }
        let mut ranked: Vec<(&str, f64)> = scores
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(d, s)| (self.doc_ids[d as usize].as_str(), s))
            .collect();
        ranked.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(k);
        Ok(ranked.into_iter().map(|(d, s)| (d.to_string(), s)).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("index serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut index: Index =
            serde_json::from_slice(bytes).map_err(|e| Error::Schema(format!("bad index: {e}")))?;
        if index.doc_lengths.len() != index.doc_ids.len() {
            return Err(Error::Schema("index length table does not match document ids".into()));
        }
        for (n, id) in index.doc_ids.iter().enumerate() {
            if index.lookup.insert(id.clone(), n as u32).is_some() {
                return Err(Error::DuplicateDocument(id.clone()));
            }
        }
        let docs = index.doc_ids.len() as u32;
        if index.postings.values().flatten().any(|&(d, _)| d >= docs) {
            return Err(Error::Schema("posting references a missing document".into()));
        }
        Ok(index)
    }
}

/// Appends every dictionary variant of every query token to the query text,
/// skipping variants that equal a token already in the query or already
/// appended. Returns the expanded query and whether anything was appended.
pub fn expand_query(query: &str, dict: &Dictionary) -> (String, bool) {
    let tokens = tokenize(query);
    let mut seen: BTreeSet<String> = tokens.iter().cloned().collect();
    let mut appended = Vec::new();
    for token in &tokens {
        let Some(variants) = dict.variants(token) else {
            continue;
        };
        for v in variants {
            if seen.insert(v.clone()) {
                appended.push(v.as_str());
            }
        }
    }
    if appended.is_empty() {
        (query.to_string(), false)
    } else {
        (format!("{query} {}", appended.join(" ")), true)
    }
}

/// Relevance judgments: query id -> doc id -> grade.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    /// Adds a judgment; duplicate (query, doc) keys are an error.
    pub fn insert(&mut self, qid: &str, doc_id: &str, grade: u32) -> Result<()> {
        let prev = self
            .judgments
            .entry(qid.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade);
        if prev.is_some() {
            return Err(Error::InvalidArgument(format!("duplicate judgment for ({qid}, {doc_id})")));
        }
        Ok(())
    }

    pub fn grades(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(qid)
    }

    pub fn grade(&self, qid: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(qid)
            .and_then(|g| g.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn relevant_count(&self, qid: &str) -> usize {
        self.grades(qid).map_or(0, |g| g.values().filter(|&&r| r > 0).count())
    }

    /// Reads `qid 0 docid rel` lines (trec format).
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut qrels = Qrels::default();
        for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::parse(path, lineno, "expected `qid 0 docid rel`"));
            }
            let grade: u32 = fields[3]
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad relevance {:?}", fields[3])))?;
            qrels
                .insert(fields[0], fields[2], grade)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        }
        Ok(qrels)
    }
}

/// nDCG@k with linear gains: `sum rel_i / log2(i + 1)` over the first `k`
/// ranks, divided by the same sum over the ideal ordering of the judged
/// grades. 0 when the query has no relevant document.
pub fn ndcg_at_k(ranking: &[String], qrels: &Qrels, qid: &str, k: usize) -> f64 {
    let Some(grades) = qrels.grades(qid) else {
        return 0.0;
    };
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let mut ideal: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &g)| f64::from(g) * discount(i)).sum();
    if idcg == 0.0 {
        return 0.0;
    }
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| f64::from(qrels.grade(qid, d)) * discount(i))
        .sum();
    dcg / idcg
}

/// Fraction of the relevant documents found in the first `k` ranks.
pub fn recall_at_k(ranking: &[String], qrels: &Qrels, qid: &str, k: usize) -> f64 {
    let relevant = qrels.relevant_count(qid);
    if relevant == 0 {
        return 0.0;
    }
    let mut seen = BTreeSet::new();
    let hits = ranking
        .iter()
        .take(k)
        .filter(|d| qrels.grade(qid, d) > 0 && seen.insert(d.as_str()))
        .count();
    hits as f64 / relevant as f64
}

/// Reads `qid<TAB>text` lines, keeping file order.
pub fn read_queries(path: &Path) -> Result<Vec<(String, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut queries = Vec::new();
    let mut ids = BTreeSet::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let Some((qid, text)) = line.split_once('\t') else {
            return Err(Error::parse(path, idx + 1, "expected `qid<TAB>text`"));
        };
        if !ids.insert(qid.to_string()) {
            return Err(Error::parse(path, idx + 1, format!("duplicate query id {qid:?}")));
        }
        queries.push((qid.to_string(), text.to_string()));
    }
    Ok(queries)
}

/// Ranked results per query, in query order.
pub type Run = Vec<(String, Vec<(String, f64)>)>;

/// Writes `qid Q0 docid rank score tag` lines.
pub fn write_run<W: Write>(run: &Run, tag: &str, mut out: W) -> std::io::Result<()> {
    for (qid, ranking) in run {
        for (rank, (doc, score)) in ranking.iter().enumerate() {
            writeln!(out, "{qid} Q0 {doc} {} {score:.6} {tag}", rank + 1)?;
        }
    }
    Ok(())
}

/// Reads a trec run; documents of each query are ordered by rank. Queries
/// appear in order of first occurrence.
pub fn read_run(path: &Path) -> Result<Run> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut by_query: HashMap<String, Vec<(usize, String, f64)>> = HashMap::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 6 {
            return Err(Error::parse(path, lineno, "expected `qid Q0 docid rank score tag`"));
        }
        let rank: usize = f[3]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad rank {:?}", f[3])))?;
        let score: f64 = f[4]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad score {:?}", f[4])))?;
        if !by_query.contains_key(f[0]) {
            order.push(f[0].to_string());
        }
        by_query.entry(f[0].to_string()).or_default().push((rank, f[2].to_string(), score));
    }
    Ok(order
        .into_iter()
        .map(|qid| {
            let mut rows = by_query.remove(&qid).unwrap_or_default();
            rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            (qid, rows.into_iter().map(|(_, d, s)| (d, s)).collect())
        })
        .collect())
}

/// Per-query and mean nDCG@10 / Recall@100 of a run. Judged queries missing
/// from the run count as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct IrScores {
    pub per_query: Vec<(String, f64, f64)>,
    pub ndcg10: f64,
    pub recall100: f64,
}

pub const NDCG_DEPTH: usize = 10;
pub const RECALL_DEPTH: usize = 100;

pub fn evaluate_run(run: &Run, qrels: &Qrels) -> IrScores {
    let by_query: HashMap<&str, Vec<String>> = run
        .iter()
        .map(|(q, r)| (q.as_str(), r.iter().map(|(d, _)| d.clone()).collect()))
        .collect();
    let empty = Vec::new();
    let per_query: Vec<(String, f64, f64)> = qrels
        .query_ids()
        .map(|q| {
            let ranking = by_query.get(q).unwrap_or(&empty);
            (
                q.to_string(),
                ndcg_at_k(ranking, qrels, q, NDCG_DEPTH),
                recall_at_k(ranking, qrels, q, RECALL_DEPTH),
            )
        })
        .collect();
    let n = per_query.len().max(1) as f64;
    IrScores {
        ndcg10: per_query.iter().map(|r| r.1).sum::<f64>() / n,
        recall100: per_query.iter().map(|r| r.2).sum::<f64>() / n,
        per_query,
    }
}

/// Retrieval inputs for one dialect.
pub struct QeDataset<'a> {
    pub name: String,
    pub index: &'a Index,
    pub queries: &'a [(String, String)],
    pub qrels: &'a Qrels,
    pub dict: &'a Dictionary,
}

/// One row of the expansion report. Counts are `f64` because the `ALL` row
/// holds means over dialects.
#[derive(Debug, Clone, PartialEq)]
pub struct QeRow {
    pub name: String,
    pub ndcg10_base: f64,
    pub ndcg10_qe: f64,
    pub recall100_base: f64,
    pub recall100_qe: f64,
    pub n_aug: f64,
    pub n_query: f64,
    pub pct_aug: f64,
}

fn relative(delta: f64, base: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        delta / base
    }
}

impl QeRow {
    pub fn ndcg10_delta(&self) -> f64 {
        self.ndcg10_qe - self.ndcg10_base
    }

    pub fn ndcg10_delta_pct(&self) -> f64 {
        relative(self.ndcg10_delta(), self.ndcg10_base)
    }

    pub fn recall100_delta(&self) -> f64 {
        self.recall100_qe - self.recall100_base
    }

    pub fn recall100_delta_pct(&self) -> f64 {
        relative(self.recall100_delta(), self.recall100_base)
    }
}

/// Per-dialect rows plus a final `ALL` row. The `ALL` row is the unweighted
/// mean of the dialect rows for every column (including the augmentation
/// percentage); its deltas are recomputed from the mean base and expanded
/// scores.
#[derive(Debug, Clone, PartialEq)]
pub struct QeReport {
    pub rows: Vec<QeRow>,
}

impl QeReport {
    pub fn row(&self, name: &str) -> Option<&QeRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "dialect\tndcg10_bm25\tndcg10_qe\tndcg10_delta\tndcg10_delta_pct\t\
             recall100_bm25\trecall100_qe\trecall100_delta\trecall100_delta_pct\t\
             n_aug\tn_query\tpct_aug"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{:.4}\t{:.4}\t{:.4}\t{:.2}\t{:.4}\t{:.4}\t{:.4}\t{:.2}\t{}\t{}\t{:.2}",
                r.name,
                r.ndcg10_base,
                r.ndcg10_qe,
                r.ndcg10_delta(),
                100.0 * r.ndcg10_delta_pct(),
                r.recall100_base,
                r.recall100_qe,
                r.recall100_delta(),
                100.0 * r.recall100_delta_pct(),
                r.n_aug,
                r.n_query,
                100.0 * r.pct_aug,
            )?;
        }
        Ok(())
    }
}

/// Runs `queries` against `index`, optionally expanding them with `dict`.
/// Returns the run and the number of queries that were expanded.
pub fn run_queries(
    index: &Index,
    queries: &[(String, String)],
    dict: Option<&Dictionary>,
    depth: usize,
    params: &Bm25Params,
) -> Result<(Run, usize)> {
    type Ranked = (String, Vec<(String, f64)>);
    let results: Vec<(Ranked, bool)> = queries
        .par_iter()
        .map(|(qid, text)| {
            let (text, augmented) = match dict {
                Some(d) => expand_query(text, d),
                None => (text.clone(), false),
            };
            Ok(((qid.clone(), index.search(&text, depth, params)?), augmented))
        })
        .collect::<Result<_>>()?;
    let n_aug = results.iter().filter(|(_, a)| *a).count();
    Ok((results.into_iter().map(|(r, _)| r).collect(), n_aug))
}

fn check_ids(ds: &QeDataset<'_>) -> Result<()> {
    let query_ids: BTreeSet<&str> = ds.queries.iter().map(|(q, _)| q.as_str()).collect();
    let mut problems = Vec::new();
    for (qid, _) in ds.queries {
        if ds.qrels.relevant_count(qid) == 0 {
            problems.push(format!("query {qid} has no relevant judgment"));
        }
    }
    for qid in ds.qrels.query_ids() {
        if !query_ids.contains(qid) {
            problems.push(format!("judged query {qid} missing from queries"));
            continue;
        }
        for doc in ds.qrels.grades(qid).into_iter().flat_map(|g| g.keys()) {
            if !ds.index.contains(doc) {
                problems.push(format!("query {qid}: judged document {doc} not in collection"));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::IdMismatch {
            dataset: ds.name.clone(),
            details: problems.join("; "),
        })
    }
}

/// Scores of a run restricted to the given queries (in the given order).
fn mean_scores(run: &Run, qrels: &Qrels) -> (f64, f64) {
    let n = run.len().max(1) as f64;
    let (mut ndcg, mut recall) = (0.0, 0.0);
    for (qid, ranking) in run {
        let docs: Vec<String> = ranking.iter().map(|(d, _)| d.clone()).collect();
        ndcg += ndcg_at_k(&docs, qrels, qid, NDCG_DEPTH);
        recall += recall_at_k(&docs, qrels, qid, RECALL_DEPTH);
    }
    (ndcg / n, recall / n)
}

/// Base vs expanded BM25 for every dialect, plus the `ALL` row.
pub fn qe_experiment(datasets: &[QeDataset<'_>], params: &Bm25Params) -> Result<QeReport> {
    let mut rows = Vec::with_capacity(datasets.len() + 1);
    for ds in datasets {
        check_ids(ds)?;
        let depth = RECALL_DEPTH.max(NDCG_DEPTH);
        let (base_run, _) = run_queries(ds.index, ds.queries, None, depth, params)?;
        let (qe_run, n_aug) = run_queries(ds.index, ds.queries, Some(ds.dict), depth, params)?;
        let (ndcg_b, recall_b) = mean_scores(&base_run, ds.qrels);
        let (ndcg_q, recall_q) = mean_scores(&qe_run, ds.qrels);
        let n_query = ds.queries.len();
        rows.push(QeRow {
            name: ds.name.clone(),
            ndcg10_base: ndcg_b,
            ndcg10_qe: ndcg_q,
            recall100_base: recall_b,
            recall100_qe: recall_q,
            n_aug: n_aug as f64,
            n_query: n_query as f64,
            pct_aug: if n_query == 0 { 0.0 } else { n_aug as f64 / n_query as f64 },
        });
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let mean = |f: fn(&QeRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let all = QeRow {
            name: crate::bli_eval::ALL_SOURCES.to_string(),
            ndcg10_base: mean(|r| r.ndcg10_base),
            ndcg10_qe: mean(|r| r.ndcg10_qe),
            recall100_base: mean(|r| r.recall100_base),
            recall100_qe: mean(|r| r.recall100_qe),
            n_aug: mean(|r| r.n_aug),
            n_query: mean(|r| r.n_query),
            pct_aug: mean(|r| r.pct_aug),
        };
        rows.push(all);
    }
    Ok(QeReport { rows })
}
