//! Dictionary induction: candidate generation, feature scoring and
//! classification, plus dictionary statistics and TSV persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::candidates::{generate_candidates, Vocabulary};
use crate::classifier::{Forest, LabeledPair};
use crate::error::{Error, Result};
use crate::stringsim::FeatureExtractor;
use crate::text::normalize;

/// Dialect tag of a dictionary or dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DialectId {
    /// Alemannic
    Als,
    /// Bavarian
    Bar,
    /// Ripuarian
    Ksh,
    /// Rhine Franconian
    Pfl,
    /// Low German
    Nds,
    Other(String),
}

impl FromStr for DialectId {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "als" => DialectId::Als,
            "bar" => DialectId::Bar,
            "ksh" => DialectId::Ksh,
            "pfl" => DialectId::Pfl,
            "nds" => DialectId::Nds,
            other => DialectId::Other(other.to_string()),
        })
    }
}

impl fmt::Display for DialectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DialectId::Als => "als",
            DialectId::Bar => "bar",
            DialectId::Ksh => "ksh",
            DialectId::Pfl => "pfl",
            DialectId::Nds => "nds",
            DialectId::Other(s) => s,
        })
    }
}

/// Raw annotation of a word pair: binary, or one of the three lexeme classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawLabel {
    Translation,
    Inflected,
    Unrelated,
}

impl RawLabel {
    /// Accepts `1`/`0`, `translation`, `inflected` and `unrelated`
    /// (case-insensitive).
    pub fn parse(tag: &str) -> Option<Self> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "1" | "translation" => Some(RawLabel::Translation),
            "inflected" => Some(RawLabel::Inflected),
            "0" | "unrelated" => Some(RawLabel::Unrelated),
            _ => None,
        }
    }
}

/// Mapping from raw labels to the binary translation/non-translation target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelPolicy {
    /// Count inflected variants as translations.
    pub inflected_positive: bool,
}

impl LabelPolicy {
    pub fn map(&self, raw: RawLabel) -> bool {
        match raw {
            RawLabel::Translation => true,
            RawLabel::Unrelated => false,
            RawLabel::Inflected => self.inflected_positive,
        }
    }
}

/// Maps a raw label tag read from `path` at `line` to a binary label.
pub fn label_map(tag: &str, policy: LabelPolicy, path: &Path, line: usize) -> Result<bool> {
    RawLabel::parse(tag)
        .map(|raw| policy.map(raw))
        .ok_or_else(|| Error::parse(path, line, format!("unknown label {tag:?}")))
}

/// Reads `german<TAB>dialect<TAB>label` rows and computes their features.
/// Feature extraction runs in parallel; rows keep their file order.
pub fn read_labeled_pairs(
    path: &Path,
    policy: LabelPolicy,
    extractor: &FeatureExtractor,
) -> Result<Vec<LabeledPair>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let (german, dialect) = (fields[0].trim(), fields[1].trim());
        if german.is_empty() || dialect.is_empty() {
            return Err(Error::parse(path, lineno, "empty term"));
        }
        let label = label_map(fields[2], policy, path, lineno)?;
        raw.push((german.to_string(), dialect.to_string(), label));
    }
    Ok(raw
        .into_par_iter()
        .map(|(german, dialect, label)| LabeledPair {
            features: extractor.extract(&german, &dialect),
            german,
            dialect,
            label,
        })
        .collect())
}

/// Lemma -> sorted set of dialect variants. Every lemma has at least one
/// variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    pub dialect: DialectId,
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl Dictionary {
    pub fn new(dialect: DialectId) -> Self {
        Dictionary {
            dialect,
            entries: BTreeMap::new(),
        }
    }

    /// Adds a pair; returns `false` if it was already present.
    pub fn insert(&mut self, lemma: &str, variant: &str) -> bool {
        self.entries
            .entry(lemma.to_string())
            .or_default()
            .insert(variant.to_string())
    }

    pub fn variants(&self, lemma: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(lemma)
    }

    pub fn entries(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.entries
    }

    pub fn contains(&self, lemma: &str, variant: &str) -> bool {
        self.entries.get(lemma).is_some_and(|v| v.contains(variant))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .flat_map(|(l, vs)| vs.iter().map(move |v| (l.as_str(), v.as_str())))
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (lemma, variant) in self.pairs() {
            writeln!(out, "{lemma}\t{variant}")?;
        }
        Ok(())
    }

    /// Reads `lemma<TAB>variant` rows. Returns the dictionary and the number
    /// of duplicate rows that were dropped. Blank lines and `#` comments are
    /// skipped; terms are NFC-normalized and, if `lowercase`, lowercased.
    pub fn read_tsv(path: &Path, dialect: DialectId, lowercase: bool) -> Result<(Self, usize)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut dict = Dictionary::new(dialect);
        let mut duplicates = 0;
        for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected `lemma<TAB>variant`, found {} fields", fields.len()),
                ));
            }
            let lemma = normalize(fields[0].trim(), lowercase);
            let variant = normalize(fields[1].trim(), lowercase);
            if lemma.is_empty() || variant.is_empty() {
                return Err(Error::parse(path, lineno, "empty term"));
            }
            if !dict.insert(&lemma, &variant) {
                duplicates += 1;
            }
        }
        Ok((dict, duplicates))
    }
}

/// Dictionary size summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DictStats {
    pub lemma_count: usize,
    pub variant_count: usize,
    /// `variant_count / lemma_count`, 0 for an empty dictionary.
    pub variants_per_lemma: f64,
}

pub fn dictionary_stats(dict: &Dictionary) -> DictStats {
    let lemma_count = dict.entries.len();
    let variant_count: usize = dict.entries.values().map(BTreeSet::len).sum();
    DictStats {
        lemma_count,
        variant_count,
        variants_per_lemma: if lemma_count == 0 {
            0.0
        } else {
            variant_count as f64 / lemma_count as f64
        },
    }
}

/// Writes a `dialect lemmas variants v/l` table, one row per dictionary.
pub fn write_stats_tsv<W: Write>(dicts: &[&Dictionary], mut out: W) -> std::io::Result<()> {
    writeln!(out, "dialect\tlemmas\tvariants\tv_per_l")?;
    for dict in dicts {
        let s = dictionary_stats(dict);
        writeln!(
            out,
            "{}\t{}\t{}\t{:.2}",
            dict.dialect, s.lemma_count, s.variant_count, s.variants_per_lemma
        )?;
    }
    Ok(())
}

/// Settings of the induction pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InduceOptions {
    pub k: usize,
    pub threshold: f64,
    pub extractor: FeatureExtractor,
}

impl Default for InduceOptions {
    fn default() -> Self {
        InduceOptions {
            k: crate::candidates::DEFAULT_K,
            threshold: crate::classifier::DEFAULT_THRESHOLD,
            extractor: FeatureExtractor::default(),
        }
    }
}

/// Generates the `k` nearest dialect candidates of every lemma, scores each
/// pair with `forest` and keeps the pairs classified as translations.
pub fn induce_dictionary(
    lemmas: &Vocabulary,
    dialect_vocab: &Vocabulary,
    forest: &Forest,
    dialect: DialectId,
    options: &InduceOptions,
) -> Result<Dictionary> {
    forest.check_feature_order()?;
    if !(options.threshold > 0.0 && options.threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be in (0, 1), got {}",
            options.threshold
        )));
    }
    let sets = generate_candidates(lemmas, dialect_vocab, options.k)?;
    let accepted: Vec<Vec<(String, String)>> = sets
        .par_iter()
        .map(|set| {
            set.candidates
                .iter()
                .filter(|(term, _)| {
                    let fv = options.extractor.extract(&set.lemma, term);
                    forest.predict_proba(&fv) >= options.threshold
                })
                .map(|(term, _)| (set.lemma.clone(), term.clone()))
                .collect()
        })
        .collect();
    let mut dict = Dictionary::new(dialect);
    for (lemma, variant) in accepted.into_iter().flatten() {
        dict.insert(&lemma, &variant);
    }
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ForestParams, Node, Tree};

    fn constant_forest(positive: bool) -> Forest {
        let counts = if positive { [0.0, 1.0] } else { [1.0, 0.0] };
        Forest::from_trees(ForestParams::default(), vec![Tree::new(vec![Node::Leaf { counts }]).unwrap()])
            .unwrap()
    }

    fn vocab(terms: &[&str]) -> Vocabulary {
        Vocabulary::from_counts(terms.iter().map(|t| (*t, 1)), true)
    }

    #[test]
    fn label_mapping() {
        let p = Path::new("pairs.tsv");
        let default = LabelPolicy::default();
        let lenient = LabelPolicy { inflected_positive: true };
        assert!(label_map("translation", default, p, 1).unwrap());
        assert!(!label_map("unrelated", default, p, 1).unwrap());
        assert!(!label_map("inflected", default, p, 1).unwrap());
        assert!(label_map("inflected", lenient, p, 1).unwrap());
        assert!(label_map("1", default, p, 1).unwrap());
        let err = label_map("maybe", default, p, 7).unwrap_err();
        assert!(err.to_string().contains(":7:"), "{err}");
    }

    #[test]
    fn induce_pass_through_and_reject_all() {
        let lemmas = vocab(&["haus", "baum"]);
        let dialect = vocab(&["hus", "huus", "hous", "boom", "baam", "bam"]);
        let opts = InduceOptions { k: 3, ..InduceOptions::default() };
        let all = induce_dictionary(&lemmas, &dialect, &constant_forest(true), DialectId::Bar, &opts).unwrap();
        let stats = dictionary_stats(&all);
        assert_eq!((stats.lemma_count, stats.variant_count), (2, 6));
        let none = induce_dictionary(&lemmas, &dialect, &constant_forest(false), DialectId::Bar, &opts).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn induce_rejects_foreign_feature_order() {
        let forest = constant_forest(true);
        let text = String::from_utf8(forest.to_bytes())
            .unwrap()
            .replacen("\"DICE2\"", "\"DICE4\"", 1);
        let foreign = Forest::from_bytes(text.as_bytes()).unwrap();
        let err = induce_dictionary(&vocab(&["a"]), &vocab(&["a"]), &foreign, DialectId::Bar, &InduceOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::FeatureOrderMismatch { .. }));
    }

    #[test]
    fn stats() {
        let mut d = Dictionary::new(DialectId::Als);
        d.insert("a", "x");
        d.insert("a", "y");
        d.insert("b", "z");
        let s = dictionary_stats(&d);
        assert_eq!((s.lemma_count, s.variant_count, s.variants_per_lemma), (2, 3, 1.5));
        let e = dictionary_stats(&Dictionary::new(DialectId::Als));
        assert_eq!((e.lemma_count, e.variant_count, e.variants_per_lemma), (0, 0, 0.0));
    }

    #[test]
    fn tsv_roundtrip_duplicates_and_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();

        let mut d = Dictionary::new(DialectId::Bar);
        d.insert("haus", "hus");
        d.insert("haus", "huus");
        d.insert("baum", "boam");
        let path = dir.join("dict.tsv");
        let mut buf = Vec::new();
        d.write_tsv(&mut buf).unwrap();
        std::fs::write(&path, &buf).unwrap();
        let (back, dups) = Dictionary::read_tsv(&path, DialectId::Bar, true).unwrap();
        assert_eq!((back, dups), (d, 0));

        let dup = dir.join("dup.tsv");
        std::fs::write(&dup, "haus\thus\nhaus\thus\n").unwrap();
        let (back, dups) = Dictionary::read_tsv(&dup, DialectId::Bar, true).unwrap();
        assert_eq!((dictionary_stats(&back).variant_count, dups), (1, 1));

        let bad = dir.join("bad.tsv");
        std::fs::write(&bad, "haus\thus\nhaus\thus\tx\ty\n").unwrap();
        let err = Dictionary::read_tsv(&bad, DialectId::Bar, true).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn dialect_ids() {
        assert_eq!("BAR".parse::<DialectId>().unwrap(), DialectId::Bar);
        assert_eq!("gsw".parse::<DialectId>().unwrap().to_string(), "gsw");
    }
}
