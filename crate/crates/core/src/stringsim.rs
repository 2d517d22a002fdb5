//! Orthographic similarity measures between a German lemma and a dialect
//! candidate, and the fixed-order feature vector built from them.
//!
//! All measures work on Unicode scalar values (`char`), never on bytes, so
//! umlauts and `ß` count as single characters. Every function is total on
//! arbitrary strings, including the empty string.

use std::cmp::{max, min};
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phonetics;
use crate::text::normalize;

/// Number of features in a [`FeatureVector`].
pub const FEATURE_COUNT: usize = 12;

/// Frozen feature order. Serialized models record this list and are rejected
/// on load if it differs.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "DICE2", "DICE3", "XDICE", "XXDICE", "PREFIX", "LCSR", "BISIM", "TRISIM", "NED", "BIDIST",
    "TRIDIST", "PHONDIST",
];

/// Slots `0..SIMILARITY_SLOTS` are similarities (1 on identical input), the
/// remaining slots are distances (0 on identical input).
pub const SIMILARITY_SLOTS: usize = 8;

/// Placeholder for the dropped middle character of an extended trigram.
pub const XGRAM_PLACEHOLDER: char = '_';

/// Which grams the Dice coefficient is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKind {
    Bigram,
    Trigram,
    /// Trigrams with the middle character removed.
    ExtendedTrigram,
}

/// Sliding-window character n-grams of `s`. Empty if `s` has fewer than `n`
/// characters.
pub fn ngrams(s: &str, n: usize) -> Result<Vec<String>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n-gram order must be >= 2, got {n}")));
    }
    let chars: Vec<char> = s.chars().collect();
    Ok(chars.windows(n).map(|w| w.iter().collect()).collect())
}

/// Extended trigrams: each trigram `abc` becomes `a_c`.
pub fn xgrams(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    chars
        .windows(3)
        .map(|w| [w[0], XGRAM_PLACEHOLDER, w[2]].iter().collect())
        .collect()
}

fn chars_of(s: &str) -> Vec<char> {
    s.chars().collect()
}

fn window_set<const N: usize>(chars: &[char]) -> Vec<[char; N]> {
    let mut grams: Vec<[char; N]> = chars
        .windows(N)
        .map(|w| {
            let mut g = ['\0'; N];
            g.copy_from_slice(w);
            g
        })
        .collect();
    grams.sort_unstable();
    grams.dedup();
    grams
}

fn xgram_set(chars: &[char]) -> Vec<[char; 2]> {
    let mut grams: Vec<[char; 2]> = chars.windows(3).map(|w| [w[0], w[2]]).collect();
    grams.sort_unstable();
    grams.dedup();
    grams
}

/// Size of the intersection of two sorted, deduplicated slices.
fn sorted_intersection<T: Ord>(a: &[T], b: &[T]) -> usize {
    let (mut i, mut j, mut shared) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared
}

fn dice_of_sets<T: Ord>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    2.0 * sorted_intersection(a, b) as f64 / (a.len() + b.len()) as f64
}

fn dice_chars(x: &[char], y: &[char], kind: GramKind) -> f64 {
    if x == y {
        return 1.0;
    }
    match kind {
        GramKind::Bigram => dice_of_sets(&window_set::<2>(x), &window_set::<2>(y)),
        GramKind::Trigram => dice_of_sets(&window_set::<3>(x), &window_set::<3>(y)),
        GramKind::ExtendedTrigram => dice_of_sets(&xgram_set(x), &xgram_set(y)),
    }
}

/// Dice coefficient over the deduplicated gram sets of `x` and `y`.
///
/// Returns 1 for identical strings and 0 when either gram set is empty.
pub fn dice(x: &str, y: &str, kind: GramKind) -> f64 {
    dice_chars(&chars_of(x), &chars_of(y), kind)
}

/// Last 0-based start position of each distinct bigram, sorted by bigram.
fn last_bigram_positions(chars: &[char]) -> Vec<([char; 2], usize)> {
    let mut last = BTreeMap::new();
    for (pos, w) in chars.windows(2).enumerate() {
        last.insert([w[0], w[1]], pos);
    }
    last.into_iter().collect()
}

fn xxdice_chars(x: &[char], y: &[char]) -> f64 {
    if x == y {
        return 1.0;
    }
    let nx = x.len().saturating_sub(1);
    let ny = y.len().saturating_sub(1);
    if nx == 0 || ny == 0 {
        return 0.0;
    }
    let px = last_bigram_positions(x);
    let py = last_bigram_positions(y);
    let (mut i, mut j) = (0, 0);
    let mut weight = 0.0;
    while i < px.len() && j < py.len() {
        match px[i].0.cmp(&py[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let delta = px[i].1.abs_diff(py[j].1) as f64;
                weight += 1.0 / (1.0 + delta * delta);
                i += 1;
                j += 1;
            }
        }
    }
    2.0 * weight / (nx + ny) as f64
}

/// Position-weighted bigram Dice: each shared bigram contributes
/// `1 / (1 + (pos_x - pos_y)^2)`, using its last occurrence in each string.
/// The denominator counts bigram occurrences, duplicates included.
pub fn xxdice(x: &str, y: &str) -> f64 {
    xxdice_chars(&chars_of(x), &chars_of(y))
}

fn prefix_chars(x: &[char], y: &[char]) -> f64 {
    let longest = max(x.len(), y.len());
    if longest == 0 {
        return 1.0;
    }
    let common = x.iter().zip(y).take_while(|(a, b)| a == b).count();
    common as f64 / longest as f64
}

/// Length of the longest common prefix over the longer length.
pub fn prefix_sim(x: &str, y: &str) -> f64 {
    prefix_chars(&chars_of(x), &chars_of(y))
}

pub(crate) fn lcs_len<T: PartialEq>(x: &[T], y: &[T]) -> usize {
    let mut prev = vec![0usize; y.len() + 1];
    let mut cur = vec![0usize; y.len() + 1];
    for a in x {
        for (j, b) in y.iter().enumerate() {
            cur[j + 1] = if a == b {
                prev[j] + 1
            } else {
                max(prev[j + 1], cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[y.len()]
}

fn lcsr_chars(x: &[char], y: &[char]) -> f64 {
    let longest = max(x.len(), y.len());
    if longest == 0 {
        return 1.0;
    }
    lcs_len(x, y) as f64 / longest as f64
}

/// Longest common subsequence ratio.
pub fn lcsr(x: &str, y: &str) -> f64 {
    lcsr_chars(&chars_of(x), &chars_of(y))
}

/// Start-padded character sequence; `None` is the boundary symbol, distinct
/// from every real character (including a literal `^`).
fn padded(chars: &[char], n: usize) -> Vec<Option<char>> {
    let mut out = vec![None; n - 1];
    out.extend(chars.iter().copied().map(Some));
    out
}

/// Number of positions at which the n-gram starting at `i` in `a` and the one
/// starting at `j` in `b` carry the same symbol.
#[inline]
fn positional_matches(a: &[Option<char>], i: usize, b: &[Option<char>], j: usize, n: usize) -> usize {
    (0..n).filter(|&u| a[i + u] == b[j + u]).count()
}

fn ngram_sim_chars(x: &[char], y: &[char], n: usize) -> f64 {
    let longest = max(x.len(), y.len());
    if longest == 0 {
        return 1.0;
    }
    if x.is_empty() || y.is_empty() {
        return 0.0;
    }
    let (px, py) = (padded(x, n), padded(y, n));
    // Scores are kept as integer match counts (units of 1/n) so the DP is exact.
    let mut prev = vec![0usize; y.len() + 1];
    let mut cur = vec![0usize; y.len() + 1];
    for i in 0..x.len() {
        for j in 0..y.len() {
            let diag = prev[j] + positional_matches(&px, i, &py, j, n);
            cur[j + 1] = max(diag, max(prev[j + 1], cur[j]));
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[y.len()] as f64 / (n * longest) as f64
}

fn check_order(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("n-gram order must be 2 or 3, got {n}")))
    }
}

/// BI-SIM (`n = 2`) / TRI-SIM (`n = 3`).
///
/// Both strings are padded at the start with `n - 1` boundary symbols, giving
/// one n-gram per character. Two n-grams score the fraction of positions
/// holding the same symbol, and the best non-crossing alignment score is
/// divided by the longer word length.
pub fn ngram_sim(x: &str, y: &str, n: usize) -> Result<f64> {
    check_order(n)?;
    Ok(ngram_sim_chars(&chars_of(x), &chars_of(y), n))
}

pub(crate) fn levenshtein_chars<T: PartialEq>(x: &[T], y: &[T]) -> usize {
    if x.is_empty() {
        return y.len();
    }
    let mut row: Vec<usize> = (0..=y.len()).collect();
    for (i, a) in x.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, b) in y.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = min(min(above + 1, row[j] + 1), diag + usize::from(a != b));
            diag = above;
        }
    }
    row[y.len()]
}

/// Levenshtein distance restricted to results `<= limit`; `None` if the
/// distance exceeds `limit`. Rows are abandoned as soon as every cell exceeds
/// the limit.
pub fn levenshtein_within(x: &[char], y: &[char], limit: usize) -> Option<usize> {
    if x.len().abs_diff(y.len()) > limit {
        return None;
    }
    let prefix = x.iter().zip(y).take_while(|(a, b)| a == b).count();
    let (x, y) = (&x[prefix..], &y[prefix..]);
    let suffix = x
        .iter()
        .rev()
        .zip(y.iter().rev())
        .take_while(|(a, b)| a == b)
        .count();
    let (x, y) = (&x[..x.len() - suffix], &y[..y.len() - suffix]);
    if x.is_empty() || y.is_empty() {
        return Some(max(x.len(), y.len()));
    }

    let mut row: Vec<usize> = (0..=y.len()).collect();
    for (i, a) in x.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        let mut row_min = row[0];
        for (j, b) in y.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = min(min(above + 1, row[j] + 1), diag + usize::from(a != b));
            diag = above;
            row_min = min(row_min, row[j + 1]);
        }
        if row_min > limit {
            return None;
        }
    }
    let d = row[y.len()];
    (d <= limit).then_some(d)
}

/// Unit-cost edit distance over characters.
pub fn levenshtein(x: &str, y: &str) -> usize {
    levenshtein_chars(&chars_of(x), &chars_of(y))
}

/// Edit distance divided by the longer length of two sequences; 0 when both
/// are empty.
pub(crate) fn normalized_edit_distance<T: PartialEq>(x: &[T], y: &[T]) -> f64 {
    let longest = max(x.len(), y.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein_chars(x, y) as f64 / longest as f64
}

/// Normalized edit distance (NED).
pub fn ned(x: &str, y: &str) -> f64 {
    normalized_edit_distance(&chars_of(x), &chars_of(y))
}

fn ngram_dist_chars(x: &[char], y: &[char], n: usize) -> f64 {
    let longest = max(x.len(), y.len());
    if longest == 0 {
        return 0.0;
    }
    let (px, py) = (padded(x, n), padded(y, n));
    // Costs in units of 1/n: insert/delete = n, substitute = n - matches.
    let mut row: Vec<usize> = (0..=y.len()).map(|j| j * n).collect();
    for i in 0..x.len() {
        let mut diag = row[0];
        row[0] = (i + 1) * n;
        for j in 0..y.len() {
            let above = row[j + 1];
            let sub = diag + n - positional_matches(&px, i, &py, j, n);
            row[j + 1] = min(min(above + n, row[j] + n), sub);
            diag = above;
        }
    }
    row[y.len()] as f64 / (n * longest) as f64
}

/// BI-DIST (`n = 2`) / TRI-DIST (`n = 3`): edit distance over the padded
/// n-gram sequences of [`ngram_sim`], with substitution cost `1 - identity`,
/// normalized by the longer word length.
pub fn ngram_dist(x: &str, y: &str, n: usize) -> Result<f64> {
    check_order(n)?;
    Ok(ngram_dist_chars(&chars_of(x), &chars_of(y), n))
}

/// The twelve feature values of one word pair, in [`FEATURE_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    /// Builds a vector from a slice, checking its length and that every
    /// value is finite.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; FEATURE_COUNT] = values.try_into().map_err(|_| {
            Error::InvalidArgument(format!(
                "feature vector must have {FEATURE_COUNT} values, got {}",
                values.len()
            ))
        })?;
        if let Some(bad) = arr.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature value {bad}")));
        }
        Ok(FeatureVector(arr))
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    /// The vector produced for any string paired with itself.
    pub fn identity() -> Self {
        let mut v = [0.0; FEATURE_COUNT];
        v[..SIMILARITY_SLOTS].fill(1.0);
        FeatureVector(v)
    }
}

/// Computes feature vectors with a fixed normalization policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    /// Lowercase both terms before comparing them.
    pub lowercase: bool,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        FeatureExtractor { lowercase: true }
    }
}

impl FeatureExtractor {
    pub fn new(lowercase: bool) -> Self {
        FeatureExtractor { lowercase }
    }

    pub fn extract(&self, german: &str, dialect: &str) -> FeatureVector {
        let x = normalize(german, self.lowercase);
        let y = normalize(dialect, self.lowercase);
        feature_vector(&x, &y)
    }
}

/// Feature vector of two already-normalized strings.
pub fn feature_vector(x: &str, y: &str) -> FeatureVector {
    let (cx, cy) = (chars_of(x), chars_of(y));
    FeatureVector([
        dice_chars(&cx, &cy, GramKind::Bigram),
        dice_chars(&cx, &cy, GramKind::Trigram),
        dice_chars(&cx, &cy, GramKind::ExtendedTrigram),
        xxdice_chars(&cx, &cy),
        prefix_chars(&cx, &cy),
        lcsr_chars(&cx, &cy),
        ngram_sim_chars(&cx, &cy, 2),
        ngram_sim_chars(&cx, &cy, 3),
        normalized_edit_distance(&cx, &cy),
        ngram_dist_chars(&cx, &cy, 2),
        ngram_dist_chars(&cx, &cy, 3),
        phonetics::phonetic_dist(x, y),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn ngram_windows() {
        assert_eq!(ngrams("haus", 2).unwrap(), ["ha", "au", "us"]);
        assert!(ngrams("ab", 3).unwrap().is_empty());
        assert_eq!(ngrams("nacht", 3).unwrap(), ["nac", "ach", "cht"]);
        assert!(ngrams("haus", 1).is_err());
    }

    #[test]
    fn extended_trigrams() {
        assert_eq!(xgrams("nacht"), ["n_c", "a_h", "c_t"]);
        assert!(xgrams("ab").is_empty());
        assert_eq!(xgrams("aaa"), ["a_a"]);
    }

    #[test]
    fn dice_examples() {
        assert!(close(dice("colour", "color", GramKind::Bigram), 2.0 * 3.0 / 9.0));
        assert!(close(dice("nacht", "nocht", GramKind::ExtendedTrigram), 4.0 / 6.0));
        assert_eq!(dice("ab", "ab", GramKind::Trigram), 1.0);
        assert_eq!(dice("ab", "abc", GramKind::Trigram), 0.0);
    }

    #[test]
    fn literal_underscore_does_not_collide_with_placeholder() {
        // "a_c" has the trigram a,_,c; "abc" has the extended trigram a_c.
        // Extended trigrams {x_, ac, _x} vs {xb, ac, bx}: only `a_c` is shared.
        assert_eq!(dice("xa_cx", "xabcx", GramKind::ExtendedTrigram), 2.0 / 6.0);
        assert_eq!(dice("a_c", "abc", GramKind::Trigram), 0.0);
    }

    #[test]
    fn xxdice_examples() {
        assert!(close(xxdice("abcd", "zabcd"), 2.0 * 1.5 / 7.0));
        assert_eq!(xxdice("ab", "cd"), 0.0);
        assert_eq!(xxdice("haus", "haus"), 1.0);
    }

    #[test]
    fn xxdice_uses_last_occurrence() {
        // "abab": ab at 0 and 2 (last = 2); "ab": ab at 0. Weight 1/(1+4).
        assert!(close(xxdice("abab", "ab"), 2.0 * 0.2 / 4.0));
    }

    #[test]
    fn prefix_and_lcsr() {
        assert_eq!(prefix_sim("haus", "haut"), 0.75);
        assert_eq!(prefix_sim("ab", "xy"), 0.0);
        assert!(close(lcsr("colour", "color"), 5.0 / 6.0));
        assert_eq!(lcsr("abc", "xyz"), 0.0);
    }

    #[test]
    fn ngram_sim_examples() {
        assert_eq!(ngram_sim("ab", "ac", 2).unwrap(), 0.75);
        assert_eq!(ngram_sim("a", "b", 2).unwrap(), 0.5);
        assert_eq!(ngram_sim("nacht", "nacht", 3).unwrap(), 1.0);
        assert!(ngram_sim("ab", "ac", 4).is_err());
    }

    #[test]
    fn boundary_symbol_differs_from_caret() {
        assert_eq!(ngram_sim("^", "^", 2).unwrap(), 1.0);
        // ^ (pad) + '^' vs ^ (pad) + 'a': only the pad matches.
        assert_eq!(ngram_sim("^", "a", 2).unwrap(), 0.5);
    }

    #[test]
    fn edit_distances() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert!(close(ned("kitten", "sitting"), 3.0 / 7.0));
        assert_eq!(ned("a", ""), 1.0);
        assert_eq!(ned("", ""), 0.0);
        assert_eq!(ngram_dist("ab", "ac", 2).unwrap(), 0.25);
        assert_eq!(ngram_dist("a", "", 2).unwrap(), 1.0);
        assert_eq!(ngram_dist("haus", "haus", 3).unwrap(), 0.0);
    }

    #[test]
    fn bounded_levenshtein_agrees_with_full_dp() {
        let words = ["", "a", "haus", "hus", "maus", "baum", "häuser", "kitten", "sitting"];
        for x in words {
            for y in words {
                let (cx, cy) = (chars_of(x), chars_of(y));
                let d = levenshtein_chars(&cx, &cy);
                for limit in 0..8 {
                    let expected = (d <= limit).then_some(d);
                    assert_eq!(levenshtein_within(&cx, &cy, limit), expected, "{x} {y} {limit}");
                }
            }
        }
    }

    #[test]
    fn feature_vector_shapes() {
        assert_eq!(feature_vector("haus", "haus"), FeatureVector::identity());
        let fv = feature_vector("colour", "color");
        assert!(close(fv.get(0), 2.0 / 3.0));
        assert!(close(fv.get(5), 5.0 / 6.0));

        let fv = feature_vector("ab", "xy");
        for slot in 0..6 {
            assert_eq!(fv.get(slot), 0.0, "slot {slot}");
        }
        assert_eq!(fv.get(8), 1.0);
        // The boundary padding is shared, so the n-gram alignments keep a
        // non-zero score even for disjoint alphabets.
        assert_eq!(fv.get(6), 0.25);
        assert_eq!(fv.get(7), 0.5);
    }

    #[test]
    fn extractor_lowercases_on_request() {
        assert_eq!(FeatureExtractor::new(true).extract("Haus", "haus"), FeatureVector::identity());
        assert!(FeatureExtractor::new(false).extract("Haus", "haus").get(4) < 1.0);
    }

    #[test]
    fn from_slice_validates() {
        assert!(FeatureVector::from_slice(&[0.0; 11]).is_err());
        let mut v = [0.5; 12];
        v[3] = f64::NAN;
        assert!(FeatureVector::from_slice(&v).is_err());
        assert!(FeatureVector::from_slice(&[0.5; 12]).is_ok());
    }
}
