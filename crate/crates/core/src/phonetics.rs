//! Cologne phonetics (Kölner Phonetik) and the phonetic distance feature.
//!
//! Rule table, applied to the letters of a word after case folding:
//!
//! | Letter | Context | Code |
//! |--------|---------|------|
//! | A, E, I, J, O, U, Y, Ä, Ö, Ü | | 0 |
//! | B | | 1 |
//! | P | not before H | 1 |
//! | P | before H | 3 |
//! | D, T | not before C, S, Z | 2 |
//! | D, T | before C, S, Z | 8 |
//! | F, V, W | | 3 |
//! | G, K, Q | | 4 |
//! | C | word-initially before A, H, K, L, O, Q, R, U, X | 4 |
//! | C | non-initially before A, H, K, O, Q, U, X, unless after S, Z | 4 |
//! | C | otherwise | 8 |
//! | X | not after C, K, Q | 48 |
//! | X | after C, K, Q | 8 |
//! | L | | 5 |
//! | M, N | | 6 |
//! | R | | 7 |
//! | S, Z, ß | | 8 |
//! | H | | no code |
//!
//! Characters other than letters (hyphens, apostrophes, digits, ...) are
//! removed before the table is applied, so they neither produce a code nor
//! break a context such as "before H". Letters with diacritics are reduced to
//! their base letter; letters with no base in the table are skipped.
//!
//! The digit string is post-processed by collapsing runs of equal digits and
//! then deleting every `0` except a leading one. Deleting zeros can bring two
//! equal digits together (`"Sese"` gives `8 0 8 0`), so runs are collapsed a
//! second time; the result is therefore a fixed point of the post-processing.

use std::fmt;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::stringsim::normalized_edit_distance;

/// A Cologne phonetic code: digits `0`-`8`, no two adjacent digits equal and
/// no `0` except possibly in first position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PhoneticCode(String);

impl PhoneticCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Checks the alphabet, adjacency and zero-placement invariants.
    pub fn is_well_formed(code: &str) -> bool {
        let bytes = code.as_bytes();
        bytes.iter().all(|b| (b'0'..=b'8').contains(b))
            && bytes.windows(2).all(|w| w[0] != w[1])
            && bytes.iter().skip(1).all(|&b| b != b'0')
    }
}

impl fmt::Display for PhoneticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Case-folded letters of `s`, diacritics stripped, everything the rule
/// table does not know removed.
fn letters(s: &str) -> Vec<char> {
    s.to_lowercase()
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .filter(|c| c.is_ascii_lowercase() || *c == 'ß')
        .collect()
}

fn raw_codes(letters: &[char]) -> Vec<u8> {
    let mut out = Vec::with_capacity(letters.len() + 2);
    for (i, &c) in letters.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| letters[p]);
        let next = letters.get(i + 1).copied();
        let next_in = |set: &str| next.is_some_and(|n| set.contains(n));
        let prev_in = |set: &str| prev.is_some_and(|p| set.contains(p));
        match c {
            'a' | 'e' | 'i' | 'j' | 'o' | 'u' | 'y' => out.push(0),
            'b' => out.push(1),
            'p' => out.push(if next_in("h") { 3 } else { 1 }),
            'd' | 't' => out.push(if next_in("csz") { 8 } else { 2 }),
            'f' | 'v' | 'w' => out.push(3),
            'g' | 'k' | 'q' => out.push(4),
            'c' => {
                let hard = if i == 0 {
                    next_in("ahkloqrux")
                } else {
                    next_in("ahkoqux") && !prev_in("sz")
                };
                out.push(if hard { 4 } else { 8 });
            }
            'x' => {
                if prev_in("ckq") {
                    out.push(8);
                } else {
                    out.extend([4, 8]);
                }
            }
            'l' => out.push(5),
            'm' | 'n' => out.push(6),
            'r' => out.push(7),
            's' | 'z' | 'ß' => out.push(8),
            _ => {} // 'h'
        }
    }
    out
}

/// Collapses equal neighbours, drops non-leading zeros, collapses again.
pub fn postprocess(digits: &[u8]) -> Vec<u8> {
    let mut collapsed = digits.to_vec();
    collapsed.dedup();
    let mut out: Vec<u8> = collapsed
        .iter()
        .enumerate()
        .filter(|&(i, &d)| i == 0 || d != 0)
        .map(|(_, &d)| d)
        .collect();
    out.dedup();
    out
}

/// Encodes `s` with the Cologne phonetics rule table. Strings without any
/// encodable letter give the empty code.
pub fn cologne_encode(s: &str) -> PhoneticCode {
    let digits = postprocess(&raw_codes(&letters(s)));
    PhoneticCode(digits.iter().map(|d| char::from(b'0' + d)).collect())
}

/// Length-normalized edit distance between the phonetic codes of `x` and `y`.
/// Two empty codes are at distance 0; one empty code gives 1.
pub fn phonetic_dist(x: &str, y: &str) -> f64 {
    let cx = cologne_encode(x);
    let cy = cologne_encode(y);
    normalized_edit_distance(cx.as_str().as_bytes(), cy.as_str().as_bytes())
}
