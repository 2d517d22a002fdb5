use std::collections::BTreeSet;

use dialex_core::bli_eval::{split_dataset, SplitSpec};
use dialex_core::candidates::Vocabulary;
use dialex_core::classifier::{train_forest, ForestParams, LabeledPair, Node};
use dialex_core::lexicon::{dictionary_stats, induce_dictionary, DialectId, Dictionary, InduceOptions};
use dialex_core::phonetics::{cologne_encode, postprocess, PhoneticCode};
use dialex_core::retrieval::{expand_query, tokenize, Bm25Params, Document, Index};
use dialex_core::stringsim::{feature_vector, lcsr, levenshtein, prefix_sim, FeatureVector, FEATURE_COUNT};
use proptest::prelude::*;

/// Every string over `alphabet` of length at most `max_len`.
fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| alphabet.iter().map(move |c| format!("{s}{c}")))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn lev_rec(a: &[char], b: &[char]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => (lev_rec(ra, b) + 1)
            .min(lev_rec(a, rb) + 1)
            .min(lev_rec(ra, rb) + usize::from(x != y)),
    }
}

fn lcs_rec(a: &[char], b: &[char]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) | (_, None) => 0,
        (Some((x, ra)), Some((y, rb))) if x == y => lcs_rec(ra, rb) + 1,
        (Some((_, ra)), Some((_, rb))) => lcs_rec(ra, b).max(lcs_rec(a, rb)),
    }
}

fn chars(s: &str) -> Vec<char> {
    s.chars().collect()
}

#[test]
fn levenshtein_metric_axioms_exhaustive() {
    let words = all_strings(&['a', 'b', 'c'], 4);
    let n = words.len();
    let d: Vec<Vec<usize>> = words
        .iter()
        .map(|x| words.iter().map(|y| levenshtein(x, y)).collect())
        .collect();
    for i in 0..n {
        for j in 0..n {
            assert_eq!(d[i][j] == 0, i == j, "identity of indiscernibles");
            assert_eq!(d[i][j], d[j][i], "symmetry");
            for k in 0..n {
                assert!(d[i][k] <= d[i][j] + d[j][k], "triangle");
            }
        }
    }
}

#[test]
fn dp_matches_recursion_exhaustive_binary() {
    let words = all_strings(&['a', 'b'], 5);
    for x in &words {
        for y in &words {
            let (cx, cy) = (chars(x), chars(y));
            assert_eq!(levenshtein(x, y), lev_rec(&cx, &cy), "{x} {y}");
            let m = cx.len().max(cy.len());
            let want = if m == 0 { 1.0 } else { lcs_rec(&cx, &cy) as f64 / m as f64 };
            assert_eq!(lcsr(x, y), want, "{x} {y}");
        }
    }
}

fn small_word(max: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(prop_oneof![Just('a'), Just('b'), Just('ä'), Just('ß')], 0..=max)
        .prop_map(|v| v.into_iter().collect())
}

fn row(values: [f64; FEATURE_COUNT], label: bool, id: usize) -> LabeledPair {
    LabeledPair {
        german: format!("g{id}"),
        dialect: format!("d{id}"),
        features: FeatureVector(values),
        label,
    }
}

fn dataset() -> impl Strategy<Value = Vec<LabeledPair>> {
    proptest::collection::vec(
        (proptest::array::uniform12(0u8..20), any::<bool>()),
        2..60,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (v, label))| row(v.map(|x| f64::from(x) / 20.0), label, i))
            .collect()
    })
}

fn small_params(seed: u64) -> ForestParams {
    ForestParams {
        n_trees: 5,
        seed,
        ..ForestParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dp_matches_recursion_random(x in small_word(6), y in small_word(6)) {
        let (cx, cy) = (chars(&x), chars(&y));
        prop_assert_eq!(levenshtein(&x, &y), lev_rec(&cx, &cy));
        let m = cx.len().max(cy.len());
        let want = if m == 0 { 1.0 } else { lcs_rec(&cx, &cy) as f64 / m as f64 };
        prop_assert_eq!(lcsr(&x, &y), want);
    }

    #[test]
    fn features_in_range_and_symmetric(x in "\\PC{0,10}", y in "\\PC{0,10}") {
        let a = feature_vector(&x, &y);
        let b = feature_vector(&y, &x);
        for (p, q) in a.values().iter().zip(b.values()) {
            prop_assert!((0.0..=1.0).contains(p));
            prop_assert!((p - q).abs() <= 1e-12);
        }
        prop_assert!(lcsr(&x, &y) >= prefix_sim(&x, &y));
        prop_assert_eq!(feature_vector(&x, &x), FeatureVector::identity());
    }

    #[test]
    fn phonetic_codes_are_well_formed(s in "\\PC{0,16}") {
        let code = cologne_encode(&s);
        prop_assert!(PhoneticCode::is_well_formed(code.as_str()), "{:?} -> {}", s, code);
    }

    #[test]
    fn postprocess_is_idempotent(digits in proptest::collection::vec(0u8..9, 0..20)) {
        let once = postprocess(&digits);
        prop_assert_eq!(postprocess(&once), once.clone());
        prop_assert!(PhoneticCode::is_well_formed(
            &once.iter().map(|d| char::from(b'0' + d)).collect::<String>()
        ));
    }

    #[test]
    fn forest_ignores_row_order(data in dataset(), seed in 0u64..100, rot in 0usize..60) {
        let a = train_forest(&data, &small_params(seed)).unwrap().to_bytes();
        let mut shuffled = data.clone();
        shuffled.reverse();
        let r = rot % shuffled.len();
        shuffled.rotate_left(r);
        let b = train_forest(&shuffled, &small_params(seed)).unwrap().to_bytes();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn forest_is_invariant_to_monotone_transforms(data in dataset(), seed in 0u64..100, col in 0usize..FEATURE_COUNT) {
        let cube = |p: &LabeledPair| {
            let mut q = p.clone();
            q.features.0[col] = q.features.0[col].powi(3);
            q
        };
        let transformed: Vec<LabeledPair> = data.iter().map(cube).collect();
        // An out-of-bag row can fall between two training values, where the
        // midpoint threshold moves under the transform. No bootstrap, so
        // every tree sees every row.
        let params = ForestParams { bootstrap: false, ..small_params(seed) };
        let fa = train_forest(&data, &params).unwrap();
        let fb = train_forest(&transformed, &params).unwrap();
        for (ta, tb) in fa.trees().iter().zip(fb.trees()) {
            prop_assert_eq!(ta.nodes().len(), tb.nodes().len());
            for (na, nb) in ta.nodes().iter().zip(tb.nodes()) {
                match (na, nb) {
                    (Node::Leaf { counts: a }, Node::Leaf { counts: b }) => prop_assert_eq!(a, b),
                    (
                        Node::Split { feature: f1, left: l1, right: r1, .. },
                        Node::Split { feature: f2, left: l2, right: r2, .. },
                    ) => prop_assert_eq!((f1, l1, r1), (f2, l2, r2)),
                    _ => prop_assert!(false, "node kinds differ"),
                }
            }
        }
        for (p, q) in data.iter().zip(&transformed) {
            prop_assert_eq!(fa.predict_proba(&p.features), fb.predict_proba(&q.features));
        }
    }

    #[test]
    fn split_is_a_partition(data in dataset(), seed in any::<u64>(), frac in 0.05f64..0.95, stratify in any::<bool>()) {
        let spec = SplitSpec { train_fraction: frac, seed, stratify };
        let (train, test) = split_dataset(&data, &spec).unwrap();
        prop_assert!(!train.is_empty() && !test.is_empty());
        let ids = |v: &[LabeledPair]| v.iter().map(|p| p.german.clone()).collect::<BTreeSet<_>>();
        let (a, b) = (ids(&train), ids(&test));
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.len() + b.len(), data.len());
        prop_assert_eq!(a.union(&b).cloned().collect::<BTreeSet<_>>(), ids(&data));
    }

    #[test]
    fn bm25_grows_with_term_frequency(filler in proptest::collection::vec("[b-e]", 1..8), extra in 0usize..8) {
        // Replacing a filler token by the query term keeps the length fixed.
        let base = filler.join(" ");
        let mut more = filler.clone();
        more[extra % filler.len()] = "a".into();
        let docs = [
            Document { id: "d1".into(), text: format!("a {base}") },
            Document { id: "d2".into(), text: format!("a {}", more.join(" ")) },
            Document { id: "d3".into(), text: "x y z".into() },
        ];
        let index = Index::build(&docs).unwrap();
        let p = Bm25Params::default();
        let q = vec!["a".to_string()];
        prop_assert!(index.bm25_score(&q, "d2", &p).unwrap() >= index.bm25_score(&q, "d1", &p).unwrap());
    }

    #[test]
    fn expansion_only_adds_tokens(query in "[a-d ]{0,20}", variants in proptest::collection::vec(("[a-d]{1,3}", "[a-f]{1,4}"), 0..6)) {
        let mut dict = Dictionary::new(DialectId::Bar);
        for (l, v) in &variants {
            dict.insert(l, v);
        }
        let (expanded, augmented) = expand_query(&query, &dict);
        let before: BTreeSet<String> = tokenize(&query).into_iter().collect();
        let after: BTreeSet<String> = tokenize(&expanded).into_iter().collect();
        prop_assert!(after.is_superset(&before));
        prop_assert_eq!(augmented, after.len() > before.len());
    }
}

#[test]
fn induction_is_order_and_worker_invariant() {
    let words = ["haus", "baum", "kirche", "wasser", "milch", "garten"];
    let vocab_words = [
        "hus", "huus", "haus", "boam", "baam", "kiach", "chilche", "wossa", "wasser", "mülch",
        "garta", "goartn", "hoaz", "kua",
    ];
    let mut pairs = Vec::new();
    for (i, w) in words.iter().enumerate() {
        for (j, v) in vocab_words.iter().enumerate() {
            let label = (i + j) % 3 == 0 || v.starts_with(&w[..1]);
            pairs.push(LabeledPair {
                german: w.to_string(),
                dialect: v.to_string(),
                features: feature_vector(w, v),
                label,
            });
        }
    }
    let forest = train_forest(&pairs, &small_params(11)).unwrap();
    let vocab = Vocabulary::from_counts(vocab_words.iter().map(|w| (*w, 5)), true);
    let lemmas = Vocabulary::from_counts(words.iter().map(|w| (*w, 1)), true);
    let reversed = Vocabulary::from_counts(words.iter().rev().enumerate().map(|(i, w)| (*w, i as u64)), true);
    let opts = InduceOptions { k: 4, ..InduceOptions::default() };
    let run = |lemmas: &Vocabulary, jobs: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .unwrap()
            .install(|| induce_dictionary(lemmas, &vocab, &forest, DialectId::Bar, &opts).unwrap())
    };
    let a = run(&lemmas, 1);
    assert_eq!(a, run(&reversed, 4));
    assert_eq!(a, run(&lemmas, 8));
    for (lemma, variant) in a.pairs() {
        assert!(forest.classify(&feature_vector(lemma, variant), opts.threshold).unwrap());
    }
    let stats = dictionary_stats(&a);
    let total: usize = a.entries().values().map(|v| v.len()).sum();
    assert_eq!(stats.variant_count, total);
    assert_eq!(stats.lemma_count, a.entries().len());
}
