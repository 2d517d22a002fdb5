use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dialex_core::bli_eval::{
    ablation_curve, cross_dialect_matrix, evaluate_at, random_baseline, split_dataset,
    train_eval, write_curve_tsv, write_metrics_tsv, Metrics, MetricKind, SplitSpec,
};
use dialex_core::candidates::Vocabulary;
use dialex_core::classifier::{train_forest, Forest, ForestParams, LabeledPair};
use dialex_core::lexicon::{
    induce_dictionary, read_labeled_pairs, write_stats_tsv, DialectId, Dictionary, InduceOptions,
};
use dialex_core::retrieval::{
    evaluate_run, qe_experiment, read_documents, read_queries, read_run, run_queries, write_run,
    Index, QeDataset, Qrels,
};
use dialex_core::stringsim::FEATURE_NAMES;

use crate::config::{ConfigFile, Settings};
use crate::output::{with_header, write_atomic};
use crate::{Bm25Flags, Command, ForestFlags, Preset, ProtocolFlags, TextFlags};

const INDEX_FILE: &str = "index.json";

pub fn run(command: Command, config: Option<&Path>, jobs: Option<usize>) -> Result<()> {
    let mut settings = Settings::default();
    if let Some(path) = config {
        settings.apply_file(ConfigFile::load(path)?);
    }
    if let Some(jobs) = jobs {
        if jobs == 0 {
            bail!("--jobs must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("cannot configure worker pool")?;
    }
    match command {
        Command::Features { pairs, out, text } => {
            apply_text(&mut settings, &text);
            settings.validate()?;
            features(&settings, &pairs, out.as_deref())
        }
        Command::Train {
            pairs,
            out,
            preset,
            seed,
            text,
            forest,
        } => {
            if preset == Some(Preset::Production) {
                settings.forest = ForestParams {
                    seed: settings.forest.seed,
                    ..ForestParams::default()
                };
                settings.lowercase = true;
                settings.inflected_positive = false;
            }
            apply_text(&mut settings, &text);
            apply_forest(&mut settings, &forest);
            if let Some(seed) = seed {
                settings.forest.seed = seed;
            }
            settings.validate()?;
            train(&settings, &pairs, &out)
        }
        Command::EvalBli {
            pairs,
            model,
            out,
            text,
            forest,
            protocol,
        } => {
            apply_text(&mut settings, &text);
            apply_forest(&mut settings, &forest);
            apply_protocol(&mut settings, &protocol);
            settings.validate()?;
            eval_bli(&settings, &pairs, model.as_deref(), out.as_deref())
        }
        Command::Cross {
            datasets,
            out,
            text,
            forest,
            protocol,
        } => {
            apply_text(&mut settings, &text);
            apply_forest(&mut settings, &forest);
            apply_protocol(&mut settings, &protocol);
            settings.validate()?;
            let datasets = parse_named(&datasets)?;
            cross(&settings, &datasets, &out)
        }
        Command::Ablate {
            pairs,
            fractions,
            split_seed,
            out,
            text,
            forest,
            mut protocol,
        } => {
            apply_text(&mut settings, &text);
            apply_forest(&mut settings, &forest);
            // --seeds selects the ablation seeds here.
            if let Some(seeds) = protocol.seeds.take() {
                settings.ablation_seeds = seeds;
            }
            apply_protocol(&mut settings, &protocol);
            if let Some(f) = fractions {
                settings.ablation_fractions = f;
            }
            if let Some(s) = split_seed {
                settings.split_seed = s;
            }
            settings.validate()?;
            ablate(&settings, &pairs, out.as_deref())
        }
        Command::Induce {
            lemmas,
            vocab,
            model,
            dialect,
            out,
            stats,
            k,
            threshold,
            vocab_cap,
            lowercase,
        } => {
            set_opt(&mut settings.k, k);
            set_opt(&mut settings.threshold, threshold);
            set_opt(&mut settings.lowercase, lowercase);
            if vocab_cap.is_some() {
                settings.vocab_cap = vocab_cap;
            }
            settings.validate()?;
            let inputs = InduceInputs {
                lemmas: &lemmas,
                vocab: &vocab,
                model: &model,
                dialect: &dialect,
            };
            induce(&settings, &inputs, &out, stats.as_deref())
        }
        Command::Stats { dicts, out, lowercase } => {
            set_opt(&mut settings.lowercase, lowercase);
            settings.validate()?;
            let dicts = parse_named(&dicts)?;
            stats(&settings, &dicts, out.as_deref())
        }
        Command::Index { docs, out } => {
            settings.validate()?;
            index(&docs, &out)
        }
        Command::Search {
            index,
            queries,
            dict,
            depth,
            tag,
            out,
            bm25,
        } => {
            set_opt(&mut settings.depth, depth);
            apply_bm25(&mut settings, &bm25);
            settings.validate()?;
            search(&settings, &index, &queries, dict.as_deref(), &tag, out.as_deref())
        }
        Command::EvalIr { run, qrels, out } => {
            settings.validate()?;
            eval_ir(&settings, &run, &qrels, out.as_deref())
        }
        Command::QeExperiment { datasets, out, bm25 } => {
            apply_bm25(&mut settings, &bm25);
            settings.validate()?;
            let datasets = parse_named(&datasets)?;
            qe(&settings, &datasets, out.as_deref())
        }
    }
}

fn set_opt<T>(dst: &mut T, src: Option<T>) {
    if let Some(v) = src {
        *dst = v;
    }
}

fn apply_text(s: &mut Settings, f: &TextFlags) {
    set_opt(&mut s.lowercase, f.lowercase);
    set_opt(&mut s.inflected_positive, f.inflected_positive);
}

fn apply_forest(s: &mut Settings, f: &ForestFlags) {
    set_opt(&mut s.forest.n_trees, f.trees);
    set_opt(&mut s.forest.max_features, f.max_features);
    set_opt(&mut s.forest.bootstrap, f.bootstrap);
    set_opt(&mut s.forest.min_samples_split, f.min_samples_split);
    set_opt(&mut s.forest.positive_weight, f.positive_weight);
    if f.max_depth.is_some() {
        s.forest.max_depth = f.max_depth;
    }
}

fn apply_protocol(s: &mut Settings, f: &ProtocolFlags) {
    set_opt(&mut s.seeds, f.seeds.clone());
    set_opt(&mut s.train_fraction, f.train_fraction);
    set_opt(&mut s.stratify, f.stratify);
    set_opt(&mut s.threshold, f.threshold);
}

fn apply_bm25(s: &mut Settings, f: &Bm25Flags) {
    set_opt(&mut s.bm25.k1, f.k1);
    set_opt(&mut s.bm25.b, f.b);
}

/// Parses repeated `name=path` arguments; names must be unique.
fn parse_named(args: &[String]) -> Result<Vec<(String, PathBuf)>> {
    let mut seen = std::collections::BTreeSet::new();
    args.iter()
        .map(|a| {
            let (name, path) = a
                .split_once('=')
                .filter(|(n, p)| !n.is_empty() && !p.is_empty())
                .ok_or_else(|| anyhow!("expected NAME=PATH, got {a:?}"))?;
            if !seen.insert(name.to_string()) {
                bail!("name {name:?} given twice");
            }
            Ok((name.to_string(), PathBuf::from(path)))
        })
        .collect()
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn load_pairs(s: &Settings, path: &Path) -> Result<Vec<LabeledPair>> {
    let pairs = read_labeled_pairs(path, s.label_policy(), &s.extractor())?;
    if pairs.is_empty() {
        bail!("{}: no labeled pairs", path.display());
    }
    Ok(pairs)
}

fn load_model(path: &Path) -> Result<Forest> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read model {}", path.display()))?;
    Forest::from_bytes(&bytes).with_context(|| format!("invalid model {}", path.display()))
}

fn features(s: &Settings, pairs: &Path, out: Option<&Path>) -> Result<()> {
    let data = load_pairs(s, pairs)?;
    let header = s.header("features", &[("pairs", show(pairs))]);
    let bytes = with_header(&header, |buf| {
        writeln!(buf, "# german\tdialect\t{}\tlabel", FEATURE_NAMES.join("\t"))?;
        for p in &data {
            write!(buf, "{}\t{}", p.german, p.dialect)?;
            for v in p.features.values() {
                write!(buf, "\t{v}")?;
            }
            writeln!(buf, "\t{}", u8::from(p.label))?;
        }
        Ok(())
    })?;
    write_atomic(out, &bytes)
}

fn train(s: &Settings, pairs: &Path, out: &Path) -> Result<()> {
    let data = load_pairs(s, pairs)?;
    let forest = train_forest(&data, &s.forest)?;
    write_atomic(Some(out), &forest.to_bytes())
}

fn eval_bli(s: &Settings, pairs: &Path, model: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let data = load_pairs(s, pairs)?;
    let mut inputs = vec![("pairs", show(pairs))];
    let bytes = if let Some(model) = model {
        inputs.push(("model", show(model)));
        let forest = load_model(model)?;
        let m = evaluate_at(&forest, &data, s.threshold)?;
        with_header(&s.header("eval-bli", &inputs), |buf| {
            write_metrics_tsv(&[("forest", m)], buf)
        })?
    } else {
        let (mean, runs) = train_eval(&data, &s.seeds, &s.protocol())?;
        let mut baselines = Vec::with_capacity(s.seeds.len());
        for &seed in &s.seeds {
            let spec = SplitSpec {
                train_fraction: s.train_fraction,
                seed,
                stratify: s.stratify,
            };
            let (train, test) = split_dataset(&data, &spec)?;
            let rate = train.iter().filter(|p| p.label).count() as f64 / train.len() as f64;
            baselines.push(random_baseline(&test, rate, seed));
        }
        let baseline_mean = dialex_core::bli_eval::MeanMetrics::aggregate(&baselines);
        with_header(&s.header("eval-bli", &inputs), |buf| {
            let row = |buf: &mut Vec<u8>, model: &str, seed: &str, m: &Metrics| {
                let c = m.counts;
                writeln!(
                    buf,
                    "{model}\t{seed}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{}",
                    m.precision, m.recall, m.f1, c.tp, c.fp, c.fn_, c.tn
                )
            };
            writeln!(buf, "model\tseed\tprecision\trecall\tf1\ttp\tfp\tfn\ttn")?;
            for (name, runs) in [("forest", &runs), ("random", &baselines)] {
                for (seed, m) in s.seeds.iter().zip(runs.iter()) {
                    row(buf, name, &seed.to_string(), m)?;
                }
            }
            for (name, m) in [("forest", mean), ("random", baseline_mean)] {
                writeln!(
                    buf,
                    "{name}\tmean\t{:.4}\t{:.4}\t{:.4}\t-\t-\t-\t-",
                    m.precision, m.recall, m.f1
                )?;
                writeln!(buf, "{name}\tstd\t-\t-\t{:.4}\t-\t-\t-\t-", m.f1_std)?;
            }
            Ok(())
        })?
    };
    write_atomic(out, &bytes)
}

fn cross(s: &Settings, datasets: &[(String, PathBuf)], out: &Path) -> Result<()> {
    let mut data = BTreeMap::new();
    for (name, path) in datasets {
        data.insert(name.clone(), load_pairs(s, path)?);
    }
    let matrix = cross_dialect_matrix(&data, &s.seeds, &s.protocol())?;
    let inputs: Vec<(&str, String)> = datasets.iter().map(|(n, p)| (n.as_str(), show(p))).collect();
    let header = s.header("cross", &inputs);
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for kind in [MetricKind::Precision, MetricKind::Recall, MetricKind::F1] {
        let bytes = with_header(&header, |buf| matrix.write_tsv(kind, buf))?;
        write_atomic(Some(&out.join(format!("{}.tsv", kind.name()))), &bytes)?;
    }
    Ok(())
}

fn ablate(s: &Settings, pairs: &Path, out: Option<&Path>) -> Result<()> {
    let data = load_pairs(s, pairs)?;
    let curve = ablation_curve(
        &data,
        &s.ablation_fractions,
        &s.ablation_seeds,
        s.split_seed,
        &s.protocol(),
    )?;
    let bytes = with_header(&s.header("ablate", &[("pairs", show(pairs))]), |buf| {
        write_curve_tsv(&curve, buf)
    })?;
    write_atomic(out, &bytes)
}

struct InduceInputs<'a> {
    lemmas: &'a Path,
    vocab: &'a Path,
    model: &'a Path,
    dialect: &'a str,
}

fn read_lemmas(path: &Path, lowercase: bool) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow!(dialex_core::Error::Io { path: path.into(), source: e }))?;
    let lemmas = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| (l.split('\t').next().unwrap_or_default().to_string(), 1u64));
    Ok(Vocabulary::from_counts(lemmas, lowercase))
}

fn induce(s: &Settings, inp: &InduceInputs<'_>, out: &Path, stats_out: Option<&Path>) -> Result<()> {
    let dialect: DialectId = inp.dialect.parse().expect("infallible");
    let forest = load_model(inp.model)?;
    let lemmas = read_lemmas(inp.lemmas, s.lowercase)?;
    let mut vocab = Vocabulary::read_tsv(inp.vocab, s.lowercase)?;
    if let Some(cap) = s.vocab_cap {
        vocab.truncate(cap);
    }
    let options = InduceOptions {
        k: s.k,
        threshold: s.threshold,
        extractor: s.extractor(),
    };
    let dict = induce_dictionary(&lemmas, &vocab, &forest, dialect, &options)?;
    let header = s.header(
        "induce",
        &[
            ("lemmas", show(inp.lemmas)),
            ("vocab", show(inp.vocab)),
            ("model", show(inp.model)),
            ("dialect", inp.dialect.to_string()),
        ],
    );
    let bytes = with_header(&header, |buf| dict.write_tsv(buf))?;
    write_atomic(Some(out), &bytes)?;
    if let Some(path) = stats_out {
        let bytes = with_header(&header, |buf| write_stats_tsv(&[&dict], buf))?;
        write_atomic(Some(path), &bytes)?;
    }
    Ok(())
}

fn load_dict(path: &Path, dialect: DialectId, lowercase: bool) -> Result<Dictionary> {
    let (dict, duplicates) = Dictionary::read_tsv(path, dialect, lowercase)?;
    if duplicates > 0 {
        eprintln!("warning: {}: {duplicates} duplicate row(s) ignored", path.display());
    }
    Ok(dict)
}

fn stats(s: &Settings, dicts: &[(String, PathBuf)], out: Option<&Path>) -> Result<()> {
    let loaded: Vec<Dictionary> = dicts
        .iter()
        .map(|(name, path)| load_dict(path, name.parse().expect("infallible"), s.lowercase))
        .collect::<Result<_>>()?;
    let refs: Vec<&Dictionary> = loaded.iter().collect();
    let inputs: Vec<(&str, String)> = dicts.iter().map(|(n, p)| (n.as_str(), show(p))).collect();
    let bytes = with_header(&s.header("stats", &inputs), |buf| write_stats_tsv(&refs, buf))?;
    write_atomic(out, &bytes)
}

fn index(docs: &Path, out: &Path) -> Result<()> {
    let docs = read_documents(docs)?;
    let index = Index::build(&docs)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_atomic(Some(&out.join(INDEX_FILE)), &index.to_bytes())
}

fn load_index(path: &Path) -> Result<Index> {
    let file = if path.is_dir() { path.join(INDEX_FILE) } else { path.to_path_buf() };
    let bytes = std::fs::read(&file).with_context(|| format!("cannot read index {}", file.display()))?;
    Index::from_bytes(&bytes).with_context(|| format!("invalid index {}", file.display()))
}

fn search(
    s: &Settings,
    index: &Path,
    queries: &Path,
    dict: Option<&Path>,
    tag: &str,
    out: Option<&Path>,
) -> Result<()> {
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        bail!("--tag must be a non-empty word");
    }
    let index = load_index(index)?;
    let queries = read_queries(queries)?;
    let dict = dict
        .map(|p| load_dict(p, DialectId::Other("query".into()), true))
        .transpose()?;
    let (run, n_aug) = run_queries(&index, &queries, dict.as_ref(), s.depth, &s.bm25)?;
    if dict.is_some() {
        eprintln!("expanded {n_aug} of {} queries", queries.len());
    }
    let mut bytes = Vec::new();
    write_run(&run, tag, &mut bytes)?;
    write_atomic(out, &bytes)
}

fn eval_ir(s: &Settings, run: &Path, qrels: &Path, out: Option<&Path>) -> Result<()> {
    let run_data = read_run(run)?;
    let qrels_data = Qrels::read(qrels)?;
    let scores = evaluate_run(&run_data, &qrels_data);
    let header = s.header("eval-ir", &[("run", show(run)), ("qrels", show(qrels))]);
    let bytes = with_header(&header, |buf| {
        writeln!(buf, "qid\tndcg10\trecall100")?;
        for (qid, ndcg, recall) in &scores.per_query {
            writeln!(buf, "{qid}\t{ndcg:.4}\t{recall:.4}")?;
        }
        writeln!(buf, "all\t{:.4}\t{:.4}", scores.ndcg10, scores.recall100)
    })?;
    write_atomic(out, &bytes)
}

fn qe(s: &Settings, datasets: &[(String, PathBuf)], out: Option<&Path>) -> Result<()> {
    struct Loaded {
        name: String,
        index: Index,
        queries: Vec<(String, String)>,
        qrels: Qrels,
        dict: Dictionary,
    }
    let loaded: Vec<Loaded> = datasets
        .iter()
        .map(|(name, dir)| -> Result<Loaded> {
            let docs = read_documents(&dir.join("docs.jsonl"))?;
            Ok(Loaded {
                name: name.clone(),
                index: Index::build(&docs).with_context(|| format!("dataset {name}"))?,
                queries: read_queries(&dir.join("queries.tsv"))?,
                qrels: Qrels::read(&dir.join("qrels.txt"))?,
                dict: load_dict(&dir.join("dict.tsv"), name.parse().expect("infallible"), true)?,
            })
        })
        .collect::<Result<_>>()?;
    let views: Vec<QeDataset<'_>> = loaded
        .iter()
        .map(|l| QeDataset {
            name: l.name.clone(),
            index: &l.index,
            queries: &l.queries,
            qrels: &l.qrels,
            dict: &l.dict,
        })
        .collect();
    let report = qe_experiment(&views, &s.bm25)?;
    let inputs: Vec<(&str, String)> = datasets.iter().map(|(n, p)| (n.as_str(), show(p))).collect();
    let bytes = with_header(&s.header("qe-experiment", &inputs), |buf| report.write_tsv(buf))?;
    write_atomic(out, &bytes)
}
