//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured quantities.
//!
//! The heavier criteria share one benchmark build (synthetic corpus, alias
//! mining, four trained models) through a lazy static; training runs the
//! full epoch budget without early stopping, the protocol used for the
//! regime comparisons.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use numex::aliasing::{filter_alias_bp, mine_alias_bp, mine_alias_dw, AliasCandidateCounts, AliasConfig};
use numex::annotation::{annotate, is_well_formed_bio, BioTag, MultiTaskAnnotation, Regime};
use numex::corpus::{load_catalog, tokenize, AttributeSpec, ProductRecord, Token, TokenizedText};
use numex::embeddings::EmbeddingTable;
use numex::evaluation::{evaluate, score_pair, Contribution, GoldMention, Predictions};
use numex::tagger::crf;
use numex::tagger::{
    load_model, nll_and_gradient, CrfModel, EncoderConfig, Mode, ModelSetup, TagSpace,
};

use numex_cli::commands::{cmd_alias, cmd_annotate, cmd_eval, cmd_pipeline, cmd_synth, cmd_train, SavedReport};
use numex_cli::config::{compute_splits, RunConfig};

// ---------------------------------------------------------------------
// Shared benchmark artifacts
// ---------------------------------------------------------------------

struct Bench {
    _dir: tempfile::TempDir,
    root: PathBuf,
    reports: BTreeMap<&'static str, SavedReport>,
    configs: BTreeMap<&'static str, RunConfig>,
}

fn bench_config(root: &Path, regime: Regime, mode: Mode) -> RunConfig {
    let mut config = RunConfig {
        regime,
        mode,
        seed: 7,
        ..RunConfig::default()
    };
    config.synth_config = Some(root.join("synth.json"));
    config.paths.catalog = root.join("catalog.jsonl");
    config.paths.gold = root.join("gold.jsonl");
    config.paths.embeddings = root.join("embeddings.txt");
    config.paths.aliases = root.join("aliases.json");
    config.paths.annotations = root.join(format!("ann_{regime}.jsonl"));
    config.paths.model = root.join(format!("model_{regime}_{mode}.json"));
    config.paths.report = root.join(format!("report_{regime}_{mode}.json"));
    config.paths.manifest = root.join(format!("manifest_{regime}_{mode}.json"));
    config.train.early_stopping = false;
    config.resolve_attributes().unwrap();
    config.validate().unwrap();
    config
}

static BENCH: Lazy<Bench> = Lazy::new(|| {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path().to_path_buf();
    let synth = numex::synth::default_benchmark();
    std::fs::write(
        root.join("synth.json"),
        serde_json::to_string_pretty(&synth).unwrap(),
    )
    .unwrap();

    let combos: [(&'static str, Regime, Mode); 4] = [
        ("exact-mast", Regime::Exact, Mode::Mast),
        ("canonical-mast", Regime::Canonical, Mode::Mast),
        ("auto-mast", Regime::Auto, Mode::Mast),
        ("auto-mamt", Regime::Auto, Mode::Mamt),
    ];
    let mut configs = BTreeMap::new();
    for (name, regime, mode) in combos {
        configs.insert(name, bench_config(&root, regime, mode));
    }

    cmd_synth(&configs["auto-mast"]).expect("synth");
    cmd_alias(&configs["auto-mast"]).expect("alias");
    for name in ["exact-mast", "canonical-mast", "auto-mast"] {
        cmd_annotate(&configs[name]).expect("annotate");
    }
    // auto-mamt reuses the auto annotation file.
    let mut reports = BTreeMap::new();
    for (name, _, _) in combos {
        cmd_train(&configs[name]).expect("train");
        reports.insert(name, cmd_eval(&configs[name], None).expect("eval"));
    }
    Bench {
        _dir: dir,
        root,
        reports,
        configs,
    }
});

fn bench_table(bench: &Bench) -> Arc<EmbeddingTable> {
    Arc::new(EmbeddingTable::load(bench.root.join("embeddings.txt")).unwrap())
}

fn bench_records(bench: &Bench) -> Vec<ProductRecord> {
    let config = &bench.configs["auto-mamt"];
    load_catalog(&config.paths.catalog, &config.attribute_names()).unwrap()
}

// ---------------------------------------------------------------------
// Criterion 1: CRF oracle equivalence
// ---------------------------------------------------------------------

fn enumerate_paths(len: usize, n: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(paths.len() * n);
        for p in &paths {
            for y in 0..n {
                let mut q = p.clone();
                q.push(y);
                next.push(q);
            }
        }
        paths = next;
    }
    paths
}

#[test]
fn criterion_01_crf_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..100 {
        let len = rng.gen_range(1..=6);
        let n = rng.gen_range(1..=5);
        let emissions: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let matrix: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let start_scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let stop_scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let trans = crf::Transitions {
            matrix: &matrix,
            start: &start_scores,
            stop: &stop_scores,
            n,
        };
        let paths = enumerate_paths(len, n);
        let scores: Vec<f64> = paths
            .iter()
            .map(|p| crf::path_score(&emissions, &trans, p))
            .collect();
        let brute_log_z = crf::log_sum_exp(&scores);
        let brute_best = paths
            [scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0]
            .clone();
        let log_z = crf::log_partition(&emissions, &trans);
        assert!(
            (log_z - brute_log_z).abs() < 1e-6,
            "case {case}: log partition {log_z} vs brute {brute_log_z}"
        );
        assert_eq!(
            crf::viterbi(&emissions, &trans),
            brute_best,
            "case {case}: viterbi mismatch"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}");
    println!("acceptance 1 (CRF oracle equivalence, 100 instances, {elapsed:?}): PASS");
}

// ---------------------------------------------------------------------
// Criteria 2 and 3: gradients and masking
// ---------------------------------------------------------------------

const GRAD_VOCAB: [&str; 8] = ["16", "gb", "kg", "ram", "Laptop", "1.2", "x", "big"];

fn grad_table() -> Arc<EmbeddingTable> {
    let mut table = EmbeddingTable::new(4);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for word in GRAD_VOCAB {
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        table.insert(word, v);
    }
    Arc::new(table)
}

fn grad_setup(table: Arc<EmbeddingTable>) -> ModelSetup {
    ModelSetup {
        mode: Mode::Mamt,
        attributes: vec!["ram".to_string(), "weight".to_string()],
        encoder: EncoderConfig {
            window: 1,
            hidden: 8,
        },
        table,
        alias_fingerprint: "grad-test".to_string(),
    }
}

fn random_tokens(rng: &mut ChaCha8Rng, len: usize) -> TokenizedText {
    let mut tokens = Vec::with_capacity(len);
    let mut cursor = 0;
    for _ in 0..len {
        let surface = GRAD_VOCAB[rng.gen_range(0..GRAD_VOCAB.len())].to_string();
        let chars = surface.chars().count();
        tokens.push(Token {
            surface,
            start: cursor,
            end: cursor + chars,
        });
        cursor += chars + 1;
    }
    TokenizedText { tokens }
}

fn random_bio(rng: &mut ChaCha8Rng, len: usize) -> Vec<BioTag> {
    let mut tags = Vec::with_capacity(len);
    let mut prev = BioTag::O;
    for _ in 0..len {
        let tag = match prev {
            BioTag::B | BioTag::I => match rng.gen_range(0..3) {
                0 => BioTag::B,
                1 => BioTag::I,
                _ => BioTag::O,
            },
            BioTag::O => {
                if rng.gen_bool(0.4) {
                    BioTag::B
                } else {
                    BioTag::O
                }
            }
        };
        tags.push(tag);
        prev = tag;
    }
    tags
}

fn random_sample(rng: &mut ChaCha8Rng, len: usize, active: [bool; 2]) -> MultiTaskAnnotation {
    let tokens = random_tokens(rng, len);
    let mut per_task = BTreeMap::new();
    let mut active_map = BTreeMap::new();
    for (i, name) in ["ram", "weight"].iter().enumerate() {
        let tags = if active[i] {
            random_bio(rng, len)
        } else {
            vec![BioTag::O; len]
        };
        per_task.insert(name.to_string(), tags);
        active_map.insert(name.to_string(), active[i]);
    }
    MultiTaskAnnotation {
        product_id: "g".to_string(),
        tokens,
        per_task,
        active: active_map,
    }
}

#[test]
fn criterion_02_gradient_matches_finite_differences() {
    let start = Instant::now();
    let table = grad_table();
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let masks = [[true, true], [true, false], [false, true]];
    let mut checked = 0usize;
    for case in 0..20 {
        let setup = grad_setup(table.clone());
        let mut model = CrfModel::new(&setup, &mut rng);
        let sample = random_sample(&mut rng, 5, masks[case % masks.len()]);
        let l2 = if case % 2 == 0 { 0.0 } else { 1e-2 };
        let batch = vec![&sample];
        let (_, grad) = nll_and_gradient(&batch, &model, l2).unwrap();
        let eps = 1e-4;
        for (i, &analytic) in grad.iter().enumerate() {
            let original = model.param(i);
            model.set_param(i, original + eps);
            let plus = nll_and_gradient(&batch, &model, l2).unwrap().0;
            model.set_param(i, original - eps);
            let minus = nll_and_gradient(&batch, &model, l2).unwrap().0;
            model.set_param(i, original);
            let fd = (plus - minus) / (2.0 * eps);
            let denom = 1f64.max(analytic.abs()).max(fd.abs());
            let rel = (analytic - fd).abs() / denom;
            assert!(
                rel < 1e-4,
                "case {case} coord {i}: analytic {analytic} vs fd {fd} (rel {rel})"
            );
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}");
    println!(
        "acceptance 2 (gradient vs finite differences, {checked} coordinates, {elapsed:?}): PASS"
    );
}

#[test]
fn criterion_03_masking_contract() {
    let table = grad_table();
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    for case in 0..50 {
        let setup = grad_setup(table.clone());
        let mut model = CrfModel::new(&setup, &mut rng);
        // Exactly one task inactive.
        let inactive_first = case % 2 == 0;
        let mask = if inactive_first {
            [false, true]
        } else {
            [true, false]
        };
        let len = rng.gen_range(2..7);
        let sample = random_sample(&mut rng, len, mask);
        let batch = vec![&sample];
        let l2 = 1e-3;
        let (loss_before, grad) = nll_and_gradient(&batch, &model, l2).unwrap();
        let inactive_head = if inactive_first { 0 } else { 1 };
        for idx in model.head_param_range(inactive_head) {
            assert_eq!(grad[idx], 0.0, "case {case}: nonzero gradient at {idx}");
        }
        for idx in model.head_param_range(inactive_head) {
            if !model.param_frozen(idx) {
                let v = model.param(idx);
                model.set_param(idx, v + rng.gen_range(-1.0..1.0));
            }
        }
        let (loss_after, _) = nll_and_gradient(&batch, &model, l2).unwrap();
        assert_eq!(
            loss_before.to_bits(),
            loss_after.to_bits(),
            "case {case}: loss changed after perturbing inactive head"
        );
    }
    println!("acceptance 3 (masking contract, 50 instances): PASS");
}

// ---------------------------------------------------------------------
// Criterion 4: alias-mining oracle
// ---------------------------------------------------------------------

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Independent character-level scanner for the value-anchored pattern:
/// word boundary, literal value, [ -]*, maximal ASCII letter run.
/// Leftmost, non-overlapping.
fn scan_value_anchored(text: &str, value: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let value_chars: Vec<char> = value.chars().collect();
    let mut matches = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let boundary = i == 0 || !is_word_char(chars[i - 1]);
        if boundary && chars[i..].starts_with(&value_chars[..]) {
            let mut j = i + value_chars.len();
            while j < chars.len() && (chars[j] == ' ' || chars[j] == '-') {
                j += 1;
            }
            let run_start = j;
            while j < chars.len() && chars[j].is_ascii_alphabetic() {
                j += 1;
            }
            if j > run_start {
                matches.push(chars[run_start..j].iter().collect::<String>().to_lowercase());
                i = j;
                continue;
            }
        }
        i += 1;
    }
    matches
}

/// Independent scanner for the value-free pattern: digits/dots ending in a
/// digit, [ -]*, maximal ASCII letter run. Leftmost, non-overlapping.
fn scan_number_anchored(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut matches = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() || chars[i] == '.' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            // Longest prefix ending in a digit.
            let mut number_end = j;
            while number_end > i && !chars[number_end - 1].is_ascii_digit() {
                number_end -= 1;
            }
            if number_end > i && chars[i..number_end].iter().any(|c| c.is_ascii_digit()) {
                let mut k = number_end;
                while k < chars.len() && (chars[k] == ' ' || chars[k] == '-') {
                    k += 1;
                }
                let run_start = k;
                while k < chars.len() && chars[k].is_ascii_alphabetic() {
                    k += 1;
                }
                if k > run_start {
                    matches.push(chars[run_start..k].iter().collect::<String>().to_lowercase());
                    i = k;
                    continue;
                }
            }
            i = if j > i { j } else { i + 1 };
        } else {
            i += 1;
        }
    }
    matches
}

#[test]
fn criterion_04_alias_mining_oracle() {
    let synth = numex::synth::SynthConfig {
        product_count: 50,
        ..numex::synth::default_benchmark()
    };
    let out = numex::synth::generate(&synth).unwrap();

    // Value-anchored mining versus the scanner, per attribute.
    for attr in synth.attributes.iter().map(|a| a.name.as_str()) {
        let mined = mine_alias_dw(&out.catalog, attr);
        let mut expected: BTreeMap<String, usize> = BTreeMap::new();
        for record in &out.catalog {
            let Some(value) = record.value(attr) else {
                continue;
            };
            let found = scan_value_anchored(&record.text, value);
            if found.len() == 1 {
                *expected.entry(found[0].clone()).or_insert(0) += 1;
            }
        }
        assert_eq!(mined.counts, expected, "value-anchored counts for {attr}");
    }

    // Value-free mining versus the scanner.
    let mined_bp = mine_alias_bp(&out.catalog);
    let mut expected_bp: BTreeMap<String, usize> = BTreeMap::new();
    for record in &out.catalog {
        let distinct: std::collections::BTreeSet<String> =
            scan_number_anchored(&record.text).into_iter().collect();
        for candidate in distinct {
            *expected_bp.entry(candidate).or_insert(0) += 1;
        }
    }
    assert_eq!(mined_bp.counts, expected_bp, "value-free counts");
    assert!(
        !mined_bp.counts.is_empty(),
        "value-free mining found nothing on 50 products"
    );

    // Embedding-filter example: kg anchor keeps pounds and lbs, drops
    // inches, threshold 0.5.
    let mut table = EmbeddingTable::new(2);
    table.insert("kg", vec![1.0, 0.0]);
    table.insert("pounds", vec![0.8, 0.6]);
    table.insert("lbs", vec![0.7, 0.714142842854285]);
    table.insert("inches", vec![0.2, 0.9797958971132712]);
    let candidates = AliasCandidateCounts {
        counts: BTreeMap::from([
            ("pounds".to_string(), 9),
            ("lbs".to_string(), 5),
            ("inches".to_string(), 7),
        ]),
    };
    let config = AliasConfig {
        similarity_threshold: 0.5,
        ..AliasConfig::default()
    };
    let aliases = filter_alias_bp(&candidates, "weight", "kg", &table, &config).unwrap();
    assert_eq!(aliases, vec!["kg", "pounds", "lbs"]);

    println!("acceptance 4 (alias-mining oracle on 50 products + filter example): PASS");
}

// ---------------------------------------------------------------------
// Criteria 5-7, 10: benchmark reproductions
// ---------------------------------------------------------------------

#[test]
fn criterion_05_matching_technique_ordering() {
    let start = Instant::now();
    let bench = &*BENCH;
    let exact = bench.reports["exact-mast"].report.micro.f1;
    let canonical = bench.reports["canonical-mast"].report.micro.f1;
    let auto = bench.reports["auto-mast"].report.micro.f1;
    assert!(
        auto - canonical >= 0.02,
        "auto {auto:.4} vs canonical {canonical:.4}: gap below 2 points"
    );
    assert!(
        canonical - exact >= 0.02,
        "canonical {canonical:.4} vs exact {exact:.4}: gap below 2 points"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}");
    println!(
        "acceptance 5 (micro F1 under the single-task head: auto {auto:.4} > canonical {canonical:.4} > exact {exact:.4}, {elapsed:?}): PASS"
    );
}

#[test]
fn criterion_06_multi_task_gain() {
    let start = Instant::now();
    let bench = &*BENCH;
    let mast = &bench.reports["auto-mast"].report;
    let mamt = &bench.reports["auto-mamt"].report;
    assert!(
        mamt.micro.f1 > mast.micro.f1,
        "multi-task micro {:.4} not above single-task {:.4}",
        mamt.micro.f1,
        mast.micro.f1
    );
    let mast_weight_recall = mast.per_attribute["weight"].recall;
    let mamt_weight_recall = mamt.per_attribute["weight"].recall;
    assert!(
        mamt_weight_recall - mast_weight_recall >= 0.05,
        "weight recall {mamt_weight_recall:.3} vs {mast_weight_recall:.3}: gap below 5 points"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
    println!(
        "acceptance 6 (multi-task micro {:.4} > single-task {:.4}; weight recall {:.3} vs {:.3}, {elapsed:?}): PASS",
        mamt.micro.f1, mast.micro.f1, mamt_weight_recall, mast_weight_recall
    );
}

#[test]
fn criterion_07_exclusive_flag_behavior() {
    let bench = &*BENCH;
    let config = &bench.configs["auto-mamt"];
    let records = bench_records(bench);
    let splits = compute_splits(config, &records).unwrap();
    let gold = numex::evaluation::read_gold(&config.paths.gold).unwrap();

    // Test products where the refresh-rate mention exists but the
    // structured value is missing.
    let mut subset_gold = Vec::new();
    let mut subset_records = Vec::new();
    for record in &splits.test {
        if record.value("refresh_rate").is_some() {
            continue;
        }
        let mention = gold
            .iter()
            .find(|g| g.product_id == record.id && g.attribute == "refresh_rate")
            .expect("gold covers every pair");
        if mention.present {
            subset_records.push(record.clone());
            subset_gold.push(mention.clone());
        }
    }
    assert!(
        subset_gold.len() >= 50,
        "only {} missing-value mentions in the test slice",
        subset_gold.len()
    );

    // The exclusive flag must have been mined on.
    let specs = numex_cli::commands::load_attribute_specs(config).unwrap();
    let refresh = specs.iter().find(|s| s.name == "refresh_rate").unwrap();
    assert!(refresh.exclusive, "refresh_rate not flagged exclusive");

    // Annotation-level contrast: value-anchored regimes cannot tag these
    // mentions; the exclusive path tags every one of them.
    let canonical_specs: Vec<AttributeSpec> = config
        .attributes
        .iter()
        .map(|a| AttributeSpec::canonical_only(&a.name, &a.canonical_unit))
        .collect();
    for record in &subset_records {
        let canonical = annotate(record, &canonical_specs, Regime::Canonical);
        assert!(
            canonical.per_task["refresh_rate"]
                .iter()
                .all(|&t| t == BioTag::O),
            "canonical regime tagged a missing-value mention"
        );
        let auto = annotate(record, &specs, Regime::Auto);
        assert!(
            auto.per_task["refresh_rate"].contains(&BioTag::B),
            "exclusive annotation missed a mention in {}",
            record.id
        );
    }

    // Model-level recall on the subset.
    let table = bench_table(bench);
    let model = load_model(&config.paths.model, table).unwrap();
    let mut predictions = Predictions::default();
    for record in &subset_records {
        for (attr, values) in model.decode(&tokenize(&record.text)) {
            predictions.insert(&record.id, &attr, values);
        }
    }
    let report = evaluate(&subset_gold, &predictions, None).unwrap();
    let recall = report.per_attribute["refresh_rate"].recall;
    assert!(
        recall >= 0.95,
        "refresh_rate recall {recall:.3} on {} missing-value mentions",
        subset_gold.len()
    );
    println!(
        "acceptance 7 (exclusive unit: recall {recall:.3} on {} missing-value mentions): PASS",
        subset_gold.len()
    );
}

// ---------------------------------------------------------------------
// Criterion 8: credit-rule conformance
// ---------------------------------------------------------------------

#[test]
fn criterion_08_credit_rule() {
    let present = GoldMention {
        product_id: "p".to_string(),
        attribute: "ram".to_string(),
        value: Some("4".to_string()),
        present: true,
    };
    let absent = GoldMention {
        product_id: "p".to_string(),
        attribute: "ram".to_string(),
        value: None,
        present: false,
    };
    assert_eq!(
        score_pair(&present, &["4".to_string()]),
        Contribution::TruePositive
    );
    assert_eq!(
        score_pair(&present, &["4".to_string(), "16".to_string()]),
        Contribution::FalsePositiveAndNegative
    );
    assert_eq!(score_pair(&absent, &[]), Contribution::TrueNegative);
    println!("acceptance 8 (credit-rule cases): PASS");
}

// ---------------------------------------------------------------------
// Criterion 9: end-to-end determinism
// ---------------------------------------------------------------------

#[test]
fn criterion_09_pipeline_determinism() {
    let synth = numex::synth::SynthConfig {
        product_count: 200,
        ..numex::synth::default_benchmark()
    };
    let mut outputs = Vec::new();
    let mut dirs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(
            root.join("synth.json"),
            serde_json::to_string_pretty(&synth).unwrap(),
        )
        .unwrap();
        let mut config = bench_config(&root, Regime::Auto, Mode::Mamt);
        config.train.epochs = 10;
        config.train.learning_rate = 5e-3;
        cmd_pipeline(&config).expect("pipeline");
        let report = std::fs::read(&config.paths.report).unwrap();
        let model = std::fs::read(&config.paths.model).unwrap();
        outputs.push((report, model));
        dirs.push(dir);
    }
    assert_eq!(outputs[0].0, outputs[1].0, "reports differ between runs");
    assert_eq!(outputs[0].1, outputs[1].1, "models differ between runs");
    println!("acceptance 9 (pipeline determinism, byte-identical report and model): PASS");
}

// ---------------------------------------------------------------------
// Criterion 10: BIO well-formedness everywhere
// ---------------------------------------------------------------------

fn path_is_well_formed(tags: &TagSpace, path: &[usize]) -> bool {
    let mut prev: Option<usize> = None;
    for &tag in path {
        if tags.is_i(tag) {
            match prev {
                None => return false,
                Some(p) => {
                    if !tags.allowed_transition(p, tag) {
                        return false;
                    }
                }
            }
        }
        prev = Some(tag);
    }
    true
}

#[test]
fn criterion_10_bio_well_formedness() {
    let bench = &*BENCH;
    let mut sequences = 0usize;

    for name in ["exact-mast", "canonical-mast", "auto-mast"] {
        let annotations =
            numex::annotation::read_annotations(&bench.configs[name].paths.annotations).unwrap();
        for annotation in &annotations {
            for (task, tags) in &annotation.per_task {
                assert!(
                    is_well_formed_bio(tags),
                    "{name}: ill-formed {task} sequence in {}",
                    annotation.product_id
                );
                sequences += 1;
            }
        }
    }

    let table = bench_table(bench);
    let records = bench_records(bench);
    for name in ["exact-mast", "canonical-mast", "auto-mast", "auto-mamt"] {
        let config = &bench.configs[name];
        let splits = compute_splits(config, &records).unwrap();
        let model = load_model(&config.paths.model, table.clone()).unwrap();
        for record in &splits.test {
            let tokens = tokenize(&record.text);
            for (head_idx, (_, path)) in model.decode_paths(&tokens).iter().enumerate() {
                let tags = &model.heads()[head_idx].tags;
                assert!(
                    path_is_well_formed(tags, path),
                    "{name}: ill-formed decode on {}",
                    record.id
                );
                sequences += 1;
            }
        }
    }
    println!("acceptance 10 (BIO well-formedness over {sequences} sequences): PASS");
}
