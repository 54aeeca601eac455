//! Acceptance checks, one status line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the report reads top to
//! bottom. Checks that need the annotated discussion corpus look for it in
//! `DISPARSE_CMV_CORPUS` and report SKIP when it is absent; the best-config
//! check additionally needs `DISPARSE_CMV_PDTB_SIDECAR` and
//! `DISPARSE_CMV_PDTB_INVENTORY` (and optionally `DISPARSE_CMV_LEXICON`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use disparse::analytics::{pmi_matrix, transition_matrix};
use disparse::corpus::extract_branches;
use disparse::eval::{cross_validate, perturb_labels, score, NoiseMode, NoiseSpec, NoiseTargets, RunSetup};
use disparse::features::{
    build_vocabulary, pdtb_features, vectorize_bow, BowConfig, FeatureConfig, PdtbInventory, PdtbSidecar, Resources,
    Weighting,
};
use disparse::matrix::Matrix;
use disparse::models::{
    logistic, parse_posts, train_stack, ContextMode, LabelContext, ModelSpec, Network, PathPost, StackSpec, TagStack,
};
use disparse::synth::{generate_synthetic, SyntheticSpec};
use disparse::{ConversationTree, LabelSet, PostNode, Tag, NUM_TAGS};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn main() {
    let checks: [(&str, Check); 7] = [
        ("corpus statistics match the annotated corpus counts", table_statistics),
        (
            "best configuration and noise ordering on the reference corpus",
            best_configuration,
        ),
        ("synthetic cue and dependency recovery", synthetic_recovery),
        (
            "oracle equivalence for PMI, transitions, TF-IDF, PDTB bigrams, P/R/F1",
            oracles,
        ),
        ("LR and FF gradients match finite differences", gradients),
        ("branch count, causality, per-command determinism", structural),
        ("noise fractions at n = 10^4 and fraction-0 identity", noise_mechanics),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let t0 = Instant::now();
        let outcome = check();
        let secs = t0.elapsed().as_secs_f64();
        let (status, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{status}  {name} [{secs:.1}s]: {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

// ---------------------------------------------------------------------------
// Binary helpers

fn disparse(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_disparse"))
        .args(args)
        .env_remove("DISPARSE_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "disparse {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn report(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("report.json")).expect("report.json");
    serde_json::from_str::<serde_json::Value>(&text).expect("valid json")["report"].clone()
}

fn env_path(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).map(PathBuf::from).filter(|p| p.exists())
}

// ---------------------------------------------------------------------------
// Reference corpus

fn table_statistics() -> Outcome {
    let Some(corpus) = env_path("DISPARSE_CMV_CORPUS") else {
        return Outcome::Skip("DISPARSE_CMV_CORPUS not set".into());
    };
    let tmp = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let out = tmp.path().join("stats");
    if let Err(e) = disparse(&[
        "stats",
        "--input",
        corpus.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]) {
        return Outcome::Fail(e);
    }
    let secs = t0.elapsed().as_secs_f64();
    let r = report(&out);
    let expect = [
        ("num_trees", 100u64),
        ("total_branches", 1946),
        ("total_nodes", 10559),
        ("total_labeled_nodes", 9620),
        ("total_labels", 17964),
    ];
    let mut bad = Vec::new();
    for (field, want) in expect {
        let got = r[field].as_u64().unwrap_or(0);
        if got != want {
            bad.push(format!("{field} {got} != {want}"));
        }
    }
    let tokens = r["total_tokens"].as_f64().unwrap_or(0.0);
    if ((tokens - 1_143_777.0) / 1_143_777.0).abs() > 0.01 {
        bad.push(format!("total_tokens {tokens} outside 1%"));
    }
    if secs >= 60.0 {
        bad.push(format!("took {secs:.1}s"));
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            format!("all counts match, tokens {tokens}")
        } else {
            bad.join("; ")
        },
    )
}

fn best_configuration() -> Outcome {
    let (Some(corpus), Some(sidecar), Some(inventory)) = (
        env_path("DISPARSE_CMV_CORPUS"),
        env_path("DISPARSE_CMV_PDTB_SIDECAR"),
        env_path("DISPARSE_CMV_PDTB_INVENTORY"),
    ) else {
        return Outcome::Skip("reference corpus or its PDTB relations not available".into());
    };
    let tmp = tempfile::tempdir().unwrap();
    let mut resources = serde_json::json!({
        "pdtb_sidecar": sidecar,
        "pdtb_inventory": inventory,
    });
    if let Some(lex) = env_path("DISPARSE_CMV_LEXICON") {
        resources["lexicon"] = serde_json::json!(lex);
    }
    let config = serde_json::json!({
        "model": {"default": {"kind": "feed_forward", "hidden": [64, 32, 16], "learning_rate": 0.01, "l2": 1e-4}},
        "split": {"held_out": 15},
        "resources": resources,
        "noise": [
            {"mode": "substitute", "fraction": 0.1},
            {"mode": "substitute", "fraction": 0.5},
        ],
    });
    let cfg = tmp.path().join("config.json");
    fs::write(&cfg, config.to_string()).unwrap();
    let out = tmp.path().join("noise");
    if let Err(e) = disparse(&[
        "noise",
        "--config",
        cfg.to_str().unwrap(),
        "--input",
        corpus.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]) {
        return Outcome::Fail(e);
    }
    let rows = report(&out)["rows"].as_array().cloned().unwrap_or_default();
    let f: Vec<f64> = rows
        .iter()
        .map(|r| r["weighted_f1"].as_f64().unwrap_or(f64::NAN))
        .collect();
    if f.len() != 3 {
        return Outcome::Fail(format!("expected 3 noise rows, got {}", f.len()));
    }
    let ok = (f[0] - 0.526).abs() <= 0.08 && f[0] > f[1] && f[1] > f[2];
    verdict(
        ok,
        format!(
            "clean {:.3}, 10% substitute {:.3}, 50% substitute {:.3}",
            f[0], f[1], f[2]
        ),
    )
}

// ---------------------------------------------------------------------------
// Synthetic recovery

fn b1() -> FeatureConfig {
    FeatureConfig {
        bow: Some(BowConfig {
            dimension: 1000,
            weighting: Weighting::Binary,
            context: 1,
        }),
        ..Default::default()
    }
}

fn synthetic_recovery() -> Outcome {
    let t0 = Instant::now();
    let tags: Vec<Tag> = Tag::all().collect();
    let specs = StackSpec::uniform(ModelSpec::default());
    let res = Resources::default();

    let planted = generate_synthetic(&SyntheticSpec::planted_cues(50, 0)).unwrap();
    let labeled = planted.truth.num_labeled_nodes;
    let present = planted.truth.tag_counts.values().filter(|&&c| c > 0).count();
    let b1 = b1();
    let setup = RunSetup {
        config: &b1,
        specs: &specs,
        resources: &res,
        tags: &tags,
        mode: ContextMode::Predicted,
        seed: 0,
    };
    let planted_f1 = match cross_validate(&planted.trees, &setup, 5) {
        Ok(cv) => cv.mean.weighted_f1,
        Err(e) => return Outcome::Fail(e.to_string()),
    };

    let t2 = FeatureConfig {
        label_sequence_depth: 2,
        ..b1.clone()
    };
    let (mut base, mut hist) = (0.0, 0.0);
    for seed in 0..3 {
        let spec = SyntheticSpec::with_dependencies(50, seed);
        let corpus = generate_synthetic(&spec).unwrap();
        let dep = spec.dependent_tags();
        for (cfg, acc) in [(&b1, &mut base), (&t2, &mut hist)] {
            let setup = RunSetup {
                config: cfg,
                seed,
                ..setup.clone()
            };
            match cross_validate(&corpus.trees, &setup, 5) {
                Ok(cv) => *acc += cv.mean_f1_over(&dep) / 3.0,
                Err(e) => return Outcome::Fail(e.to_string()),
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = labeled >= 2000 && present == NUM_TAGS && planted_f1 >= 0.90 && hist - base >= 0.10 && secs < 300.0;
    verdict(
        ok,
        format!(
            "planted w.F1 {planted_f1:.3} ({labeled} labeled, {present} tags); dependent-tag F1 {base:.3} -> {hist:.3} with T2 (predicted context); {secs:.0}s"
        ),
    )
}

// ---------------------------------------------------------------------------
// Oracles

fn set(names: &[&str]) -> LabelSet {
    LabelSet::from_names(names).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn pmi_oracle() -> Result<(), String> {
    let sets = vec![
        set(&["Answer", "Sarcasm"]),
        set(&["Answer"]),
        set(&["Sarcasm", "Ridicule", "Answer"]),
        set(&[]),
        set(&["Ridicule"]),
        set(&["Clarification", "Answer"]),
        set(&["Sarcasm", "Ridicule"]),
        set(&["Answer"]),
        set(&["Extension"]),
        set(&["Answer", "Extension"]),
    ];
    let m = pmi_matrix(&sets).map_err(|e| e.to_string())?;
    let nodes: Vec<&LabelSet> = sets.iter().filter(|s| !s.is_empty()).collect();
    let n = nodes.len() as f64;
    for a in Tag::all() {
        for b in Tag::all() {
            let ca = nodes.iter().filter(|s| s.contains(a)).count() as f64;
            let cb = nodes.iter().filter(|s| s.contains(b)).count() as f64;
            let cab = nodes.iter().filter(|s| s.contains(a) && s.contains(b)).count() as f64;
            let want = if ca == 0.0 || cb == 0.0 {
                0.0
            } else {
                (((cab + 1.0) / (n + 1.0)) / (((ca + 1.0) / (n + 1.0)) * ((cb + 1.0) / (n + 1.0)))).log2()
            };
            if !close(m.get(a, b), want) {
                return Err(format!("PMI {a}/{b}: {} vs {want}", m.get(a, b)));
            }
        }
    }
    Ok(())
}

fn node(id: &str, parent: Option<&str>, labels: &[&str]) -> PostNode {
    PostNode {
        node_id: id.into(),
        parent_id: parent.map(Into::into),
        author: format!("u{}", id.len()),
        text: format!("post {id}"),
        timestamp: None,
        labels: set(labels),
    }
}

fn transition_oracle() -> Result<(), String> {
    let raw = vec![
        vec![
            node("r", None, &["Moderation"]),
            node("a", Some("r"), &["Answer", "Sarcasm"]),
            node("b", Some("r"), &["CounterArgument"]),
            node("c", Some("a"), &["Ridicule"]),
            node("d", Some("a"), &[]),
            node("e", Some("d"), &["Answer"]),
            node("f", Some("b"), &["Answer", "CounterArgument"]),
        ],
        vec![
            node("r", None, &["Answer"]),
            node("x", Some("r"), &["Sarcasm"]),
            node("y", Some("x"), &["Sarcasm", "Ridicule"]),
            node("z", Some("y"), &["Answer"]),
        ],
    ];
    let trees: Vec<ConversationTree> = raw
        .iter()
        .enumerate()
        .map(|(i, nodes)| ConversationTree::new(format!("t{i}"), nodes.clone()).unwrap())
        .collect();
    let m = transition_matrix(&trees);
    let mut counts: BTreeMap<(Tag, Tag), f64> = BTreeMap::new();
    for nodes in &raw {
        for child in nodes {
            let Some(pid) = &child.parent_id else { continue };
            let parent = nodes.iter().find(|n| &n.node_id == pid).unwrap();
            for a in Tag::all().filter(|&t| parent.labels.contains(t)) {
                for b in Tag::all().filter(|&t| child.labels.contains(t)) {
                    *counts.entry((a, b)).or_default() += 1.0;
                }
            }
        }
    }
    for a in Tag::all() {
        let row: f64 = Tag::all().map(|b| counts.get(&(a, b)).copied().unwrap_or(0.0)).sum();
        for b in Tag::all() {
            let c = counts.get(&(a, b)).copied().unwrap_or(0.0);
            let want = if row == 0.0 { 0.0 } else { c / row };
            if !close(m.get(a, b), want) {
                return Err(format!("transition {a}->{b}: {} vs {want}", m.get(a, b)));
            }
        }
    }
    Ok(())
}

fn tfidf_oracle() -> Result<(), String> {
    let docs: Vec<Vec<String>> = [
        "the cat sat on the mat",
        "the dog sat",
        "a cat and a dog",
        "mat mat mat",
        "on the dog",
    ]
    .iter()
    .map(|d| d.split(' ').map(String::from).collect())
    .collect();
    let dim = 5;
    let vocab = build_vocabulary(&docs, dim, Weighting::TfIdf).map_err(|e| e.to_string())?;
    // Independent ranking: document frequency descending, then term.
    let mut all: Vec<&str> = docs.iter().flatten().map(String::as_str).collect();
    all.sort();
    all.dedup();
    let df = |t: &str| docs.iter().filter(|d| d.iter().any(|w| w == t)).count();
    all.sort_by(|a, b| df(b).cmp(&df(a)).then(a.cmp(b)));
    let kept = &all[..dim];
    if vocab.terms() != kept {
        return Err(format!("vocabulary {:?} vs {kept:?}", vocab.terms()));
    }
    let n = docs.len() as f64;
    for doc in &docs {
        let got = vectorize_bow(doc, &vocab);
        let mut want = vec![0.0; dim];
        for (i, term) in kept.iter().enumerate() {
            let tf = doc.iter().filter(|w| w == term).count() as f64;
            want[i] = tf * (((1.0 + n) / (1.0 + df(term) as f64)).ln() + 1.0);
        }
        let norm = want.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (g, w) in got.iter().zip(&want) {
            let w = if norm > 0.0 { w / norm } else { 0.0 };
            if !close(*g, w) {
                return Err(format!("tf-idf {doc:?}: {got:?} vs {want:?}"));
            }
        }
    }
    Ok(())
}

fn pdtb_oracle() -> Result<(), String> {
    let names = ["Contrast", "Cause", "Conjunction", "Instantiation"];
    let inv = PdtbInventory::new(names).map_err(|e| e.to_string())?;
    let seqs = [
        vec!["Contrast", "Cause", "Contrast", "Cause", "Cause"],
        vec!["Conjunction"],
        vec![],
        vec![
            "Instantiation",
            "Contrast",
            "Instantiation",
            "Contrast",
            "Conjunction",
            "Cause",
            "Cause",
        ],
    ];
    let mut sidecar = PdtbSidecar::new(inv);
    for (i, s) in seqs.iter().enumerate() {
        sidecar
            .insert(Some("t"), &format!("n{i}"), s)
            .map_err(|e| e.to_string())?;
    }
    for (i, s) in seqs.iter().enumerate() {
        let (uni, bi) = pdtb_features("t", &format!("n{i}"), &sidecar);
        for (a, na) in names.iter().enumerate() {
            let want = s.iter().filter(|x| *x == na).count() as f64;
            if !close(uni[a], want) {
                return Err(format!("unigram {na} in seq {i}"));
            }
            for (b, nb) in names.iter().enumerate() {
                let mut want = 0.0;
                for k in 1..s.len() {
                    if s[k - 1] == *na && s[k] == *nb {
                        want += 1.0;
                    }
                }
                if !close(bi[a * names.len() + b], want) {
                    return Err(format!(
                        "bigram {na},{nb} in seq {i}: {} vs {want}",
                        bi[a * names.len() + b]
                    ));
                }
            }
        }
    }
    let (uni, bi) = pdtb_features("t", "missing", &sidecar);
    if uni.iter().chain(&bi).any(|&v| v != 0.0) {
        return Err("absent post has non-zero counts".into());
    }
    Ok(())
}

fn prf_oracle() -> Result<(), String> {
    let gold = vec![
        set(&["Answer", "Sarcasm"]),
        set(&["Answer"]),
        set(&["Ridicule"]),
        set(&["Sarcasm"]),
        set(&["Answer", "Ridicule"]),
        set(&["Clarification"]),
        set(&["Answer"]),
        set(&["Sarcasm", "Ridicule"]),
    ];
    let pred = vec![
        set(&["Answer"]),
        set(&["Answer", "Ridicule"]),
        set(&[]),
        set(&["Sarcasm"]),
        set(&["Answer", "Ridicule"]),
        set(&["Answer"]),
        set(&["Extension"]),
        set(&["Sarcasm"]),
    ];
    let tags: Vec<Tag> = Tag::all().collect();
    let r = score(&pred, &gold, &tags).map_err(|e| e.to_string())?;
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let (mut macro_f1, mut weighted_f1, mut supported, mut total) = (0.0, 0.0, 0.0, 0.0);
    for t in Tag::all() {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (p, g) in pred.iter().zip(&gold) {
            match (p.contains(t), g.contains(t)) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                _ => {}
            }
        }
        let p = div(tp, tp + fp);
        let rc = div(tp, tp + fn_);
        let f = div(2.0 * p * rc, p + rc);
        let m = r.tag(t).ok_or("missing tag row")?;
        if !(close(m.precision, p) && close(m.recall, rc) && close(m.f1, f)) {
            return Err(format!(
                "{t}: ({}, {}, {}) vs ({p}, {rc}, {f})",
                m.precision, m.recall, m.f1
            ));
        }
        let support = tp + fn_;
        if support > 0.0 {
            supported += 1.0;
            total += support;
            macro_f1 += f;
            weighted_f1 += support * f;
        }
    }
    if !close(r.macro_avg.f1, macro_f1 / supported) || !close(r.weighted_avg.f1, weighted_f1 / total) {
        return Err(format!(
            "averages {} {} vs {} {}",
            r.macro_avg.f1,
            r.weighted_avg.f1,
            macro_f1 / supported,
            weighted_f1 / total
        ));
    }
    Ok(())
}

fn oracles() -> Outcome {
    type Oracle = fn() -> Result<(), String>;
    let checks: [(&str, Oracle); 5] = [
        ("PMI", pmi_oracle),
        ("transitions", transition_oracle),
        ("TF-IDF", tfidf_oracle),
        ("PDTB bigrams", pdtb_oracle),
        ("P/R/F1", prf_oracle),
    ];
    let mut bad = Vec::new();
    for (name, f) in checks {
        if let Err(e) = f() {
            bad.push(format!("{name}: {e}"));
        }
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            "5/5 exact to 1e-9".into()
        } else {
            bad.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// Gradients

struct Problem {
    x: Matrix,
    y: Vec<bool>,
    w: Vec<f64>,
    rows: Vec<usize>,
    l2: f64,
}

fn problem(rng: &mut ChaCha8Rng) -> Problem {
    let n = rng.gen_range(4..12);
    let d = rng.gen_range(2..9);
    let x = Matrix::from_rows(
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect(),
    );
    Problem {
        x,
        y: (0..n).map(|_| rng.gen_bool(0.5)).collect(),
        w: (0..n).map(|_| rng.gen_range(0.2..2.0)).collect(),
        rows: (0..n).collect(),
        l2: rng.gen_range(0.0..0.1),
    }
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 =
        analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

fn finite_difference(params: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let v = p[i];
            p[i] = v + h;
            let up = f(&p);
            p[i] = v - h;
            let down = f(&p);
            p[i] = v;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_lr: f64 = 0.0;
    let mut worst_ff: f64 = 0.0;
    for _ in 0..20 {
        let pr = problem(&mut rng);
        let d = pr.x.cols();
        let flat: Vec<f64> = (0..=d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &[f64]| {
            logistic::loss_and_gradient(
                &logistic::LogisticParams::from_flat(p),
                &pr.x,
                &pr.y,
                &pr.w,
                &pr.rows,
                pr.l2,
            )
            .0
        };
        let (_, g) = logistic::loss_and_gradient(
            &logistic::LogisticParams::from_flat(&flat),
            &pr.x,
            &pr.y,
            &pr.w,
            &pr.rows,
            pr.l2,
        );
        worst_lr = worst_lr.max(rel_error(&g, &finite_difference(&flat, loss)));
    }
    for i in 0..20 {
        let pr = problem(&mut rng);
        let layers = rng.gen_range(1..4);
        let hidden: Vec<usize> = (0..layers).map(|_| rng.gen_range(2..6)).collect();
        let net = Network::init(pr.x.cols(), &hidden, i);
        let sizes = net.sizes().to_vec();
        let loss = |p: &[f64]| {
            Network::from_parts(sizes.clone(), p.to_vec())
                .unwrap()
                .loss_and_gradient(&pr.x, &pr.y, &pr.w, &pr.rows, pr.l2)
                .0
        };
        let (_, g) = net.loss_and_gradient(&pr.x, &pr.y, &pr.w, &pr.rows, pr.l2);
        worst_ff = worst_ff.max(rel_error(&g, &finite_difference(net.params(), loss)));
    }
    verdict(
        worst_lr < 1e-4 && worst_ff < 1e-4,
        format!("worst relative error LR {worst_lr:.1e}, FF {worst_ff:.1e} over 20 instances each"),
    )
}

// ---------------------------------------------------------------------------
// Structural invariants

fn random_tree(rng: &mut ChaCha8Rng, id: usize) -> ConversationTree {
    let n = rng.gen_range(1..60);
    let nodes: Vec<PostNode> = (0..n)
        .map(|i| PostNode {
            node_id: format!("n{i}"),
            parent_id: (i > 0).then(|| format!("n{}", rng.gen_range(0..i))),
            author: format!("u{}", rng.gen_range(0..5)),
            text: "text".into(),
            timestamp: None,
            labels: LabelSet::default(),
        })
        .collect();
    ConversationTree::new(format!("r{id}"), nodes).unwrap()
}

fn branch_counts() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100 {
        let t = random_tree(&mut rng, i);
        let parents: std::collections::HashSet<&str> =
            t.nodes().iter().filter_map(|n| n.parent_id.as_deref()).collect();
        let leaves = t
            .nodes()
            .iter()
            .filter(|n| !parents.contains(n.node_id.as_str()))
            .count();
        let branches = extract_branches(&t).len();
        if branches != leaves {
            return Err(format!("tree {i}: {branches} branches, {leaves} leaves"));
        }
    }
    Ok("100 trees".into())
}

fn causality_stack() -> TagStack {
    let corpus = generate_synthetic(&SyntheticSpec::with_dependencies(8, 5)).unwrap();
    let config = FeatureConfig {
        label_sequence_depth: 3,
        use_collocation: true,
        bow: Some(BowConfig {
            dimension: 300,
            weighting: Weighting::TfIdf,
            context: 3,
        }),
        ..Default::default()
    };
    let tags: Vec<Tag> = Tag::all().collect();
    train_stack(
        &corpus.trees,
        &config,
        &StackSpec::default(),
        &Resources::default(),
        &tags,
        5,
    )
    .unwrap()
}

fn causality() -> Result<String, String> {
    let stack = causality_stack();
    let held = generate_synthetic(&SyntheticSpec::with_dependencies(10, 99)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    'trees: for tree in &held.trees {
        for b in extract_branches(tree) {
            if b.len() < 3 {
                continue;
            }
            let posts: Vec<PathPost> = b
                .node_ids
                .iter()
                .map(|id| {
                    let n = tree.node(tree.position(id).unwrap());
                    PathPost {
                        tree_id: tree.tree_id().into(),
                        node_id: id.clone(),
                        text: n.text.clone(),
                        gold: Some(n.labels),
                    }
                })
                .collect();
            let k = rng.gen_range(1..posts.len());
            let mut edited = posts.clone();
            for p in &mut edited[k..] {
                p.text = "cuesarcasm cueanswer completely different words".into();
                p.gold = Some(set(&["Sarcasm", "Moderation"]));
            }
            edited.push(PathPost {
                tree_id: tree.tree_id().into(),
                node_id: "extra".into(),
                text: "cuedirectno".into(),
                gold: Some(set(&["DirectNo"])),
            });
            for mode in [ContextMode::Predicted, ContextMode::Gold] {
                let a = parse_posts(&stack, &posts, mode).map_err(|e| e.to_string())?;
                let c = parse_posts(&stack, &edited, mode).map_err(|e| e.to_string())?;
                let prefix = parse_posts(&stack, &posts[..k], mode).map_err(|e| e.to_string())?;
                if a[..k] != c[..k] || a[..k] != prefix[..] {
                    return Err(format!(
                        "{} {:?}: prefix of {k} changed",
                        tree.tree_id(),
                        b.node_ids.last()
                    ));
                }
            }
            checked += 1;
            if checked == 50 {
                break 'trees;
            }
        }
    }
    if checked < 50 {
        return Err(format!("only {checked} branches available"));
    }
    Ok("50 branches".into())
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        files.insert(
            p.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&p).unwrap(),
        );
    }
    files
}

fn determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let config = serde_json::json!({
        "features": {"bow": {"dimension": 200}, "label_sequence_depth": 2, "use_collocation": true, "scaling": "min_max"},
        "folds": 3,
        "ablation": {"grid": [
            {"bow": {"dimension": 200}},
            {"bow": {"dimension": 200}, "label_sequence_depth": 2},
            {"bow": {"dimension": 200}, "lexicon": {}, "label_sequence_depth": 2, "use_collocation": true},
        ]},
        "noise": [
            {"mode": "substitute", "fraction": 0.5, "seed": 1},
            {"mode": "mask", "fraction": 0.2, "seed": 2},
            {"mode": "add", "fraction": 0.3, "seed": 3},
        ],
    });
    fs::write(root.join("config.json"), config.to_string()).unwrap();
    let cfg = p("config.json");
    let corpus = root.join("a-synth").join("trees.ndjson").to_string_lossy().into_owned();
    let model = p("a-train");
    type Args<'a> = Box<dyn Fn(&str) -> Vec<String> + 'a>;
    let commands: Vec<(&str, Args)> = vec![
        (
            "synth",
            Box::new(|o: &str| {
                args(&[
                    "synth",
                    "--preset",
                    "dependencies",
                    "--trees",
                    "12",
                    "--seed",
                    "4",
                    "--out",
                    o,
                ])
            }),
        ),
        (
            "ingest",
            Box::new(|o: &str| args(&["ingest", "--input", &corpus, "--out", o])),
        ),
        (
            "stats",
            Box::new(|o: &str| args(&["stats", "--input", &corpus, "--out", o])),
        ),
        (
            "analytics",
            Box::new(|o: &str| args(&["analytics", "--input", &corpus, "--out", o])),
        ),
        (
            "train",
            Box::new(|o: &str| args(&["train", "--config", &cfg, "--input", &corpus, "--seed", "9", "--out", o])),
        ),
        (
            "parse",
            Box::new(|o: &str| {
                args(&[
                    "parse", "--config", &cfg, "--model", &model, "--input", &corpus, "--out", o,
                ])
            }),
        ),
        (
            "eval",
            Box::new(|o: &str| args(&["eval", "--config", &cfg, "--input", &corpus, "--seed", "9", "--out", o])),
        ),
        (
            "ablate",
            Box::new(|o: &str| {
                args(&[
                    "ablate", "--config", &cfg, "--input", &corpus, "--seed", "9", "--out", o,
                ])
            }),
        ),
        (
            "noise",
            Box::new(|o: &str| args(&["noise", "--config", &cfg, "--input", &corpus, "--seed", "9", "--out", o])),
        ),
    ];
    for (name, build) in &commands {
        let mut runs = Vec::new();
        for run in ["a", "b"] {
            let out = p(&format!("{run}-{name}"));
            let a = build(&out);
            let refs: Vec<&str> = a.iter().map(String::as_str).collect();
            let stdout = disparse(&refs)?;
            let mut snap = snapshot(Path::new(&out));
            // Stdout mentions the output directory; compare it with that masked.
            let text = String::from_utf8_lossy(&stdout).replace(&out, "<out>");
            snap.insert("<stdout>".into(), text.into_bytes());
            runs.push(snap);
        }
        if runs[0] != runs[1] {
            let differing: Vec<&String> = runs[0]
                .iter()
                .filter(|(k, v)| runs[1].get(*k) != Some(v))
                .map(|(k, _)| k)
                .collect();
            return Err(format!("{name}: outputs differ in {differing:?}"));
        }
    }
    Ok(format!("{} subcommands", commands.len()))
}

fn args(a: &[&str]) -> Vec<String> {
    a.iter().map(|s| s.to_string()).collect()
}

fn structural() -> Outcome {
    let parts = [branch_counts(), causality(), determinism()];
    let ok = parts.iter().all(Result::is_ok);
    let detail: Vec<String> = parts
        .into_iter()
        .map(|r| match r {
            Ok(s) => s,
            Err(e) => format!("error: {e}"),
        })
        .collect();
    verdict(ok, detail.join("; "))
}

// ---------------------------------------------------------------------------
// Noise

fn noise_mechanics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // 5000 two-tag sets: 10^4 occurrences.
    let previous: Vec<LabelSet> = (0..5000)
        .map(|_| {
            let mut s = LabelSet::default();
            while s.len() < 2 {
                s.insert(Tag::from_index(rng.gen_range(0..NUM_TAGS)).unwrap());
            }
            s
        })
        .collect();
    let ctx = LabelContext {
        previous,
        collocated: LabelSet::default(),
    };
    let priors = disparse::analytics::Priors::uniform();
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for mode in [NoiseMode::Mask, NoiseMode::Substitute] {
        for fraction in [0.1, 0.3, 0.5, 0.9] {
            for seed in 0..3 {
                let spec = NoiseSpec {
                    mode,
                    fraction,
                    targets: NoiseTargets::Both,
                    seed,
                };
                let (out, stats) = perturb_labels(&ctx, &spec, &priors).unwrap();
                let mut touched = 0usize;
                for (before, after) in ctx.previous.iter().zip(&out.previous) {
                    touched += before.iter().filter(|&t| !after.contains(t)).count();
                    if mode == NoiseMode::Substitute && before.len() != after.len() {
                        bad.push(format!("substitution changed a set size: {before:?} -> {after:?}"));
                    }
                    if mode == NoiseMode::Mask && after.iter().any(|t| !before.contains(t)) {
                        bad.push("masking added a tag".into());
                    }
                }
                if touched as u64 != stats.removed + stats.substituted {
                    bad.push(format!(
                        "{mode:?} {fraction}: counters report {} changes, found {touched}",
                        stats.removed + stats.substituted
                    ));
                }
                let observed = touched as f64 / 10_000.0;
                worst = worst.max((observed - fraction).abs());
            }
        }
    }
    if worst > 0.02 {
        bad.push(format!("deviation {worst:.4}"));
    }
    for mode in [NoiseMode::Mask, NoiseMode::Substitute, NoiseMode::Add] {
        let spec = NoiseSpec {
            mode,
            fraction: 0.0,
            targets: NoiseTargets::Both,
            seed: 1,
        };
        let mut c = ctx.clone();
        c.collocated = set(&["Answer", "Sarcasm"]);
        let (out, stats) = perturb_labels(&c, &spec, &priors).unwrap();
        if out != c || stats.removed + stats.substituted + stats.added != 0 {
            bad.push(format!("{mode:?} at fraction 0 changed the context"));
        }
    }
    bad.dedup();
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            format!("max |observed - requested| {worst:.4} over mask/substitute at 4 fractions x 3 seeds")
        } else {
            bad.join("; ")
        },
    )
}
