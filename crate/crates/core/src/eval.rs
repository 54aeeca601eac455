//! Scoring, cross-validation, ablation grids and label-noise experiments.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{labeled_sets, tag_priors, AnalyticsError, Priors};
use crate::corpus::{make_folds, ConversationTree, CorpusError};
use crate::features::{FeatureConfig, Resources};
use crate::models::{
    predict_tree, predict_tree_with, train_stack, ContextMode, LabelContext, ModelError, StackSpec, TagStack,
};
use crate::par_map;
use crate::tagset::{Category, LabelSet, Tag};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {gold} gold label sets")]
    Alignment { predictions: usize, gold: usize },
    #[error("no labeled nodes to score")]
    Empty,
    #[error("noise fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagMetrics {
    pub tag: Tag,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Gold positives.
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Fraction of scored nodes whose gold set carries the tag.
    pub prior: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl TagMetrics {
    pub fn from_counts(tag: Tag, tp: u64, fp: u64, fn_: u64, nodes: u64) -> TagMetrics {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        TagMetrics {
            tag,
            tp,
            fp,
            fn_,
            support: tp + fn_,
            precision,
            recall,
            f1: f1_of(precision, recall),
            prior: ratio(tp + fn_, nodes),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro averages run over tags with gold support; weighted averages weight
/// by that support.
fn averages<'a>(metrics: impl Iterator<Item = &'a TagMetrics> + Clone) -> (Averages, Averages) {
    let supported = metrics.filter(|m| m.support > 0);
    let n = supported.clone().count() as f64;
    let total: f64 = supported.clone().map(|m| m.support as f64).sum();
    if n == 0.0 {
        return Default::default();
    }
    let mut macro_avg = Averages::default();
    let mut weighted = Averages::default();
    for m in supported {
        let w = m.support as f64 / total;
        macro_avg.precision += m.precision / n;
        macro_avg.recall += m.recall / n;
        macro_avg.f1 += m.f1 / n;
        weighted.precision += w * m.precision;
        weighted.recall += w * m.recall;
        weighted.f1 += w * m.f1;
    }
    (macro_avg, weighted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: Category,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_nodes: usize,
    pub tags: Vec<TagMetrics>,
    pub categories: Vec<CategorySummary>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    /// Tags entering the macro average (those with gold support).
    pub macro_tag_count: usize,
}

impl EvalReport {
    pub fn tag(&self, tag: Tag) -> Option<&TagMetrics> {
        self.tags.iter().find(|m| m.tag == tag)
    }

    /// Support-weighted F1 over a subset of tags.
    pub fn weighted_f1_over(&self, tags: &[Tag]) -> f64 {
        let subset: Vec<&TagMetrics> = self.tags.iter().filter(|m| tags.contains(&m.tag)).collect();
        averages(subset.iter().copied()).1.f1
    }

    /// Flat rows in the shape `category,tag,precision,recall,f1,prior,support`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,tag,precision,recall,f1,prior,support\n");
        for m in &self.tags {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                m.tag.category().name(),
                m.tag.name(),
                m.precision,
                m.recall,
                m.f1,
                m.prior,
                m.support
            );
        }
        for c in &self.categories {
            for (kind, a) in [("macro avg", c.macro_avg), ("w.avg", c.weighted_avg)] {
                let _ = writeln!(
                    out,
                    "{},{kind},{},{},{},,",
                    c.category.name(),
                    a.precision,
                    a.recall,
                    a.f1
                );
            }
        }
        for (kind, a) in [("macro avg", self.macro_avg), ("w.avg", self.weighted_avg)] {
            let _ = writeln!(out, "all,{kind},{},{},{},,", a.precision, a.recall, a.f1);
        }
        out
    }
}

/// One-vs-rest confusion counts per tag over aligned node label sets.
pub fn score(predictions: &[LabelSet], gold: &[LabelSet], tags: &[Tag]) -> Result<EvalReport, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::Alignment {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    let nodes = gold.len() as u64;
    let metrics: Vec<TagMetrics> = tags
        .iter()
        .map(|&tag| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (p, g) in predictions.iter().zip(gold) {
                match (p.contains(tag), g.contains(tag)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            TagMetrics::from_counts(tag, tp, fp, fn_, nodes)
        })
        .collect();
    let categories = Category::ALL
        .iter()
        .filter(|c| metrics.iter().any(|m| m.tag.category() == **c))
        .map(|&category| {
            let (macro_avg, weighted_avg) = averages(metrics.iter().filter(|m| m.tag.category() == category));
            CategorySummary {
                category,
                macro_avg,
                weighted_avg,
            }
        })
        .collect();
    let (macro_avg, weighted_avg) = averages(metrics.iter());
    Ok(EvalReport {
        num_nodes: gold.len(),
        macro_tag_count: metrics.iter().filter(|m| m.support > 0).count(),
        tags: metrics,
        categories,
        macro_avg,
        weighted_avg,
    })
}

/// Predictions and gold sets over the labeled nodes of `trees`, in tree
/// order then node order.
pub fn predict_labeled(
    stack: &TagStack,
    trees: &[ConversationTree],
    mode: ContextMode,
) -> Result<(Vec<LabelSet>, Vec<LabelSet>), EvalError> {
    let per_tree = par_map(trees, |t| predict_tree(stack, t, mode));
    collect_labeled(trees, per_tree)
}

fn collect_labeled(
    trees: &[ConversationTree],
    per_tree: Vec<Result<Vec<LabelSet>, ModelError>>,
) -> Result<(Vec<LabelSet>, Vec<LabelSet>), EvalError> {
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for (tree, p) in trees.iter().zip(per_tree) {
        for (node, labels) in tree.nodes().iter().zip(p?) {
            if node.is_labeled() {
                pred.push(labels);
                gold.push(node.labels);
            }
        }
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok((pred, gold))
}

pub fn evaluate(stack: &TagStack, test: &[ConversationTree], mode: ContextMode) -> Result<EvalReport, EvalError> {
    let (pred, gold) = predict_labeled(stack, test, mode)?;
    score(&pred, &gold, stack.tags())
}

/// Everything a train-and-score run needs besides the trees.
#[derive(Debug, Clone)]
pub struct RunSetup<'a> {
    pub config: &'a FeatureConfig,
    pub specs: &'a StackSpec,
    pub resources: &'a Resources,
    pub tags: &'a [Tag],
    pub mode: ContextMode,
    pub seed: u64,
}

impl RunSetup<'_> {
    pub fn train_and_score(
        &self,
        train: &[ConversationTree],
        test: &[ConversationTree],
    ) -> Result<EvalReport, EvalError> {
        let stack = train_stack(train, self.config, self.specs, self.resources, self.tags, self.seed)?;
        evaluate(&stack, test, self.mode)
    }
}

/// Headline numbers of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
}

impl Summary {
    pub fn of(r: &EvalReport) -> Summary {
        Summary {
            weighted_precision: r.weighted_avg.precision,
            weighted_recall: r.weighted_avg.recall,
            weighted_f1: r.weighted_avg.f1,
            macro_f1: r.macro_avg.f1,
        }
    }

    fn fields(&self) -> [f64; 4] {
        [
            self.weighted_precision,
            self.weighted_recall,
            self.weighted_f1,
            self.macro_f1,
        ]
    }

    fn from_fields(f: [f64; 4]) -> Summary {
        Summary {
            weighted_precision: f[0],
            weighted_recall: f[1],
            weighted_f1: f[2],
            macro_f1: f[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_trees: Vec<String>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    /// Mean and population standard deviation of the per-fold summaries.
    pub mean: Summary,
    pub std: Summary,
    /// Mean per-tag F1 over folds, in stack tag order.
    pub mean_tag_f1: Vec<(Tag, f64)>,
}

impl CvReport {
    pub fn mean_f1_over(&self, tags: &[Tag]) -> f64 {
        let per_fold: Vec<f64> = self.folds.iter().map(|f| f.report.weighted_f1_over(tags)).collect();
        per_fold.iter().sum::<f64>() / per_fold.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,w.P,w.R,w.F1,m.F1\n");
        let mut row = |name: &str, s: &Summary| {
            let f = s.fields();
            let _ = writeln!(out, "{name},{},{},{},{}", f[0], f[1], f[2], f[3]);
        };
        for f in &self.folds {
            row(&f.fold.to_string(), &Summary::of(&f.report));
        }
        row("mean", &self.mean);
        row("std", &self.std);
        out
    }
}

/// `k`-fold cross-validation at tree granularity. Resources and models are
/// refitted on each fold's training trees.
pub fn cross_validate(trees: &[ConversationTree], setup: &RunSetup<'_>, k: usize) -> Result<CvReport, EvalError> {
    let folds = make_folds(trees.len(), k, setup.seed)?;
    let indexed: Vec<(usize, &Vec<usize>)> = folds.iter().enumerate().collect();
    let results = par_map(&indexed, |&(i, test_idx)| {
        let test: Vec<ConversationTree> = test_idx.iter().map(|&t| trees[t].clone()).collect();
        let train: Vec<ConversationTree> = (0..trees.len())
            .filter(|t| !test_idx.contains(t))
            .map(|t| trees[t].clone())
            .collect();
        setup.train_and_score(&train, &test).map(|report| FoldResult {
            fold: i,
            test_trees: test.iter().map(|t| t.tree_id().to_owned()).collect(),
            report,
        })
    });
    let folds: Vec<FoldResult> = results.into_iter().collect::<Result<_, _>>()?;
    let summaries: Vec<[f64; 4]> = folds.iter().map(|f| Summary::of(&f.report).fields()).collect();
    let n = summaries.len() as f64;
    let mut mean = [0.0; 4];
    let mut var = [0.0; 4];
    for s in &summaries {
        for j in 0..4 {
            mean[j] += s[j] / n;
        }
    }
    for s in &summaries {
        for j in 0..4 {
            var[j] += (s[j] - mean[j]).powi(2) / n;
        }
    }
    let mean_tag_f1 = setup
        .tags
        .iter()
        .map(|&t| {
            let f: f64 = folds.iter().filter_map(|f| f.report.tag(t)).map(|m| m.f1).sum();
            (t, f / n)
        })
        .collect();
    Ok(CvReport {
        k,
        seed: setup.seed,
        folds,
        mean: Summary::from_fields(mean),
        std: Summary::from_fields(var.map(f64::sqrt)),
        mean_tag_f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub features: String,
    pub config: FeatureConfig,
    #[serde(flatten)]
    pub summary: Summary,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("features,w.P,w.R,w.F1,m.F1\n");
    for r in rows {
        let f = r.summary.fields();
        let _ = writeln!(out, "{},{},{},{},{}", r.features, f[0], f[1], f[2], f[3]);
    }
    out
}

/// Train and score every grid row on the same split; rows keep grid order.
pub fn run_ablation(
    train: &[ConversationTree],
    test: &[ConversationTree],
    grid: &[FeatureConfig],
    setup: &RunSetup<'_>,
) -> Result<Vec<AblationRow>, EvalError> {
    par_map(grid, |config| {
        let row_setup = RunSetup {
            config,
            ..setup.clone()
        };
        row_setup.train_and_score(train, test).map(|r| AblationRow {
            features: config.notation(),
            config: config.clone(),
            summary: Summary::of(&r),
        })
    })
    .into_iter()
    .collect()
}

// ---------------------------------------------------------------------------
// Label noise

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Drop each targeted tag occurrence.
    Mask,
    /// Replace each targeted occurrence with a different tag drawn by prior.
    Substitute,
    /// Insert each absent tag with probability `fraction * prior`.
    Add,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTargets {
    Collocated,
    Preceding,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub fraction: f64,
    #[serde(default = "both")]
    pub targets: NoiseTargets,
    #[serde(default)]
    pub seed: u64,
}

fn both() -> NoiseTargets {
    NoiseTargets::Both
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if (0.0..=1.0).contains(&self.fraction) {
            Ok(())
        } else {
            Err(EvalError::BadFraction(self.fraction))
        }
    }

    pub fn label(&self) -> String {
        let mode = match self.mode {
            NoiseMode::Mask => "mask",
            NoiseMode::Substitute => "substitute",
            NoiseMode::Add => "add",
        };
        let targets = match self.targets {
            NoiseTargets::Collocated => "collocated",
            NoiseTargets::Preceding => "preceding",
            NoiseTargets::Both => "both",
        };
        format!("{mode} {}% {targets}", self.fraction * 100.0)
    }
}

/// Occurrence counts from perturbation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbStats {
    /// Tag occurrences in the targeted sets before perturbation.
    pub occurrences: u64,
    pub removed: u64,
    pub substituted: u64,
    pub added: u64,
}

impl PerturbStats {
    fn absorb(&mut self, o: PerturbStats) {
        self.occurrences += o.occurrences;
        self.removed += o.removed;
        self.substituted += o.substituted;
        self.added += o.added;
    }
}

/// Seeded label perturber; successive calls draw from one stream.
pub struct Perturber {
    spec: NoiseSpec,
    priors: Priors,
    rng: ChaCha8Rng,
}

impl Perturber {
    pub fn new(spec: NoiseSpec, priors: Priors) -> Result<Perturber, EvalError> {
        spec.validate()?;
        Ok(Perturber {
            rng: crate::models::rng(spec.seed),
            spec,
            priors,
        })
    }

    pub fn apply(&mut self, ctx: &mut LabelContext) -> PerturbStats {
        let mut stats = PerturbStats::default();
        if matches!(self.spec.targets, NoiseTargets::Preceding | NoiseTargets::Both) {
            for i in 0..ctx.previous.len() {
                let s = self.perturb_set(&mut ctx.previous[i]);
                stats.absorb(s);
            }
        }
        if matches!(self.spec.targets, NoiseTargets::Collocated | NoiseTargets::Both) {
            let s = self.perturb_set(&mut ctx.collocated);
            stats.absorb(s);
        }
        stats
    }

    pub fn perturb_set(&mut self, set: &mut LabelSet) -> PerturbStats {
        let original = *set;
        let p = self.spec.fraction;
        let mut stats = PerturbStats {
            occurrences: original.len() as u64,
            ..Default::default()
        };
        if p == 0.0 {
            return stats;
        }
        match self.spec.mode {
            NoiseMode::Mask => {
                for tag in original.iter() {
                    if self.rng.gen_bool(p) {
                        set.remove(tag);
                        stats.removed += 1;
                    }
                }
            }
            NoiseMode::Substitute => {
                for tag in original.iter() {
                    if self.rng.gen_bool(p) {
                        set.remove(tag);
                        // Excluding the original tags keeps a later draw from
                        // restoring a tag substituted earlier in this set.
                        if let Some(new) = self.draw_absent(set.union(original), tag) {
                            set.insert(new);
                            stats.substituted += 1;
                        } else {
                            set.insert(tag);
                        }
                    }
                }
            }
            NoiseMode::Add => {
                for tag in Tag::all().filter(|t| !original.contains(*t)) {
                    let q = (p * self.priors.get(tag)).clamp(0.0, 1.0);
                    if q > 0.0 && self.rng.gen_bool(q) {
                        set.insert(tag);
                        stats.added += 1;
                    }
                }
            }
        }
        stats
    }

    /// A tag outside `set` and different from `old`, drawn by prior; uniform
    /// when every candidate has zero prior.
    fn draw_absent(&mut self, set: LabelSet, old: Tag) -> Option<Tag> {
        let candidates: Vec<Tag> = Tag::all().filter(|&t| t != old && !set.contains(t)).collect();
        if candidates.is_empty() {
            return None;
        }
        let total: f64 = candidates.iter().map(|&t| self.priors.get(t)).sum();
        if total <= 0.0 {
            return Some(candidates[self.rng.gen_range(0..candidates.len())]);
        }
        let mut u = self.rng.gen::<f64>() * total;
        for &t in &candidates {
            u -= self.priors.get(t);
            if u < 0.0 {
                return Some(t);
            }
        }
        candidates.iter().rev().find(|&&t| self.priors.get(t) > 0.0).copied()
    }
}

/// Perturb one label context with a fresh stream seeded by `spec.seed`.
pub fn perturb_labels(
    ctx: &LabelContext,
    spec: &NoiseSpec,
    priors: &Priors,
) -> Result<(LabelContext, PerturbStats), EvalError> {
    let mut out = ctx.clone();
    let stats = Perturber::new(*spec, *priors)?.apply(&mut out);
    Ok((out, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub label: String,
    /// `None` for the clean baseline.
    pub noise: Option<NoiseSpec>,
    #[serde(flatten)]
    pub summary: Summary,
    pub stats: PerturbStats,
}

pub fn noise_csv(rows: &[NoiseRow]) -> String {
    let mut out = String::from("noise,w.P,w.R,w.F1,m.F1,occurrences,removed,substituted,added\n");
    for r in rows {
        let f = r.summary.fields();
        let s = r.stats;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.label, f[0], f[1], f[2], f[3], s.occurrences, s.removed, s.substituted, s.added
        );
    }
    out
}

/// Gold-context evaluation of a trained stack, first clean and then with
/// each noise spec applied to the label inputs at test time. Each tree gets
/// its own stream derived from the spec seed and the tree position.
pub fn noise_experiment(
    stack: &TagStack,
    test: &[ConversationTree],
    specs: &[NoiseSpec],
    priors: &Priors,
) -> Result<Vec<NoiseRow>, EvalError> {
    let clean = evaluate(stack, test, ContextMode::Gold)?;
    let mut rows = vec![NoiseRow {
        label: "clean".into(),
        noise: None,
        summary: Summary::of(&clean),
        stats: PerturbStats::default(),
    }];
    for spec in specs {
        spec.validate()?;
        let indexed: Vec<(usize, &ConversationTree)> = test.iter().enumerate().collect();
        let per_tree = par_map(&indexed, |&(i, tree)| {
            let tree_spec = NoiseSpec {
                seed: spec.seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(i as u64),
                ..*spec
            };
            let mut p = Perturber::new(tree_spec, *priors).expect("validated");
            let mut stats = PerturbStats::default();
            let pred = predict_tree_with(stack, tree, |_, ctx| stats.absorb(p.apply(ctx)));
            pred.map(|pred| (pred, stats))
        });
        let mut stats = PerturbStats::default();
        let mut preds = Vec::with_capacity(per_tree.len());
        for r in per_tree {
            let (p, s) = r?;
            stats.absorb(s);
            preds.push(Ok(p));
        }
        let (pred, gold) = collect_labeled(test, preds)?;
        let report = score(&pred, &gold, stack.tags())?;
        rows.push(NoiseRow {
            label: spec.label(),
            noise: Some(*spec),
            summary: Summary::of(&report),
            stats,
        });
    }
    Ok(rows)
}

/// Priors over the labeled nodes of `trees`.
pub fn priors_of(trees: &[ConversationTree]) -> Result<Priors, EvalError> {
    Ok(tag_priors(&labeled_sets(trees))?)
}
