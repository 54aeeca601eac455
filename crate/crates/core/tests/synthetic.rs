//! End-to-end runs on generated corpora, kept small enough for the default
//! test run. The full-size versions live in the CLI acceptance target.

use disparse::corpus::split_trees;
use disparse::eval::{cross_validate, noise_experiment, priors_of, NoiseMode, NoiseSpec, NoiseTargets, RunSetup};
use disparse::features::{BowConfig, FeatureConfig, Resources, Weighting};
use disparse::models::{train_stack, ContextMode, ModelSpec, StackSpec};
use disparse::synth::{generate_synthetic, SyntheticSpec};
use disparse::Tag;

fn b1() -> FeatureConfig {
    FeatureConfig {
        bow: Some(BowConfig {
            dimension: 300,
            weighting: Weighting::Binary,
            context: 1,
        }),
        ..Default::default()
    }
}

fn all_tags() -> Vec<Tag> {
    Tag::all().collect()
}

#[test]
fn planted_cues_are_recovered() {
    let corpus = generate_synthetic(&SyntheticSpec::planted_cues(15, 1)).unwrap();
    let tags = all_tags();
    let specs = StackSpec::default();
    let res = Resources::default();
    let setup = RunSetup {
        config: &b1(),
        specs: &specs,
        resources: &res,
        tags: &tags,
        mode: ContextMode::Predicted,
        seed: 1,
    };
    let cv = cross_validate(&corpus.trees, &setup, 3).unwrap();
    assert!(cv.mean.weighted_f1 >= 0.9, "{:?}", cv.mean);
}

#[test]
fn label_history_recovers_dependent_tags() {
    let spec = SyntheticSpec::with_dependencies(15, 2);
    let corpus = generate_synthetic(&spec).unwrap();
    let dep = spec.dependent_tags();
    let tags = all_tags();
    let specs = StackSpec::default();
    let res = Resources::default();
    let t2 = FeatureConfig {
        label_sequence_depth: 2,
        ..b1()
    };
    let run = |config: &FeatureConfig| {
        let setup = RunSetup {
            config,
            specs: &specs,
            resources: &res,
            tags: &tags,
            mode: ContextMode::Predicted,
            seed: 2,
        };
        cross_validate(&corpus.trees, &setup, 3).unwrap().mean_f1_over(&dep)
    };
    let (text_only, with_history) = (run(&b1()), run(&t2));
    assert!(with_history - text_only >= 0.3, "{text_only} -> {with_history}");
}

#[test]
fn substitution_noise_degrades_in_order() {
    let config = FeatureConfig {
        label_sequence_depth: 2,
        use_collocation: true,
        ..b1()
    };
    let noise = |fraction, seed| NoiseSpec {
        mode: NoiseMode::Substitute,
        fraction,
        targets: NoiseTargets::Both,
        seed,
    };
    let mut mean = [0.0; 3];
    for seed in 0..5 {
        let corpus = generate_synthetic(&SyntheticSpec::with_dependencies(16, 10 + seed)).unwrap();
        let (train, test) = split_trees(&corpus.trees, 4, seed).unwrap().select(&corpus.trees);
        let stack = train_stack(
            &train,
            &config,
            &StackSpec::default(),
            &Resources::default(),
            &all_tags(),
            seed,
        )
        .unwrap();
        let priors = priors_of(&train).unwrap();
        let rows = noise_experiment(&stack, &test, &[noise(0.1, seed), noise(0.5, seed)], &priors).unwrap();
        for (m, r) in mean.iter_mut().zip(&rows) {
            *m += r.summary.weighted_f1 / 5.0;
        }
    }
    assert!(mean[0] > mean[1] && mean[1] > mean[2], "{mean:?}");
}

#[test]
fn feed_forward_stack_learns_cues() {
    let corpus = generate_synthetic(&SyntheticSpec::planted_cues(8, 3)).unwrap();
    let (train, test) = split_trees(&corpus.trees, 2, 3).unwrap().select(&corpus.trees);
    let specs = StackSpec::uniform(ModelSpec {
        hidden: vec![16, 8],
        ..ModelSpec::of_kind(disparse::models::ModelKind::FeedForward)
    });
    let stack = train_stack(&train, &b1(), &specs, &Resources::default(), &all_tags(), 3).unwrap();
    let report = disparse::eval::evaluate(&stack, &test, ContextMode::Gold).unwrap();
    assert!(report.weighted_avg.f1 > 0.8, "{:?}", report.weighted_avg);
}
