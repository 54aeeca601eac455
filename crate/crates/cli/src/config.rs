//! Run configuration file and resource loading.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use disparse::eval::NoiseSpec;
use disparse::features::{
    best_config, CategoryLexicon, FeatureConfig, PdtbInventory, PdtbSidecar, Resources, Weighting, WordVectors,
};
use disparse::models::{ContextMode, StackSpec};
use disparse::Tag;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Split {
    /// Number of randomly chosen test trees.
    HeldOut(usize),
    /// Explicit test tree ids.
    TestTrees(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourcePaths {
    /// Category lexicon; the bundled demo lexicon when absent.
    pub lexicon: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub pdtb_sidecar: Option<PathBuf>,
    pub pdtb_inventory: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub bow_dimension: usize,
    pub weighting: Weighting,
    /// Explicit rows; the built-in 22-row grid when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<FeatureConfig>>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings {
            bow_dimension: 1000,
            weighting: Weighting::Binary,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureConfig>,
    pub model: StackSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<Tag>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub folds: usize,
    pub mode: ContextMode,
    pub resources: ResourcePaths,
    pub ablation: AblationSettings,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub noise: Vec<NoiseSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            features: None,
            model: StackSpec::default(),
            tags: None,
            split: None,
            folds: 5,
            mode: ContextMode::Gold,
            resources: ResourcePaths::default(),
            ablation: AblationSettings::default(),
            noise: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Read a config file; relative resource paths resolve against its directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let file = File::open(path).with_context(|| format!("opening config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_reader(BufReader::new(file))
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let r = &mut cfg.resources;
        for p in [
            &mut r.lexicon,
            &mut r.word_vectors,
            &mut r.pdtb_sidecar,
            &mut r.pdtb_inventory,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.folds < 2 {
            bail!("folds must be at least 2");
        }
        Ok(cfg)
    }

    pub fn tags(&self) -> Vec<Tag> {
        self.tags.clone().unwrap_or_else(|| Tag::all().collect())
    }

    /// Feature config: the `--features` file, else the config's, else the
    /// best ablation row.
    pub fn feature_config(&self, override_path: Option<&Path>) -> Result<FeatureConfig> {
        let config = match override_path {
            Some(p) => {
                let f = File::open(p).with_context(|| format!("opening features {}", p.display()))?;
                serde_json::from_reader(BufReader::new(f))
                    .with_context(|| format!("parsing features {}", p.display()))?
            }
            None => self
                .features
                .clone()
                .unwrap_or_else(|| best_config(self.ablation.bow_dimension, self.ablation.weighting)),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn resource_files(&self) -> Vec<PathBuf> {
        let r = &self.resources;
        [&r.lexicon, &r.word_vectors, &r.pdtb_sidecar, &r.pdtb_inventory]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    }

    pub fn load_resources(&self) -> Result<Resources> {
        let r = &self.resources;
        let lexicon = match &r.lexicon {
            Some(p) => CategoryLexicon::parse(reader(p)?).with_context(|| format!("lexicon {}", p.display()))?,
            None => CategoryLexicon::bundled(),
        };
        let vectors = match &r.word_vectors {
            Some(p) => Some(Arc::new(
                WordVectors::parse(reader(p)?).with_context(|| format!("word vectors {}", p.display()))?,
            )),
            None => None,
        };
        let pdtb = match (&r.pdtb_sidecar, &r.pdtb_inventory) {
            (Some(s), Some(i)) => {
                let inv =
                    PdtbInventory::parse(reader(i)?).with_context(|| format!("PDTB inventory {}", i.display()))?;
                Some(Arc::new(
                    PdtbSidecar::parse(reader(s)?, inv).with_context(|| format!("PDTB sidecar {}", s.display()))?,
                ))
            }
            (None, None) => None,
            _ => bail!("pdtb_sidecar and pdtb_inventory must be given together"),
        };
        Ok(Resources {
            lexicon: Some(lexicon),
            vectors,
            pdtb,
        })
    }
}

fn reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}
