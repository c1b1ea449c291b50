//! Bagged CART ensemble.
//!
//! Tree `t` is fit on a bootstrap resample drawn from a ChaCha8 stream seeded
//! with `stable_hash(seed, t)`, so the ensemble is identical whether trees
//! are trained serially or in parallel.
//!
//! Model files are JSON:
//!
//! ```text
//! {
//!   "version": 1,
//!   "seed": <u64>,
//!   "config": {"n_trees", "max_depth", "min_samples_leaf", "bootstrap"},
//!   "feature_layout": {"sensors", "feature_set"},
//!   "feature_order_digest": <hex sha256 of the feature names>,
//!   "n_features": <usize>,
//!   "window_s": <f64 | null>,
//!   "trees": [<node>, ...]
//! }
//! ```
//!
//! where `<node>` is `{"node": "leaf", "class_counts": [n0, n1]}` or
//! `{"node": "split", "feature_index", "threshold", "left", "right"}` and a
//! sample goes left when `value <= threshold`.

pub mod tree;

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use tree::{gini, train_tree, TreeNode};

use crate::error::{Error, Result};
use crate::features::FeatureLayout;
use crate::ingest::Label;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 2,
            bootstrap: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Parameter("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Parameter(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Platform-independent mix of a master seed and a stream index.
pub fn stable_hash(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Row indices of tree `t`'s training multiset.
pub fn bootstrap_indices(n: usize, seed: u64, tree: usize, bootstrap: bool) -> Vec<usize> {
    if !bootstrap {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, tree as u64));
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub class: Label,
    /// Fraction of trees voting class 1.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaggingModel {
    pub version: u32,
    pub seed: u64,
    pub config: TrainConfig,
    pub feature_layout: FeatureLayout,
    pub feature_order_digest: String,
    pub n_features: usize,
    /// Segment window the model was trained with, when known.
    pub window_s: Option<f64>,
    pub trees: Vec<TreeNode>,
}

pub fn train_bagging(
    rows: &[Vec<f64>],
    labels: &[Label],
    cfg: &TrainConfig,
    seed: u64,
    layout: FeatureLayout,
) -> Result<BaggingModel> {
    cfg.validate()?;
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Data(format!(
            "need matching non-empty rows and labels ({} rows, {} labels)",
            rows.len(),
            labels.len()
        )));
    }
    let n_features = layout.len();
    if rows[0].len() != n_features {
        return Err(Error::Compatibility(format!(
            "rows have {} features but layout {} has {n_features}",
            rows[0].len(),
            layout.label()
        )));
    }
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            tree::train_on_members(
                rows,
                labels,
                bootstrap_indices(rows.len(), seed, t, cfg.bootstrap),
                cfg,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaggingModel {
        version: MODEL_FORMAT_VERSION,
        seed,
        config: cfg.clone(),
        feature_layout: layout,
        feature_order_digest: layout.digest(),
        n_features,
        window_s: None,
        trees,
    })
}

/// Majority decision over tree votes; an even split goes to class 0.
pub fn decide(votes_for_one: usize, n_trees: usize) -> Prediction {
    let score = votes_for_one as f64 / n_trees as f64;
    let class = if score > 0.5 {
        Label::LyingEm
    } else {
        Label::LyingNoEm
    };
    Prediction { class, score }
}

impl BaggingModel {
    /// Fails unless the model was trained on `layout`'s feature order.
    pub fn check_layout(&self, layout: &FeatureLayout) -> Result<()> {
        let expected = layout.digest();
        if self.feature_order_digest != expected {
            return Err(Error::Compatibility(format!(
                "model feature digest {} does not match layout {} ({expected})",
                self.feature_order_digest,
                layout.label()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, v: &[f64]) -> Result<Prediction> {
        if v.len() != self.n_features {
            return Err(Error::Compatibility(format!(
                "model expects {} features, got {}",
                self.n_features,
                v.len()
            )));
        }
        let ones = self
            .trees
            .iter()
            .filter(|t| t.predict(v) == Label::LyingEm)
            .count();
        Ok(decide(ones, self.trees.len()))
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn load<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct VersionProbe {
            version: Option<u32>,
        }
        let probe: VersionProbe = deserialize_deep(text)?;
        match probe.version {
            Some(MODEL_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Compatibility(format!(
                    "model format version {v} is not supported (expected {MODEL_FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Compatibility("model file has no version tag".into())),
        }
        let model: BaggingModel = deserialize_deep(text)?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        self.check_layout(&self.feature_layout)?;
        if self.n_features != self.feature_layout.len() {
            return Err(Error::Compatibility(format!(
                "n_features {} does not match layout {}",
                self.n_features,
                self.feature_layout.label()
            )));
        }
        if self.trees.len() != self.config.n_trees {
            return Err(Error::Compatibility(format!(
                "config says {} trees, file holds {}",
                self.config.n_trees,
                self.trees.len()
            )));
        }
        if self
            .trees
            .iter()
            .filter_map(TreeNode::max_feature_index)
            .any(|f| f >= self.n_features)
        {
            return Err(Error::Compatibility(
                "split feature index out of range".into(),
            ));
        }
        Ok(())
    }
}

fn deserialize_deep<'de, T: Deserialize<'de>>(text: &'de str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    de.disable_recursion_limit();
    let value = T::deserialize(&mut de)?;
    de.end()?;
    Ok(value)
}
