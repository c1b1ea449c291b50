//! Greedy CART classification tree on two classes.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of
//! a feature. The chosen split minimizes weighted Gini impurity; ties go to
//! the lowest feature index, then the lowest threshold. Split scores are
//! compared exactly in integer arithmetic so tie resolution does not depend
//! on floating-point rounding.

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::ingest::Label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        class_counts: [u32; 2],
    },
    Split {
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Class counts of the leaf `v` falls into.
    pub fn leaf_counts(&self, v: &[f64]) -> [u32; 2] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { class_counts } => return *class_counts,
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    node = if v[*feature_index] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Majority class of the reached leaf; ties vote class 0.
    pub fn predict(&self, v: &[f64]) -> Label {
        let [c0, c1] = self.leaf_counts(v);
        if c1 > c0 {
            Label::LyingEm
        } else {
            Label::LyingNoEm
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Largest feature index used by any split.
    pub fn max_feature_index(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature_index,
                left,
                right,
                ..
            } => Some(
                (*feature_index)
                    .max(left.max_feature_index().unwrap_or(0))
                    .max(right.max_feature_index().unwrap_or(0)),
            ),
        }
    }
}

/// `1 − Σ pᵢ²`.
pub fn gini(class_counts: &[u32]) -> Result<f64> {
    let total: u64 = class_counts.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return Err(Error::Data("gini of an empty node".into()));
    }
    let t = total as f64;
    Ok(1.0
        - class_counts
            .iter()
            .map(|&c| (c as f64 / t).powi(2))
            .sum::<f64>())
}

/// Split quality as the exact fraction `num/den` of `Σ cL²/nL + Σ cR²/nR`;
/// larger means lower weighted Gini.
#[derive(Clone, Copy, Debug)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(left: [u64; 2], right: [u64; 2]) -> Self {
        let nl = u128::from(left[0] + left[1]);
        let nr = u128::from(right[0] + right[1]);
        let sl = u128::from(left[0] * left[0] + left[1] * left[1]);
        let sr = u128::from(right[0] * right[0] + right[1] * right[1]);
        Score {
            num: sl * nr + sr * nl,
            den: nl * nr,
        }
    }

    /// Float estimate of the score; `inv[n]` holds `1/n`.
    fn approx(left: [u64; 2], right: [u64; 2], inv: &[f64]) -> f64 {
        let side = |c: [u64; 2]| ((c[0] * c[0] + c[1] * c[1]) as f64) * inv[(c[0] + c[1]) as usize];
        side(left) + side(right)
    }

    fn beats(&self, other: &Score) -> bool {
        self.num * other.den > other.num * self.den
    }
}

/// Midpoint strictly below `hi` so that `hi` routes right.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

#[derive(Clone, Copy)]
struct Entry {
    value: f64,
    pos: u32,
    label: u32,
}

struct Builder<'a> {
    /// Per feature, bootstrap positions sorted by value; node ranges stay
    /// contiguous under stable partitioning.
    order: Vec<Vec<Entry>>,
    goes_left: Vec<bool>,
    scratch: Vec<Entry>,
    inv: Vec<f64>,
    cfg: &'a TrainConfig,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    n_left: usize,
    score: Score,
    approx: f64,
}

impl Builder<'_> {
    fn counts(&self, lo: usize, hi: usize) -> [u64; 2] {
        let ones: u64 = self.order[0][lo..hi]
            .iter()
            .map(|e| u64::from(e.label))
            .sum();
        [(hi - lo) as u64 - ones, ones]
    }

    fn find_split(&self, lo: usize, hi: usize, total: [u64; 2]) -> Option<BestSplit> {
        let n = hi - lo;
        let min_leaf = self.cfg.min_samples_leaf;
        let mut best: Option<BestSplit> = None;
        for (feature, order) in self.order.iter().enumerate() {
            let range = &order[lo..hi];
            if range[0].value == range[n - 1].value {
                continue;
            }
            let mut ones = 0u64;
            for i in 0..n - 1 {
                ones += u64::from(range[i].label);
                let n_left = i + 1;
                if n_left < min_leaf {
                    continue;
                }
                if n - n_left < min_leaf {
                    break;
                }
                let (a, b) = (range[i].value, range[i + 1].value);
                if a == b {
                    continue;
                }
                let left = [n_left as u64 - ones, ones];
                let right = [total[0] - left[0], total[1] - left[1]];
                let approx = Score::approx(left, right, &self.inv);
                let wins = match &best {
                    None => true,
                    // float prefilter; exact comparison only near a tie
                    Some(cur) if approx > cur.approx * (1.0 + 1e-9) => true,
                    Some(cur) if approx < cur.approx * (1.0 - 1e-9) => false,
                    Some(cur) => Score::new(left, right).beats(&cur.score),
                };
                if wins {
                    best = Some(BestSplit {
                        feature,
                        threshold: midpoint(a, b),
                        n_left,
                        score: Score::new(left, right),
                        approx,
                    });
                }
            }
        }
        best
    }

    /// Stable partition of every feature order in `[lo, hi)` by the chosen split.
    fn partition(&mut self, lo: usize, hi: usize, split: &BestSplit) {
        for e in &self.order[split.feature][lo..lo + split.n_left] {
            self.goes_left[e.pos as usize] = true;
        }
        for f in 0..self.order.len() {
            if f == split.feature {
                continue;
            }
            let range = &mut self.order[f][lo..hi];
            let (mut w, mut k) = (0, 0);
            for i in 0..range.len() {
                let e = range[i];
                let left = self.goes_left[e.pos as usize];
                range[w] = e;
                self.scratch[k] = e;
                w += usize::from(left);
                k += usize::from(!left);
            }
            range[w..].copy_from_slice(&self.scratch[..k]);
        }
        for e in &self.order[split.feature][lo..lo + split.n_left] {
            self.goes_left[e.pos as usize] = false;
        }
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> TreeNode {
        let total = self.counts(lo, hi);
        let leaf = TreeNode::Leaf {
            class_counts: [total[0] as u32, total[1] as u32],
        };
        let n = hi - lo;
        let pure = total[0] == 0 || total[1] == 0;
        let depth_capped = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || n < 2 * self.cfg.min_samples_leaf {
            return leaf;
        }
        let Some(split) = self.find_split(lo, hi, total) else {
            return leaf;
        };
        self.partition(lo, hi, &split);
        let mid = lo + split.n_left;
        let left = self.build(lo, mid, depth + 1);
        let right = self.build(mid, hi, depth + 1);
        TreeNode::Split {
            feature_index: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

fn validate(rows: &[Vec<f64>], labels: &[Label]) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let width = rows[0].len();
    if width == 0 {
        return Err(Error::Data("rows have no features".into()));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Data("rows have differing feature counts".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }
    Ok(width)
}

/// Train on the multiset of rows named by `members` (duplicates allowed).
pub(crate) fn train_on_members(
    rows: &[Vec<f64>],
    labels: &[Label],
    members: Vec<usize>,
    cfg: &TrainConfig,
) -> Result<TreeNode> {
    let width = validate(rows, labels)?;
    cfg.validate()?;
    if members.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let m = members.len();
    let order = (0..width)
        .map(|f| {
            let mut o: Vec<Entry> = members
                .iter()
                .enumerate()
                .map(|(pos, &r)| Entry {
                    value: rows[r][f],
                    pos: pos as u32,
                    label: labels[r].index() as u32,
                })
                .collect();
            o.sort_unstable_by(|a, b| a.value.total_cmp(&b.value).then(a.pos.cmp(&b.pos)));
            o
        })
        .collect();
    let mut b = Builder {
        order,
        goes_left: vec![false; m],
        scratch: vec![
            Entry {
                value: 0.0,
                pos: 0,
                label: 0
            };
            m
        ],
        inv: (0..=m)
            .map(|n| if n == 0 { 0.0 } else { 1.0 / n as f64 })
            .collect(),
        cfg,
    };
    Ok(b.build(0, m, 0))
}

pub fn train_tree(rows: &[Vec<f64>], labels: &[Label], cfg: &TrainConfig) -> Result<TreeNode> {
    train_on_members(rows, labels, (0..rows.len()).collect(), cfg)
}
