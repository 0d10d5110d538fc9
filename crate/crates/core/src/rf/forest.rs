//! Bagged ensembles of [`Tree`]s with out-of-bag bookkeeping.

use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Dataset, Targets, Tree, TreeParams};
use super::RfError;
use crate::parallel::map_indexed;
use crate::seed::{replicate_rng, rng_from_seed};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    Classification { n_classes: usize },
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Rows drawn with replacement per tree; `None` means the table size.
    pub bootstrap_rows: Option<usize>,
    /// Features examined per node; `None` means `⌊√p⌋`.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
}

impl ForestConfig {
    pub fn classification(n_trees: usize) -> Self {
        ForestConfig {
            n_trees,
            bootstrap_rows: None,
            mtry: None,
            min_node_size: 1,
        }
    }

    pub fn regression(n_trees: usize) -> Self {
        ForestConfig {
            n_trees,
            bootstrap_rows: None,
            mtry: None,
            min_node_size: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestTree {
    /// Seeds the bootstrap draw, from which the out-of-bag rows are recovered.
    pub bootstrap_seed: u64,
    #[serde(flatten)]
    pub tree: Tree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    #[serde(flatten)]
    pub task: Task,
    pub n_features: usize,
    pub n_rows: usize,
    pub bootstrap_rows: usize,
    pub mtry: usize,
    pub min_node_size: usize,
    pub trees: Vec<ForestTree>,
}

fn bootstrap_counts(seed: u64, n_rows: usize, draws: usize) -> Vec<u32> {
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0u32; n_rows];
    for _ in 0..draws {
        counts[rng.gen_range(0..n_rows)] += 1;
    }
    counts
}

/// `⌊√p⌋`, at least 1.
pub fn default_mtry(n_features: usize) -> usize {
    ((n_features as f64).sqrt().floor() as usize).max(1)
}

/// Trains `config.n_trees` trees; tree `i` uses replicate stream `i` of `seed`.
pub fn grow_forest(data: &Dataset, targets: Targets, config: &ForestConfig, seed: u64) -> Result<Forest, RfError> {
    if config.n_trees == 0 {
        return Err(RfError::Config("n_trees must be >= 1".into()));
    }
    let n_rows = data.n_rows();
    if n_rows == 0 || data.n_features() == 0 {
        return Err(RfError::EmptyTable);
    }
    let task = match targets {
        Targets::Classes { labels, n_classes } => {
            if labels.len() != n_rows {
                return Err(RfError::Config("label count differs from row count".into()));
            }
            Task::Classification { n_classes }
        }
        Targets::Values(v) => {
            if v.len() != n_rows {
                return Err(RfError::Config("target count differs from row count".into()));
            }
            Task::Regression
        }
    };
    let bootstrap_rows = config.bootstrap_rows.unwrap_or(n_rows);
    if bootstrap_rows < 1 {
        return Err(RfError::Config("bootstrap_rows must be >= 1".into()));
    }
    let mtry = config
        .mtry
        .unwrap_or_else(|| default_mtry(data.n_features()))
        .clamp(1, data.n_features());
    let params = TreeParams {
        mtry,
        min_node_size: config.min_node_size.max(1),
    };
    let trees = map_indexed(config.n_trees, |i| {
        let mut rng = replicate_rng(seed, i as u64);
        let bootstrap_seed = rng.next_u64();
        let counts = bootstrap_counts(bootstrap_seed, n_rows, bootstrap_rows);
        let samples: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(r, &c)| std::iter::repeat_n(r, c as usize))
            .collect();
        let tree = grow_tree(data, targets, samples, params, &mut rng);
        Ok::<_, RfError>(ForestTree { bootstrap_seed, tree })
    })?;
    Ok(Forest {
        format_version: FOREST_FORMAT_VERSION,
        task,
        n_features: data.n_features(),
        n_rows,
        bootstrap_rows,
        mtry,
        min_node_size: params.min_node_size,
        trees,
    })
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_classes(&self) -> usize {
        match self.task {
            Task::Classification { n_classes } => n_classes,
            Task::Regression => 0,
        }
    }

    /// Training rows left out of tree `t`'s bootstrap sample.
    pub fn oob_rows(&self, t: usize) -> Vec<usize> {
        bootstrap_counts(self.trees[t].bootstrap_seed, self.n_rows, self.bootstrap_rows)
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(r, _)| r)
            .collect()
    }

    /// Vote count per class.
    pub fn votes(&self, row: &[f64]) -> Vec<usize> {
        let mut votes = vec![0; self.n_classes()];
        for t in &self.trees {
            votes[t.tree.predict(row) as usize] += 1;
        }
        votes
    }

    /// Mean of the trees' predictions.
    pub fn predict_mean(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.tree.predict(row)).sum::<f64>() / self.n_trees() as f64
    }

    /// Out-of-bag votes for every training row.
    pub fn oob_votes(&self, data: &Dataset) -> Vec<Vec<u32>> {
        let mut votes = vec![vec![0u32; self.n_classes()]; data.n_rows()];
        for t in 0..self.n_trees() {
            for r in self.oob_rows(t) {
                let class = self.trees[t].tree.predict_with(|j| data.value(r, j));
                votes[r][class as usize] += 1;
            }
        }
        votes
    }

    /// Mean impurity decrease per feature, averaged over trees.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for t in &self.trees {
            for node in &t.tree.nodes {
                if let super::tree::Node::Split { feature, gain, .. } = node {
                    imp[*feature] += gain;
                }
            }
        }
        for v in &mut imp {
            *v /= self.n_trees() as f64;
        }
        imp
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RfError> {
        let forest: Forest = serde_json::from_str(text).map_err(|e| RfError::Format(e.to_string()))?;
        if forest.format_version != FOREST_FORMAT_VERSION {
            return Err(RfError::Format(format!(
                "unsupported forest format version {}",
                forest.format_version
            )));
        }
        if forest
            .trees
            .iter()
            .any(|t| t.tree.max_feature().is_some_and(|f| f >= forest.n_features))
        {
            return Err(RfError::Format("split references a missing feature".into()));
        }
        Ok(forest)
    }
}

/// Plurality class; the lowest index wins ties. Returns (class, tied).
pub fn plurality<T: Copy + Ord>(votes: &[T]) -> (usize, bool) {
    let mut best = 0;
    let mut tied = false;
    for (k, &v) in votes.iter().enumerate().skip(1) {
        let b = votes[best];
        if v > b {
            best = k;
            tied = false;
        } else if v == b {
            tied = true;
        }
    }
    (best, tied)
}

/// Out-of-bag error after each number of trees.
///
/// Entry `k - 1` classifies every row by the votes of those among the first
/// `k` trees that did not see it, and reports the misclassified share of
/// the rows that have at least one such tree (`None` when there are none).
pub fn oob_error_curve(forest: &Forest, data: &Dataset, labels: &[u8]) -> Vec<Option<f64>> {
    let n_classes = forest.n_classes();
    let mut votes = vec![vec![0u32; n_classes]; data.n_rows()];
    let mut covered = 0usize;
    let mut wrong = 0usize;
    let mut curve = Vec::with_capacity(forest.n_trees());
    for t in 0..forest.n_trees() {
        for r in forest.oob_rows(t) {
            let before = votes[r].iter().any(|&v| v > 0).then(|| plurality(&votes[r]).0);
            let class = forest.trees[t].tree.predict_with(|j| data.value(r, j)) as usize;
            votes[r][class] += 1;
            let after = plurality(&votes[r]).0;
            match before {
                None => covered += 1,
                Some(b) if b != labels[r] as usize => wrong -= 1,
                Some(_) => {}
            }
            if after != labels[r] as usize {
                wrong += 1;
            }
        }
        curve.push((covered > 0).then(|| wrong as f64 / covered as f64));
    }
    curve
}
