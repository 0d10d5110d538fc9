//! CART trees grown on bootstrap samples: Gini splits for classification,
//! variance reduction for regression.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed::Rng;

/// Column-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_features = rows.first().map_or(0, Vec::len);
        let columns = (0..n_features).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Dataset {
            n_rows: rows.len(),
            columns,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// Rows `keep`, in that order.
    pub fn subset(&self, keep: &[usize]) -> Dataset {
        Dataset {
            n_rows: keep.len(),
            columns: self
                .columns
                .iter()
                .map(|c| keep.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes { labels: &'a [u8], n_classes: usize },
    Values(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Impurity decrease of this split as a share of the root sample size.
        gain: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf value for a row whose feature `j` is `value(j)`. Rows go left when
    /// `x <= threshold`.
    pub fn predict_with(&self, value: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if value(*feature) <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.predict_with(|j| row[j])
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                _ => None,
            })
            .max()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    /// Features examined per node.
    pub mtry: usize,
    /// Nodes with at most this many samples become leaves.
    pub min_node_size: usize,
}

/// Node statistics: class counts, or (Σy, Σy²).
#[derive(Clone)]
enum Tally {
    Classes(Vec<u32>),
    Moments { sum: f64, count: f64 },
}

impl Tally {
    fn empty(targets: &Targets) -> Self {
        match targets {
            Targets::Classes { n_classes, .. } => Tally::Classes(vec![0; *n_classes]),
            Targets::Values(_) => Tally::Moments { sum: 0.0, count: 0.0 },
        }
    }

    fn add(&mut self, targets: &Targets, row: usize) {
        match (self, targets) {
            (Tally::Classes(c), Targets::Classes { labels, .. }) => c[labels[row] as usize] += 1,
            (Tally::Moments { sum, count }, Targets::Values(v)) => {
                *sum += v[row];
                *count += 1.0;
            }
            _ => unreachable!("tally and targets disagree"),
        }
    }

    fn remove(&mut self, targets: &Targets, row: usize) {
        match (self, targets) {
            (Tally::Classes(c), Targets::Classes { labels, .. }) => c[labels[row] as usize] -= 1,
            (Tally::Moments { sum, count }, Targets::Values(v)) => {
                *sum -= v[row];
                *count -= 1.0;
            }
            _ => unreachable!("tally and targets disagree"),
        }
    }

    /// Σ c²/n for classes, S²/n for values: larger is purer. The impurity
    /// decrease of a split is score(left) + score(right) - score(parent).
    fn score(&self, n: f64) -> f64 {
        if n == 0.0 {
            return 0.0;
        }
        match self {
            Tally::Classes(c) => c.iter().map(|&k| (k as f64) * (k as f64)).sum::<f64>() / n,
            Tally::Moments { sum, .. } => sum * sum / n,
        }
    }

    /// Majority class (lowest index on ties) or mean.
    fn leaf_value(&self, n: f64) -> f64 {
        match self {
            Tally::Classes(c) => {
                let mut best = 0;
                for (k, &v) in c.iter().enumerate() {
                    if v > c[best] {
                        best = k;
                    }
                }
                best as f64
            }
            Tally::Moments { sum, .. } => sum / n,
        }
    }
}

fn is_pure(targets: &Targets, rows: &[usize]) -> bool {
    match targets {
        Targets::Classes { labels, .. } => rows.iter().all(|&r| labels[r] == labels[rows[0]]),
        Targets::Values(v) => rows.iter().all(|&r| v[r] == v[rows[0]]),
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Grows one tree on `samples` (bootstrap row indices, duplicates allowed).
pub fn grow_tree(data: &Dataset, targets: Targets, samples: Vec<usize>, params: TreeParams, rng: &mut Rng) -> Tree {
    let n_root = samples.len() as f64;
    let mut rows = samples;
    let mut nodes: Vec<Node> = Vec::new();
    let mut features: Vec<usize> = (0..data.n_features()).collect();
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    // (node index, start, end)
    let mut stack = vec![(0usize, 0usize, rows.len())];
    nodes.push(Node::Leaf { value: 0.0 });
    while let Some((id, start, end)) = stack.pop() {
        let node_rows = &rows[start..end];
        let n = node_rows.len() as f64;
        let mut tally = Tally::empty(&targets);
        for &r in node_rows {
            tally.add(&targets, r);
        }
        let leaf = Node::Leaf {
            value: tally.leaf_value(n),
        };
        if node_rows.len() <= params.min_node_size || is_pure(&targets, node_rows) {
            nodes[id] = leaf;
            continue;
        }
        let parent_score = tally.score(n);
        let mut best: Option<Candidate> = None;
        let mut examined = 0;
        // Visit features in random order until `mtry` non-constant ones are seen.
        for k in 0..features.len() {
            if examined == params.mtry {
                break;
            }
            let pick = rng.gen_range(k..features.len());
            features.swap(k, pick);
            let f = features[k];
            let column = data.column(f);
            scratch.clear();
            scratch.extend(node_rows.iter().map(|&r| (column[r], r)));
            scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if scratch[0].0 == scratch[scratch.len() - 1].0 {
                continue;
            }
            examined += 1;
            let mut left = Tally::empty(&targets);
            let mut right = tally.clone();
            for i in 0..scratch.len() - 1 {
                let r = scratch[i].1;
                left.add(&targets, r);
                right.remove(&targets, r);
                let (v, next) = (scratch[i].0, scratch[i + 1].0);
                if v == next {
                    continue;
                }
                let nl = (i + 1) as f64;
                let gain = left.score(nl) + right.score(n - nl) - parent_score;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = v + (next - v) / 2.0;
                    let threshold = if mid < next { mid } else { v };
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        let Some(split) = best else {
            nodes[id] = leaf;
            continue;
        };
        let column = data.column(split.feature);
        let slice = &mut rows[start..end];
        let mut mid = 0;
        for i in 0..slice.len() {
            if column[slice[i]] <= split.threshold {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        let left = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right: left + 1,
            gain: split.gain.max(0.0) / n_root,
        };
        stack.push((left + 1, start + mid, end));
        stack.push((left, start, start + mid));
    }
    Tree { nodes }
}
