use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, Matrix};
use crate::exec::Exec;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(L))` candidate features per split.
    Sqrt,
    All,
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 8,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    fn features_per_split(&self, n_features: usize) -> usize {
        let m = match self.max_features {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(c) => c,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        p_pos: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Leaf fraction of positives reached by `row`.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { p_pos } => return p_pos,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// A single-leaf tree.
    pub fn constant(p_pos: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { p_pos }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
    n_features: usize,
    train_accuracy: f64,
    oob_accuracy: Option<f64>,
}

impl ForestModel {
    /// Assembles a forest from prebuilt trees (accuracies unknown).
    pub fn from_trees(trees: Vec<Tree>, n_features: usize) -> Self {
        ForestModel {
            trees,
            n_features,
            train_accuracy: f64::NAN,
            oob_accuracy: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn train_accuracy(&self) -> f64 {
        self.train_accuracy
    }

    /// Out-of-bag accuracy over rows that were left out of at least one tree.
    pub fn oob_accuracy(&self) -> Option<f64> {
        self.oob_accuracy
    }

    /// Mean of the trees' leaf fractions, i.e. `P(+)`, per row.
    pub fn predict_proba(&self, rows: &Matrix) -> Result<Vec<f64>> {
        if rows.cols() != self.n_features {
            return Err(Error::schema(format!(
                "forest expects {} features, rows have {}",
                self.n_features,
                rows.cols()
            )));
        }
        Ok(rows.iter_rows().map(|r| self.proba_row(r)).collect())
    }

    pub(crate) fn proba_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        sum / self.trees.len() as f64
    }

    /// Accuracy of the `P(+) > 0.5` rule against `labels`.
    pub fn accuracy(&self, rows: &Matrix, labels: &[Label]) -> Result<f64> {
        let p = self.predict_proba(rows)?;
        if p.len() != labels.len() || p.is_empty() {
            return Err(Error::invalid("accuracy needs one label per row"));
        }
        let hits = p.iter().zip(labels).filter(|(&p, l)| (p > 0.5) == l.is_pos()).count();
        Ok(hits as f64 / p.len() as f64)
    }
}

/// Fits a bootstrapped random forest of CART trees (Gini impurity).
pub fn train_forest(z: &Matrix, labels: &[Label], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    train_forest_with(z, labels, params, seed, Exec::default())
}

pub fn train_forest_with(
    z: &Matrix,
    labels: &[Label],
    params: &ForestParams,
    seed: u64,
    exec: Exec,
) -> Result<ForestModel> {
    let n = z.rows();
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} rows", labels.len())));
    }
    let pos = labels.iter().filter(|l| l.is_pos()).count();
    if pos == 0 || pos == n {
        return Err(Error::invalid("forest training needs both classes"));
    }
    if params.n_trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    if z.cols() == 0 {
        return Err(Error::invalid("forest needs at least one feature"));
    }
    let y: Vec<bool> = labels.iter().map(|l| l.is_pos()).collect();
    let built = exec.map(params.n_trees, |t| {
        let mut rng = seed::rng(seed, seed::FOREST, t as u64);
        let sample: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut in_bag = vec![false; n];
        for &i in &sample {
            in_bag[i] = true;
        }
        let tree = TreeBuilder {
            z,
            y: &y,
            params,
            m_try: params.features_per_split(z.cols()),
            nodes: Vec::new(),
        }
        .build(sample, &mut rng);
        (tree, in_bag)
    });

    let mut forest = ForestModel {
        trees: Vec::with_capacity(built.len()),
        n_features: z.cols(),
        train_accuracy: 0.0,
        oob_accuracy: None,
    };
    let mut oob_sum = vec![0.0; n];
    let mut oob_count = vec![0usize; n];
    for (tree, in_bag) in built {
        for i in (0..n).filter(|&i| !in_bag[i]) {
            oob_sum[i] += tree.predict(z.row(i));
            oob_count[i] += 1;
        }
        forest.trees.push(tree);
    }
    forest.train_accuracy = forest.accuracy(z, labels)?;
    let scored: Vec<usize> = (0..n).filter(|&i| oob_count[i] > 0).collect();
    if !scored.is_empty() {
        let hits = scored
            .iter()
            .filter(|&&i| (oob_sum[i] / oob_count[i] as f64 > 0.5) == y[i])
            .count();
        forest.oob_accuracy = Some(hits as f64 / scored.len() as f64);
    }
    Ok(forest)
}

struct TreeBuilder<'a> {
    z: &'a Matrix,
    y: &'a [bool],
    params: &'a ForestParams,
    m_try: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl TreeBuilder<'_> {
    fn build<R: Rng>(mut self, sample: Vec<usize>, rng: &mut R) -> Tree {
        self.grow(sample, 0, rng);
        Tree { nodes: self.nodes }
    }

    fn grow<R: Rng>(&mut self, idx: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let at = self.nodes.len();
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let p_pos = pos as f64 / idx.len() as f64;
        self.nodes.push(Node::Leaf { p_pos });
        if pos == 0
            || pos == idx.len()
            || depth >= self.params.max_depth
            || idx.len() < self.params.min_samples_split
            || idx.len() < 2 * self.params.min_samples_leaf
        {
            return at;
        }
        let Some(best) = self.best_split(&idx, rng) else {
            return at;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.z.get(i, best.feature) <= best.threshold);
        let l = self.grow(left, depth + 1, rng);
        let r = self.grow(right, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        at
    }

    /// Draws features in random order until `m_try` non-constant ones were
    /// examined; returns the split with the lowest weighted Gini impurity.
    fn best_split<R: Rng>(&self, idx: &[usize], rng: &mut R) -> Option<BestSplit> {
        let mut order: Vec<usize> = (0..self.z.cols()).collect();
        order.shuffle(rng);
        let total = idx.len();
        let total_pos = idx.iter().filter(|&&i| self.y[i]).count();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        let mut examined = 0;
        let mut values: Vec<(f64, bool)> = Vec::with_capacity(total);
        for feature in order {
            if examined == self.m_try {
                break;
            }
            values.clear();
            values.extend(idx.iter().map(|&i| (self.z.get(i, feature), self.y[i])));
            values.sort_by(|a, b| a.0.total_cmp(&b.0));
            if values[0].0 == values[total - 1].0 {
                continue;
            }
            examined += 1;
            let mut left_pos = 0usize;
            for k in 0..total - 1 {
                if values[k].1 {
                    left_pos += 1;
                }
                if values[k].0 == values[k + 1].0 {
                    continue;
                }
                let nl = k + 1;
                let nr = total - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let score = gini_weighted(left_pos, nl) + gini_weighted(total_pos - left_pos, nr);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let threshold = values[k].0 + (values[k + 1].0 - values[k].0) / 2.0;
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

/// `n * gini` for a node with `pos` positives out of `n`.
fn gini_weighted(pos: usize, n: usize) -> f64 {
    let p = pos as f64 / n as f64;
    n as f64 * 2.0 * p * (1.0 - p)
}
