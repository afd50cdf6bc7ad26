//! Random forest of CART classification trees (Gini impurity, bootstrap
//! resampling, feature subsampling at every split).

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SeedStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 12,
            max_features: None,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        label: bool,
        positives: usize,
        total: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> bool {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { label, .. } => return *label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    /// Out-of-bag misclassification rate (`None` if no sample was ever out of bag).
    pub oob_error: Option<f64>,
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    cfg: &'a ForestConfig,
    m_try: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let positives = idx.iter().filter(|&&i| self.y[i]).count();
        self.nodes.push(Node::Leaf {
            label: 2 * positives > idx.len(),
            positives,
            total: idx.len(),
        });
        self.nodes.len() - 1
    }

    /// Best `(feature, threshold, impurity decrease)` over a random feature subset.
    fn best_split<R: Rng>(&self, idx: &[usize], rng: &mut R) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let n = idx.len();
        let pos_total = idx.iter().filter(|&&i| self.y[i]).count();
        let parent = gini(pos_total, n);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        let mut features = sample_indices(rng, d, self.m_try).into_vec();
        features.sort_unstable();
        for f in features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left_pos = 0;
            for k in 0..n - 1 {
                if self.y[order[k]] {
                    left_pos += 1;
                }
                let (v, next) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if v == next {
                    continue;
                }
                let nl = k + 1;
                let nr = n - nl;
                let child = (nl as f64 * gini(left_pos, nl)
                    + nr as f64 * gini(pos_total - left_pos, nr))
                    / n as f64;
                let gain = parent - child;
                if gain > 1e-15 && best.is_none_or(|b| gain > b.2) {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((f, threshold, gain));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow<R: Rng>(&mut self, idx: &[usize], depth: usize, rng: &mut R) -> usize {
        let positives = idx.iter().filter(|&&i| self.y[i]).count();
        let pure = positives == 0 || positives == idx.len();
        if pure || depth >= self.cfg.max_depth || idx.len() < self.cfg.min_samples_split.max(2) {
            return self.leaf(idx);
        }
        let Some((feature, threshold)) = self.best_split(idx, rng) else {
            return self.leaf(idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(&l, depth + 1, rng);
        let right = self.grow(&r, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[bool], cfg: &ForestConfig) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs but {} labels",
                x.len(),
                y.len()
            )));
        }
        let d = x[0].len();
        if d == 0 || x.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged design matrix".into()));
        }
        if cfg.n_trees == 0 {
            return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
        }
        let m_try = cfg
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d);
        let n = x.len();
        let stream = SeedStream::new(cfg.seed, "forest");
        let grown: Vec<(Tree, Vec<bool>)> = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream.rng(t as u64);
                let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut in_bag = vec![false; n];
                for &i in &boot {
                    in_bag[i] = true;
                }
                let mut b = Builder {
                    x,
                    y,
                    cfg,
                    m_try,
                    nodes: Vec::new(),
                };
                b.grow(&boot, 0, &mut rng);
                (Tree { nodes: b.nodes }, in_bag)
            })
            .collect();

        let mut votes = vec![(0usize, 0usize); n];
        for (tree, in_bag) in &grown {
            for i in 0..n {
                if !in_bag[i] {
                    votes[i].1 += 1;
                    if tree.predict(&x[i]) {
                        votes[i].0 += 1;
                    }
                }
            }
        }
        let (mut wrong, mut counted) = (0usize, 0usize);
        for (i, (yes, total)) in votes.iter().enumerate() {
            if *total > 0 {
                counted += 1;
                if (2 * yes > *total) != y[i] {
                    wrong += 1;
                }
            }
        }
        Ok(Self {
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            n_features: d,
            oob_error: (counted > 0).then(|| wrong as f64 / counted as f64),
        })
    }

    /// Share of trees voting `true`.
    pub fn vote_fraction(&self, x: &[f64]) -> f64 {
        let yes = self.trees.iter().filter(|t| t.predict(x)).count();
        yes as f64 / self.trees.len() as f64
    }

    /// Strict majority vote; ties predict `false`.
    pub fn predict(&self, x: &[f64]) -> bool {
        let yes = self.trees.iter().filter(|t| t.predict(x)).count();
        2 * yes > self.trees.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let s = SeedStream::new(seed, "forest-test");
        (0..n)
            .map(|k| {
                let mut r = s.rng(k as u64);
                vec![r.random::<f64>(), r.random::<f64>()]
            })
            .collect()
    }

    #[test]
    fn constant_labels() {
        let x = grid_points(50, 1);
        for label in [true, false] {
            let f = RandomForest::fit(&x, &vec![label; 50], &ForestConfig::default()).unwrap();
            assert!(grid_points(100, 2).iter().all(|p| f.predict(p) == label));
            assert_eq!(f.oob_error, Some(0.0));
        }
    }

    #[test]
    fn separable_clusters() {
        let mut x = grid_points(80, 3);
        let y: Vec<bool> = (0..80).map(|i| i % 2 == 0).collect();
        for (p, l) in x.iter_mut().zip(&y) {
            if *l {
                p[0] += 3.0;
            }
        }
        let f = RandomForest::fit(&x, &y, &ForestConfig::default()).unwrap();
        assert!(x.iter().zip(&y).all(|(p, l)| f.predict(p) == *l));
    }

    #[test]
    fn xor_out_of_bag() {
        let x = grid_points(600, 4);
        let y: Vec<bool> = x.iter().map(|p| (p[0] > 0.5) != (p[1] > 0.5)).collect();
        let f = RandomForest::fit(&x, &y, &ForestConfig::default()).unwrap();
        let oob = f.oob_error.unwrap();
        assert!(oob < 0.1, "{oob}");
        assert!(f.trees.iter().all(|t| t.depth() <= 12));
    }

    #[test]
    fn deterministic_and_validated() {
        let x = grid_points(60, 5);
        let y: Vec<bool> = x.iter().map(|p| p[0] + p[1] > 1.0).collect();
        let cfg = ForestConfig {
            n_trees: 20,
            ..ForestConfig::default()
        };
        assert_eq!(RandomForest::fit(&x, &y, &cfg).unwrap(), RandomForest::fit(&x, &y, &cfg).unwrap());
        assert!(RandomForest::fit(&[], &[], &cfg).is_err());
        assert!(RandomForest::fit(&x, &y[..5], &cfg).is_err());
    }
}
