//! From-scratch random forest with frozen, platform-independent semantics:
//! bootstrap per tree, floor(sqrt(p)) candidate features per node, Gini
//! splits at midpoints of consecutive distinct values, leaves storing the
//! phish-class fraction. All randomness flows from one seed so a retrain is
//! byte-identical.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("training data must contain both classes")]
    EmptyClass,
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        fraction: f64,
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
    /// Arena of nodes, root at index 0. `value < threshold` descends left.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { fraction } => return *fraction,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    /// True iff the root is a split on `feature`.
    pub fn root_splits_on(&self, feature: usize) -> bool {
        matches!(self.nodes.first(), Some(Node::Split { feature: f, .. }) if *f == feature)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Mean decrease in impurity per feature, normalized to sum 1 (all zero
    /// only if no tree ever split).
    pub importances: Vec<f64>,
}

impl Forest {
    /// Mean leaf fraction over all trees.
    pub fn score(&self, row: &[f64]) -> Result<f64, ForestError> {
        if row.len() != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}

/// Trains `n_trees` trees. Tree `t` depends only on (seed, t), so extending
/// a forest with more trees never changes the ones already built.
pub fn fit(x: &[Vec<f64>], y: &[bool], n_trees: usize, seed: u64) -> Result<Forest, ForestError> {
    assert!(n_trees >= 1, "need at least one tree");
    assert_eq!(x.len(), y.len(), "row/label count mismatch");
    let n_features = x.first().map(Vec::len).unwrap_or(0);
    for row in x {
        if row.len() != n_features {
            return Err(ForestError::DimensionMismatch { expected: n_features, got: row.len() });
        }
    }
    let phish = y.iter().filter(|&&l| l).count();
    if phish == 0 || phish == y.len() {
        return Err(ForestError::EmptyClass);
    }

    let fits: Vec<(Tree, Vec<f64>)> = (0..n_trees as u64)
        .into_par_iter()
        .map(|t| fit_tree(x, y, n_features, SplitMix64::derive(seed, t)))
        .collect();

    let mut importances = vec![0.0; n_features];
    let mut trees = Vec::with_capacity(n_trees);
    for (tree, imp) in fits {
        for (acc, v) in importances.iter_mut().zip(&imp) {
            *acc += v;
        }
        trees.push(tree);
    }
    for v in &mut importances {
        *v /= n_trees as f64;
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        for v in &mut importances {
            *v /= total;
        }
    }

    Ok(Forest { n_features, trees, importances })
}

fn gini(phish: usize, n: usize) -> f64 {
    let p = phish as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

fn fit_tree(x: &[Vec<f64>], y: &[bool], n_features: usize, mut rng: SplitMix64) -> (Tree, Vec<f64>) {
    let n = x.len();
    let samples: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
    let mtry = ((n_features as f64).sqrt().floor() as usize).max(1);
    let mut nodes = Vec::new();
    let mut importances = vec![0.0; n_features];
    build(x, y, samples, n, mtry, &mut rng, &mut nodes, &mut importances);
    (Tree { nodes }, importances)
}

fn build(
    x: &[Vec<f64>],
    y: &[bool],
    samples: Vec<usize>,
    n_root: usize,
    mtry: usize,
    rng: &mut SplitMix64,
    nodes: &mut Vec<Node>,
    importances: &mut [f64],
) -> usize {
    let n = samples.len();
    let phish = samples.iter().filter(|&&i| y[i]).count();
    if n < 2 || phish == 0 || phish == n {
        nodes.push(Node::Leaf { fraction: phish as f64 / n as f64 });
        return nodes.len() - 1;
    }

    let n_features = importances.len();
    let mut candidates = rng.sample_indices(n_features, mtry.min(n_features));
    candidates.sort_unstable();
    let parent = gini(phish, n);

    // best = (decrease, feature, threshold); strict improvement only, with
    // features and thresholds visited in ascending order, so ties resolve to
    // the lowest feature index, then the lowest threshold.
    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(n);
    for &f in &candidates {
        sorted.clear();
        sorted.extend(samples.iter().map(|&i| (x[i][f], y[i])));
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("non-finite feature value"));
        let mut left_phish = 0usize;
        for i in 1..n {
            left_phish += sorted[i - 1].1 as usize;
            let (a, b) = (sorted[i - 1].0, sorted[i].0);
            if b <= a {
                continue;
            }
            let mut threshold = 0.5 * (a + b);
            if threshold <= a {
                // midpoint rounded onto the lower value; split at b instead
                threshold = b;
            }
            let decrease = parent
                - (i as f64 / n as f64) * gini(left_phish, i)
                - ((n - i) as f64 / n as f64) * gini(phish - left_phish, n - i);
            if best.map_or(true, |(d, _, _)| decrease > d) {
                best = Some((decrease, f, threshold));
            }
        }
    }

    let Some((decrease, feature, threshold)) = best else {
        // impure but unsplittable on the sampled features
        nodes.push(Node::Leaf { fraction: phish as f64 / n as f64 });
        return nodes.len() - 1;
    };

    importances[feature] += (n as f64 / n_root as f64) * decrease;

    let (left, right): (Vec<usize>, Vec<usize>) =
        samples.into_iter().partition(|&i| x[i][feature] < threshold);
    let at = nodes.len();
    nodes.push(Node::Leaf { fraction: 0.0 }); // placeholder until children exist
    let left_idx = build(x, y, left, n_root, mtry, rng, nodes, importances);
    let right_idx = build(x, y, right, n_root, mtry, rng, nodes, importances);
    nodes[at] = Node::Split { feature, threshold, left: left_idx, right: right_idx };
    at
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable_1d(n_per_class: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        // benign in [0,1), phish in [2,3): any midpoint in the gap separates
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut rng = SplitMix64::new(99);
        for _ in 0..n_per_class {
            x.push(vec![rng.unit_f64()]);
            y.push(false);
            x.push(vec![2.0 + rng.unit_f64()]);
            y.push(true);
        }
        (x, y)
    }

    #[test]
    fn separating_feature_owns_every_root() {
        let (x, y) = separable_1d(100);
        let forest = fit(&x, &y, 20, 3).unwrap();
        assert!(forest.trees.iter().all(|t| t.root_splits_on(0)));
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(row, &label)| (forest.score(row).unwrap() >= 0.5) == label)
            .count();
        assert_eq!(correct, x.len());
        // degenerate single-feature forest concentrates all importance
        assert_eq!(forest.importances, vec![1.0]);
    }

    #[test]
    fn hand_built_forest_scores_mean_of_leaves() {
        let forest = Forest {
            n_features: 1,
            trees: vec![Tree { nodes: vec![Node::Leaf { fraction: 0.25 }] }],
            importances: vec![0.0],
        };
        assert_eq!(forest.score(&[0.0]).unwrap(), 0.25);
        let pure = Forest {
            n_features: 1,
            trees: vec![
                Tree { nodes: vec![Node::Leaf { fraction: 1.0 }] },
                Tree { nodes: vec![Node::Leaf { fraction: 1.0 }] },
            ],
            importances: vec![0.0],
        };
        assert_eq!(pure.score(&[9.9]).unwrap(), 1.0);
        assert!(matches!(
            pure.score(&[1.0, 2.0]),
            Err(ForestError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn same_seed_same_bytes_and_prefix_stability() {
        let (x, y) = separable_1d(50);
        let a = fit(&x, &y, 8, 42).unwrap();
        let b = fit(&x, &y, 8, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let shorter = fit(&x, &y, 4, 42).unwrap();
        assert_eq!(&a.trees[..4], &shorter.trees[..]);
        let other_seed = fit(&x, &y, 8, 43).unwrap();
        assert_ne!(a.trees, other_seed.trees);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(fit(&x, &[true, true], 5, 1), Err(ForestError::EmptyClass)));
        assert!(matches!(fit(&x, &[false, false], 5, 1), Err(ForestError::EmptyClass)));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let x = vec![vec![0.0, 1.0], vec![1.0]];
        assert!(matches!(
            fit(&x, &[true, false], 5, 1),
            Err(ForestError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }
}
