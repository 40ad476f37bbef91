use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{grow_tree, DecisionTree};
use super::BinaryData;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `floor(log2 d) + 1`.
    pub mtry: Option<usize>,
    pub seed: u64,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Vote fraction that must be exceeded for a positive decision.
    pub threshold: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 10,
            mtry: None,
            seed: 1,
            bootstrap: true,
            max_depth: None,
            min_leaf: 1,
            threshold: 0.5,
        }
    }
}

pub fn default_mtry(n_features: usize) -> usize {
    (n_features.max(1) as f64).log2().floor() as usize + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub mtry: usize,
    pub seed: u64,
    pub bootstrap: bool,
    pub threshold: f64,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Fraction of trees voting positive; positive only above the threshold.
    pub fn predict(&self, x: &[f64]) -> (bool, f64) {
        let votes = self.trees.iter().filter(|t| t.predict(x).0).count();
        decide(votes, self.trees.len(), self.threshold)
    }
}

fn decide(votes: usize, n: usize, threshold: f64) -> (bool, f64) {
    let score = votes as f64 / n as f64;
    (score > threshold, score)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of tree `index`'s private generator.
pub fn tree_seed(seed: u64, index: usize) -> u64 {
    mix(seed ^ mix(index as u64))
}

pub fn train_forest(data: &BinaryData, params: &ForestParams) -> Result<ForestModel> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("a forest needs at least one tree".into()));
    }
    let d = data.n_features();
    let mtry = params.mtry.unwrap_or_else(|| default_mtry(d)).clamp(1, d.max(1));
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(params.seed, i));
            let rows: Vec<u32> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n as u32)).collect()
            } else {
                (0..n as u32).collect()
            };
            grow_tree(data, rows, params.max_depth, params.min_leaf, Some(mtry), Some(&mut rng))
        })
        .collect();
    Ok(ForestModel {
        trees,
        mtry,
        seed: params.seed,
        bootstrap: params.bootstrap,
        threshold: params.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::tree::{train_tree, TreeParams};

    fn noisy(seed: u64, n: usize) -> BinaryData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect();
        let labels = rows
            .iter()
            .map(|r| r[0] + 0.5 * r[2] > 0.8 || rng.gen_bool(0.05))
            .collect();
        BinaryData::from_rows(rows, labels).unwrap()
    }

    #[test]
    fn vote_fraction_and_tie_rule() {
        assert_eq!(decide(7, 10, 0.5), (true, 0.7));
        assert_eq!(decide(5, 10, 0.5), (false, 0.5));
    }

    #[test]
    fn single_full_tree_reduces_to_cart() {
        let d = noisy(2, 400);
        let forest = train_forest(
            &d,
            &ForestParams {
                n_trees: 1,
                mtry: Some(4),
                bootstrap: false,
                ..Default::default()
            },
        )
        .unwrap();
        let tree = train_tree(&d, &TreeParams::unpruned()).unwrap();
        assert_eq!(forest.trees[0], tree);
        let probe = noisy(99, 200);
        let mut x = vec![0.0; 4];
        for r in 0..probe.n_rows() {
            probe.fill_row(r, &mut x);
            assert_eq!(forest.predict(&x).0, tree.predict(&x).0);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let d = noisy(3, 300);
        let p = ForestParams { seed: 7, ..Default::default() };
        assert_eq!(train_forest(&d, &p).unwrap(), train_forest(&d, &p).unwrap());
        let other = ForestParams { seed: 8, ..p };
        assert_ne!(train_forest(&d, &p).unwrap(), train_forest(&d, &other).unwrap());
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let xs = [1.0, 2.0, 3.0, 7.0, 8.0, 9.0];
        let d = BinaryData::from_rows(xs.iter().map(|&x| vec![x]).collect(), xs.iter().map(|&x| x > 5.0).collect()).unwrap();
        for n_trees in [1, 3, 10] {
            let f = train_forest(&d, &ForestParams { n_trees, bootstrap: false, ..Default::default() }).unwrap();
            for &x in &xs {
                assert_eq!(f.predict(&[x]).0, x > 5.0);
            }
        }
    }

    #[test]
    fn default_mtry_values() {
        assert_eq!(default_mtry(18), 5);
        assert_eq!(default_mtry(1), 1);
        assert_eq!(default_mtry(4), 3);
    }
}
