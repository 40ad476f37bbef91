//! One-vs-rest binary learners and their fusion into tissue labels.

pub mod forest;
pub mod gnb;
pub mod hyperpipes;
mod segmenter;
mod serial;
pub mod tree;

use std::fmt;
use std::str::FromStr;

pub use forest::{train_forest, ForestModel, ForestParams};
pub use gnb::{train_gnb, GaussianNbModel};
pub use hyperpipes::{train_hyperpipes, HyperPipesModel};
pub use segmenter::{segment_slice, segment_volume, train_segmenter, SegmenterModel};
pub use tree::{train_tree, DecisionTree, Pruning, TreeNode, TreeParams};

use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureVector};
use crate::labels::TissueClass;

/// Column-major feature matrix with one boolean label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryData {
    columns: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl BinaryData {
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let d = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(rows.len()); d];
        for r in &rows {
            if r.len() != d {
                return Err(Error::InvalidParameter("rows have differing lengths".into()));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("feature values must be finite".into()));
            }
            for (c, &v) in columns.iter_mut().zip(r) {
                c.push(v);
            }
        }
        Ok(Self { columns, labels })
    }

    /// One-vs-rest view of a labeled dataset: rows of `target` are positive.
    pub fn from_dataset(data: &Dataset, target: TissueClass) -> Result<Self> {
        let n = data.len();
        let d = crate::features::N_FEATURES;
        let mut columns: Vec<Vec<f64>> = (0..d).map(|_| Vec::with_capacity(n)).collect();
        let mut labels = Vec::with_capacity(n);
        for row in data.rows() {
            let label = row
                .label
                .ok_or_else(|| Error::InvalidParameter("training rows must be labeled".into()))?;
            labels.push(label == target);
            for (c, &v) in columns.iter_mut().zip(&row.values) {
                c.push(v);
            }
        }
        Ok(Self { columns, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, f: usize) -> &[f64] {
        &self.columns[f]
    }

    pub fn label(&self, r: usize) -> bool {
        self.labels[r]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn fill_row(&self, r: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.columns) {
            *o = c[r];
        }
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[r]).collect()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Which learner to train, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerSpec {
    Tree(TreeParams),
    Forest(ForestParams),
    Gnb,
    HyperPipes,
}

impl LearnerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Tree(_) => "tree",
            LearnerSpec::Forest(_) => "forest",
            LearnerSpec::Gnb => "gnb",
            LearnerSpec::HyperPipes => "hyperpipes",
        }
    }

    /// Default parameters for a learner name, seeded where the learner is
    /// randomized.
    pub fn from_name(name: &str, seed: u64) -> Result<Self> {
        match name {
            "tree" => Ok(LearnerSpec::Tree(TreeParams {
                prune: Pruning::ReducedError { holdout: 0.1, seed },
                ..TreeParams::default()
            })),
            "forest" => Ok(LearnerSpec::Forest(ForestParams {
                seed,
                ..ForestParams::default()
            })),
            "gnb" => Ok(LearnerSpec::Gnb),
            "hyperpipes" => Ok(LearnerSpec::HyperPipes),
            other => Err(Error::InvalidParameter(format!(
                "unknown learner `{other}` (expected tree, forest, gnb or hyperpipes)"
            ))),
        }
    }

    pub fn train(&self, data: &BinaryData) -> Result<BinaryModel> {
        Ok(match self {
            LearnerSpec::Tree(p) => BinaryModel::Tree(train_tree(data, p)?),
            LearnerSpec::Forest(p) => BinaryModel::Forest(train_forest(data, p)?),
            LearnerSpec::Gnb => BinaryModel::Gnb(train_gnb(data)?),
            LearnerSpec::HyperPipes => BinaryModel::HyperPipes(train_hyperpipes(data)?),
        })
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s, 0)
    }
}

/// A trained binary predictor of any supported family.
#[derive(Debug, Clone, PartialEq)]
pub enum BinaryModel {
    Tree(DecisionTree),
    Forest(ForestModel),
    Gnb(GaussianNbModel),
    HyperPipes(HyperPipesModel),
}

impl BinaryModel {
    pub fn learner_name(&self) -> &'static str {
        match self {
            BinaryModel::Tree(_) => "tree",
            BinaryModel::Forest(_) => "forest",
            BinaryModel::Gnb(_) => "gnb",
            BinaryModel::HyperPipes(_) => "hyperpipes",
        }
    }

    /// Decision and a score in `[0, 1]`.
    pub fn predict(&self, x: &[f64]) -> (bool, f64) {
        let (d, s) = match self {
            BinaryModel::Tree(m) => m.predict(x),
            BinaryModel::Forest(m) => m.predict(x),
            BinaryModel::Gnb(m) => m.predict(x),
            BinaryModel::HyperPipes(m) => m.predict(x),
        };
        (d, s.clamp(0.0, 1.0))
    }
}

/// A binary model bound to the schema it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub schema_hash: String,
    pub target: TissueClass,
    pub model: BinaryModel,
}

impl TrainedModel {
    pub fn to_text(&self) -> String {
        serial::model_to_text(self)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        serial::model_from_text(text)
    }
}

/// Prediction for one feature vector; `schema_hash` is the vector's schema.
pub fn predict_binary(model: &TrainedModel, schema_hash: &str, v: &FeatureVector) -> Result<(bool, f64)> {
    if model.schema_hash != schema_hash {
        return Err(Error::SchemaMismatch {
            expected: model.schema_hash.clone(),
            found: schema_hash.to_string(),
        });
    }
    Ok(model.model.predict(&v.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSchema, Provenance, N_FEATURES};
    use proptest::prelude::*;

    #[test]
    fn single_leaf_prediction() {
        let t = DecisionTree::from_nodes(vec![TreeNode::Leaf { pos: 3, neg: 1 }]).unwrap();
        let m = TrainedModel {
            schema_hash: "abc".into(),
            target: TissueClass::Epicardial,
            model: BinaryModel::Tree(t),
        };
        let v = FeatureVector {
            values: [0.0; N_FEATURES],
            provenance: Provenance {
                patient_id: "p".into(),
                z: 0,
                x: 0,
                y: 0,
            },
            label: None,
        };
        assert_eq!(predict_binary(&m, "abc", &v).unwrap(), (true, 0.75));
        assert!(matches!(predict_binary(&m, "def", &v), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn dataset_view_marks_target_rows() {
        let schema = FeatureSchema::default();
        let row = |label| FeatureVector {
            values: [1.0; N_FEATURES],
            provenance: Provenance {
                patient_id: "p".into(),
                z: 0,
                x: 0,
                y: 0,
            },
            label: Some(label),
        };
        let ds = Dataset::new(
            schema,
            vec![row(TissueClass::Epicardial), row(TissueClass::Pericardium)],
        );
        let b = BinaryData::from_dataset(&ds, TissueClass::Pericardium).unwrap();
        assert_eq!(b.labels(), &[false, true]);
        assert_eq!(b.n_features(), N_FEATURES);
    }

    #[test]
    fn learner_names_parse() {
        for name in ["tree", "forest", "gnb", "hyperpipes"] {
            assert_eq!(LearnerSpec::from_name(name, 3).unwrap().name(), name);
        }
        assert!("svm".parse::<LearnerSpec>().is_err());
    }

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval(
            rows in prop::collection::vec((prop::collection::vec(-50.0f64..50.0, 3), any::<bool>()), 2..40),
            probe in prop::collection::vec(-100.0f64..100.0, 3),
        ) {
            let mut labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
            labels[0] = true;
            labels[1] = false;
            let data = BinaryData::from_rows(rows.iter().map(|r| r.0.clone()).collect(), labels).unwrap();
            for spec in ["tree", "forest", "gnb", "hyperpipes"] {
                let m = LearnerSpec::from_name(spec, 1).unwrap().train(&data).unwrap();
                let (_, s) = m.predict(&probe);
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}
