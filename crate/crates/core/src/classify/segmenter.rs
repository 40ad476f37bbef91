use std::path::Path;

use rayon::prelude::*;

use super::{BinaryData, BinaryModel, LearnerSpec, TrainedModel};
use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureExtractor, FeatureSchema};
use crate::imaging::{center_of_gravity, FatWindowedSlice, Grid};
use crate::io::write_dir_atomic;
use crate::labels::{fuse_labels, Label, LabelSlice, TissueClass};

const MAGIC: &str = "cardiac-fat segmenter v1";
const INDEX_FILE: &str = "segmenter.txt";

/// Three one-vs-rest models sharing one feature schema, in
/// [`TissueClass::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterModel {
    pub schema: FeatureSchema,
    pub learner: String,
    pub models: [TrainedModel; 3],
}

pub fn train_segmenter(data: &Dataset, spec: &LearnerSpec) -> Result<SegmenterModel> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let hash = data.schema().hash();
    let train = |target: TissueClass| -> Result<TrainedModel> {
        let binary = BinaryData::from_dataset(data, target)?;
        Ok(TrainedModel {
            schema_hash: hash.clone(),
            target,
            model: spec.train(&binary)?,
        })
    };
    Ok(SegmenterModel {
        schema: data.schema().clone(),
        learner: spec.name().to_string(),
        models: [
            train(TissueClass::Epicardial)?,
            train(TissueClass::Mediastinal)?,
            train(TissueClass::Pericardium)?,
        ],
    })
}

impl SegmenterModel {
    pub fn schema_hash(&self) -> String {
        self.schema.hash()
    }

    pub fn model(&self, class: TissueClass) -> &BinaryModel {
        &self.models[class.index()].model
    }

    /// Fused label of one feature vector.
    pub fn predict(&self, x: &[f64]) -> Label {
        let [e, m, p] = [0, 1, 2].map(|i| self.models[i].model.predict(x).0);
        fuse_labels(e, m, p)
    }

    fn model_file(class: TissueClass) -> String {
        format!("{}.model", class.name())
    }

    /// Writes `segmenter.txt` plus one `.model` file per class into `dir`,
    /// replacing it atomically.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_dir_atomic(dir, |tmp| {
            let index = format!(
                "{MAGIC}\nlearner {}\n{}\n",
                self.learner,
                self.schema.to_header_fields()
            );
            std::fs::write(tmp.join(INDEX_FILE), index)?;
            for m in &self.models {
                std::fs::write(tmp.join(Self::model_file(m.target)), m.to_text())?;
            }
            Ok(())
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join(INDEX_FILE);
        let fmt_err = |message: &str| Error::Format {
            path: index_path.clone(),
            message: message.to_string(),
        };
        let index = std::fs::read_to_string(&index_path)?;
        let mut lines = index.lines();
        if lines.next() != Some(MAGIC) {
            return Err(fmt_err("not a segmenter index"));
        }
        let learner = lines
            .next()
            .and_then(|l| l.strip_prefix("learner "))
            .ok_or_else(|| fmt_err("missing learner line"))?
            .to_string();
        let schema = FeatureSchema::from_header_fields(lines.next().ok_or_else(|| fmt_err("missing schema line"))?)?;
        let hash = schema.hash();
        let load = |class: TissueClass| -> Result<TrainedModel> {
            let path = dir.join(Self::model_file(class));
            let m = TrainedModel::from_text(&std::fs::read_to_string(&path)?)?;
            if m.schema_hash != hash {
                return Err(Error::SchemaMismatch {
                    expected: hash.clone(),
                    found: m.schema_hash,
                });
            }
            if m.target != class {
                return Err(Error::Format {
                    path,
                    message: format!("model targets {} instead of {class}", m.target),
                });
            }
            if m.model.learner_name() != learner {
                return Err(Error::Format {
                    path,
                    message: format!("model is a {} but the index says {learner}", m.model.learner_name()),
                });
            }
            Ok(m)
        };
        Ok(Self {
            models: [
                load(TissueClass::Epicardial)?,
                load(TissueClass::Mediastinal)?,
                load(TissueClass::Pericardium)?,
            ],
            schema,
            learner,
        })
    }
}

/// Labels every pixel of slice `z`; background stays background.
pub fn segment_slice(model: &SegmenterModel, slice: &FatWindowedSlice, z: usize) -> Result<LabelSlice> {
    let Ok(cog) = center_of_gravity(slice) else {
        return Grid::filled(slice.width(), slice.height(), Label::Background);
    };
    let rows: Vec<Vec<Label>> = (0..slice.height())
        .into_par_iter()
        .map_init(
            || FeatureExtractor::new(&model.schema),
            |ex, y| {
                slice
                    .row(y)
                    .iter()
                    .enumerate()
                    .map(|(x, &g)| {
                        if g == 0 {
                            return Ok(Label::Background);
                        }
                        Ok(model.predict(&ex.extract(slice, z, x, y, cog)?))
                    })
                    .collect::<Result<Vec<_>>>()
            },
        )
        .collect::<Result<_>>()?;
    Grid::from_vec(slice.width(), slice.height(), rows.concat())
}

/// Segments an aligned volume extracted with `schema`.
pub fn segment_volume(model: &SegmenterModel, volume: &[FatWindowedSlice], schema: &FeatureSchema) -> Result<Vec<LabelSlice>> {
    if schema.hash() != model.schema_hash() {
        return Err(Error::SchemaMismatch {
            expected: model.schema_hash(),
            found: schema.hash(),
        });
    }
    volume
        .iter()
        .enumerate()
        .map(|(z, s)| segment_slice(model, s, z))
        .collect()
}
