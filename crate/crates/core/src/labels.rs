//! Pixel labels shared by ground truth, segmentation output and scoring.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::imaging::Grid;

/// Label of one pixel in a segmentation or ground-truth grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Label {
    #[default]
    Background,
    Epicardial,
    Mediastinal,
    Pericardium,
    /// Claimed by both fat classifiers, or by the pericardium classifier alone.
    Hybrid,
    /// No classifier claimed the pixel.
    Unclassified,
}

pub type LabelSlice = Grid<Label>;

impl Label {
    pub const ALL: [Label; 6] = [
        Label::Background,
        Label::Epicardial,
        Label::Mediastinal,
        Label::Pericardium,
        Label::Hybrid,
        Label::Unclassified,
    ];

    pub fn tissue(self) -> Option<TissueClass> {
        match self {
            Label::Epicardial => Some(TissueClass::Epicardial),
            Label::Mediastinal => Some(TissueClass::Mediastinal),
            Label::Pericardium => Some(TissueClass::Pericardium),
            _ => None,
        }
    }
}

/// The three classes a foreground pixel can carry in training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TissueClass {
    Epicardial,
    Mediastinal,
    Pericardium,
}

impl TissueClass {
    pub const ALL: [TissueClass; 3] = [
        TissueClass::Epicardial,
        TissueClass::Mediastinal,
        TissueClass::Pericardium,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TissueClass::Epicardial => "epicardial",
            TissueClass::Mediastinal => "mediastinal",
            TissueClass::Pericardium => "pericardium",
        }
    }

    pub fn label(self) -> Label {
        match self {
            TissueClass::Epicardial => Label::Epicardial,
            TissueClass::Mediastinal => Label::Mediastinal,
            TissueClass::Pericardium => Label::Pericardium,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TissueClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TissueClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "epicardial" => Ok(TissueClass::Epicardial),
            "mediastinal" => Ok(TissueClass::Mediastinal),
            "pericardium" => Ok(TissueClass::Pericardium),
            other => Err(Error::Parse(format!("unknown tissue class `{other}`"))),
        }
    }
}

/// Combines the three one-vs-rest decisions of a pixel.
///
/// | epi | medi | peri | label        |
/// |-----|------|------|--------------|
/// | T   | T    | any  | hybrid       |
/// | T   | F    | any  | epicardial   |
/// | F   | T    | any  | mediastinal  |
/// | F   | F    | T    | hybrid       |
/// | F   | F    | F    | unclassified |
pub fn fuse_labels(epi: bool, medi: bool, peri: bool) -> Label {
    match (epi, medi, peri) {
        (true, true, _) => Label::Hybrid,
        (true, false, _) => Label::Epicardial,
        (false, true, _) => Label::Mediastinal,
        (false, false, true) => Label::Hybrid,
        (false, false, false) => Label::Unclassified,
    }
}
