use super::BinaryData;
use crate::error::{Error, Result};

/// Per-class, per-feature `[min, max]` intervals; index 0 is the negative
/// class, 1 the positive. A class without training rows has no intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperPipesModel {
    pub bounds: [Option<Vec<(f64, f64)>>; 2],
    pub n_features: usize,
}

impl HyperPipesModel {
    fn in_range(&self, class: usize, x: &[f64]) -> usize {
        self.bounds[class].as_ref().map_or(0, |b| {
            b.iter()
                .zip(x)
                .filter(|(&(lo, hi), &v)| lo <= v && v <= hi)
                .count()
        })
    }

    /// The class with more in-range features wins; ties go to the negative
    /// class, which is declared first. The score is the positive class's
    /// in-range fraction.
    pub fn predict(&self, x: &[f64]) -> (bool, f64) {
        let (neg, pos) = (self.in_range(0, x), self.in_range(1, x));
        (pos > neg, pos as f64 / self.n_features.max(1) as f64)
    }
}

pub fn train_hyperpipes(data: &BinaryData) -> Result<HyperPipesModel> {
    if data.n_rows() == 0 {
        return Err(Error::EmptyData);
    }
    let d = data.n_features();
    let mut bounds: [Option<Vec<(f64, f64)>>; 2] = [None, None];
    for r in 0..data.n_rows() {
        let b = bounds[data.label(r) as usize].get_or_insert_with(|| vec![(f64::INFINITY, f64::NEG_INFINITY); d]);
        for (f, (lo, hi)) in b.iter_mut().enumerate() {
            let v = data.column(f)[r];
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }
    Ok(HyperPipesModel { bounds, n_features: d })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> BinaryData {
        BinaryData::from_rows(rows, labels).unwrap()
    }

    #[test]
    fn replayed_training_point_is_in_range() {
        let d = data(vec![vec![1.0, 5.0], vec![2.0, 6.0], vec![10.0, 0.0]], vec![true, true, false]);
        let m = train_hyperpipes(&d).unwrap();
        assert_eq!(m.predict(&[1.0, 5.0]), (true, 1.0));
        for (lo, hi) in m.bounds[1].as_ref().unwrap() {
            assert!(lo <= hi);
        }
    }

    #[test]
    fn outside_everything_goes_to_first_class() {
        let d = data(vec![vec![1.0], vec![2.0], vec![5.0]], vec![true, true, false]);
        let m = train_hyperpipes(&d).unwrap();
        assert_eq!(m.predict(&[100.0]), (false, 0.0));
    }

    #[test]
    fn disjoint_ranges_decide_by_membership() {
        let d = data(vec![vec![0.0], vec![1.0], vec![3.0], vec![4.0]], vec![false, false, true, true]);
        let m = train_hyperpipes(&d).unwrap();
        assert!(!m.predict(&[0.5]).0);
        assert!(m.predict(&[3.5]).0);
        assert!(!m.predict(&[2.0]).0);
    }

    #[test]
    fn single_class_data_is_accepted() {
        let d = data(vec![vec![0.0]], vec![true]);
        let m = train_hyperpipes(&d).unwrap();
        assert!(m.bounds[0].is_none());
        assert!(m.predict(&[0.0]).0);
    }
}
