use super::BinaryData;
use crate::error::{Error, Result};

/// Variance floor applied to every fitted feature.
pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes over two classes; index 0 is negative, 1 positive.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNbModel {
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub priors: [f64; 2],
}

impl GaussianNbModel {
    fn log_joint(&self, class: usize, x: &[f64]) -> f64 {
        let mut lp = self.priors[class].ln();
        for ((&v, &mu), &var) in x.iter().zip(&self.means[class]).zip(&self.variances[class]) {
            let d = v - mu;
            lp -= 0.5 * (2.0 * std::f64::consts::PI * var).ln() + d * d / (2.0 * var);
        }
        lp
    }

    /// Posterior probability of the positive class.
    pub fn posterior(&self, x: &[f64]) -> f64 {
        let (ln, lp) = (self.log_joint(0, x), self.log_joint(1, x));
        // logistic of the log-odds, evaluated on the stable side
        let z = lp - ln;
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }

    pub fn predict(&self, x: &[f64]) -> (bool, f64) {
        let p = self.posterior(x);
        (p > 0.5, p)
    }
}

pub fn train_gnb(data: &BinaryData) -> Result<GaussianNbModel> {
    if data.n_rows() == 0 {
        return Err(Error::EmptyData);
    }
    let d = data.n_features();
    let mut counts = [0usize; 2];
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    for r in 0..data.n_rows() {
        let c = data.label(r) as usize;
        counts[c] += 1;
        for (f, s) in sums[c].iter_mut().enumerate() {
            *s += data.column(f)[r];
        }
    }
    if counts[1] == 0 {
        return Err(Error::MissingClass("positive"));
    }
    if counts[0] == 0 {
        return Err(Error::MissingClass("negative"));
    }
    let means = [0, 1].map(|c| sums[c].iter().map(|s| s / counts[c] as f64).collect::<Vec<_>>());
    let mut sq = [vec![0.0; d], vec![0.0; d]];
    for r in 0..data.n_rows() {
        let c = data.label(r) as usize;
        for (f, s) in sq[c].iter_mut().enumerate() {
            let dv = data.column(f)[r] - means[c][f];
            *s += dv * dv;
        }
    }
    let variances = [0, 1].map(|c| {
        sq[c]
            .iter()
            .map(|s| (s / counts[c] as f64).max(VARIANCE_FLOOR))
            .collect::<Vec<_>>()
    });
    let n = data.n_rows() as f64;
    Ok(GaussianNbModel {
        means,
        variances,
        priors: [counts[0] as f64 / n, counts[1] as f64 / n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(xs: &[f64], ys: &[bool]) -> BinaryData {
        BinaryData::from_rows(xs.iter().map(|&x| vec![x]).collect(), ys.to_vec()).unwrap()
    }

    #[test]
    fn separated_clusters() {
        let d = one_d(&[0.9, 1.0, 1.1, 9.9, 10.0, 10.1], &[false, false, false, true, true, true]);
        let m = train_gnb(&d).unwrap();
        assert!(!m.predict(&[1.0]).0);
        assert!(m.predict(&[10.0]).0);
        assert!(!m.predict(&[4.0]).0 && m.predict(&[7.0]).0);
    }

    #[test]
    fn identical_distributions_return_priors() {
        let d = one_d(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0], &[true, true, false, false, false, false]);
        let m = train_gnb(&d).unwrap();
        let (decision, p) = m.predict(&[1.7]);
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        assert!(!decision);
    }

    #[test]
    fn hand_computed_posterior() {
        // negatives {0, 2}: mean 1, var 1; positives {4, 8}: mean 6, var 4
        let d = one_d(&[0.0, 2.0, 4.0, 8.0], &[false, false, true, true]);
        let m = train_gnb(&d).unwrap();
        assert_eq!(m.means, [vec![1.0], vec![6.0]]);
        assert_eq!(m.variances, [vec![1.0], vec![4.0]]);
        let x = 3.0;
        let pdf = |mu: f64, var: f64| (-(x - mu) * (x - mu) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let (a, b) = (0.5 * pdf(1.0, 1.0), 0.5 * pdf(6.0, 4.0));
        assert!((m.posterior(&[x]) - b / (a + b)).abs() < 1e-9);
    }

    #[test]
    fn missing_class_and_variance_floor() {
        let d = one_d(&[1.0, 2.0], &[false, false]);
        assert!(matches!(train_gnb(&d), Err(Error::MissingClass("positive"))));
        let d = one_d(&[1.0, 1.0, 3.0], &[false, false, true]);
        let m = train_gnb(&d).unwrap();
        assert_eq!(m.variances[0][0], VARIANCE_FLOOR);
        assert!(m.posterior(&[2.0]).is_finite());
    }
}
