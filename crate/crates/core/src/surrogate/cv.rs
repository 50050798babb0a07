//! k-fold cross-validation and the error measures reported with it.

use super::{GpData, LmgpModel, LmgpSpec};
use crate::grid::SeededRng;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Root mean squared error over the sample standard deviation of `test`
/// (n - 1 denominator).
pub fn nrmse(pred: &[f64], test: &[f64]) -> f64 {
    assert_eq!(pred.len(), test.len());
    let n = test.len() as f64;
    let sse: f64 = pred.iter().zip(test).map(|(p, t)| (p - t).powi(2)).sum();
    let mean = test.iter().sum::<f64>() / n;
    let var = test.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (sse / (n * var)).sqrt()
}

pub fn mae(pred: &[f64], test: &[f64]) -> f64 {
    assert_eq!(pred.len(), test.len());
    pred.iter().zip(test).map(|(p, t)| (p - t).abs()).sum::<f64>() / test.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub nrmse: f64,
    pub mae: f64,
    /// Held-out prediction for each row, in input order.
    pub predictions: Vec<f64>,
    pub fold_of: Vec<usize>,
    /// Number of random partitions rejected for missing a level.
    pub redraws: usize,
    pub stratified: bool,
}

fn training_sets_ok(data: &GpData, spec: &LmgpSpec, fold_of: &[usize], folds: usize) -> bool {
    (0..folds).all(|f| {
        spec.groups.iter().enumerate().all(|(g, gs)| {
            let mut full = vec![0usize; gs.n_levels];
            let mut train = vec![0usize; gs.n_levels];
            for (i, l) in data.levels.iter().enumerate() {
                full[l[g]] += 1;
                if fold_of[i] != f {
                    train[l[g]] += 1;
                }
            }
            full.iter().zip(&train).all(|(&a, &b)| a == 0 || b >= 2)
        })
    })
}

/// Seeded `folds`-fold cross-validation, pooling held-out predictions.
pub fn cross_validate(data: &GpData, spec: &LmgpSpec, folds: usize, seed: u64) -> Result<CvReport> {
    let n = data.len();
    if folds < 2 || n < folds {
        return Err(Error::InvalidInput(format!("{folds}-fold cross-validation on {n} rows")));
    }
    let mut rng = SeededRng::new(seed, 0x6376).rng();
    let mut fold_of = vec![0; n];
    let mut redraws = 0;
    let mut stratified = false;
    loop {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for (k, &i) in idx.iter().enumerate() {
            fold_of[i] = k % folds;
        }
        if training_sets_ok(data, spec, &fold_of, folds) {
            break;
        }
        redraws += 1;
        if redraws >= 50 {
            // deal rows of each level combination round robin
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.sort_by(|&a, &b| data.levels[a].cmp(&data.levels[b]));
            for (k, &i) in idx.iter().enumerate() {
                fold_of[i] = k % folds;
            }
            stratified = true;
            break;
        }
    }
    if redraws > 0 {
        log::info!("cross-validation redrew the partition {redraws} times (stratified: {stratified})");
    }
    let mut predictions = vec![0.0; n];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let model = LmgpModel::fit(&data.subset(&train), spec)?;
        for &i in &test {
            predictions[i] = model.predict(&data.x[i], &data.levels[i]).mean;
        }
    }
    Ok(CvReport {
        folds,
        nrmse: nrmse(&predictions, &data.y),
        mae: mae(&predictions, &data.y),
        predictions,
        fold_of,
        redraws,
        stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::GroupSpec;

    #[test]
    fn hand_arithmetic() {
        assert!((nrmse(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(nrmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert!((mae(&[2.0, 3.0, 5.0], &[1.0, 2.0, 3.0]) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn smooth_function_cross_validates_well() {
        let n = 30;
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        let levels: Vec<Vec<usize>> = (0..n).map(|i| vec![i % 2]).collect();
        let y = x
            .iter()
            .zip(&levels)
            .map(|(x, l)| (4.0 * x[0]).sin() + 0.2 * l[0] as f64)
            .collect();
        let data = GpData::new(x, levels, y);
        let spec = LmgpSpec {
            n_starts: 2,
            ..LmgpSpec::new(vec![GroupSpec::new("t", 2)])
        };
        let a = cross_validate(&data, &spec, 5, 3).unwrap();
        let b = cross_validate(&data, &spec, 5, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.nrmse < 0.05, "{}", a.nrmse);
        for f in 0..5 {
            assert_eq!(a.fold_of.iter().filter(|&&k| k == f).count(), 6);
        }
    }

    #[test]
    fn too_few_rows() {
        let data = GpData::new(vec![vec![0.0]; 3], vec![vec![]; 3], vec![1.0, 2.0, 3.0]);
        assert!(cross_validate(&data, &LmgpSpec::default(), 5, 0).is_err());
    }
}
