use serde::{Deserialize, Serialize};

use crate::complex_data::Fold;
use crate::error::{Error, Result};
use crate::feature_pipeline::{FeatureMatrix, PreprocessConfig, Preprocessor};
use crate::stats::{mean, pearson, population_std};

/// Something that can be trained on a preprocessed matrix.
pub trait Learner {
    type Fitted: Predictor;
    fn fit(&self, x: &FeatureMatrix, y: &[f64]) -> Result<Self::Fitted>;
}

pub trait Predictor {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub n_train: usize,
    pub n_validation: usize,
    /// Missing when either side of the correlation has zero variance.
    pub pearson: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldScore>,
    /// Mean and population std over folds with a defined score.
    pub mean_pearson: Option<f64>,
    pub std_pearson: Option<f64>,
    pub undefined_folds: Vec<usize>,
    /// Validation-fold prediction for every input row.
    pub out_of_fold: Vec<Option<f64>>,
}

/// Fits preprocessing and the model on each fold's train part only and
/// scores Pearson on its validation part.
pub fn cross_validate<L: Learner>(
    learner: &L,
    matrix: &FeatureMatrix,
    labels: &[f64],
    folds: &[Fold],
    preprocess: &PreprocessConfig,
) -> Result<CvReport> {
    if labels.len() != matrix.n_rows() {
        return Err(Error::Validation(format!(
            "{} labels for {} rows",
            labels.len(),
            matrix.n_rows()
        )));
    }
    let mut out_of_fold = vec![None; labels.len()];
    let mut scores = Vec::with_capacity(folds.len());
    for (k, fold) in folds.iter().enumerate() {
        if fold.train.is_empty() || fold.validation.is_empty() {
            return Err(Error::Validation(format!("fold {k} has an empty part")));
        }
        let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<f64>>();
        let (y_train, y_val) = (pick(&fold.train), pick(&fold.validation));
        let train = matrix.subset_rows(&fold.train);
        let prep = Preprocessor::fit(&train, &y_train, preprocess)?;
        let model = learner.fit(&prep.transform(&train)?, &y_train)?;
        let pred = model.predict(&prep.transform(&matrix.subset_rows(&fold.validation))?)?;
        for (&i, &p) in fold.validation.iter().zip(&pred) {
            out_of_fold[i] = Some(p);
        }
        let r = pearson(&pred, &y_val);
        if r.is_none() {
            log::warn!("fold {k}: Pearson undefined (constant predictions or labels)");
        }
        scores.push(FoldScore {
            fold: k,
            n_train: fold.train.len(),
            n_validation: fold.validation.len(),
            pearson: r,
        });
    }
    let defined: Vec<f64> = scores.iter().filter_map(|s| s.pearson).collect();
    Ok(CvReport {
        mean_pearson: mean(&defined),
        std_pearson: population_std(&defined),
        undefined_folds: scores.iter().filter(|s| s.pearson.is_none()).map(|s| s.fold).collect(),
        folds: scores,
        out_of_fold,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::complex_data::{stratified_folds, Corpus, Sample, Target};
    use crate::feature_pipeline::ColumnMeta;
    use crate::record::FeatureKind;
    use crate::regressors::{GbrtParams, ModelSpec};
    use rand::{Rng, SeedableRng};

    /// Looks each row's true label up by id.
    struct Oracle(HashMap<String, f64>);
    struct Constant;

    impl Learner for Oracle {
        type Fitted = HashMap<String, f64>;
        fn fit(&self, _: &FeatureMatrix, _: &[f64]) -> Result<Self::Fitted> {
            Ok(self.0.clone())
        }
    }

    impl Predictor for HashMap<String, f64> {
        fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
            Ok(x.ids().iter().map(|id| self[id]).collect())
        }
    }

    impl Learner for Constant {
        type Fitted = Constant;
        fn fit(&self, _: &FeatureMatrix, _: &[f64]) -> Result<Constant> {
            Ok(Constant)
        }
    }

    impl Predictor for Constant {
        fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
            Ok(vec![0.5; x.n_rows()])
        }
    }

    fn problem(n: usize) -> (Vec<Sample>, FeatureMatrix, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let samples: Vec<Sample> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Sample {
                id: format!("s{i}"),
                corpus: Corpus::ALL[i % 3],
                sentence: "a b".into(),
                target: Target::Single("a".into()),
                complexity: Some(l),
            })
            .collect();
        let mut m = FeatureMatrix::new(samples.iter().map(|s| s.id.clone()).collect()).unwrap();
        for (j, name) in ["signal", "noise"].iter().enumerate() {
            let values = labels
                .iter()
                .map(|&l| {
                    Some(if j == 0 {
                        l * 3.0 + rng.gen_range(-0.1..0.1)
                    } else {
                        rng.gen_range(0.0..1.0)
                    })
                })
                .collect();
            m.push_column(
                ColumnMeta {
                    name: name.to_string(),
                    kind: FeatureKind::Real,
                    source: "t".into(),
                    is_log_variant: false,
                },
                values,
            )
            .unwrap();
        }
        (samples, m, labels)
    }

    #[test]
    fn oracle_model_scores_one() {
        let (samples, m, labels) = problem(100);
        let folds = stratified_folds(&samples, 5, 1).unwrap();
        let truth = m.ids().iter().cloned().zip(labels.iter().copied()).collect();
        let r = cross_validate(&Oracle(truth), &m, &labels, &folds, &PreprocessConfig::default()).unwrap();
        assert_eq!(r.folds.len(), 5);
        assert!((r.mean_pearson.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.out_of_fold.iter().all(Option::is_some));
    }

    #[test]
    fn constant_model_folds_are_flagged() {
        let (samples, m, labels) = problem(60);
        let folds = stratified_folds(&samples, 3, 1).unwrap();
        let r = cross_validate(&Constant, &m, &labels, &folds, &PreprocessConfig::default()).unwrap();
        assert_eq!(r.undefined_folds, [0, 1, 2]);
        assert_eq!(r.mean_pearson, None);
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let (samples, m, labels) = problem(150);
        let folds = stratified_folds(&samples, 5, 9).unwrap();
        let spec = ModelSpec::Gbrt(GbrtParams {
            n_estimators: 30,
            ..GbrtParams::default()
        });
        let a = cross_validate(&spec, &m, &labels, &folds, &PreprocessConfig::default()).unwrap();
        let b = cross_validate(&spec, &m, &labels, &folds, &PreprocessConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.mean_pearson.unwrap() > 0.8);
    }
}
