use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{age_mean, impute_age, threshold_from_prevalence, LabeledDataset};
use super::{Classifier, FeatureMode, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub roc_auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Disjoint (train, test) index pairs; test folds cover the dataset and
/// split each class as evenly as k allows. Shuffling is per-class from one
/// seeded stream, so a seed pins the whole split.
pub fn stratified_kfold(
    ds: &LabeledDataset,
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>, ModelError> {
    assert!(k >= 2, "need at least two folds");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
    for (i, r) in ds.rows.iter().enumerate() {
        per_class[r.label as usize].push(i);
    }
    for (label, idx) in per_class.iter_mut().enumerate() {
        if idx.len() < k {
            return Err(ModelError::ClassTooSmall { class: label as u8, have: idx.len(), need: k });
        }
        idx.shuffle(&mut rng);
    }

    let mut test_folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for idx in &per_class {
        let base = idx.len() / k;
        let rem = idx.len() % k;
        let mut at = 0;
        for (f, fold) in test_folds.iter_mut().enumerate() {
            let take = base + usize::from(f < rem);
            fold.extend(&idx[at..at + take]);
            at += take;
        }
    }

    Ok(test_folds
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train: Vec<usize> =
                (0..ds.rows.len()).filter(|i| test.binary_search(i).is_err()).collect();
            (train, test)
        })
        .collect())
}

/// Rank-based ROC AUC with half credit for ties: identical to counting all
/// positive/negative pairs, at n log n.
fn roc_auc(preds: &[(f64, u8)]) -> f64 {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].0.total_cmp(&preds[b].0));
    let mut rank_sum_pos = 0.0;
    let mut n_pos = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && preds[order[j]].0 == preds[order[i]].0 {
            j += 1;
        }
        // 1-based ranks i+1 ..= j averaged over the tie block.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            if preds[o].1 == 1 {
                rank_sum_pos += avg_rank;
                n_pos += 1;
            }
        }
        i = j;
    }
    let n_neg = preds.len() - n_pos;
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos * n_neg) as f64
}

pub fn evaluate(preds: &[(f64, u8)], threshold: f64) -> Result<Metrics, ModelError> {
    let n_pos = preds.iter().filter(|(_, l)| *l == 1).count();
    if n_pos == 0 || n_pos == preds.len() {
        return Err(ModelError::SingleClassEvaluationSet);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for &(p, l) in preds {
        match (p >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let sensitivity = tp as f64 / (tp + fn_) as f64;
    let specificity = tn as f64 / (tn + fp) as f64;
    let accuracy = (tp + tn) as f64 / preds.len() as f64;
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let f1 = if precision + sensitivity > 0.0 {
        2.0 * precision * sensitivity / (precision + sensitivity)
    } else {
        0.0
    };
    Ok(Metrics { roc_auc: roc_auc(preds), sensitivity, specificity, accuracy, f1 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRun {
    pub seed: u64,
    pub fold: usize,
    pub threshold: f64,
    pub n_test: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub scenario: String,
    pub model: String,
    pub mode: FeatureMode,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<CvRun>,
    pub mean: Metrics,
}

/// seeds × k evaluations: per fold, impute (train mean), fit, threshold at
/// train prevalence, score the held-out rows. Folds run in parallel;
/// results come back in (seed, fold) order regardless.
pub fn cross_validate<C: Classifier + Send>(
    ds: &LabeledDataset,
    k: usize,
    seeds: &[u64],
    mode: FeatureMode,
) -> Result<CvReport, ModelError> {
    let mut jobs = Vec::with_capacity(seeds.len() * k);
    for &seed in seeds {
        for (fold, split) in stratified_kfold(ds, k, seed)?.into_iter().enumerate() {
            jobs.push((seed, fold, split));
        }
    }

    let runs: Vec<CvRun> = jobs
        .into_par_iter()
        .map(|(seed, fold, (train_idx, test_idx))| {
            let mut train = ds.subset(&train_idx);
            let mut test = ds.subset(&test_idx);
            if mode == FeatureMode::Sixteen {
                let m = age_mean(&train)?;
                train = impute_age(&train, m);
                test = impute_age(&test, m);
            }
            let model = C::fit(&train, mode)?;
            let threshold = threshold_from_prevalence(&train);
            let preds: Vec<(f64, u8)> =
                test.rows.iter().map(|r| (model.predict_probability(r), r.label)).collect();
            let metrics = evaluate(&preds, threshold)?;
            Ok(CvRun { seed, fold, threshold, n_test: test.rows.len(), metrics })
        })
        .collect::<Result<_, ModelError>>()?;

    let n = runs.len() as f64;
    let mean = Metrics {
        roc_auc: runs.iter().map(|r| r.metrics.roc_auc).sum::<f64>() / n,
        sensitivity: runs.iter().map(|r| r.metrics.sensitivity).sum::<f64>() / n,
        specificity: runs.iter().map(|r| r.metrics.specificity).sum::<f64>() / n,
        accuracy: runs.iter().map(|r| r.metrics.accuracy).sum::<f64>() / n,
        f1: runs.iter().map(|r| r.metrics.f1).sum::<f64>() / n,
    };
    Ok(CvReport {
        scenario: ds.scenario.clone(),
        model: "sflre".into(),
        mode,
        k,
        seeds: seeds.to_vec(),
        runs,
        mean,
    })
}

/// Table-shaped text block of the averaged metrics.
pub fn format_metrics_table(reports: &[CvReport]) -> String {
    let mut out = String::from(
        "SCENARIO                 MODEL   ROC AUC  SENSITIVITY  SPECIFICITY  ACCURACY      F1\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{:<24} {:<7} {:>7.3} {:>12.3} {:>12.3} {:>9.3} {:>7.3}\n",
            r.scenario, r.model, r.mean.roc_auc, r.mean.sensitivity, r.mean.specificity,
            r.mean.accuracy, r.mean.f1,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::BiomarkerVector;
    use crate::model::dataset::{toy_row, DatasetRow};
    use crate::model::sflre::FittedSFLRE;
    use rand::Rng;

    fn ds_counts(zeros: usize, ones: usize) -> LabeledDataset {
        let mut rows = Vec::new();
        for i in 0..zeros + ones {
            rows.push(toy_row(&format!("r{i}"), 0.0, (i >= zeros) as u8));
        }
        LabeledDataset { scenario: "t".into(), rows }
    }

    #[test]
    fn balanced_tiny_folds() {
        let folds = stratified_kfold(&ds_counts(5, 5), 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = vec![false; 10];
        for (train, test) in &folds {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 8);
            let ones = test.iter().filter(|&&i| i >= 5).count();
            assert_eq!(ones, 1);
            for &i in test {
                assert!(!seen[i], "test folds overlap at {i}");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn cohort_sized_folds_split_positives_evenly() {
        let folds = stratified_kfold(&ds_counts(186, 80), 5, 9).unwrap();
        for (_, test) in &folds {
            let ones = test.iter().filter(|&&i| i >= 186).count();
            assert_eq!(ones, 16);
            assert!(test.len() == 53 || test.len() == 54, "{}", test.len());
        }
    }

    #[test]
    fn folds_are_deterministic_per_seed() {
        let d = ds_counts(30, 12);
        assert_eq!(stratified_kfold(&d, 5, 42).unwrap(), stratified_kfold(&d, 5, 42).unwrap());
        assert_ne!(stratified_kfold(&d, 5, 42).unwrap(), stratified_kfold(&d, 5, 43).unwrap());
    }

    #[test]
    fn small_class_rejected() {
        assert!(matches!(
            stratified_kfold(&ds_counts(50, 4), 5, 0),
            Err(ModelError::ClassTooSmall { class: 1, have: 4, need: 5 })
        ));
    }

    #[test]
    fn six_point_auc() {
        // Concordant pairs by hand: 0.9 beats all three negatives, 0.7 beats
        // two, 0.3 beats one — 6 of 9.
        let preds = [(0.9, 1u8), (0.8, 0), (0.7, 1), (0.4, 0), (0.3, 1), (0.1, 0)];
        let m = evaluate(&preds, 0.5).unwrap();
        assert_eq!(m.roc_auc, 6.0 / 9.0);
        // A tie takes half credit: moving the third positive up onto the
        // 0.4 negative turns its lost pair into 0.5.
        let tied = [(0.9, 1u8), (0.8, 0), (0.7, 1), (0.4, 0), (0.4, 1), (0.1, 0)];
        assert_eq!(evaluate(&tied, 0.5).unwrap().roc_auc, 6.5 / 9.0);
        // At 0.5: predicted positive {0.9, 0.8, 0.7} → TP 2, FP 1, TN 2, FN 1.
        assert_eq!(m.sensitivity, 2.0 / 3.0);
        assert_eq!(m.specificity, 2.0 / 3.0);
        assert_eq!(m.accuracy, 4.0 / 6.0);
        let precision: f64 = 2.0 / 3.0;
        assert_eq!(m.f1, 2.0 * precision * (2.0 / 3.0) / (precision + 2.0 / 3.0));
    }

    #[test]
    fn degenerate_rankings() {
        let perfect = [(0.9, 1u8), (0.8, 1), (0.2, 0), (0.1, 0)];
        assert_eq!(evaluate(&perfect, 0.5).unwrap().roc_auc, 1.0);
        let all_tied = [(0.5, 1u8), (0.5, 0), (0.5, 1), (0.5, 0)];
        assert_eq!(evaluate(&all_tied, 0.9).unwrap().roc_auc, 0.5);
        // Constant positive forecast under a low threshold: the degenerate
        // always-say-yes model.
        let ones = [(1.0, 1u8), (1.0, 0), (1.0, 1)];
        let m = evaluate(&ones, 0.2).unwrap();
        assert_eq!(m.sensitivity, 1.0);
        assert_eq!(m.specificity, 0.0);
        // Nothing predicted positive: f1 defined as 0.
        let none = [(0.1, 1u8), (0.2, 0)];
        assert_eq!(evaluate(&none, 0.9).unwrap().f1, 0.0);
        assert!(matches!(
            evaluate(&[(0.5, 1u8), (0.6, 1)], 0.5),
            Err(ModelError::SingleClassEvaluationSet)
        ));
    }

    #[test]
    fn auc_matches_pair_counting_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let n = rng.random_range(2..=200);
            // Coarse probability grid forces plenty of ties.
            let preds: Vec<(f64, u8)> = (0..n)
                .map(|_| (rng.random_range(0..=10) as f64 / 10.0, rng.random_range(0..=1) as u8))
                .collect();
            let n_pos = preds.iter().filter(|(_, l)| *l == 1).count();
            if n_pos == 0 || n_pos == preds.len() {
                continue;
            }
            let mut credit = 0.0;
            for &(pp, lp) in &preds {
                if lp != 1 {
                    continue;
                }
                for &(pn, ln) in &preds {
                    if ln != 0 {
                        continue;
                    }
                    credit += if pp > pn {
                        1.0
                    } else if pp == pn {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
            let brute = credit / (n_pos * (preds.len() - n_pos)) as f64;
            assert_eq!(evaluate(&preds, 0.5).unwrap().roc_auc, brute);
        }
    }

    #[test]
    fn accuracy_identity_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(4..=60);
            let preds: Vec<(f64, u8)> =
                (0..n).map(|_| (rng.random::<f64>(), rng.random_range(0..=1) as u8)).collect();
            let n_pos = preds.iter().filter(|(_, l)| *l == 1).count();
            if n_pos == 0 || n_pos == preds.len() {
                continue;
            }
            let thr = 0.4;
            let m = evaluate(&preds, thr).unwrap();
            let correct = preds.iter().filter(|&&(p, l)| (p >= thr) as u8 == l).count();
            assert_eq!(m.accuracy, correct as f64 / n as f64);
        }
    }

    fn clouds(n_per: usize, gap: f64, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for label in [0u8, 1] {
            for i in 0..n_per {
                let center = label as f64 * gap;
                let vals: [f64; 14] = core::array::from_fn(|_| center + rng.random::<f64>());
                rows.push(DatasetRow {
                    source_id: format!("c{label}-{i}"),
                    features: BiomarkerVector::from_array(vals),
                    gender: None,
                    age: None,
                    label,
                });
            }
        }
        LabeledDataset { scenario: "clouds".into(), rows }
    }

    #[test]
    fn fifty_runs_and_separable_clouds() {
        let d = clouds(30, 3.0, 5);
        let seeds: Vec<u64> = (1..=10).collect();
        let rep = cross_validate::<FittedSFLRE>(&d, 5, &seeds, FeatureMode::Fourteen).unwrap();
        assert_eq!(rep.runs.len(), 50);
        assert!(rep.mean.roc_auc >= 0.95, "mean auc {}", rep.mean.roc_auc);
        let min_auc =
            rep.runs.iter().map(|r| r.metrics.roc_auc).fold(f64::INFINITY, f64::min);
        assert!(min_auc >= 0.85, "min fold auc {min_auc}");
        // Threshold is the train prevalence: folds are stratified, so it
        // stays near one half on a balanced set.
        for run in &rep.runs {
            assert!((run.threshold - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn uninformative_features_score_near_chance() {
        // Identical feature values for both classes: every fold predicts the
        // prevalence for every row, so ranking is pure ties at AUC 0.5.
        let d = ds_counts(25, 25);
        let rep =
            cross_validate::<FittedSFLRE>(&d, 5, &[3, 4, 5], FeatureMode::Fourteen).unwrap();
        assert_eq!(rep.runs.len(), 15);
        assert!((rep.mean.roc_auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn train_side_quantities_ignore_test_rows() {
        let d = clouds(20, 2.0, 11);
        let folds = stratified_kfold(&d, 5, 1).unwrap();
        let (train_idx, test_idx) = &folds[0];
        let train = d.subset(train_idx);
        let model_a = FittedSFLRE::fit(&train, FeatureMode::Fourteen).unwrap();
        let thr_a = threshold_from_prevalence(&train);

        // Corrupt every test row wildly; the training-side artifacts must
        // not move.
        let mut mutated = d.clone();
        for &i in test_idx {
            mutated.rows[i].features = BiomarkerVector::from_array([1e6; 14]);
            mutated.rows[i].age = Some(1e6);
        }
        let train_b = mutated.subset(train_idx);
        let model_b = FittedSFLRE::fit(&train_b, FeatureMode::Fourteen).unwrap();
        assert_eq!(threshold_from_prevalence(&train_b), thr_a);
        for (a, b) in model_a.submodels.iter().zip(&model_b.submodels) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sixteen_mode_imputes_per_fold() {
        // Flat sound features; age carries all the signal and a quarter of
        // the ages are missing.
        let mut d = ds_counts(20, 20);
        for (i, r) in d.rows.iter_mut().enumerate() {
            r.age = if i % 4 == 0 { None } else { Some(40.0 + 30.0 * r.label as f64) };
        }
        let rep = cross_validate::<FittedSFLRE>(&d, 5, &[1, 2], FeatureMode::Sixteen).unwrap();
        assert_eq!(rep.runs.len(), 10);
        assert!(rep.mean.roc_auc > 0.8, "auc {}", rep.mean.roc_auc);
    }
}
