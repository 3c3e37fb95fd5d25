use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One cross-validation split over item positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldSplit {
    pub index: usize,
    pub train: Vec<usize>,
    pub heldout: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Folds {
    pub splits: Vec<FoldSplit>,
    pub warnings: Vec<String>,
}

/// Stratified k-fold: each class is shuffled with `seed` and dealt round
/// robin, the second class continuing where the first stopped, so per-class
/// and total fold sizes differ by at most one.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Folds> {
    if k < 2 {
        return Err(Error::Validation(format!("k = {k}; need at least 2 folds")));
    }
    if labels.len() < k {
        return Err(Error::Validation(format!(
            "{} items cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Validation(
            "stratified folds need both classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold_of = vec![0usize; labels.len()];
    for (j, &i) in pos.iter().enumerate() {
        fold_of[i] = j % k;
    }
    let offset = pos.len() % k;
    for (j, &i) in neg.iter().enumerate() {
        fold_of[i] = (offset + j) % k;
    }
    let mut warnings = Vec::new();
    for (class, n) in [("positive", pos.len()), ("negative", neg.len())] {
        if n < k {
            warnings.push(format!(
                "degenerate folds: only {n} {class} items for {k} folds, {} folds have none",
                k - n
            ));
        }
    }
    let splits = (0..k)
        .map(|f| FoldSplit {
            index: f,
            train: (0..labels.len()).filter(|&i| fold_of[i] != f).collect(),
            heldout: (0..labels.len()).filter(|&i| fold_of[i] == f).collect(),
            seed,
        })
        .collect();
    Ok(Folds { splits, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn positives(labels: &[bool], s: &FoldSplit) -> usize {
        s.heldout.iter().filter(|&&i| labels[i]).count()
    }

    #[test]
    fn balanced_exact_division() {
        let labels: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let f = stratified_kfold(&labels, 10, 1).unwrap();
        for s in &f.splits {
            assert_eq!(positives(&labels, s), 5);
            assert_eq!(s.heldout.len(), 10);
        }
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn sparse_positives_warn() {
        let labels: Vec<bool> = (0..100).map(|i| i < 5).collect();
        let f = stratified_kfold(&labels, 10, 1).unwrap();
        let counts: Vec<usize> = f.splits.iter().map(|s| positives(&labels, s)).collect();
        assert_eq!(counts.iter().filter(|&&c| c == 1).count(), 5);
        assert_eq!(counts.iter().filter(|&&c| c == 0).count(), 5);
        assert_eq!(f.warnings.len(), 1);
    }

    #[test]
    fn seeded_and_single_class() {
        let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        assert_eq!(stratified_kfold(&labels, 10, 7).unwrap(), stratified_kfold(&labels, 10, 7).unwrap());
        assert_ne!(stratified_kfold(&labels, 10, 7).unwrap(), stratified_kfold(&labels, 10, 8).unwrap());
        assert!(matches!(stratified_kfold(&[true; 20], 10, 0), Err(Error::Validation(_))));
    }

    proptest! {
        #[test]
        fn disjoint_cover_with_even_strata(
            labels in prop::collection::vec(any::<bool>(), 10..200),
            k in 2usize..11,
            seed in any::<u64>(),
        ) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let f = stratified_kfold(&labels, k, seed).unwrap();
            let mut seen = vec![0; labels.len()];
            for s in &f.splits {
                for &i in &s.heldout { seen[i] += 1; }
                prop_assert_eq!(s.train.len() + s.heldout.len(), labels.len());
                prop_assert!(s.train.iter().all(|i| !s.heldout.contains(i)));
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let pos: Vec<usize> = f.splits.iter().map(|s| positives(&labels, s)).collect();
            let neg: Vec<usize> = f.splits.iter().map(|s| s.heldout.len() - positives(&labels, s)).collect();
            let size: Vec<usize> = f.splits.iter().map(|s| s.heldout.len()).collect();
            for v in [pos, neg, size] {
                prop_assert!(v.iter().max().unwrap() - v.iter().min().unwrap() <= 1);
            }
        }
    }
}
