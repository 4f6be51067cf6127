use std::collections::BTreeSet;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Folds partition images.
    ImageWise,
    /// Folds partition objects; no object is in both train and test.
    ObjectWise,
}

/// Sample indices of one cross-validation fold, each list ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_folds(samples: &[Sample], mode: SplitMode, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(Error::invalid("split_folds", format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // assignment[i] = fold whose test set holds sample i
    let assignment: Vec<usize> = match mode {
        SplitMode::ImageWise => {
            if samples.len() < folds {
                return Err(Error::invalid(
                    "split_folds",
                    format!("{} samples cannot fill {folds} folds", samples.len()),
                ));
            }
            let mut order: Vec<usize> = (0..samples.len()).collect();
            order.shuffle(&mut rng);
            let mut a = vec![0; samples.len()];
            for (pos, &i) in order.iter().enumerate() {
                a[i] = pos % folds;
            }
            a
        }
        SplitMode::ObjectWise => {
            let mut objects: Vec<&str> = samples
                .iter()
                .map(|s| s.object_id.as_str())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if objects.len() < folds {
                return Err(Error::invalid(
                    "split_folds",
                    format!("{} distinct objects cannot fill {folds} folds", objects.len()),
                ));
            }
            objects.shuffle(&mut rng);
            samples
                .iter()
                .map(|s| objects.iter().position(|o| *o == s.object_id).expect("known object") % folds)
                .collect()
        }
    };
    Ok((0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..samples.len()).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DepthImage;
    use proptest::prelude::*;

    fn samples(objects: usize, per_object: usize) -> Vec<Sample> {
        (0..objects * per_object)
            .map(|i| Sample {
                id: format!("img{i}"),
                object_id: format!("obj{}", i / per_object),
                depth: DepthImage::empty(1, 1),
                rects: vec![],
            })
            .collect()
    }

    #[test]
    fn image_wise_even_folds() {
        let folds = split_folds(&samples(10, 1), SplitMode::ImageWise, 5, 1).unwrap();
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(f.test.len(), 2);
            assert_eq!(f.train.len(), 8);
        }
    }

    #[test]
    fn object_wise_keeps_objects_together() {
        let s = samples(5, 2);
        for f in split_folds(&s, SplitMode::ObjectWise, 5, 9).unwrap() {
            assert_eq!(f.test.len(), 2);
            assert_eq!(s[f.test[0]].object_id, s[f.test[1]].object_id);
        }
    }

    #[test]
    fn too_few_objects_or_folds() {
        assert!(split_folds(&samples(3, 4), SplitMode::ObjectWise, 5, 0).is_err());
        assert!(split_folds(&samples(3, 4), SplitMode::ImageWise, 1, 0).is_err());
    }

    #[test]
    fn seeded() {
        let s = samples(7, 3);
        assert_eq!(
            split_folds(&s, SplitMode::ImageWise, 4, 42).unwrap(),
            split_folds(&s, SplitMode::ImageWise, 4, 42).unwrap()
        );
    }

    proptest! {
        #[test]
        fn folds_partition_without_leaks(objects in 2usize..12, per in 1usize..4, folds in 2usize..6, seed in 0u64..1000, object_wise: bool) {
            prop_assume!(objects >= folds);
            let s = samples(objects, per);
            let mode = if object_wise { SplitMode::ObjectWise } else { SplitMode::ImageWise };
            let out = split_folds(&s, mode, folds, seed).unwrap();
            let mut seen = vec![0; s.len()];
            for f in &out {
                for &i in &f.test { seen[i] += 1; }
                prop_assert_eq!(f.test.len() + f.train.len(), s.len());
                if object_wise {
                    for &i in &f.test {
                        prop_assert!(f.train.iter().all(|&j| s[j].object_id != s[i].object_id));
                    }
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
