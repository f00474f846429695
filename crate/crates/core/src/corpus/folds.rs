use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Manifest;
use crate::error::{Error, Result};

/// Training/validation proportion of the weakly supervised split
/// (9,096 training and 1,386 validation tiles out of 10,482).
pub const WEAK_TRAIN_TILES: u64 = 9_096;
pub const WEAK_VAL_TILES: u64 = 1_386;

/// Fraction of the non-test tiles held out for validation (floored).
pub const SUPERVISED_VAL_FRACTION: (usize, usize) = (1, 5);

/// Assignment of annotated tiles to `k` spatially contiguous folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn members(&self, fold: usize) -> Vec<String> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisedSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

fn shuffled(mut ids: Vec<String>, seed: u64) -> Vec<String> {
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}

/// Sorts annotated tiles by centroid x and cuts the sequence into `k`
/// contiguous bands whose sizes differ by at most one. The seed only decides
/// the order among tiles sharing an x coordinate.
pub fn make_folds(manifest: &Manifest, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::InfeasibleSplit(format!("need at least 2 folds, got {k}")));
    }
    let centroid: BTreeMap<&str, f64> = manifest
        .entries()
        .iter()
        .filter(|e| e.annotated)
        .map(|e| (e.tile_id.as_str(), e.centroid_x_m))
        .collect();
    let n = centroid.len();
    if n < k {
        return Err(Error::InfeasibleSplit(format!(
            "{n} annotated tiles cannot fill {k} folds"
        )));
    }
    let mut order = shuffled(centroid.keys().map(|s| s.to_string()).collect(), seed);
    order.sort_by(|a, b| centroid[a.as_str()].total_cmp(&centroid[b.as_str()]));

    let mut assignment = BTreeMap::new();
    let mut fold = 0;
    for (i, id) in order.into_iter().enumerate() {
        while (fold + 1) * n / k <= i {
            fold += 1;
        }
        assignment.insert(id, fold);
    }
    Ok(FoldSplit { k, assignment })
}

/// Holds out `test_fold`; the remaining tiles are shuffled and split 80/20
/// with the validation count floored.
pub fn split_supervised(folds: &FoldSplit, test_fold: usize, seed: u64) -> Result<SupervisedSplit> {
    if test_fold >= folds.k {
        return Err(Error::InfeasibleSplit(format!(
            "test fold {test_fold} out of range for k = {}",
            folds.k
        )));
    }
    let test = folds.members(test_fold);
    let rest: Vec<String> = folds
        .assignment
        .iter()
        .filter(|(_, &f)| f != test_fold)
        .map(|(id, _)| id.clone())
        .collect();
    let rest = shuffled(rest, seed);
    let n_val = rest.len() * SUPERVISED_VAL_FRACTION.0 / SUPERVISED_VAL_FRACTION.1;
    let mut val = rest[..n_val].to_vec();
    let mut train = rest[n_val..].to_vec();
    val.sort();
    train.sort();
    Ok(SupervisedSplit { train, val, test })
}

/// Number of validation tiles out of `n`, keeping the 9,096 : 1,386
/// proportion and rounding half down.
pub fn weak_val_count(n: usize) -> usize {
    let total = WEAK_TRAIN_TILES + WEAK_VAL_TILES;
    let num = 2 * n as u64 * WEAK_VAL_TILES + total - 1;
    (num / (2 * total)) as usize
}

/// Splits every non-annotated tile into weak-supervision train/val sets.
pub fn split_weak(manifest: &Manifest, seed: u64) -> Result<WeakSplit> {
    if manifest.is_empty() {
        return Err(Error::EmptySplit("manifest has no tiles".into()));
    }
    let pool: Vec<String> = manifest.unannotated_ids().into_iter().collect();
    if pool.is_empty() {
        return Err(Error::EmptySplit(
            "every tile is annotated; nothing left for weak supervision".into(),
        ));
    }
    let pool = shuffled(pool, seed);
    let n_val = weak_val_count(pool.len());
    let mut val = pool[..n_val].to_vec();
    let mut train = pool[n_val..].to_vec();
    val.sort();
    train.sort();
    Ok(WeakSplit { train, val })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;
    use crate::corpus::{Collection, ManifestEntry};

    fn manifest(points: &[(f64, f64, bool)]) -> Manifest {
        let entries = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y, annotated))| ManifestEntry {
                tile_id: format!("t{i:05}"),
                images: [(Collection::Cassini, format!("t{i}.png").into())].into(),
                labels: Default::default(),
                centroid_x_m: x,
                centroid_y_m: y,
                annotated,
                georef: None,
            })
            .collect();
        Manifest::new("/", entries).unwrap()
    }

    #[test]
    fn seven_tiles_on_a_line_get_one_fold_each() {
        // ids are deliberately out of x order
        let xs = [60.0, 10.0, 30.0, 0.0, 50.0, 20.0, 40.0];
        let m = manifest(&xs.iter().map(|&x| (x, 0.0, true)).collect::<Vec<_>>());
        let f = make_folds(&m, 7, 3).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            assert_eq!(f.assignment[&format!("t{i:05}")], (x / 10.0) as usize);
        }
    }

    #[test]
    fn two_bands_pair_tiles_sharing_an_x_position() {
        let mut pts = Vec::new();
        for col in 0..7 {
            for row in 0..2 {
                pts.push((col as f64 * 100.0, row as f64 * 100.0, true));
            }
        }
        let m = manifest(&pts);
        for seed in 0..5 {
            let f = make_folds(&m, 7, seed).unwrap();
            for (i, &(x, _, _)) in pts.iter().enumerate() {
                assert_eq!(f.assignment[&format!("t{i:05}")], (x / 100.0) as usize);
            }
            assert_eq!(f.fold_sizes(), vec![2; 7]);
        }
    }

    #[test]
    fn folds_are_deterministic_and_reject_infeasible_k() {
        let m = manifest(&(0..20).map(|i| ((i % 4) as f64, i as f64, true)).collect::<Vec<_>>());
        assert_eq!(make_folds(&m, 3, 9).unwrap(), make_folds(&m, 3, 9).unwrap());
        assert!(matches!(make_folds(&m, 21, 0), Err(Error::InfeasibleSplit(_))));
        assert!(matches!(make_folds(&m, 1, 0), Err(Error::InfeasibleSplit(_))));
    }

    #[test]
    fn supervised_split_counts() {
        let m = manifest(&(0..70).map(|i| (i as f64, 0.0, true)).collect::<Vec<_>>());
        let f = make_folds(&m, 7, 0).unwrap();
        let s = split_supervised(&f, 0, 0).unwrap();
        assert_eq!((s.test.len(), s.train.len(), s.val.len()), (10, 48, 12));
        let all: BTreeSet<_> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        assert_eq!(all.len(), 70);

        let m = manifest(&[(0.0, 0.0, true), (1.0, 0.0, true)]);
        let f = make_folds(&m, 2, 0).unwrap();
        let s = split_supervised(&f, 1, 0).unwrap();
        assert_eq!((s.test.len(), s.train.len(), s.val.len()), (1, 1, 0));
        assert!(split_supervised(&f, 2, 0).is_err());
    }

    #[test]
    fn weak_split_follows_the_published_ratio() {
        assert_eq!(weak_val_count(10_482), 1_386);
        assert_eq!(weak_val_count(100), 13);
        assert_eq!(weak_val_count(1), 0);

        let mut pts: Vec<_> = (0..100).map(|i| (i as f64, 0.0, false)).collect();
        pts.extend((0..5).map(|i| (i as f64, 1.0, true)));
        let m = manifest(&pts);
        let s = split_weak(&m, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (87, 13));
        let annotated = m.annotated_ids();
        assert!(s.train.iter().chain(&s.val).all(|id| !annotated.contains(id)));
        assert_eq!(s, split_weak(&m, 1).unwrap());
    }

    #[test]
    fn weak_split_needs_unannotated_tiles() {
        let m = manifest(&[(0.0, 0.0, true)]);
        assert!(matches!(split_weak(&m, 0), Err(Error::EmptySplit(_))));
        let empty = Manifest::new("/", vec![]).unwrap();
        assert!(matches!(split_weak(&empty, 0), Err(Error::EmptySplit(_))));
    }

    proptest! {
        #[test]
        fn folds_partition_the_annotated_set(
            pts in prop::collection::vec((0.0f64..1e4, 0.0f64..1e4, any::<bool>()), 2..80),
            k in 2usize..9,
            seed in any::<u64>(),
        ) {
            let m = manifest(&pts);
            let annotated = m.annotated_ids();
            match make_folds(&m, k, seed) {
                Err(_) => prop_assert!(annotated.len() < k),
                Ok(f) => {
                    let keys: BTreeSet<_> = f.assignment.keys().cloned().collect();
                    prop_assert_eq!(&keys, &annotated);
                    let sizes = f.fold_sizes();
                    prop_assert_eq!(sizes.iter().sum::<usize>(), annotated.len());
                    let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                    prop_assert!(hi - lo <= 1);
                    // bands: every tile in fold f lies left of (or level with) every tile in fold f+1
                    let x = |id: &String| m.entry(id).unwrap().centroid_x_m;
                    for fold in 0..k - 1 {
                        let max_here = f.members(fold).iter().map(x).fold(f64::MIN, f64::max);
                        let min_next = f.members(fold + 1).iter().map(x).fold(f64::MAX, f64::min);
                        prop_assert!(max_here <= min_next);
                    }
                    let s = split_supervised(&f, seed as usize % k, seed).unwrap();
                    let union: BTreeSet<_> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
                    prop_assert_eq!(union.len(), s.train.len() + s.val.len() + s.test.len());
                    prop_assert_eq!(union, annotated);
                }
            }
        }
    }
}
