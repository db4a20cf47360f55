use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{PatientId, Split};
use super::WaveformError;

/// Assigns each patient to exactly one of train/val/test.
///
/// Ids are sorted and de-duplicated before a seeded shuffle, so the result
/// depends only on the set of ids and the seed. Split sizes use the
/// largest-remainder rule, which keeps each within one patient of its exact
/// share.
pub fn split_patients(
    patient_ids: &[PatientId],
    ratios: [u32; 3],
    seed: u64,
) -> Result<BTreeMap<PatientId, Split>, WaveformError> {
    if ratios.iter().any(|&r| r == 0) {
        return Err(WaveformError::BadConfig(format!("split ratios must be positive, got {ratios:?}")));
    }
    let mut ids: Vec<&PatientId> = patient_ids.iter().collect();
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        return Err(WaveformError::EmptyCohort);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let sizes = split_sizes(ids.len(), ratios);
    let mut out = BTreeMap::new();
    let mut it = ids.into_iter();
    for (split, size) in [Split::Train, Split::Val, Split::Test].into_iter().zip(sizes) {
        for id in it.by_ref().take(size) {
            out.insert(id.clone(), split);
        }
    }
    Ok(out)
}

fn split_sizes(n: usize, ratios: [u32; 3]) -> [usize; 3] {
    let total: u64 = ratios.iter().map(|&r| u64::from(r)).sum();
    let n64 = n as u64;
    let mut sizes = [0usize; 3];
    let mut remainders = [(0u64, 0usize); 3];
    for (i, &r) in ratios.iter().enumerate() {
        let exact = n64 * u64::from(r);
        sizes[i] = (exact / total) as usize;
        remainders[i] = (exact % total, i);
    }
    let assigned: usize = sizes.iter().sum();
    // larger remainder first, earlier split on ties
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(n - assigned) {
        sizes[i] += 1;
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<PatientId> {
        (0..n).map(|i| PatientId(format!("patient-{i:06}"))).collect()
    }

    fn counts(map: &BTreeMap<PatientId, Split>) -> [usize; 3] {
        let mut c = [0; 3];
        for s in map.values() {
            c[*s as usize] += 1;
        }
        c
    }

    #[test]
    fn ten_patients_split_eight_one_one() {
        let m = split_patients(&ids(10), [8, 1, 1], 7).unwrap();
        assert_eq!(counts(&m), [8, 1, 1]);
    }

    #[test]
    fn derivation_cohort_sizes() {
        let m = split_patients(&ids(45_969), [8, 1, 1], 1).unwrap();
        let c = counts(&m);
        assert!(c[0].abs_diff(36_776) <= 1, "{c:?}");
        assert!(c[1].abs_diff(4_596) <= 1, "{c:?}");
        assert!(c[2].abs_diff(4_597) <= 1, "{c:?}");
        assert_eq!(c.iter().sum::<usize>(), 45_969);
    }

    #[test]
    fn empty_cohort_and_bad_ratio() {
        assert!(matches!(split_patients(&[], [8, 1, 1], 0), Err(WaveformError::EmptyCohort)));
        assert!(matches!(split_patients(&ids(3), [8, 0, 1], 0), Err(WaveformError::BadConfig(_))));
    }

    proptest! {
        #[test]
        fn order_independent_partition(n in 1usize..300, seed in 0u64..1000, rot in 0usize..300) {
            let a = ids(n);
            let mut b = a.clone();
            b.rotate_left(rot % n);
            b.reverse();
            let ma = split_patients(&a, [8, 1, 1], seed).unwrap();
            let mb = split_patients(&b, [8, 1, 1], seed).unwrap();
            prop_assert_eq!(&ma, &mb);
            prop_assert_eq!(ma.len(), n);
            let c = counts(&ma);
            for (i, r) in [8.0, 1.0, 1.0].iter().enumerate() {
                let exact = n as f64 * r / 10.0;
                prop_assert!((c[i] as f64 - exact).abs() < 1.0 + 1e-9);
            }
        }
    }
}
