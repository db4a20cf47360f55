use serde::{Deserialize, Serialize};

use crate::waveform::ClinicalProfile;

/// Score at or above which a patient counts as high-risk.
pub const RCRI_HIGH_RISK: u8 = 2;

pub const RCRI_COMPONENTS: [&str; 6] = [
    "ischemic_heart_disease",
    "congestive_heart_failure",
    "cerebrovascular_disease",
    "insulin_use",
    "creatinine_gt_2mgdl",
    "elevated_risk_procedure",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RcriResult {
    pub score: u8,
    pub high_risk: bool,
    /// Component flags in [`RCRI_COMPONENTS`] order.
    pub components: [bool; 6],
}

pub fn rcri_score(profile: &ClinicalProfile) -> RcriResult {
    let components = profile.rcri_components();
    let score = components.iter().filter(|&&c| c).count() as u8;
    RcriResult { score, high_risk: score >= RCRI_HIGH_RISK, components }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::Sex;
    use proptest::prelude::*;

    fn profile(c: [bool; 6]) -> ClinicalProfile {
        ClinicalProfile {
            patient_id: "P1".into(),
            ischemic_heart_disease: c[0],
            congestive_heart_failure: c[1],
            cerebrovascular_disease: c[2],
            insulin_use: c[3],
            creatinine_gt_2mgdl: c[4],
            elevated_risk_procedure: c[5],
            age: 60.0,
            sex: Sex::Female,
        }
    }

    #[test]
    fn examples() {
        let all = rcri_score(&profile([true; 6]));
        assert_eq!((all.score, all.high_risk), (6, true));
        let none = rcri_score(&profile([false; 6]));
        assert_eq!((none.score, none.high_risk), (0, false));
        let three = rcri_score(&profile([false, true, false, true, true, false]));
        assert_eq!((three.score, three.high_risk), (3, true));
        let one = rcri_score(&profile([false, false, false, false, false, true]));
        assert!(!one.high_risk);
    }

    proptest! {
        #[test]
        fn popcount_and_permutation_invariant(c in proptest::array::uniform6(any::<bool>()), rot in 0usize..6) {
            let r = rcri_score(&profile(c));
            prop_assert_eq!(u32::from(r.score), c.iter().filter(|&&b| b).count() as u32);
            let mut p = c;
            p.rotate_left(rot);
            prop_assert_eq!(rcri_score(&profile(p)).score, r.score);
            prop_assert_eq!(r.high_risk, r.score >= 2);
        }
    }
}
