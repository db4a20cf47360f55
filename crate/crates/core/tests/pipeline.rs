use preopnet::explain::{explain_ecg, ExplainConfig};
use preopnet::model::{count_flops, score_split, train, ArchitectureConfig, ModelWeights, PreparedData, TrainConfig};
use preopnet::stats::{auc, categorical_nri};
use preopnet::waveform::{generate_synthetic_cohort, Split, SynthConfig, SyntheticCohort};
use proptest::prelude::*;

fn tiny_arch() -> ArchitectureConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tiny-arch.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_cohort() -> SyntheticCohort {
    let cfg = SynthConfig { n_patients: 80, event_rate: 0.15, nonfatal_mace_rate: 0.1, ..Default::default() };
    generate_synthetic_cohort(&cfg, 3).unwrap()
}

fn fit(cohort: &SyntheticCohort) -> ModelWeights {
    let cfg = TrainConfig { max_epochs: 2, seed: 5, ..Default::default() };
    let data = PreparedData::new(&cohort.manifest, &cohort.waveforms, cfg.target, &cfg.preprocess).unwrap();
    train(&data, &tiny_arch(), &cfg, |_| {}).unwrap().weights
}

#[test]
fn train_score_and_explain_on_a_small_cohort() {
    let cohort = small_cohort();
    let weights = fit(&cohort);
    assert_eq!(weights.to_bytes(), fit(&cohort).to_bytes());

    let predictor = weights.predictor();
    let test = score_split(&cohort.manifest, &cohort.waveforms, &predictor, predictor.target(), Split::Test).unwrap();
    assert!(!test.is_empty());
    assert!(test.scores().iter().all(|s| (0.0..=1.0).contains(s)));

    let back = ModelWeights::from_bytes(&weights.to_bytes()).unwrap();
    let again = score_split(&cohort.manifest, &cohort.waveforms, &back.predictor(), predictor.target(), Split::Test).unwrap();
    assert_eq!(test, again);

    let ecg = cohort.waveforms.get(&cohort.manifest.ecgs[0].ecg_id).unwrap();
    let map = explain_ecg(&predictor, ecg, None, &ExplainConfig { n_samples: 64, ..Default::default() }).unwrap();
    assert_eq!((map.leads, map.segments), (12, 200));
    assert!(map.cells().all(|(_, _, v)| v >= 0.0));
}

#[test]
fn wider_head_costs_more() {
    let base = ArchitectureConfig::canonical();
    let wider = ArchitectureConfig { head_channels: base.head_channels + 1, ..base.clone() };
    assert!(count_flops(&wider).unwrap() > count_flops(&base).unwrap());
}

fn cohort_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    proptest::collection::vec((0u16..200, any::<bool>()), 2..200)
        .prop_filter("both classes", |v| v.iter().any(|x| x.1) && v.iter().any(|x| !x.1))
        .prop_map(|v| v.into_iter().map(|(s, y)| (f64::from(s), y)).unzip())
}

proptest! {
    #[test]
    fn auc_is_rank_based((scores, labels) in cohort_strategy()) {
        let a = auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (s / 50.0).tanh() * 3.0 + 1.0).collect();
        prop_assert!((a - auc(&squashed, &labels).unwrap()).abs() < 1e-12);
        let flipped: Vec<bool> = labels.iter().map(|y| !y).collect();
        prop_assert!((a + auc(&scores, &flipped).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swapping_models_negates_nri(
        rows in proptest::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 2..300)
    ) {
        let old: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let new: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let y: Vec<bool> = rows.iter().map(|r| r.2).collect();
        prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
        let forward = categorical_nri(&old, &new, &y).unwrap().nri().unwrap();
        let backward = categorical_nri(&new, &old, &y).unwrap().nri().unwrap();
        prop_assert!((forward + backward).abs() < 1e-12);
    }
}
