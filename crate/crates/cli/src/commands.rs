use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use preopnet::baselines::{rcri_feature_matrix, rcri_score, StumpConfig, StumpEnsemble, RCRI_HIGH_RISK};
use preopnet::explain::{explain_ecg, render_heatmap_data, ExplainConfig, MaskMode};
use preopnet::model::{
    flops_breakdown, grid_search, score_split, train, ArchitectureConfig, GridSpec, ModelWeights, PreOpNet,
    PreparedData, TrainConfig, TrainingMeta,
};
use preopnet::stats::{
    categorical_nri, evaluate, nri_ci, roc_csv, subgroup_report, threshold_at_percentile, youden_optimal, BootstrapConfig,
    MetricReport, ScoredCohort, ScoredEntry,
};
use preopnet::waveform::synth::generate_with_format;
use preopnet::waveform::{
    link_ecgs_to_procedures, read_ecg_file, DatasetManifest, DirectoryStore, EcgFileFormat, EcgMeta, LinkMode,
    Setting, Split, SynthConfig, Target, WaveformSource,
};
use serde::Serialize;

use crate::bench::{run_bench, synthetic_ecg_files, LATENCY_BUDGET_S};
use crate::cli::*;
use crate::payload::ClinicalInput;
use crate::service::{self, AppState};
use crate::UsageError;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_cohort(path: &Path) -> Result<(DatasetManifest, DirectoryStore)> {
    let manifest = DatasetManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok((manifest, DirectoryStore::new(root)))
}

fn load_arch(path: &Option<PathBuf>) -> Result<ArchitectureConfig> {
    let arch = match path {
        Some(p) => read_json(p)?,
        None => ArchitectureConfig::canonical(),
    };
    arch.validate()?;
    Ok(arch)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(n) = a.patients {
        cfg.n_patients = n;
    }
    if let Some(w) = a.waveform_signal {
        cfg.waveform_signal = w;
    }
    if let Some(c) = a.clinical_signal {
        cfg.clinical_signal = c;
    }
    let format = match a.format {
        FormatArg::Binary => EcgFileFormat::Binary,
        FormatArg::Csv => EcgFileFormat::Csv,
    };
    let cohort = generate_with_format(&cfg, a.seed, format)?;
    cohort.write_to_dir(&a.out)?;
    let m = &cohort.manifest;
    let deaths = m.outcomes.iter().filter(|o| o.death).count();
    let mace = m.outcomes.iter().filter(|o| o.mace()).count();
    println!(
        "wrote {} patients, {} ECGs, {} procedures ({deaths} deaths, {mace} MACE) to {}",
        m.profiles.len(),
        m.ecgs.len(),
        m.procedures.len(),
        a.out.display()
    );
    Ok(())
}

fn train_setup(o: &TrainOptions) -> Result<(PreparedData, ArchitectureConfig, TrainConfig)> {
    let mut cfg: TrainConfig = match &o.train_config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(t) = o.target {
        cfg.target = t.into();
    }
    if let Some(p) = o.threshold_percentile {
        cfg.threshold_percentile = p;
    }
    if let Some(e) = o.epochs {
        cfg.max_epochs = e;
    }
    if let Some(p) = o.patience {
        cfg.patience = p;
    }
    if let Some(lr) = o.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(b) = o.batch_size {
        cfg.batch_size = b;
    }
    cfg.validate()?;
    let mut arch = load_arch(&o.config)?;
    if o.clinical {
        arch = arch.with_clinical(true);
    }
    let (manifest, store) = load_cohort(&o.manifest)?;
    let data = PreparedData::new(&manifest, &store, cfg.target, &cfg.preprocess)?;
    let (n_train, n_val, ev_train, ev_val) = data.summary();
    log::info!("train {n_train} ECGs ({ev_train} events), validation {n_val} procedures ({ev_val} events)");
    Ok((data, arch, cfg))
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let (data, arch, cfg) = train_setup(&a.opts)?;
    let outcome = train(&data, &arch, &cfg, |_| {})?;
    std::fs::create_dir_all(&a.out)?;
    outcome.weights.save(a.out.join("weights.ponw"))?;
    write_json(&a.out.join("history.json"), &outcome.history)?;
    let m = &outcome.weights.meta;
    println!(
        "best epoch {} of {} (val AUC {:.4}); threshold {:.6} at percentile {}; weights {}",
        m.best_epoch,
        m.epochs_run,
        outcome.best_val_auc(),
        m.threshold,
        m.threshold_percentile,
        outcome.weights.checksum()
    );
    Ok(())
}

pub fn grid_cmd(a: &GridArgs) -> Result<()> {
    let (data, arch, cfg) = train_setup(&a.opts)?;
    let spec = GridSpec { dilations: a.dilations.clone(), strides: a.strides.clone() };
    let (report, weights) = grid_search(&data, &arch, &spec, &cfg, |d, s, r| {
        if r.epoch == 1 {
            log::info!("grid cell dilation {d}, stride {s}");
        }
    })?;
    std::fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("grid.json"), &report)?;
    let mut csv = String::from("dilation,stride,seed,flops,best_val_auc,best_epoch,epochs_run\n");
    for c in &report.cells {
        csv.push_str(&format!(
            "{},{},{},{},{:.6},{},{}\n",
            c.dilation, c.stride, c.seed, c.flops, c.best_val_auc, c.best_epoch, c.epochs_run
        ));
    }
    std::fs::write(a.out.join("grid.csv"), csv)?;
    weights.save(a.out.join("weights.ponw"))?;
    print!("{}", std::fs::read_to_string(a.out.join("grid.csv"))?);
    println!("best: dilation {} stride {}", report.best_dilation, report.best_stride);
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    split: String,
    target: Target,
    threshold: f64,
    model: MetricReport,
    youden: Option<preopnet::stats::YoudenPoint>,
    rcri: MetricReport,
    stumps_rcri: Option<MetricReport>,
    subgroups: Option<preopnet::stats::SubgroupReport>,
}

#[derive(Serialize)]
struct Reclassification {
    old: String,
    new: String,
    n: usize,
    /// Rows: old low / old high; columns: new low / new high.
    cross_tab: [[u64; 2]; 2],
    table: preopnet::stats::ReclassificationTable,
    nri: f64,
    event_nri: f64,
    nonevent_nri: f64,
    ci: Option<preopnet::stats::ConfidenceInterval>,
}

/// Baseline stumps on RCRI variables, age and sex, fitted on the training
/// split and applied to `cohort`.
fn stump_baseline(
    manifest: &DatasetManifest,
    target: Target,
    cohort: &ScoredCohort,
    percentile: f64,
    seed: u64,
    bs: &BootstrapConfig,
) -> Result<MetricReport> {
    let profiles = manifest.profile_index();
    let outcomes = manifest.outcome_index();
    let train: Vec<_> = link_ecgs_to_procedures(manifest, LinkMode::Evaluation)
        .pairs
        .into_iter()
        .filter(|p| manifest.split_of(&p.patient_id) == Some(Split::Train) && outcomes.contains_key(&p.procedure_id))
        .collect();
    let rows = rcri_feature_matrix(&train.iter().map(|p| profiles[&p.patient_id]).collect::<Vec<_>>());
    let labels: Vec<bool> = train.iter().map(|p| outcomes[&p.procedure_id].label(target)).collect();
    let model = StumpEnsemble::fit(&rows, &labels, &StumpConfig { seed, ..Default::default() })?;
    let threshold = threshold_at_percentile(&model.predict(&rows)?, percentile)?;
    let test_rows = rcri_feature_matrix(
        &cohort.entries.iter().map(|e| profiles[&preopnet::waveform::PatientId(e.patient_id.clone())]).collect::<Vec<_>>(),
    );
    let scores = model.predict(&test_rows)?;
    let entries = cohort.entries.iter().zip(scores).map(|(e, score)| ScoredEntry { score, ..e.clone() }).collect();
    Ok(evaluate("stumps_rcri", &ScoredCohort::new(entries)?, threshold, bs)?)
}

pub fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let weights = ModelWeights::load(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    let predictor = weights.predictor();
    let target = a.target.map(Target::from).unwrap_or(weights.meta.target);
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    };
    let (manifest, store) = load_cohort(&a.manifest)?;
    let cohort = score_split(&manifest, &store, &predictor, target, split)?;
    let bs = BootstrapConfig { replicates: a.bootstrap, seed: a.seed, workers: a.workers, ..Default::default() };
    let threshold = predictor.threshold();
    let model = evaluate("preopnet", &cohort, threshold, &bs)?;
    let (scores, labels) = (cohort.scores(), cohort.labels());
    let youden = youden_optimal(&scores, &labels).ok();

    let profiles = manifest.profile_index();
    let rcri: Vec<_> = cohort
        .entries
        .iter()
        .map(|e| {
            let pid = preopnet::waveform::PatientId(e.patient_id.clone());
            profiles.get(&pid).map(|p| rcri_score(p)).with_context(|| format!("no clinical profile for {pid:?}"))
        })
        .collect::<Result<_>>()?;
    let rcri_entries = cohort
        .entries
        .iter()
        .zip(&rcri)
        .map(|(e, r)| ScoredEntry { score: f64::from(r.score), ..e.clone() })
        .collect();
    let rcri_report = evaluate("rcri", &ScoredCohort::new(rcri_entries)?, f64::from(RCRI_HIGH_RISK), &bs)?;
    let stumps = match stump_baseline(&manifest, target, &cohort, weights.meta.threshold_percentile, a.seed, &bs) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("stump baseline skipped: {e:#}");
            None
        }
    };

    let procedures = manifest.procedure_index();
    let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, e) in cohort.entries.iter().enumerate() {
        let proc = procedures[&preopnet::waveform::ProcedureId(e.id.clone())];
        let setting = match proc.setting {
            Setting::OperatingRoom => "setting=operating_room",
            Setting::CathOrEndoscopy => "setting=cath_or_endoscopy",
        };
        groups.entry(setting.into()).or_default().push(i);
        let kind = if proc.cardiac { "procedure=cardiac" } else { "procedure=non_cardiac" };
        groups.entry(kind.into()).or_default().push(i);
    }
    let mut groups: Vec<(String, Vec<usize>)> = groups.into_iter().collect();
    groups.sort();
    let subgroups = subgroup_report(&cohort, &groups, threshold, &bs)
        .map_err(|e| log::warn!("subgroup report skipped: {e}"))
        .ok();

    let old_high: Vec<bool> = rcri.iter().map(|r| r.high_risk).collect();
    let new_high: Vec<bool> = scores.iter().map(|&s| predictor.is_high_risk(s)).collect();
    let patients: Vec<&str> = cohort.entries.iter().map(|e| e.patient_id.as_str()).collect();
    let (table, ci) = match nri_ci(&old_high, &new_high, &labels, &patients, &bs) {
        Ok((t, ci)) => (t, Some(ci)),
        Err(e) => {
            log::warn!("NRI interval skipped: {e}");
            (categorical_nri(&old_high, &new_high, &labels)?, None)
        }
    };
    let mut cross_tab = [[0u64; 2]; 2];
    for (&o, &n) in old_high.iter().zip(&new_high) {
        cross_tab[usize::from(o)][usize::from(n)] += 1;
    }
    let reclass = Reclassification {
        old: format!("rcri >= {RCRI_HIGH_RISK}"),
        new: format!("preopnet >= {threshold}"),
        n: cohort.len(),
        cross_tab,
        table,
        nri: table.nri()?,
        event_nri: table.event_nri()?,
        nonevent_nri: table.nonevent_nri()?,
        ci,
    };

    std::fs::create_dir_all(&a.out)?;
    let mut text = MetricReport::text_header() + "\n";
    for r in [Some(&model), Some(&rcri_report), stumps.as_ref()].into_iter().flatten() {
        text.push_str(&r.row());
        text.push('\n');
        for n in &r.notes {
            text.push_str(&format!("  note: {n}\n"));
        }
    }
    let interval = ci.map_or_else(|| "no interval".to_string(), |c| format!("[{:.4}, {:.4}]", c.lower, c.upper));
    text.push_str(&format!("NRI (old: {}, new: {}) {:.4} {interval}\n", reclass.old, reclass.new, reclass.nri));
    std::fs::write(a.out.join("metrics.txt"), &text)?;
    std::fs::write(a.out.join("roc.csv"), roc_csv(&scores, &labels)?)?;
    write_json(&a.out.join("reclassification.json"), &reclass)?;
    let out = EvalOutput {
        split: format!("{split:?}").to_lowercase(),
        target,
        threshold,
        model,
        youden,
        rcri: rcri_report,
        stumps_rcri: stumps,
        subgroups,
    };
    write_json(&a.out.join("metrics.json"), &out)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct ExplainOutput {
    ecg_id: String,
    base_prediction: f64,
    config: ExplainConfig,
    map: preopnet::explain::ImportanceMap,
    heatmap: preopnet::explain::HeatmapData,
}

pub fn explain_cmd(a: &ExplainArgs) -> Result<()> {
    let weights = ModelWeights::load(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    let predictor = weights.predictor();
    let (ecg, profile) = match (&a.ecg, &a.ecg_id, &a.manifest) {
        (Some(path), _, _) => {
            let ecg = read_ecg_file(path, EcgMeta::anonymous())?;
            let profile = match &a.clinical {
                Some(p) => Some(read_json::<ClinicalInput>(p)?.to_profile()?),
                None => None,
            };
            (ecg, profile)
        }
        (None, Some(id), Some(m)) => {
            let (manifest, store) = load_cohort(m)?;
            let entry = manifest
                .ecgs
                .iter()
                .find(|e| e.ecg_id.as_str() == id)
                .with_context(|| format!("ECG {id} is not in the manifest"))?;
            let profile = manifest.profiles.iter().find(|p| p.patient_id == entry.patient_id).cloned();
            (store.load(entry)?, profile)
        }
        _ => return Err(UsageError("explain needs --ecg FILE or --ecg-id ID with --manifest".into()).into()),
    };
    let cfg = ExplainConfig {
        n_samples: a.n_samples,
        mask_fraction: a.mask_fraction,
        seed: a.seed,
        mask_mode: match a.mask {
            MaskArg::Zero => MaskMode::Zero,
            MaskArg::Noise => MaskMode::Noise,
        },
    };
    let profile = if predictor.uses_clinical() { profile } else { None };
    let map = explain_ecg(&predictor, &ecg, profile.as_ref(), &cfg)?;
    let heatmap = render_heatmap_data(&map)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(a.out.with_extension("csv"), map.to_csv())?;
    let out = ExplainOutput { ecg_id: ecg.meta().ecg_id.to_string(), base_prediction: map.base_prediction, config: cfg, map, heatmap };
    write_json(&a.out, &out)?;
    let top = out.map.cells().max_by(|x, y| x.2.total_cmp(&y.2));
    println!(
        "base prediction {:.4}; {} of {} cells sampled; top cell {:?}",
        out.base_prediction,
        out.map.importance.iter().filter(|v| v.is_some()).count(),
        out.map.importance.len(),
        top
    );
    Ok(())
}

pub fn flops_cmd(a: &FlopsArgs) -> Result<()> {
    let arch = load_arch(&a.config)?;
    let b = flops_breakdown(&arch)?;
    println!("{}", b.total);
    if a.breakdown {
        for e in &b.entries {
            println!("{:<28} {:>12}", e.layer, e.flops);
        }
        println!("deviation from reference {:+.3}%", 100.0 * b.deviation());
    }
    Ok(())
}

pub fn bench_cmd(a: &BenchArgs) -> Result<()> {
    if a.count == 0 {
        return Err(UsageError("--count must be at least 1".into()).into());
    }
    let weights = match &a.weights {
        Some(p) => ModelWeights::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ModelWeights::new(PreOpNet::new(&ArchitectureConfig::canonical(), a.seed)?, TrainingMeta::untrained(a.seed)),
    };
    let files = synthetic_ecg_files(a.count, a.seed)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let reports = pool.install(|| run_bench(&weights.predictor(), &files, a.repetitions))?;
    for r in &reports {
        println!(
            "repetition {}: {} ECGs, {:.2} ± {:.2} ms/ECG (budget {:.0} ms)",
            r.repetition,
            r.count,
            r.mean_ms,
            r.std_ms,
            LATENCY_BUDGET_S * 1000.0
        );
    }
    if let Some(out) = &a.out {
        write_json(out, &reports)?;
    }
    Ok(())
}

pub fn serve_cmd(a: &ServeArgs) -> Result<()> {
    let weights = ModelWeights::load(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    let state = AppState::new(&weights, a.explain_workers)?;
    let ui = Some(a.ui_dir.clone().unwrap_or_else(service::default_ui_dir));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(state, &a.host, a.port, ui))
}
