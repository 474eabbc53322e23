//! End-to-end experiment: split, synthesize near-duplicates, embed, index,
//! calibrate on set 1, evaluate on set 2, report.

pub mod config;
pub mod report;
pub mod synth;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use log::info;
use rayon::prelude::*;

use crate::calibration::{auc, roc_curve, select_optimal_threshold, youden_threshold, CalibrationResult};
use crate::embed::{embed_volume, ToyEmbedderConfig};
use crate::error::{Error, Result};
use crate::evaluation::{split_buckets, stage2_confusion, to_scored_set, CaseOrder, LabelledQuery};
use crate::index::Index;
use crate::io::{read_embedding_file, read_volume_file, Bucket, BucketRole, Manifest, ManifestEntry};
use crate::model::{CaseId, EmbeddingSet, QueryLabel, TransformTag, Volume};
use crate::retrieval::{case_histogram, score_query, scores_from_histogram, QueryScore};
use crate::transforms::{apply, TransformSpec};

pub use config::{CalibrationRule, DataSource, EmbedderSpec, ExperimentConfig, ScanConfig};
pub use report::{
    BenchmarkReport, CalibrationSetResult, DuplicatePair, EvaluationSetResult, PhaseTiming, QuerySetSize,
    RunResult, ScanReport, SetSummary, Summary, ThresholdSource, REPORT_SCHEMA_VERSION,
};
pub use synth::{generate_cases, generate_synthetic_dataset};

pub const DUPLICATE_SET: &str = "duplicate";

/// One query set: the duplicates, or the near-duplicates of one transform.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub name: String,
    pub tag: Option<TransformTag>,
    pub queries: Vec<LabelledQuery>,
}

/// Embedded buckets of one set (A, B per transform, C).
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSet {
    pub set: u8,
    pub database: Vec<EmbeddingSet>,
    /// The duplicate group first, then one group per transform.
    pub groups: Vec<QueryGroup>,
    pub non_duplicates: Vec<LabelledQuery>,
}

impl PreparedSet {
    pub fn summary(&self) -> SetSummary {
        SetSummary {
            set: self.set,
            database_cases: self.database.len(),
            database_slices: self.database.iter().map(EmbeddingSet::slice_count).sum(),
            non_duplicate_cases: self.non_duplicates.len(),
            query_sets: self
                .groups
                .iter()
                .map(|g| QuerySetSize {
                    name: g.name.clone(),
                    queries: g.queries.len(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    /// Set 1 (calibration) then set 2 (evaluation).
    pub sets: Vec<PreparedSet>,
}

impl PreparedData {
    pub fn calibration(&self) -> &PreparedSet {
        &self.sets[0]
    }

    pub fn evaluation(&self) -> &PreparedSet {
        &self.sets[1]
    }

    /// Every original case (A and C of both sets), for scanning.
    pub fn all_cases(&self) -> Vec<EmbeddingSet> {
        self.sets
            .iter()
            .flat_map(|s| {
                s.database
                    .iter()
                    .cloned()
                    .chain(s.non_duplicates.iter().map(|q| q.embeddings.clone()))
            })
            .collect()
    }
}

struct Phases {
    enabled: bool,
    list: Vec<PhaseTiming>,
}

impl Phases {
    fn time<T>(&mut self, phase: impl Into<String>, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let phase = phase.into();
        let start = Instant::now();
        let out = f()?;
        let seconds = start.elapsed().as_secs_f64();
        info!("{phase}: {seconds:.3} s");
        if self.enabled {
            self.list.push(PhaseTiming { phase, seconds });
        }
        Ok(out)
    }
}

fn embed_all(volumes: &[Volume], cfg: &ToyEmbedderConfig) -> Result<Vec<EmbeddingSet>> {
    volumes.par_iter().map(|v| embed_volume(v, cfg)).collect()
}

/// Case id of a transformed copy, e.g. `task01_003@crop:0.05`.
pub fn near_case_id(case: &CaseId, tag: &TransformTag) -> Result<CaseId> {
    CaseId::new(format!("{case}@{tag}"))
}

/// Seed of one transformed copy: distinct per case, fixed per spec.
fn per_case_spec(spec: &TransformSpec, case: &CaseId) -> TransformSpec {
    spec.with_seed(synth::mix(spec.seed ^ synth::fnv1a(case.as_str())))
}

/// Transformed copies of `database` under `spec`, renamed with
/// [`near_case_id`]. Output order follows input order.
pub fn near_duplicate_volumes(database: &[Volume], spec: &TransformSpec) -> Result<Vec<Volume>> {
    let tag = spec.tag();
    database
        .par_iter()
        .map(|v| {
            let t = apply(&per_case_spec(spec, v.case_id()), v)?;
            Ok(t.volume.with_case_id(near_case_id(v.case_id(), &tag)?))
        })
        .collect()
}

/// Transformed copies of the database volumes, one group per spec.
pub fn synthesize_near_duplicates(
    database: &[Volume],
    transforms: &[TransformSpec],
    embedder: &ToyEmbedderConfig,
) -> Result<Vec<QueryGroup>> {
    transforms
        .iter()
        .map(|spec| {
            let tag = spec.tag();
            let copies = near_duplicate_volumes(database, spec)?;
            let queries = database
                .par_iter()
                .zip(&copies)
                .map(|(v, copy)| {
                    Ok(LabelledQuery {
                        embeddings: embed_volume(copy, embedder)?,
                        label: QueryLabel::near_duplicate(v.case_id().clone(), tag),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(QueryGroup {
                name: tag.to_string(),
                tag: Some(tag),
                queries,
            })
        })
        .collect()
}

fn duplicate_group(database: &[EmbeddingSet]) -> QueryGroup {
    QueryGroup {
        name: DUPLICATE_SET.into(),
        tag: None,
        queries: database
            .iter()
            .map(|e| LabelledQuery {
                embeddings: e.clone(),
                label: QueryLabel::duplicate(e.case_id.clone()),
            })
            .collect(),
    }
}

fn non_duplicate_queries(sets: Vec<EmbeddingSet>) -> Vec<LabelledQuery> {
    sets.into_iter()
        .map(|embeddings| LabelledQuery {
            embeddings,
            label: QueryLabel::non_duplicate(),
        })
        .collect()
}

/// Builds one set from A and C volumes, synthesizing B with `transforms`.
pub fn prepare_set_from_volumes(
    set: u8,
    database: &[Volume],
    non_duplicates: &[Volume],
    transforms: &[TransformSpec],
    embedder: &ToyEmbedderConfig,
) -> Result<PreparedSet> {
    if database.is_empty() || non_duplicates.is_empty() {
        return Err(Error::Data(format!("set {set} needs database and non-duplicate cases")));
    }
    let db = embed_all(database, embedder)?;
    let mut groups = vec![duplicate_group(&db)];
    groups.extend(synthesize_near_duplicates(database, transforms, embedder)?);
    Ok(PreparedSet {
        set,
        database: db,
        groups,
        non_duplicates: non_duplicate_queries(embed_all(non_duplicates, embedder)?),
    })
}

/// Synthetic cases spread over `tasks`; per task the first half of the cases
/// goes to set 1 and the rest to set 2, and each set is split into A and C.
pub fn synthetic_manifest(cases: usize, tasks: usize, shape: [usize; 3], seed: u64) -> Result<(Manifest, Vec<Volume>)> {
    let shape = (shape[0], shape[1], shape[2]);
    let mut volumes = Vec::with_capacity(cases);
    let mut entries = Vec::with_capacity(cases);
    for t in 0..tasks {
        let n = cases / tasks + usize::from(t < cases % tasks);
        let task = format!("task{:02}", t + 1);
        let vols = generate_cases(&task, n, shape, synth::mix(seed ^ t as u64))?;
        for (i, v) in vols.into_iter().enumerate() {
            let set = if i < n / 2 { 1 } else { 2 };
            entries.push(ManifestEntry {
                case_id: v.case_id().clone(),
                file_path: format!("{}.mvol", v.case_id()).into(),
                bucket: if set == 1 { Bucket::Db1A } else { Bucket::Db2A },
                label: None,
                task: task.clone(),
            });
            volumes.push(v);
        }
    }
    let mut manifest = Manifest { entries: Vec::new() };
    for set in [1u8, 2] {
        let part = Manifest {
            entries: entries
                .iter()
                .filter(|e| e.bucket.set() == Some(set))
                .cloned()
                .collect(),
        };
        let split = split_buckets(&part, CaseOrder::Manifest)?;
        manifest.entries.extend(split.apply(&part, set).entries);
    }
    Ok((manifest, volumes))
}

fn pick<'a>(manifest: &Manifest, volumes: &'a [Volume], bucket: Bucket) -> Vec<&'a Volume> {
    let by_id: BTreeMap<&CaseId, &Volume> = volumes.iter().map(|v| (v.case_id(), v)).collect();
    manifest
        .in_bucket(bucket)
        .filter_map(|e| by_id.get(&e.case_id).copied())
        .collect()
}

fn prepare_synthetic(cfg: &ExperimentConfig, cases: usize, tasks: usize, shape: [usize; 3]) -> Result<PreparedData> {
    let EmbedderSpec::Toy(embedder) = cfg.embedder else {
        return Err(Error::Config("synthetic data requires the toy embedder".into()));
    };
    let (manifest, volumes) = synthetic_manifest(cases, tasks, shape, cfg.seed)?;
    let transforms = cfg.transforms();
    let sets = [1u8, 2]
        .into_iter()
        .map(|set| {
            let a: Vec<Volume> = pick(&manifest, &volumes, Bucket::for_set(set, BucketRole::Database))
                .into_iter()
                .cloned()
                .collect();
            let c: Vec<Volume> = pick(&manifest, &volumes, Bucket::for_set(set, BucketRole::NonDuplicate))
                .into_iter()
                .cloned()
                .collect();
            prepare_set_from_volumes(set, &a, &c, &transforms, &embedder)
        })
        .collect::<Result<_>>()?;
    Ok(PreparedData { sets })
}

/// Loads the embeddings behind manifest entries: `.medb` files directly, or
/// volumes through the toy embedder.
fn load_entries(root: &Path, entries: &[&ManifestEntry], embedder: &EmbedderSpec) -> Result<Vec<EmbeddingSet>> {
    entries
        .par_iter()
        .map(|e| {
            let path = root.join(&e.file_path);
            let es = match embedder {
                EmbedderSpec::External => read_embedding_file(&path)?,
                EmbedderSpec::Toy(c) => embed_volume(&read_volume_file(&path)?, c)?,
            };
            if es.case_id != e.case_id {
                return Err(Error::Data(format!(
                    "{} holds case {}, manifest says {}",
                    path.display(),
                    es.case_id,
                    e.case_id
                )));
            }
            Ok(es)
        })
        .collect()
}

fn prepare_directory(cfg: &ExperimentConfig, root: &Path, manifest_path: &Path) -> Result<PreparedData> {
    let manifest = crate::io::load_manifest(root.join(manifest_path))?;
    manifest.check_paths(root)?;
    let skipped = manifest.in_bucket(Bucket::Unassigned).count();
    if skipped > 0 {
        log::warn!("ignoring {skipped} manifest entries without a bucket");
    }
    let transforms = cfg.transforms();
    let mut sets = Vec::new();
    for set in [1u8, 2] {
        let a: Vec<&ManifestEntry> = manifest.in_bucket(Bucket::for_set(set, BucketRole::Database)).collect();
        let b: Vec<&ManifestEntry> = manifest.in_bucket(Bucket::for_set(set, BucketRole::NearDuplicate)).collect();
        let c: Vec<&ManifestEntry> = manifest.in_bucket(Bucket::for_set(set, BucketRole::NonDuplicate)).collect();
        if a.is_empty() || c.is_empty() {
            return Err(Error::Data(format!(
                "manifest has no database or non-duplicate entries for set {set}"
            )));
        }
        let database = load_entries(root, &a, &cfg.embedder)?;
        let mut groups = vec![duplicate_group(&database)];
        if !b.is_empty() {
            let embedded = load_entries(root, &b, &cfg.embedder)?;
            let mut by_tag: Vec<QueryGroup> = Vec::new();
            for (e, emb) in b.iter().zip(embedded) {
                let label = e
                    .label
                    .clone()
                    .filter(|l| l.is_positive())
                    .ok_or_else(|| Error::MissingGroundTruth(e.case_id.to_string()))?;
                let tag = label.transform_tag();
                let name = tag.map_or_else(|| "near_duplicate".to_string(), |t| t.to_string());
                let q = LabelledQuery { embeddings: emb, label };
                match by_tag.iter_mut().find(|g| g.name == name) {
                    Some(g) => g.queries.push(q),
                    None => by_tag.push(QueryGroup {
                        name,
                        tag,
                        queries: vec![q],
                    }),
                }
            }
            groups.extend(by_tag);
        } else if let EmbedderSpec::Toy(emb) = &cfg.embedder {
            let vols = a
                .iter()
                .map(|e| read_volume_file(root.join(&e.file_path)))
                .collect::<Result<Vec<_>>>()?;
            groups.extend(synthesize_near_duplicates(&vols, &transforms, emb)?);
        } else {
            log::warn!("set {set}: no near-duplicate entries; evaluating duplicates only");
        }
        let nd = load_entries(root, &c, &cfg.embedder)?;
        sets.push(PreparedSet {
            set,
            database,
            groups,
            non_duplicates: non_duplicate_queries(nd),
        });
    }
    Ok(PreparedData { sets })
}

/// Loads or generates both sets, embedded and grouped.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate()?;
    match &cfg.data {
        DataSource::Synthetic { cases, tasks, shape } => prepare_synthetic(cfg, *cases, *tasks, *shape),
        DataSource::Directory { data_root, manifest } => prepare_directory(cfg, data_root, manifest),
    }
}

/// Scores of one set at one `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KScores {
    pub k: usize,
    /// Parallel to `PreparedSet::groups`.
    pub groups: Vec<Vec<QueryScore>>,
    pub non_duplicates: Vec<QueryScore>,
}

fn score_list(queries: &[LabelledQuery], index: &Index, ks: &[usize]) -> Result<Vec<Vec<QueryScore>>> {
    let per_query: Vec<Vec<QueryScore>> = queries
        .par_iter()
        .map(|q| {
            let h = case_histogram(&q.embeddings, index, false)?;
            scores_from_histogram(&q.embeddings.case_id, &h, ks, &q.label)
        })
        .collect::<Result<_>>()?;
    // c(k) can only grow with k.
    let mut order: Vec<usize> = (0..ks.len()).collect();
    order.sort_by_key(|&i| ks[i]);
    for scores in &per_query {
        for w in order.windows(2) {
            let (lo, hi) = (&scores[w[0]], &scores[w[1]]);
            if hi.c_k < lo.c_k {
                return Err(Error::Invariant(format!(
                    "c({}) = {} < c({}) = {} for query {}",
                    hi.k, hi.c_k, lo.k, lo.c_k, lo.query_case
                )));
            }
        }
    }
    Ok((0..ks.len())
        .map(|j| per_query.iter().map(|s| s[j].clone()).collect())
        .collect())
}

/// Scores every query of `set` against `index` for each `k`.
pub fn score_set(set: &PreparedSet, index: &Index, ks: &[usize]) -> Result<Vec<KScores>> {
    let groups = set
        .groups
        .iter()
        .map(|g| score_list(&g.queries, index, ks))
        .collect::<Result<Vec<_>>>()?;
    let mut nd = score_list(&set.non_duplicates, index, ks)?;
    Ok(ks
        .iter()
        .enumerate()
        .map(|(j, &k)| KScores {
            k,
            groups: groups.iter().map(|g| g[j].clone()).collect(),
            non_duplicates: std::mem::take(&mut nd[j]),
        })
        .collect())
}

fn is_selected(rule: &CalibrationRule, groups: &[QueryGroup], g: &QueryGroup) -> bool {
    match rule {
        CalibrationRule::All => true,
        CalibrationRule::Sets(names) => names.contains(&g.name),
        CalibrationRule::Mildest => match g.tag {
            None => true,
            Some(tag) => {
                let sev = |t: &TransformTag| config::severity(&TransformSpec::new(t.kind, t.strength));
                groups
                    .iter()
                    .filter_map(|o| o.tag)
                    .filter(|o| o.kind == tag.kind)
                    .all(|o| sev(&o) >= sev(&tag))
            }
        },
    }
}

/// Per-set ROC summaries on set 1 and, unless `rule` is `None`, the
/// Algorithm-1 threshold over the selected sets.
pub fn calibrate(
    set: &PreparedSet,
    scores: &KScores,
    rule: Option<&CalibrationRule>,
) -> Result<(Vec<CalibrationSetResult>, Option<CalibrationResult>)> {
    let mut results = Vec::new();
    let mut selected = Vec::new();
    for (g, s) in set.groups.iter().zip(&scores.groups) {
        let mut all = s.clone();
        all.extend(scores.non_duplicates.iter().cloned());
        let scored = to_scored_set(&g.name, &all);
        let roc = roc_curve(&scored)?;
        let chosen = rule.is_some_and(|r| is_selected(r, &set.groups, g));
        if chosen {
            selected.push(scored);
        }
        results.push(CalibrationSetResult {
            name: g.name.clone(),
            tag: g.tag,
            auc: auc(&roc),
            youden: youden_threshold(&roc),
            selected: chosen,
        });
    }
    let calibration = match rule {
        None => None,
        Some(_) if selected.is_empty() => {
            return Err(Error::Config("calibration rule selects no query set".into()));
        }
        Some(_) => Some(select_optimal_threshold(&selected)?),
    };
    Ok((results, calibration))
}

/// Stage-1/stage-2 metrics of every query set (against the non-duplicates)
/// at threshold `t`.
pub fn evaluate(set: &PreparedSet, scores: &KScores, t: f64) -> Result<Vec<EvaluationSetResult>> {
    set.groups
        .iter()
        .zip(&scores.groups)
        .map(|(g, s)| {
            let mut all = s.clone();
            all.extend(scores.non_duplicates.iter().cloned());
            Ok(EvaluationSetResult {
                tag: g.tag,
                metrics: stage2_confusion(&g.name, &all, t)?,
            })
        })
        .collect()
}

/// Every case queried against all others (self excluded); pairs whose
/// score reaches `t` are listed once as (smaller id, larger id).
pub fn scan_for_duplicates(
    db: &[EmbeddingSet],
    backend: crate::index::Backend,
    k: usize,
    t: f64,
) -> Result<Vec<DuplicatePair>> {
    let index = Index::from_sets(db, backend)?;
    scan_with_index(db, &index, k, t)
}

pub fn scan_with_index(db: &[EmbeddingSet], index: &Index, k: usize, t: f64) -> Result<Vec<DuplicatePair>> {
    let scores: Vec<QueryScore> = db
        .par_iter()
        .map(|q| score_query(q, index, k, QueryLabel::non_duplicate(), true))
        .collect::<Result<_>>()?;
    let mut pairs: BTreeMap<(CaseId, CaseId), f64> = BTreeMap::new();
    for s in scores {
        let Some(top) = s.top1_case else { continue };
        if !crate::calibration::predicts_duplicate(s.c_k, t) {
            continue;
        }
        let key = if s.query_case < top {
            (s.query_case, top)
        } else {
            (top, s.query_case)
        };
        let c = pairs.entry(key).or_insert(s.c_k);
        *c = c.max(s.c_k);
    }
    Ok(pairs
        .into_iter()
        .map(|((a, b), c_k)| DuplicatePair {
            query_case: a,
            matched_case: b,
            c_k,
        })
        .collect())
}

/// Runs the full protocol on already prepared data. `set2_indices`, when
/// given, replaces the freshly built evaluation index per backend.
pub fn run_prepared(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    set2_indices: Option<&[Index]>,
) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let mut phases = Phases {
        enabled: cfg.include_timings,
        list: Vec::new(),
    };
    let mut runs = Vec::new();
    for (bi, backend) in cfg.backends.iter().enumerate() {
        let name = backend.name();
        let cal_index = phases.time(format!("index {name} set 1"), || {
            Index::from_sets(&data.calibration().database, *backend)
        })?;
        let built;
        let eval_index = match set2_indices {
            Some(list) => list.get(bi).ok_or_else(|| Error::Config("missing evaluation index".into()))?,
            None => {
                built = phases.time(format!("index {name} set 2"), || {
                    Index::from_sets(&data.evaluation().database, *backend)
                })?;
                &built
            }
        };
        let cal_scores = phases.time(format!("score {name} set 1"), || {
            score_set(data.calibration(), &cal_index, &cfg.k_values)
        })?;
        let eval_scores = phases.time(format!("score {name} set 2"), || {
            score_set(data.evaluation(), eval_index, &cfg.k_values)
        })?;
        for (cs, es) in cal_scores.iter().zip(&eval_scores) {
            let rule = cfg.threshold_override.is_none().then_some(&cfg.calibration);
            let (calibration_sets, calibration) = calibrate(data.calibration(), cs, rule)?;
            let (threshold, threshold_source) = match (&calibration, cfg.threshold_override) {
                (_, Some(t)) => (t, ThresholdSource::Override),
                (Some(c), None) => (c.t_opt, ThresholdSource::Calibrated),
                (None, None) => unreachable!("calibration runs without an override"),
            };
            let evaluation = evaluate(data.evaluation(), es, threshold)?;
            runs.push(RunResult {
                backend: *backend,
                k: cs.k,
                calibration_sets,
                calibration,
                threshold,
                threshold_source,
                summary: Summary::of(&evaluation),
                evaluation,
            });
        }
    }
    let scan = match &cfg.scan {
        None => None,
        Some(s) => {
            let db = data.all_cases();
            let pairs = phases.time("scan", || scan_for_duplicates(&db, s.backend, s.k, s.threshold))?;
            Some(ScanReport {
                backend: s.backend,
                k: s.k,
                threshold: s.threshold,
                cases: db.len(),
                pairs,
            })
        }
    };
    Ok(BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg.clone(),
        dataset: data.sets.iter().map(PreparedSet::summary).collect(),
        runs,
        scan,
        timings: cfg.include_timings.then_some(phases.list),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    let start = Instant::now();
    let data = prepare_data(cfg)?;
    info!("prepared data in {:.3} s", start.elapsed().as_secs_f64());
    run_prepared(cfg, &data, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::Backend;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic {
                cases: 16,
                tasks: 2,
                shape: [6, 24, 24],
            },
            transforms: Some(vec![
                TransformSpec::new(crate::model::TransformKind::Crop, 0.05),
                TransformSpec::new(crate::model::TransformKind::Crop, 0.2),
            ]),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn synthetic_manifest_split() {
        let (m, vols) = synthetic_manifest(20, 2, [3, 8, 8], 0).unwrap();
        assert_eq!(vols.len(), 20);
        // 10 per task, 5 per set, 2 in A and 3 in C.
        assert_eq!(m.in_bucket(Bucket::Db1A).count(), 4);
        assert_eq!(m.in_bucket(Bucket::NonDup1C).count(), 6);
        assert_eq!(m.in_bucket(Bucket::Db2A).count(), 4);
        assert_eq!(m.in_bucket(Bucket::NonDup2C).count(), 6);
    }

    #[test]
    fn mildest_rule_picks_lowest_strength() {
        let data = prepare_data(&small_cfg()).unwrap();
        let set = data.calibration();
        let idx = Index::from_sets(&set.database, Backend::Exact).unwrap();
        let scores = score_set(set, &idx, &[1]).unwrap();
        let (res, cal) = calibrate(set, &scores[0], Some(&CalibrationRule::Mildest)).unwrap();
        let picked: Vec<&str> = res.iter().filter(|r| r.selected).map(|r| r.name.as_str()).collect();
        assert_eq!(picked, vec!["duplicate", "crop:0.05"]);
        assert_eq!(cal.unwrap().set_names, vec!["duplicate", "crop:0.05"]);
    }

    #[test]
    fn override_skips_calibration() {
        let cfg = ExperimentConfig {
            threshold_override: Some(0.7711),
            ..small_cfg()
        };
        let report = run_experiment(&cfg).unwrap();
        for run in &report.runs {
            assert!(run.calibration.is_none());
            assert_eq!(run.threshold, 0.7711);
            assert_eq!(run.threshold_source, ThresholdSource::Override);
        }
    }

    #[test]
    fn duplicates_score_one() {
        let report = run_experiment(&small_cfg()).unwrap();
        assert_eq!(report.runs.len(), 2);
        // With four database cases c(3) barely discriminates; check k = 1.
        for run in report.runs.iter().filter(|r| r.k == 1) {
            let dup = &run.evaluation[0].metrics;
            assert_eq!(dup.name, DUPLICATE_SET);
            assert_eq!(dup.stage2.sensitivity, 1.0);
            assert_eq!(run.calibration_sets[0].auc, 1.0);
        }
    }

    fn set_of(case: &str, vectors: Vec<Vec<f32>>) -> EmbeddingSet {
        let dim = vectors[0].len();
        EmbeddingSet::new(CaseId::new(case).unwrap(), dim, vectors).unwrap()
    }

    #[test]
    fn scan_reports_copy_once() {
        let x: Vec<Vec<f32>> = (0..4).map(|i| vec![i as f32, 0.0]).collect();
        let db = vec![set_of("Y", x.clone()), set_of("X", x)];
        let pairs = scan_for_duplicates(&db, Backend::Exact, 1, 0.8).unwrap();
        assert_eq!(
            pairs,
            vec![DuplicatePair {
                query_case: CaseId::new("X").unwrap(),
                matched_case: CaseId::new("Y").unwrap(),
                c_k: 1.0,
            }]
        );
    }

    #[test]
    fn scan_of_spread_votes_is_empty() {
        // Slice j of case i sits at 10·e_i + 3·e_t with t = (i + j + 1) mod n;
        // its nearest foreign slice is the mirror 10·e_t + 3·e_i, so every
        // case spreads its votes evenly over all other cases.
        let n = 5;
        let db: Vec<EmbeddingSet> = (0..n)
            .map(|i| {
                let slices = (0..n - 1)
                    .map(|j| {
                        let mut v = vec![0.0f32; n];
                        v[i] = 10.0;
                        v[(i + j + 1) % n] = 3.0;
                        v
                    })
                    .collect();
                set_of(&format!("c{i}"), slices)
            })
            .collect();
        assert!(scan_for_duplicates(&db, Backend::Exact, 1, 0.8).unwrap().is_empty());
        // At c = 1/4 every case qualifies; its tied top-1 is the smallest id.
        let all = scan_for_duplicates(&db, Backend::Exact, 1, 0.25).unwrap();
        let got: Vec<(&str, &str)> = all
            .iter()
            .map(|p| (p.query_case.as_str(), p.matched_case.as_str()))
            .collect();
        assert_eq!(got, vec![("c0", "c1"), ("c0", "c2"), ("c0", "c3"), ("c0", "c4")]);
    }
}
