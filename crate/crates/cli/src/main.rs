//! `voldup`: synthesize, embed, index, calibrate, evaluate and scan.
//!
//! Exit status is 0 on success, 1 for configuration or usage errors and 2
//! for data errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use voldup_core::benchmark::{
    calibrate, evaluate, near_duplicate_volumes, prepare_data, run_prepared, scan_with_index, score_set,
    synthetic_manifest, EmbedderSpec, ExperimentConfig, Summary,
};
use voldup_core::embed::{embed_volume, ToyEmbedderConfig};
use voldup_core::io::{
    load_manifest, read_embedding_file, read_volume_file, save_manifest, write_embedding_file, write_volume_file,
    Bucket, BucketRole, Manifest, ManifestEntry,
};
use voldup_core::transforms::{apply, TransformSpec};
use voldup_core::{Backend, EmbeddingSet, Error, Index, QueryLabel, Result, TransformKind};

#[derive(Parser)]
#[command(name = "voldup", version, about = "Duplicate and near-duplicate detection for 3D volumes")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic volumes or transform a single volume.
    #[command(subcommand)]
    Synthesize(Synthesize),
    /// Embed a volume (.mvol) or every volume of a manifest with the toy embedder.
    Embed(EmbedArgs),
    /// Build an index over one set's database bucket and save a snapshot.
    Index(IndexArgs),
    /// Select the threshold on set 1.
    Calibrate(Common),
    /// Evaluate set 2 at a fixed threshold.
    Evaluate(EvaluateArgs),
    /// Full experiment: calibrate on set 1, evaluate on set 2, write the report.
    Run(Common),
    /// Query every case against all others and list candidate duplicate pairs.
    Scan(ScanArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// exact, lsh or hnsw (default parameters, seeded with --seed).
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Synthesize {
    /// Write seeded blob volumes plus a bucketed manifest.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        cases: usize,
        #[arg(long, default_value_t = 2)]
        tasks: usize,
        /// n_z,n_y,n_x
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [32, 40, 40])]
        shape: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write near-duplicate copies of the database volumes for
        /// every transform of the default grid.
        #[arg(long)]
        near: bool,
    },
    /// Apply one transform to one volume.
    Transform {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        strength: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EmbedArgs {
    /// A `.mvol` volume or a manifest `.csv`.
    #[arg(long)]
    input: PathBuf,
    /// Output `.medb` file, or output directory for a manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    target_side: usize,
    #[arg(long, default_value_t = 224)]
    preprocess_side: usize,
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    common: Common,
    /// Which set's database bucket to index.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    set: u8,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Index snapshots to evaluate against instead of building fresh ones.
    #[arg(long = "index")]
    indices: Vec<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    /// Scan the cases of this manifest instead of the configured dataset.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(b) = &c.backend {
        cfg.backends = vec![Backend::from_name(b, cfg.seed)?];
    }
    if let Some(k) = c.k {
        cfg.k_values = vec![k];
    }
    if let Some(t) = c.threshold {
        cfg.threshold_override = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    emit(out, &s)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn synthesize(cmd: Synthesize) -> Result<()> {
    match cmd {
        Synthesize::Generate {
            out,
            cases,
            tasks,
            shape,
            seed,
            near,
        } => {
            if tasks == 0 || cases < 4 * tasks {
                return Err(Error::Config(format!("need at least 4 cases per task, got {cases} for {tasks}")));
            }
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            let (mut manifest, volumes) = synthetic_manifest(cases, tasks, [shape[0], shape[1], shape[2]], seed)?;
            for v in &volumes {
                let e = manifest
                    .entries
                    .iter()
                    .find(|e| &e.case_id == v.case_id())
                    .ok_or_else(|| Error::Invariant(format!("case {} missing from manifest", v.case_id())))?;
                write_volume_file(v, out.join(&e.file_path))?;
            }
            if near {
                let near_dir = out.join("near");
                fs::create_dir_all(&near_dir).map_err(|e| io_err(&near_dir, e))?;
                let mut extra = Vec::new();
                for set in [1u8, 2] {
                    let db_entries: Vec<&ManifestEntry> =
                        manifest.in_bucket(Bucket::for_set(set, BucketRole::Database)).collect();
                    let db: Vec<_> = db_entries
                        .iter()
                        .map(|e| read_volume_file(out.join(&e.file_path)))
                        .collect::<Result<_>>()?;
                    for spec in TransformSpec::default_grid(seed) {
                        let tag = spec.tag();
                        for (src, copy) in db_entries.iter().zip(near_duplicate_volumes(&db, &spec)?) {
                            let file = PathBuf::from("near").join(format!(
                                "{}__{}_{}.mvol",
                                src.case_id,
                                tag.kind,
                                tag.strength
                            ));
                            write_volume_file(&copy, out.join(&file))?;
                            extra.push(ManifestEntry {
                                case_id: copy.case_id().clone(),
                                file_path: file,
                                bucket: Bucket::for_set(set, BucketRole::NearDuplicate),
                                label: Some(QueryLabel::near_duplicate(src.case_id.clone(), tag)),
                                task: src.task.clone(),
                            });
                        }
                    }
                }
                manifest.entries.extend(extra);
            }
            save_manifest(&manifest, out.join("manifest.csv"))?;
            info!("wrote {} manifest entries to {}", manifest.entries.len(), out.display());
            Ok(())
        }
        Synthesize::Transform {
            input,
            kind,
            strength,
            seed,
            out,
        } => {
            let kind: TransformKind = kind.parse()?;
            let spec = TransformSpec::new(kind, strength).with_seed(seed);
            let v = read_volume_file(&input)?;
            let t = apply(&spec, &v)?;
            write_volume_file(&t.volume, &out)
        }
    }
}

fn embed_cmd(a: EmbedArgs) -> Result<()> {
    let cfg = ToyEmbedderConfig {
        target_side: a.target_side,
        preprocess_side: a.preprocess_side,
    };
    cfg.validate()?;
    if a.input.extension().is_some_and(|e| e == "csv") {
        let root = a.input.parent().unwrap_or(Path::new("")).to_path_buf();
        let mut manifest = load_manifest(&a.input)?;
        manifest.check_paths(&root)?;
        fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
        for e in &mut manifest.entries {
            let es = embed_volume(&read_volume_file(root.join(&e.file_path))?, &cfg)?;
            let rel = e.file_path.with_extension("medb");
            if let Some(dir) = a.out.join(&rel).parent() {
                fs::create_dir_all(dir).map_err(|err| io_err(dir, err))?;
            }
            write_embedding_file(&es, a.out.join(&rel))?;
            e.file_path = rel;
        }
        save_manifest(&manifest, a.out.join("manifest.csv"))
    } else {
        let es = embed_volume(&read_volume_file(&a.input)?, &cfg)?;
        write_embedding_file(&es, &a.out)
    }
}

fn index_cmd(a: IndexArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let out = a
        .common
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("index needs --out <snapshot path>".into()))?;
    if cfg.backends.len() != 1 {
        return Err(Error::Config("index builds one backend; pass --backend".into()));
    }
    let data = prepare_data(&cfg)?;
    let set = &data.sets[usize::from(a.set) - 1];
    let index = Index::from_sets(&set.database, cfg.backends[0])?;
    index.save(out)?;
    info!("indexed {} slices of set {} into {}", index.len(), a.set, out.display());
    Ok(())
}

fn calibrate_cmd(c: Common) -> Result<()> {
    let cfg = load_config(&c)?;
    let data = prepare_data(&cfg)?;
    let set = data.calibration();
    let mut out = Vec::new();
    for backend in &cfg.backends {
        let index = Index::from_sets(&set.database, *backend)?;
        for ks in score_set(set, &index, &cfg.k_values)? {
            let (sets, cal) = calibrate(set, &ks, Some(&cfg.calibration))?;
            out.push(json!({
                "backend": backend,
                "k": ks.k,
                "calibration_sets": sets,
                "calibration": cal,
            }));
        }
    }
    emit_json(c.out.as_deref(), &Value::Array(out))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let t = cfg
        .threshold_override
        .ok_or_else(|| Error::Config("evaluate needs --threshold or threshold_override".into()))?;
    let data = prepare_data(&cfg)?;
    let set = data.evaluation();
    let indices: Vec<Index> = if a.indices.is_empty() {
        cfg.backends
            .iter()
            .map(|b| Index::from_sets(&set.database, *b))
            .collect::<Result<_>>()?
    } else {
        a.indices.iter().map(Index::load).collect::<Result<_>>()?
    };
    let mut out = Vec::new();
    for index in &indices {
        for ks in score_set(set, index, &cfg.k_values)? {
            let evaluation = evaluate(set, &ks, t)?;
            out.push(json!({
                "backend": index.backend(),
                "k": ks.k,
                "threshold": t,
                "summary": Summary::of(&evaluation),
                "evaluation": evaluation,
            }));
        }
    }
    emit_json(a.common.out.as_deref(), &Value::Array(out))
}

fn run_cmd(c: Common) -> Result<()> {
    let cfg = load_config(&c)?;
    let data = prepare_data(&cfg)?;
    let report = run_prepared(&cfg, &data, None)?;
    emit(c.out.as_deref(), &report.to_json()?)
}

fn manifest_cases(path: &Path, cfg: &ExperimentConfig) -> Result<Vec<EmbeddingSet>> {
    let root = path.parent().unwrap_or(Path::new(""));
    let manifest: Manifest = load_manifest(path)?;
    manifest.check_paths(root)?;
    manifest
        .entries
        .iter()
        .filter(|e| e.bucket.role() != Some(BucketRole::NearDuplicate))
        .map(|e| {
            let p = root.join(&e.file_path);
            if p.extension().is_some_and(|x| x == "medb") {
                return read_embedding_file(&p);
            }
            let toy = match cfg.embedder {
                EmbedderSpec::Toy(t) => t,
                EmbedderSpec::External => ToyEmbedderConfig::default(),
            };
            embed_volume(&read_volume_file(&p)?, &toy)
        })
        .collect()
}

fn scan_cmd(a: ScanArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let scan = cfg.scan.clone().unwrap_or_default();
    let backend = match &a.common.backend {
        Some(_) => cfg.backends[0],
        None => scan.backend,
    };
    let k = a.common.k.unwrap_or(scan.k);
    let t = a.common.threshold.unwrap_or(scan.threshold);
    let cases = match &a.manifest {
        Some(m) => manifest_cases(m, &cfg)?,
        None => prepare_data(&cfg)?.all_cases(),
    };
    let index = Index::from_sets(&cases, backend)?;
    let pairs = scan_with_index(&cases, &index, k, t)?;
    info!("{} candidate pairs among {} cases", pairs.len(), cases.len());
    emit_json(
        a.common.out.as_deref(),
        &json!({
            "backend": backend,
            "k": k,
            "threshold": t,
            "cases": cases.len(),
            "pairs": pairs,
        }),
    )
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthesize(s) => synthesize(s),
        Command::Embed(a) => embed_cmd(a),
        Command::Index(a) => index_cmd(a),
        Command::Calibrate(c) => calibrate_cmd(c),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Run(c) => run_cmd(c),
        Command::Scan(a) => scan_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
