//! `forge` command line: pipeline subcommands and the curation server.

pub mod server;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use forge_core::canonical::{to_canonical_line, to_canonical_pretty};
use forge_core::config::GlobalConfig;
use forge_core::emit::{
    apply_patches, default_ledger_path, emit_dataset, load_dataset, read_ledger, to_truth_records, validate_sample,
    write_dataset, Stage, MANIFEST_FILE,
};
use forge_core::ingest::{from_nuscenes_layout, AdapterOptions};
use forge_core::ingest::{parse_scenario_bundle_with, serialize_bundle, ScenarioBundle};
use forge_core::justify::{
    build_justification_prompt, fallback_justification, request_justification, validate_justification_with,
    JustificationRequest,
};
use forge_core::meta_action::classify_meta_action;
use forge_core::metrics::judge::gpt_judge;
use forge_core::metrics::{evaluate, parse_prediction_lines, EvalOptions, PredictionRecord, TextEvalPair};
use forge_core::scene_graph::{build_scene_graph, extract_triplets};
use forge_core::{Error, Finding};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "forge", version, about = "Build, curate and score driving instruction datasets")]
pub struct Cli {
    /// Config file, or `default` for the built-in values.
    #[arg(long, global = true, default_value = "default")]
    pub config: String,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct BundleArgs {
    /// Scenario bundle file, or a directory of `*.json` bundles.
    #[arg(long)]
    pub bundle: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate bundles (or convert a nuScenes-style layout) and write them canonically.
    Ingest {
        #[arg(long, required_unless_present = "nuscenes")]
        bundle: Option<PathBuf>,
        /// Root of a nuScenes-style table directory.
        #[arg(long, conflicts_with = "bundle")]
        nuscenes: Option<PathBuf>,
        /// Output directory; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the scene graph and its triplets.
    Graph(BundleArgs),
    /// Print the generated scene QA rounds.
    Genqa(BundleArgs),
    /// Print the meta-action label.
    Action(BundleArgs),
    /// Print the behaviour justification.
    Justify(BundleArgs),
    /// Emit an instruction dataset.
    Emit {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "end_to_end")]
        stage: String,
        /// Dataset directory; the configured output dir when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        /// Prediction file (one record per line) or dataset directory.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth file or dataset directory.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_parser = ["horizon-avg", "per-step"])]
        l2_convention: Option<String>,
        /// Also write the report as structured text to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rate justifications with the configured LLM endpoint.
        #[arg(long)]
        judge: bool,
    },
    /// Serve the curation API, media and UI assets.
    ReviewServe {
        #[arg(long)]
        dataset: PathBuf,
        /// Patch ledger; `patches.jsonl` in the dataset directory by default.
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Root for `/media`; the dataset's `media` directory by default.
        #[arg(long)]
        media_root: Option<PathBuf>,
        /// Built UI assets to serve at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Report validation findings for bundles and/or a dataset.
    Validate {
        #[arg(long, required_unless_present = "dataset")]
        bundle: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
}

/// Outcome of a subcommand that ran to completion.
enum Outcome {
    Clean,
    Findings(Vec<Finding>),
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Clean) => EXIT_OK,
        Ok(Outcome::Findings(f)) => {
            for finding in &f {
                eprintln!("finding: {finding}");
            }
            if f.is_empty() {
                EXIT_OK
            } else {
                EXIT_FINDINGS
            }
        }
        Err(Error::Validation { field, message }) => {
            eprintln!("finding: {field}: {message}");
            EXIT_FINDINGS
        }
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn load_config(arg: &str, seed: Option<u64>) -> forge_core::Result<GlobalConfig> {
    let mut cfg = GlobalConfig::load(arg)?;
    if arg != forge_core::config::DEFAULT_KEYWORD {
        if let Some(dir) = Path::new(arg).parent() {
            cfg = cfg.resolve_paths(dir);
        }
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Reads one bundle file or every `*.json` file of a directory. A path
/// without extension also matches `<path>.json`.
pub fn read_bundles(path: &Path, cfg: &GlobalConfig) -> forge_core::Result<Vec<ScenarioBundle>> {
    let path = if !path.exists() && path.extension().is_none() && path.with_extension("json").exists() {
        path.with_extension("json")
    } else {
        path.to_path_buf()
    };
    if path.is_dir() {
        return forge_core::ingest::load_bundle_dir(&path, &cfg.windows, &cfg.vocabulary);
    }
    let bytes = std::fs::read(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario_bundle_with(&bytes, &cfg.windows, &cfg.vocabulary)
        .map(|b| vec![b])
        .map_err(|e| match e {
            Error::Validation { field, message } => Error::Validation {
                field: format!("{}: {field}", path.display()),
                message,
            },
            other => other,
        })
}

fn out(text: &str) -> forge_core::Result<()> {
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        stdout.write_all(b"\n")?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> forge_core::Result<Outcome> {
    let cfg = load_config(&cli.config, cli.seed)?;
    match cli.command {
        Command::Ingest { bundle, nuscenes, out: dir } => ingest(&cfg, bundle, nuscenes, dir),
        Command::Graph(a) => {
            for b in read_bundles(&a.bundle, &cfg)? {
                let graph = build_scene_graph(&b.elements);
                let triplets: Vec<String> = extract_triplets(&graph)?.iter().map(|t| t.to_string()).collect();
                out(&to_canonical_pretty(&serde_json::json!({
                    "scenario_id": b.scenario_id,
                    "graph": graph,
                    "triplets": triplets,
                }))?)?;
            }
            Ok(Outcome::Clean)
        }
        Command::Genqa(a) => {
            let lib = cfg.library()?;
            for b in read_bundles(&a.bundle, &cfg)? {
                for r in lib.generate(&b, cfg.seed)? {
                    let mut line = serde_json::to_value(&r).map_err(|e| Error::Serialize(e.to_string()))?;
                    line["scenario_id"] = b.scenario_id.clone().into();
                    out(&to_canonical_line(&line)?)?;
                }
            }
            Ok(Outcome::Clean)
        }
        Command::Action(a) => {
            let bundles = read_bundles(&a.bundle, &cfg)?;
            let single = bundles.len() == 1;
            for b in &bundles {
                let label = classify_meta_action(b, &cfg.thresholds, &cfg.windows)?;
                if single {
                    out(&label.text())?;
                } else {
                    out(&format!("{}\t{}", b.scenario_id, label.text()))?;
                }
            }
            Ok(Outcome::Clean)
        }
        Command::Justify(a) => {
            let bundles = read_bundles(&a.bundle, &cfg)?;
            let single = bundles.len() == 1;
            let mut findings = Vec::new();
            for b in &bundles {
                let (text, f) = justify_one(b, &cfg)?;
                findings.extend(f);
                if single {
                    out(&text)?;
                } else {
                    out(&format!("{}\t{text}", b.scenario_id))?;
                }
            }
            Ok(Outcome::Findings(findings))
        }
        Command::Emit { bundle, stage, out: dir } => {
            let stage: Stage = stage.parse()?;
            let bundles = read_bundles(&bundle, &cfg)?;
            let ds = emit_dataset(&bundles, stage, &cfg)?;
            let dir = dir.unwrap_or_else(|| cfg.output_dir.clone());
            write_dataset(&dir, &ds)?;
            eprintln!(
                "emitted {} samples ({} train, {} val) to {}",
                ds.samples.len(),
                ds.manifest.splits.train,
                ds.manifest.splits.val,
                dir.display()
            );
            out(&dir.join(MANIFEST_FILE).display().to_string())?;
            Ok(Outcome::Clean)
        }
        Command::Eval {
            pred,
            truth,
            l2_convention,
            out: report_path,
            judge,
        } => {
            let predictions = read_records(&pred)?;
            let truth = read_records(&truth)?;
            let opts = EvalOptions {
                l2_convention: match l2_convention {
                    Some(c) => c.parse()?,
                    None => cfg.l2_convention,
                },
                windows: cfg.windows,
                vocabulary: cfg.vocabulary.clone(),
            };
            let mut ev = evaluate(&predictions, &truth, &opts)?;
            if judge {
                let llm = cfg
                    .llm
                    .as_ref()
                    .filter(|l| l.is_configured())
                    .ok_or_else(|| Error::Config("--judge needs an llm endpoint in the config".into()))?;
                let pairs = judge_pairs(&predictions, &truth);
                let outcome = gpt_judge(&pairs, llm)?;
                ev.report.gpt_score = outcome.score;
                ev.findings.extend(outcome.findings);
            }
            out(&ev.report.to_table())?;
            if let Some(p) = report_path {
                std::fs::write(&p, to_canonical_pretty(&ev.report)?)?;
            }
            Ok(Outcome::Findings(ev.findings))
        }
        Command::ReviewServe {
            dataset,
            ledger,
            port,
            media_root,
            static_dir,
        } => {
            let opts = server::ServeOptions {
                ledger: ledger.unwrap_or_else(|| default_ledger_path(&dataset)),
                media_root: media_root.unwrap_or_else(|| dataset.join("media")),
                dataset,
                static_dir,
                library: cfg.library()?,
                vocabulary: cfg.vocabulary.clone(),
                windows: cfg.windows,
            };
            let state = server::AppState::load(opts)?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
                    .await
                    .map_err(|e| Error::Config(format!("cannot bind port {port}: {e}")))?;
                eprintln!("serving on http://{}", listener.local_addr()?);
                server::serve(listener, state).await
            })?;
            Ok(Outcome::Clean)
        }
        Command::Validate { bundle, dataset, ledger } => {
            let mut findings = Vec::new();
            if let Some(p) = bundle {
                match read_bundles(&p, &cfg) {
                    Ok(_) => {}
                    Err(Error::Validation { field, message }) => findings.push(Finding::new(field, message)),
                    Err(e) => return Err(e),
                }
            }
            if let Some(dir) = dataset {
                let ds = load_dataset(&dir)?;
                let patches = read_ledger(&ledger.unwrap_or_else(|| default_ledger_path(&dir)))?;
                let ds = apply_patches(&ds, &patches)?;
                let lib = cfg.library()?;
                for (s, a) in ds.samples.iter().zip(&ds.annotations) {
                    findings.extend(
                        validate_sample(s, a, &lib, &cfg.vocabulary)
                            .into_iter()
                            .map(|f| Finding::new(format!("{}.{}", s.id, f.path), f.message)),
                    );
                }
            }
            Ok(Outcome::Findings(findings))
        }
    }
}

fn ingest(
    cfg: &GlobalConfig,
    bundle: Option<PathBuf>,
    nuscenes: Option<PathBuf>,
    dir: Option<PathBuf>,
) -> forge_core::Result<Outcome> {
    let mut findings = Vec::new();
    let bundles = match (bundle, nuscenes) {
        (_, Some(root)) => {
            let opts = AdapterOptions {
                windows: cfg.windows,
                wheelbase_m: cfg.wheelbase_m,
            };
            let converted = from_nuscenes_layout(&root, &opts)?;
            for w in &converted.warnings {
                eprintln!("warning: {w}");
            }
            let mut kept = Vec::new();
            for b in converted.bundles {
                let f = forge_core::ingest::validate_bundle_with(&b, &cfg.windows, &cfg.vocabulary);
                if f.is_empty() {
                    kept.push(b);
                } else {
                    findings.extend(f.into_iter().map(|x| Finding::new(format!("{}.{}", b.scenario_id, x.path), x.message)));
                }
            }
            kept
        }
        (Some(p), None) => read_bundles(&p, cfg)?,
        (None, None) => return Err(Error::Config("need --bundle or --nuscenes".into())),
    };
    match dir {
        Some(d) => {
            std::fs::create_dir_all(&d)?;
            for b in &bundles {
                std::fs::write(d.join(format!("{}.json", b.scenario_id)), serialize_bundle(b)?)?;
            }
            eprintln!("wrote {} bundles to {}", bundles.len(), d.display());
        }
        None => {
            for b in &bundles {
                out(&serialize_bundle(b)?)?;
            }
        }
    }
    Ok(Outcome::Findings(findings))
}

/// LLM justification when an endpoint is configured and its text passes
/// validation, the template sentence otherwise.
fn justify_one(b: &ScenarioBundle, cfg: &GlobalConfig) -> forge_core::Result<(String, Vec<Finding>)> {
    let label = classify_meta_action(b, &cfg.thresholds, &cfg.windows)?;
    let graph = build_scene_graph(&b.elements);
    let fallback = fallback_justification(&label, &extract_triplets(&graph)?);
    let Some(llm) = cfg.llm.as_ref().filter(|l| l.is_configured()) else {
        return Ok((fallback, Vec::new()));
    };
    let prompt = build_justification_prompt(&JustificationRequest {
        scene_qa: cfg.library()?.generate(b, cfg.seed)?,
        action: label,
        prompt_template: cfg.justification_template.clone(),
    })?;
    let reply = request_justification(llm, &prompt)?;
    let findings = validate_justification_with(&reply.text, &graph, &label, &cfg.vocabulary);
    if findings.is_empty() {
        Ok((reply.text.trim().to_string(), findings))
    } else {
        let tagged = findings
            .into_iter()
            .map(|f| Finding::new(format!("{}.{}", b.scenario_id, f.path), format!("{} (template used)", f.message)))
            .collect();
        Ok((fallback, tagged))
    }
}

/// Prediction records from a file, or ground truth from a dataset directory.
pub fn read_records(path: &Path) -> forge_core::Result<Vec<PredictionRecord>> {
    if path.is_dir() {
        return Ok(to_truth_records(&load_dataset(path)?));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_prediction_lines(&text)
}

fn judge_pairs(pred: &[PredictionRecord], truth: &[PredictionRecord]) -> Vec<TextEvalPair> {
    truth
        .iter()
        .filter_map(|t| {
            let p = pred.iter().find(|p| p.id == t.id)?;
            Some(TextEvalPair {
                id: t.id.clone(),
                candidate: p.justification.clone()?,
                references: vec![t.justification.clone()?],
            })
        })
        .collect()
}
