//! Command-line front end.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::backends::{BackendContext, BackendRegistry};
use crate::engine::{distill, DistillObserver, DistillOptions, IterationRecord, RunState, TSchedule};
use crate::error::{Error, Result};
use crate::metrics::{embedder_by_name, evaluate, EvalReport};
use crate::plot::{self, Series, Style};
use crate::scene_io::{list_images, load_scene, read_image, write_png, FRAMES_DIR};
use crate::selftest::run_selftest;
use crate::stats::{analyze, load_records, SurveyReport};
use crate::types::{default_config, DistillationConfig, EditTask, Image};

#[derive(Debug, Parser)]
#[command(name = "mix2mix", version, about = "Multi-view consistent instruction-guided image editing")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Edit every view of a scene consistently.
    Edit(EditArgs),
    /// Score edited views against the originals.
    Eval(EvalArgs),
    /// Statistics for paired consistency ratings.
    SurveyStats(SurveyArgs),
    /// Run the toy-world convergence and oracle checks.
    Selftest(SelftestArgs),
    /// Redraw the plots of a finished run from its run.json.
    Replot(ReplotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct EditArgs {
    /// Scene directory with frames/ and poses.json.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub instruction: String,
    /// JSON hyperparameter file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "toy-student")]
    pub student_backend: String,
    #[arg(long, default_value = "toy-teacher")]
    pub teacher_backend: String,
    /// Overrides the config seed.
    #[arg(long, env = "MIX2MIX_SEED")]
    pub seed: Option<u64>,
    /// Teacher timestep schedule: truncnorm, uniform or matched.
    #[arg(long, default_value = "truncnorm")]
    pub t_schedule: TSchedule,
    /// Let every view attend to itself instead of a shared key frame.
    #[arg(long)]
    pub no_rcvattn: bool,
    #[arg(long, default_value = "")]
    pub original_caption: String,
    #[arg(long, default_value = "")]
    pub edited_caption: String,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory of original views (or a scene directory).
    #[arg(long)]
    pub originals: PathBuf,
    /// Directory of edited views (or an edit output directory).
    #[arg(long)]
    pub edits: PathBuf,
    #[arg(long)]
    pub original_caption: String,
    #[arg(long)]
    pub edited_caption: String,
    #[arg(long, default_value = "mock")]
    pub embedder: String,
    #[arg(long, default_value_t = 0)]
    pub embedder_seed: u64,
    /// Where eval.json goes; defaults to the edits directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SurveyArgs {
    /// CSV with columns scene_id,algorithm,rater_id,pair_count.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value_t = 20000)]
    pub n_perm: usize,
    /// Enumerate all sign assignments instead of sampling.
    #[arg(long)]
    pub exhaustive: bool,
    #[arg(long, env = "MIX2MIX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SelftestArgs {
    /// Fewer draws and no ablation checks.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, hide = true)]
    pub corrupt_delta_map: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReplotArgs {
    pub run_json: PathBuf,
    /// Output directory for plots/; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to reproduce an edit run, plus its per-iteration
/// trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scene: String,
    pub instruction: String,
    pub original_caption: String,
    pub edited_caption: String,
    pub teacher_backend: String,
    pub student_backend: String,
    pub seed: u64,
    pub t_schedule: TSchedule,
    pub rcv_attention: bool,
    pub config: DistillationConfig,
    pub reference_index: usize,
    pub reference_frame: String,
    pub records: Vec<IterationRecord>,
    /// Output files relative to the run directory.
    pub outputs: Vec<String>,
}

pub const RUN_MANIFEST: &str = "run.json";
pub const TIMING_FILE: &str = "timing.json";
pub const LOCK_FILE: &str = ".mix2mix.lock";
pub const EDITED_DIR: &str = "edited";
pub const PLOTS_DIR: &str = "plots";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

struct Progress {
    steps: usize,
}

impl DistillObserver for Progress {
    fn on_outer_step(&mut self, state: &RunState) {
        let last = state.loss_history.last().copied().unwrap_or(f64::NAN);
        log::info!(
            "outer step {}/{} done, {} iterations, last grad norm {last:.4e}",
            state.outer_step + 1,
            self.steps,
            state.iteration
        );
    }
}

/// Plots derived from the manifest, written under `dir/plots`. Returns the
/// relative paths.
pub fn write_plots(manifest: &RunManifest, dir: &Path) -> Result<Vec<String>> {
    let it: Vec<f64> = manifest.records.iter().map(|r| r.iteration as f64).collect();
    let grad: Vec<f64> = manifest.records.iter().map(|r| r.grad_norm).collect();
    let lr: Vec<f64> = manifest.records.iter().map(|r| r.lr).collect();
    let t: Vec<f64> = manifest.records.iter().map(|r| r.t).collect();
    let tau: Vec<f64> = manifest.records.iter().map(|r| r.tau).collect();
    let line = |y| Series {
        x: &it,
        y,
        color: plot::BLUE,
        style: Style::Line,
    };
    let files = [
        ("loss.png", vec![line(&grad)]),
        ("lr.png", vec![line(&lr)]),
        (
            "t_schedule.png",
            vec![
                Series {
                    x: &it,
                    y: &t,
                    color: plot::BLUE,
                    style: Style::Points,
                },
                Series {
                    x: &it,
                    y: &tau,
                    color: plot::ORANGE,
                    style: Style::Line,
                },
            ],
        ),
    ];
    let mut written = Vec::new();
    for (name, series) in files {
        let rel = format!("{PLOTS_DIR}/{name}");
        plot::save(&series, &dir.join(&rel))?;
        written.push(rel);
    }
    Ok(written)
}

pub fn cmd_edit(args: &EditArgs, registry: &BackendRegistry) -> Result<RunManifest> {
    let _lock = DirLock::acquire(&args.out)?;
    let start = Instant::now();
    let scene = load_scene(&args.scene).map_err(|e| e.context(format!("loading scene {}", args.scene.display())))?;
    let mut config = match &args.config {
        Some(path) => DistillationConfig::load(path).map_err(|e| e.context(format!("config {}", path.display())))?,
        None => default_config(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let task = EditTask::new(args.instruction.clone(), config.text_cfg, config.image_cfg)?
        .with_captions(args.original_caption.clone(), args.edited_caption.clone());
    let ctx = BackendContext {
        scene: &scene,
        seed: config.seed,
    };
    let teacher = registry.make_teacher(&args.teacher_backend, &ctx)?;
    let mut student = registry.make_student(&args.student_backend, &ctx)?;
    let options = DistillOptions {
        t_schedule: args.t_schedule,
        rcv_attention: !args.no_rcvattn,
        ..DistillOptions::default()
    };
    let mut progress = Progress {
        steps: config.num_student_steps,
    };
    let out = distill(&scene, &task, &*teacher, &mut *student, &config, &options, &mut progress)?;

    let mut outputs = Vec::new();
    for (image, name) in out.images.iter().zip(scene.names()) {
        let rel = format!("{EDITED_DIR}/frame_{name}.png");
        write_png(image, &args.out.join(&rel))?;
        outputs.push(rel);
    }
    let mut manifest = RunManifest {
        scene: args.scene.display().to_string(),
        instruction: args.instruction.clone(),
        original_caption: args.original_caption.clone(),
        edited_caption: args.edited_caption.clone(),
        teacher_backend: args.teacher_backend.clone(),
        student_backend: args.student_backend.clone(),
        seed: config.seed,
        t_schedule: args.t_schedule,
        rcv_attention: !args.no_rcvattn,
        reference_index: out.reference_index,
        reference_frame: scene.names()[out.reference_index].clone(),
        config,
        records: out.records,
        outputs,
    };
    let plots = write_plots(&manifest, &args.out)?;
    manifest.outputs.extend(plots);
    write_json(&manifest, &args.out.join(RUN_MANIFEST))?;
    write_json(
        &serde_json::json!({ "wall_clock_seconds": start.elapsed().as_secs_f64() }),
        &args.out.join(TIMING_FILE),
    )?;
    Ok(manifest)
}

/// Images of a view directory. A scene or edit-run directory is accepted
/// too, in which case its `frames/` or `edited/` subdirectory is used.
pub fn load_views(dir: &Path) -> Result<Vec<Image>> {
    let dir = [FRAMES_DIR, EDITED_DIR]
        .iter()
        .map(|sub| dir.join(sub))
        .find(|d| d.is_dir())
        .unwrap_or_else(|| dir.to_path_buf());
    list_images(&dir)?.iter().map(|p| read_image(p)).collect()
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let originals = load_views(&args.originals)?;
    let edits = load_views(&args.edits)?;
    let embedder = embedder_by_name(&args.embedder, args.embedder_seed)?;
    let report = evaluate(
        &originals,
        &edits,
        &args.original_caption,
        &args.edited_caption,
        &*embedder,
    )?;
    println!("| CLIP Similarity | CLIP Directional | CLIP Dir. Consistency |");
    println!("|---|---|---|");
    println!(
        "| {:.4} | {:.4} | {:.4} |",
        report.clip_similarity, report.clip_directional, report.clip_consistency
    );
    let out_dir = args.out.clone().unwrap_or_else(|| args.edits.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_json(&report, &out_dir.join("eval.json"))?;
    Ok(report)
}

pub fn cmd_survey_stats(args: &SurveyArgs) -> Result<SurveyReport> {
    let records = load_records(&args.records)?;
    let report = analyze(&records, args.n_perm, args.exhaustive, args.seed)?;
    let agg = &report.aggregate;
    println!("| Algorithm | Mean #Pairs | Wins | Consistent % | Inconsistent % |");
    println!("|---|---|---|---|---|");
    for a in &agg.per_algorithm {
        println!(
            "| {} | {:.3} | {}/{} | {:.1} | {:.1} |",
            a.algorithm,
            a.mean_pairs,
            a.wins,
            agg.scenes.len(),
            100.0 * a.consistent_rate,
            100.0 * a.inconsistent_rate
        );
    }
    if !agg.excluded_scenes.is_empty() {
        println!("excluded scenes (single algorithm): {}", agg.excluded_scenes.join(", "));
    }
    let p = &report.permutation;
    println!(
        "sign-flip permutation: mean diff ({} - {}) = {:.4}, two-sided p = {:.6} ({} {})",
        agg.algorithms[0],
        agg.algorithms[1],
        p.mean_diff,
        p.p_two_sided,
        p.resamples,
        if p.exhaustive { "assignments" } else { "resamples" }
    );
    let s = &report.sign_test;
    println!(
        "binomial sign test: {} wins {}/{} (ties dropped: {}), one-sided p = {:.6}, two-sided p = {:.6}",
        report.sign_test_algorithm, s.wins, s.n, agg.ties, s.p_one_sided, s.p_two_sided
    );
    for (label, f) in [
        ("consistent", &report.fisher_consistent),
        ("inconsistent", &report.fisher_inconsistent),
    ] {
        println!(
            "Fisher exact ({label}): two-sided p = {:.6e}, one-sided p = {:.6e}",
            f.p_two_sided, f.p_one_sided
        );
    }
    if let Some(path) = &args.json {
        write_json(&report, path)?;
    }
    Ok(report)
}

/// Returns whether every check passed.
pub fn cmd_selftest(args: &SelftestArgs) -> bool {
    let start = Instant::now();
    let checks = run_selftest(args.quick, args.corrupt_delta_map);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    println!(
        "{} of {} checks passed in {:.1} s",
        checks.len() - failed.len(),
        checks.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
    }
    failed.is_empty()
}

pub fn cmd_replot(args: &ReplotArgs) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(&args.run_json).map_err(|e| Error::io(&args.run_json, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => args
            .run_json
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    write_plots(&manifest, &dir)
}

fn report_error(err: &Error) {
    let payload = serde_json::json!({
        "error": err.kind(),
        "message": err.to_string(),
    });
    eprintln!("{payload}");
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let registry = BackendRegistry::with_builtin();
    let result = match &cli.command {
        Command::Edit(a) => cmd_edit(a, &registry).map(|m| {
            println!("wrote {} outputs to {}", m.outputs.len(), a.out.display());
        }),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::SurveyStats(a) => cmd_survey_stats(a).map(|_| ()),
        Command::Selftest(a) => return i32::from(!cmd_selftest(a)),
        Command::Replot(a) => cmd_replot(a).map(|files| {
            for f in files {
                println!("{f}");
            }
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e);
            1
        }
    }
}
