//! Command-line front end. [`run`] parses arguments, resolves the
//! configuration and seed, and maps failures to exit codes: 0 success,
//! 1 invalid input or arguments, 2 processing failure.

mod config;

pub use config::{PathsConfig, PipelineConfig};

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use crate::asset::{load_asset, read_exr, save_asset, TextureMap};
use crate::bake::{assemble_asset, bake, load_bake_views};
use crate::curation::{
    curate, luminous_ratio, write_manifest, HttpClient, MockClient, Screener, SingleObjectClient, CANONICAL_VIEW_COUNT,
};
use crate::diffusion::{run_loss_check, toy_train, write_curves_csv, ToyTrainConfig};
use crate::metrics::{evaluate, EvalProtocol};
use crate::render::{
    load_rendered_view, read_render_manifest, render_asset, sample_rigs, write_render_set, Scene,
};
use crate::strength::{predict_strength, train_head, MlpHead, StatFeatures};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PROCESSING: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, missing inputs, invalid configuration.
    Validation(String),
    /// Anything that fails after inputs were accepted.
    Processing(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Processing(_) => EXIT_PROCESSING,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error: {m}"),
            CliError::Processing(m) => write!(f, "processing failed: {m}"),
        }
    }
}

fn processing(e: impl std::fmt::Display) -> CliError {
    CliError::Processing(e.to_string())
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "emberforge", version, about = "Emission-aware asset curation, rendering, baking and evaluation")]
pub struct Cli {
    /// Pipeline configuration (JSON); unknown keys are rejected.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical cores). Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Debug-level logging on standard error.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a directory of .glb assets into a JSON-lines manifest.
    Curate {
        /// Directory of .glb files (or a single .glb).
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        /// Manifest to write, one verdict per line.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Single-object classifier: `mock` or `http:<url>`.
        #[arg(long, default_value = "mock")]
        classifier: String,
    },
    /// Render the ten canonical views at several strengths and light rigs.
    Render {
        #[arg(long, value_name = "GLB")]
        asset: PathBuf,
        /// Comma-separated strengths (default: the curation strength levels).
        #[arg(long, value_delimiter = ',')]
        strengths: Option<Vec<f64>>,
        /// Number of random light rigs.
        #[arg(long, default_value_t = 1)]
        rigs: usize,
        /// Output root; files go under `<out>/<asset id>/`.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Pick the strengths whose luminous-area ratio is valid in every view.
    Select {
        /// Render directory holding `manifest.json`.
        #[arg(long, value_name = "DIR")]
        renders: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Fuse rendered views into UV textures and write a textured .glb.
    Bake {
        /// Asset supplying the mesh and its metallic/roughness maps.
        #[arg(long, value_name = "GLB")]
        mesh: PathBuf,
        /// Render directory holding `manifest.json`.
        #[arg(long, value_name = "DIR")]
        views: PathBuf,
        /// Emission strength of the output (default: the strength of the views).
        #[arg(long)]
        strength: Option<f64>,
        #[arg(long, value_name = "GLB")]
        out: PathBuf,
    },
    /// Render a prediction and a ground truth under one protocol and score them.
    Evaluate {
        #[arg(long, value_name = "GLB")]
        pred: PathBuf,
        #[arg(long, value_name = "GLB")]
        gt: PathBuf,
        /// Evaluation protocol (JSON); defaults use the config's render settings.
        #[arg(long, value_name = "FILE")]
        protocol: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Run the identity, gradient and soft-mask convergence checks.
    LossCheck {
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
    },
    /// Train the toy denoiser with each loss weight and write the curves.
    ToyAblate {
        /// Comma-separated segmentation loss weights (default: 0 and the config's lambda).
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        /// CSV destination; standard output when absent.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train or apply the emission-strength head.
    #[command(subcommand)]
    Strength(StrengthCommand),
}

#[derive(Debug, Subcommand)]
pub enum StrengthCommand {
    /// Train on the beauty passes of a render manifest, labelled by strength.
    Train(StrengthTrain),
    /// Predict the strength of one image and print it.
    Predict(StrengthPredict),
}

#[derive(Debug, Args)]
pub struct StrengthTrain {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StrengthPredict {
    /// EXR image.
    #[arg(long, value_name = "FILE")]
    pub image: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub head: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Messages go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command inside a worker pool of `--jobs` threads.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => {
            require_exists(p)?;
            PipelineConfig::load(p).map_err(|e| CliError::Validation(format!("invalid config {e}")))?
        }
        None => PipelineConfig::default(),
    };
    let cfg = cfg.with_seed(cli.seed);
    info!("seed {}", cfg.seed);
    info!("config {}", serde_json::to_string(&cfg).expect("config serializes"));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(validation("--jobs must be >= 1"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(processing)?;
    pool.install(|| dispatch(&cli.command, &cfg, cli.seed.is_some()))
}

fn require_exists(p: &Path) -> Result<(), CliError> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("input not found: {}", p.display())))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(processing)?;
    create_parent(path)?;
    std::fs::write(path, text + "\n").map_err(processing)
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(processing),
        _ => Ok(()),
    }
}

fn load_glb(path: &Path) -> Result<crate::asset::Asset, CliError> {
    require_exists(path)?;
    load_asset(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn dispatch(cmd: &Command, cfg: &PipelineConfig, seed_given: bool) -> Result<(), CliError> {
    let inp = |p: &Path| cfg.paths.input_path(p);
    let outp = |p: &Path| cfg.paths.output_path(p);
    match cmd {
        Command::Curate { input, out, classifier } => cmd_curate(&inp(input), &outp(out), classifier, cfg),
        Command::Render { asset, strengths, rigs, out } => {
            cmd_render(&inp(asset), strengths.as_deref(), *rigs, &outp(out), cfg)
        }
        Command::Select { renders, out } => cmd_select(&inp(renders), &outp(out), cfg),
        Command::Bake { mesh, views, strength, out } => cmd_bake(&inp(mesh), &inp(views), *strength, &outp(out), cfg),
        Command::Evaluate { pred, gt, protocol, out } => {
            let protocol = match protocol {
                Some(p) => {
                    let p = inp(p);
                    require_exists(&p)?;
                    let text = std::fs::read_to_string(&p).map_err(processing)?;
                    let mut proto: EvalProtocol = serde_json::from_str(&text)
                        .map_err(|e| CliError::Validation(format!("invalid protocol {}: {e}", p.display())))?;
                    if seed_given {
                        proto.seed = cfg.seed;
                    }
                    proto
                }
                None => EvalProtocol { seed: cfg.seed, render: cfg.render.clone(), ..Default::default() },
            };
            cmd_evaluate(&inp(pred), &inp(gt), &protocol, &outp(out))
        }
        Command::LossCheck { report } => {
            let r = run_loss_check(cfg.seed).map_err(processing)?;
            write_json(&outp(report), &r)?;
            if r.passed {
                info!("loss checks passed");
                Ok(())
            } else {
                Err(processing(format!("loss checks failed, see {}", report.display())))
            }
        }
        Command::ToyAblate { lambda, steps, out } => {
            let lambdas = lambda.clone().unwrap_or_else(|| vec![0.0, cfg.lambda]);
            cmd_toy_ablate(&lambdas, *steps, out.as_deref().map(outp).as_deref(), cfg)
        }
        Command::Strength(StrengthCommand::Train(a)) => cmd_strength_train(&inp(&a.manifest), &outp(&a.out), cfg),
        Command::Strength(StrengthCommand::Predict(a)) => {
            let (image, head) = (inp(&a.image), inp(&a.head));
            require_exists(&image)?;
            require_exists(&head)?;
            let img = read_exr(&image).map_err(validation)?;
            let text = std::fs::read_to_string(&head).map_err(processing)?;
            let head = MlpHead::from_json(&text).map_err(validation)?;
            let s = predict_strength(&img, &StatFeatures, &head).map_err(validation)?;
            println!("{s}");
            Ok(())
        }
    }
}

fn glb_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(processing)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("glb")))
        .collect();
    files.sort();
    Ok(files)
}

fn classifier_from(spec: &str) -> Result<Box<dyn SingleObjectClient>, CliError> {
    match spec {
        "mock" => Ok(Box::new(MockClient::default_keywords())),
        s if s.starts_with("http:") || s.starts_with("https:") => {
            let url = s.strip_prefix("http:").filter(|u| u.starts_with("http")).unwrap_or(s);
            Ok(Box::new(HttpClient::new(url, Duration::from_secs(60))))
        }
        other => Err(CliError::Validation(format!("unknown classifier {other:?}; use mock or http:<url>"))),
    }
}

fn cmd_curate(input: &Path, out: &Path, classifier: &str, cfg: &PipelineConfig) -> Result<(), CliError> {
    require_exists(input)?;
    let client = classifier_from(classifier)?;
    let screener = Screener { config: cfg.render.clone(), ..Default::default() };
    let mut verdicts = Vec::new();
    for path in glb_files(input)? {
        let asset = load_asset(&path).map_err(|e| processing(format!("{}: {e}", path.display())))?;
        let v = curate(&asset, &cfg.curation, client.as_ref(), &screener).map_err(processing)?;
        info!("{}: accepted={} reason={:?}", v.asset_id, v.accepted, v.rejection_reason.map(|r| r.as_str()));
        verdicts.push(v);
    }
    if verdicts.is_empty() {
        warn!("no .glb files under {}", input.display());
    }
    create_parent(out)?;
    write_manifest(out, &verdicts).map_err(processing)
}

fn cmd_render(
    asset: &Path,
    strengths: Option<&[f64]>,
    rigs: usize,
    out: &Path,
    cfg: &PipelineConfig,
) -> Result<(), CliError> {
    let a = load_glb(asset)?;
    let strengths = strengths.unwrap_or(&cfg.curation.strength_levels);
    if strengths.is_empty() || strengths.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(validation("strengths must be non-empty, finite and >= 0"));
    }
    if rigs == 0 {
        return Err(validation("--rigs must be >= 1"));
    }
    let scene = Scene::new(&a).map_err(processing)?;
    let light_rigs = sample_rigs(&scene, rigs, cfg.seed);
    let views = render_asset(&a, strengths, &light_rigs, &cfg.render).map_err(processing)?;
    let m = write_render_set(out, &a.id, &views, &light_rigs, &cfg.render).map_err(processing)?;
    info!("wrote {} views to {}", m.entries.len(), out.join(&a.id).display());
    Ok(())
}

#[derive(Serialize)]
struct StrengthRatios {
    strength: f64,
    ratios: Vec<f64>,
    valid: bool,
}

#[derive(Serialize)]
struct Selection {
    schema_version: u32,
    asset_id: String,
    luminous_pixel_threshold: f64,
    ratio_low: f64,
    ratio_high: f64,
    strengths: Vec<StrengthRatios>,
    valid_strengths: Vec<f64>,
}

/// Emission passes of rig 0 per strength (ascending), in manifest order.
fn emission_by_strength(dir: &Path) -> Result<(String, Vec<(f64, Vec<TextureMap>)>), CliError> {
    let manifest_path = dir.join("manifest.json");
    require_exists(&manifest_path)?;
    let m = read_render_manifest(&manifest_path).map_err(validation)?;
    let mut groups: BTreeMap<u64, (f64, Vec<TextureMap>)> = BTreeMap::new();
    for e in m.entries.iter().filter(|e| e.rig == 0) {
        let v = load_rendered_view(dir, e).map_err(processing)?;
        groups.entry(e.strength.to_bits()).or_insert_with(|| (e.strength, Vec::new())).1.push(v.emission_pass);
    }
    let mut out: Vec<(f64, Vec<TextureMap>)> = groups.into_values().collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((m.asset_id, out))
}

fn cmd_select(renders: &Path, out: &Path, cfg: &PipelineConfig) -> Result<(), CliError> {
    let (asset_id, per_strength) = emission_by_strength(renders)?;
    let c = &cfg.curation;
    let mut strengths = Vec::new();
    for (s, views) in &per_strength {
        if views.len() != CANONICAL_VIEW_COUNT {
            return Err(validation(format!("strength {s}: expected {CANONICAL_VIEW_COUNT} views, got {}", views.len())));
        }
        let ratios: Vec<f64> = views.iter().map(|v| luminous_ratio(v, c.luminous_pixel_threshold)).collect();
        let valid = ratios.iter().all(|&r| r >= c.ratio_low && r <= c.ratio_high);
        strengths.push(StrengthRatios { strength: *s, ratios, valid });
    }
    let valid_strengths: Vec<f64> = strengths.iter().filter(|s| s.valid).map(|s| s.strength).collect();
    info!("{asset_id}: valid strengths {valid_strengths:?}");
    write_json(
        out,
        &Selection {
            schema_version: 1,
            asset_id,
            luminous_pixel_threshold: c.luminous_pixel_threshold,
            ratio_low: c.ratio_low,
            ratio_high: c.ratio_high,
            strengths,
            valid_strengths,
        },
    )
}

fn fit_to(map: &TextureMap, res: u32) -> TextureMap {
    if map.is_constant() || (map.width() == res && map.height() == res) {
        map.clone()
    } else {
        map.resize_nearest(res, res)
    }
}

fn cmd_bake(mesh: &Path, views: &Path, strength: Option<f64>, out: &Path, cfg: &PipelineConfig) -> Result<(), CliError> {
    let asset = load_glb(mesh)?;
    require_exists(&views.join("manifest.json"))?;
    let bake_views = load_bake_views(views).map_err(processing)?;
    let strength = strength.unwrap_or(bake_views[0].strength);
    if !(strength.is_finite() && strength >= 0.0) {
        return Err(validation("--strength must be finite and >= 0"));
    }
    let result = bake(&asset.mesh, &bake_views, &cfg.bake).map_err(processing)?;
    info!("baked {} views; {} of {} texels unseen", bake_views.len(), result.unseen_texel_count, result.occupied_texel_count);
    let res = cfg.bake.texture_resolution;
    let m = &asset.materials;
    let baked = assemble_asset(&asset.mesh, &result, fit_to(&m.metallic, res), fit_to(&m.roughness, res), strength)
        .map_err(processing)?;
    create_parent(out)?;
    save_asset(&baked, out).map_err(processing)
}

fn cmd_evaluate(pred: &Path, gt: &Path, protocol: &EvalProtocol, out: &Path) -> Result<(), CliError> {
    let (p, g) = (load_glb(pred)?, load_glb(gt)?);
    protocol.validate().map_err(validation)?;
    let report = evaluate(&p, &g, protocol, &StatFeatures).map_err(processing)?;
    let a = &report.aggregate;
    info!(
        "psnr albedo {:.3} emission {:.3}, ssim albedo {:.4}, dice {:.4}, frechet {:.3e}",
        a.psnr_albedo, a.psnr_emission, a.ssim_albedo, a.dice, a.frechet_distance
    );
    write_json(out, &report)
}

fn cmd_toy_ablate(lambdas: &[f64], steps: usize, out: Option<&Path>, cfg: &PipelineConfig) -> Result<(), CliError> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(validation("--lambda needs finite values >= 0"));
    }
    if steps == 0 {
        return Err(validation("--steps must be >= 1"));
    }
    let mut runs = Vec::new();
    for &lambda in lambdas {
        let tc = ToyTrainConfig { steps, lambda, seed: cfg.seed, mask: cfg.mask, ..Default::default() };
        let r = toy_train(&tc).map_err(processing)?;
        info!("lambda {lambda}: held-out dice loss {:.6}, hard dice {:.4}", r.held_out_dice_loss, r.held_out_hard_dice);
        runs.push((lambda, r));
    }
    let refs: Vec<(f64, &_)> = runs.iter().map(|(l, r)| (*l, r)).collect();
    match out {
        Some(path) => {
            create_parent(path)?;
            let f = std::fs::File::create(path).map_err(processing)?;
            let mut w = std::io::BufWriter::new(f);
            write_curves_csv(&mut w, &refs).and_then(|_| w.flush()).map_err(processing)
        }
        None => {
            let stdout = std::io::stdout();
            write_curves_csv(stdout.lock(), &refs).map_err(processing)
        }
    }
}

fn cmd_strength_train(manifest: &Path, out: &Path, cfg: &PipelineConfig) -> Result<(), CliError> {
    require_exists(manifest)?;
    let m = read_render_manifest(manifest).map_err(validation)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    for e in &m.entries {
        let v = load_rendered_view(dir, e).map_err(processing)?;
        samples.push((v.beauty, e.strength));
    }
    let head = train_head(samples.iter().map(|(img, s)| (img, *s)), &StatFeatures, &cfg.strength).map_err(processing)?;
    info!("trained on {} images; train mse {:?}, validation mse {:?}", samples.len(), head.train_mse, head.validation_mse);
    create_parent(out)?;
    std::fs::write(out, head.to_json().map_err(processing)? + "\n").map_err(processing)
}
