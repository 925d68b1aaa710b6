use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use padfree_core::field::{make_field, sample_field};
use padfree_core::metrics::{generator_self_ssim, resize_transitivity, SelfSsimReport};
use padfree_core::net::generator::generate;
use padfree_core::net::plan::plan_shapes;
use padfree_core::net::stitch::grid_for_output;
use padfree_core::net::{stitch_tiles, GeneratorConfig, GeneratorParams, NoiseKind, NoisePolicy};
use padfree_core::posgrid::tile_layout_aligned;
use padfree_core::train::disc::DiscParams;
use padfree_core::train::project::Optimizer;
use padfree_core::train::{moving_average, project, ProjectConfig, ScMode, TrainConfig, Trainer};
use padfree_core::{Error, ImagePatch, SampleSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::checkpoint;
use crate::dump::write_feature_maps;
use crate::error::{CliError, CliResult};
use crate::ppm::Ppm;
use crate::request::{parse_transform, render, with_n_pad, GenerateRequest, NoiseRequest, Sidecar, DEFAULT_MAX_RESOLUTION};
use crate::server::{self, ServiceState};

#[derive(Debug, Parser)]
#[command(name = "padfree", version, about = "Padding-free coordinate generator tools")]
pub struct Cli {
    /// Seed for random weights and the default latent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Generator checkpoint to load.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Use freshly initialized weights instead of a checkpoint.
    #[arg(long, global = true)]
    pub random_weights: bool,
    /// Upsampling levels of random weights.
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Output file (generate) or directory (everything else).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Ppm)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Ppm,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Random,
    Constant,
    #[value(alias = "grid_sample")]
    GridSample,
}

impl From<NoiseArg> for NoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Random => NoiseKind::Random,
            NoiseArg::Constant => NoiseKind::Constant,
            NoiseArg::GridSample => NoiseKind::GridSample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScModeArg {
    None,
    Augment,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one image plus a JSON sidecar.
    Generate(GenerateArgs),
    /// Render a frame tile by tile and optionally compare with one pass.
    Stitch(StitchArgs),
    /// Cross-scale SelfSSIM matrix.
    Selfssim(SelfSsimArgs),
    /// Toy adversarial training.
    Train(TrainArgs),
    /// Fit per-layer latents to target images.
    Project(ProjectArgs),
    /// Chained vs direct bilinear resizing of an oracle patch.
    AuditResize(AuditArgs),
    /// HTTP service for generation and grid inspection.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub resolution: usize,
    /// Defaults to `--seed`.
    #[arg(long)]
    pub latent_seed: Option<u64>,
    /// `x,y`
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub center: Option<[f64; 2]>,
    /// Distance per output pixel; the full frame fits by default.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub n_pad: usize,
    /// e.g. `shift 0.5 0`, `rescale 0.5`, `aspect 1.5`, `warp 0.1 2 x`, `extrapolate 2`, or JSON.
    #[arg(long, allow_hyphen_values = true)]
    pub transform: Option<String>,
    #[arg(long, value_enum, default_value_t = NoiseArg::GridSample)]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    /// Write every level's feature map here.
    #[arg(long)]
    pub dump_features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Tile grid `COLSxROWS`.
    #[arg(long, default_value = "2x2", value_parser = parse_tiles)]
    pub tiles: [usize; 2],
    /// Minimum overlap between neighbouring tiles, in pixels.
    #[arg(long, default_value_t = 0)]
    pub overlap: usize,
    /// Defaults to the smallest padding that keeps crops exact.
    #[arg(long)]
    pub n_pad: Option<usize>,
    #[arg(long)]
    pub latent_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = NoiseArg::GridSample)]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long)]
    pub compare_monolithic: bool,
}

#[derive(Debug, Args)]
pub struct SelfSsimArgs {
    /// Ascending output resolutions, comma separated.
    #[arg(long, default_value = "32,48", value_delimiter = ',')]
    pub scales: Vec<usize>,
    /// Number of latents, starting at `--seed`.
    #[arg(long, default_value_t = 100)]
    pub seeds: usize,
    /// Comparison resolution; defaults to the largest scale.
    #[arg(long)]
    pub ref_res: Option<usize>,
    #[arg(long, value_enum, default_value_t = NoiseArg::GridSample)]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub r_small: Option<usize>,
    #[arg(long, value_enum)]
    pub sc_mode: Option<ScModeArg>,
    /// Weight of the L1 consistency term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Fraction of batches that use the consistency objective (0.2 when a mode is set).
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub partial: bool,
    #[arg(long)]
    pub augment_reals: bool,
    #[arg(long)]
    pub lr_g: Option<f64>,
    #[arg(long)]
    pub lr_d: Option<f64>,
    /// Record SelfSSIM every this many steps (0: never).
    #[arg(long, default_value_t = 0)]
    pub selfssim_every: usize,
    #[arg(long, default_value_t = 50)]
    pub selfssim_seeds: usize,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Target PPM images, each read as the full frame at its resolution.
    #[arg(long, required = true)]
    pub target: Vec<PathBuf>,
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value_t = NoiseArg::GridSample)]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, default_value_t = 512)]
    pub from: usize,
    /// Intermediate resolutions ending at the direct target.
    #[arg(long, default_value = "384,256", value_delimiter = ',')]
    pub chain: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub terms: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = DEFAULT_MAX_RESOLUTION)]
    pub max_resolution: usize,
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts[..] {
        [a, b] => Ok([a.parse().map_err(|_| format!("bad number {a:?}"))?, b.parse().map_err(|_| format!("bad number {b:?}"))?]),
        _ => Err(format!("expected x,y, got {s:?}")),
    }
}

fn parse_tiles(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected COLSxROWS, got {s:?}"))?;
    let n = |t: &str| t.trim().parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(|| format!("bad tile count {t:?}"));
    Ok([n(a)?, n(b)?])
}

/// Random-weight architecture with `levels` upsampling levels.
pub fn random_config(levels: Option<usize>) -> GeneratorConfig {
    let toy = GeneratorConfig::toy();
    match levels {
        None => toy,
        Some(l) => GeneratorConfig {
            widths: [32, 24, 16, 12].into_iter().chain(std::iter::repeat(8)).take(l + 1).collect(),
            ..toy
        },
    }
}

/// Where the weights came from, for the resolved-config log.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
enum WeightSource {
    Checkpoint { path: PathBuf },
    Random { seed: u64, architecture: GeneratorConfig },
}

fn load_generator(cli: &Cli) -> CliResult<(GeneratorParams, WeightSource)> {
    match (&cli.checkpoint, cli.random_weights) {
        (Some(_), true) => Err(CliError::input("weights", "--checkpoint and --random-weights are exclusive")),
        (Some(path), false) => Ok((checkpoint::load(path)?, WeightSource::Checkpoint { path: path.clone() })),
        (None, true) => {
            let seed = cli.seed.unwrap_or(0);
            let config = random_config(cli.levels);
            Ok((GeneratorParams::init(&config, seed)?, WeightSource::Random { seed, architecture: config }))
        }
        (None, false) => Err(CliError::input("weights", "pass --checkpoint PATH or --random-weights")),
    }
}

fn log_config(command: &str, config: &Value) {
    eprintln!("padfree {command}: resolved config {config}");
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn out_dir(cli: &Cli, default: &str) -> CliResult<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write_image(path: &Path, format: Format, patch: &ImagePatch) -> CliResult<()> {
    match format {
        Format::Ppm => write_file(path, &Ppm::from_patch(patch).encode()),
        Format::Json => write_json(path, patch),
    }
}

fn image_name(stem: &str, format: Format) -> String {
    match format {
        Format::Ppm => format!("{stem}.ppm"),
        Format::Json => format!("{stem}.json"),
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(cli, a),
        Command::Stitch(a) => cmd_stitch(cli, a),
        Command::Selfssim(a) => cmd_selfssim(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Project(a) => cmd_project(cli, a),
        Command::AuditResize(a) => cmd_audit(cli, a),
        Command::Serve(a) => cmd_serve(cli, a),
    }
}

fn cmd_generate(cli: &Cli, a: &GenerateArgs) -> CliResult<()> {
    let (params, weights) = load_generator(cli)?;
    let req = GenerateRequest {
        latent_seed: a.latent_seed.or(cli.seed).unwrap_or(0),
        center: a.center.unwrap_or([0.0, 0.0]),
        scale: a.scale,
        resolution: a.resolution,
        n_pad: a.n_pad,
        transform: a.transform.as_deref().map(parse_transform).transpose()?,
        noise: NoiseRequest { kind: a.noise.into(), base_seed: a.noise_seed },
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(image_name("generated", cli.format)));
    log_config("generate", &json!({ "weights": weights, "request": req, "out": out, "format": cli.format }));

    let r = render(&params, &req, usize::MAX)?;
    let sidecar = Sidecar::new(&req, &r.resolved);
    match cli.format {
        Format::Ppm => {
            write_file(&out, &Ppm::from_patch(&r.patch).encode())?;
            write_json(&sidecar_path(&out), &sidecar)?;
        }
        Format::Json => write_json(&out, &json!({ "sidecar": sidecar, "image": r.patch }))?,
    }
    if let Some(dir) = &a.dump_features {
        write_feature_maps(dir, r.trace.feature_maps())?;
    }
    Ok(())
}

/// `image.ppm` → `image.ppm.json`.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut s = image.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Smallest padding (at least 3) whose renderings crop and shift exactly.
pub fn exact_n_pad(levels: usize) -> usize {
    (3..).find(|&p| plan_shapes(1, p, levels).is_ok_and(|plan| plan.is_shift_exact())).expect("some padding is exact")
}

fn cmd_stitch(cli: &Cli, a: &StitchArgs) -> CliResult<()> {
    let (params, weights) = load_generator(cli)?;
    let levels = params.config.levels();
    let n_pad = a.n_pad.unwrap_or_else(|| exact_n_pad(levels));
    let params = with_n_pad(&params, n_pad);
    let z_seed = a.latent_seed.or(cli.seed).unwrap_or(0);
    let full = SampleSpec::full_frame(a.resolution);
    let quantum = 1usize << levels;
    let tile = |k: usize| a.resolution.div_ceil(k).next_multiple_of(quantum).min(a.resolution);
    let tile_res = [tile(a.tiles[0]), tile(a.tiles[1])];
    let noise = match NoiseKind::from(a.noise) {
        NoiseKind::Random => NoisePolicy::random(a.noise_seed),
        kind => NoisePolicy { kind, base_seed: a.noise_seed, base_spec: Some(full) },
    };
    let dir = out_dir(cli, "stitch-out")?;
    let config = json!({
        "weights": weights, "resolution": a.resolution, "tiles": a.tiles, "tile_resolution": tile_res,
        "overlap": a.overlap, "n_pad": n_pad, "latent_seed": z_seed, "noise": noise, "out": dir,
    });
    log_config("stitch", &config);

    let specs = tile_layout_aligned(&full, tile_res, a.overlap, quantum)?;
    let z = padfree_core::net::latent_from_seed(z_seed, params.config.latent_dim);
    let stitched = stitch_tiles(&params, &z, &full, &specs, &noise)?;
    let monolithic_max_diff = if a.compare_monolithic {
        let mono = generate(&params, &z, &grid_for_output(&params, &full)?, &noise)?;
        Some(mono.max_abs_diff(&stitched.image))
    } else {
        None
    };
    let name = image_name("stitched", cli.format);
    write_image(&dir.join(&name), cli.format, &stitched.image)?;
    let report = json!({
        "tile_count": specs.len(),
        "offsets": stitched.offsets,
        "overlap_max_diff": stitched.overlap_max_diff,
        "monolithic_max_diff": monolithic_max_diff,
        "image": name,
    });
    write_json(&dir.join("manifest.json"), &json!({ "config": config, "report": report }))?;
    println!("{report}");
    Ok(())
}

fn cmd_selfssim(cli: &Cli, a: &SelfSsimArgs) -> CliResult<()> {
    let (params, weights) = load_generator(cli)?;
    let start = cli.seed.unwrap_or(0);
    let seeds: Vec<u64> = (start..start + a.seeds as u64).collect();
    let ref_res = a.ref_res.or(a.scales.iter().copied().max()).unwrap_or(0);
    let dir = out_dir(cli, "selfssim-out")?;
    let config = json!({
        "weights": weights, "scales": a.scales, "seed_start": start, "seed_count": a.seeds,
        "ref_res": ref_res, "noise": NoiseKind::from(a.noise), "noise_seed": a.noise_seed, "out": dir,
    });
    log_config("selfssim", &config);
    let report = generator_self_ssim(&params, &seeds, &a.scales, ref_res, a.noise.into(), a.noise_seed)?;
    write_json(&dir.join("manifest.json"), &json!({ "config": config, "report": report }))?;
    match cli.format {
        Format::Json => println!("{}", serde_json::to_string(&report)?),
        Format::Ppm => print!("{}", report.to_table()),
    }
    Ok(())
}

pub fn resolve_train_config(cli: &Cli, a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            let de = &mut serde_json::Deserializer::from_slice(&bytes);
            serde_path_to_error::deserialize(de)
                .map_err(|e| CliError::input(format!("config.{}", e.path()), e.into_inner().to_string()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.levels.is_some() {
        cfg.generator = random_config(cli.levels);
    }
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = a.batch {
        cfg.batch = v;
    }
    if let Some(v) = a.r_small {
        cfg.r_small = v;
    }
    if let Some(v) = a.lr_g {
        cfg.lr_g = v;
    }
    if let Some(v) = a.lr_d {
        cfg.lr_d = v;
    }
    if let Some(mode) = a.sc_mode {
        cfg.sc_mode = match mode {
            ScModeArg::None => ScMode::None,
            ScModeArg::Augment => ScMode::Augment,
            ScModeArg::L1 => ScMode::L1 { lambda: a.lambda },
        };
        cfg.sc_probability = if cfg.sc_mode == ScMode::None { 0.0 } else { a.p.unwrap_or(0.2) };
    } else if let Some(p) = a.p {
        cfg.sc_probability = p;
    }
    cfg.partial_training |= a.partial;
    cfg.augment_reals |= a.augment_reals;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct SelfSsimCheckpoint {
    step: u64,
    mean_cross_scale: f64,
    report: SelfSsimReport,
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> CliResult<()> {
    let mut cfg = resolve_train_config(cli, a)?;
    let mut trainer = match &cli.checkpoint {
        Some(path) => {
            let g = checkpoint::load(path)?;
            cfg.generator = g.config.clone();
            let d = DiscParams::init(&cfg.discriminator, padfree_core::rng::hash_words(&[cfg.seed, 1]))?;
            Trainer::with_params(cfg.clone(), g, d)?
        }
        None => Trainer::new(cfg.clone())?,
    };
    let dir = out_dir(cli, "train-out")?;
    let config = json!({ "train": cfg, "init_checkpoint": cli.checkpoint, "selfssim_every": a.selfssim_every,
        "selfssim_seeds": a.selfssim_seeds, "out": dir });
    log_config("train", &config);

    let scales = [cfg.r_small, cfg.r_large()];
    let seeds: Vec<u64> = (0..a.selfssim_seeds as u64).map(|i| 1000 + i).collect();
    let measure = |t: &Trainer| -> CliResult<SelfSsimCheckpoint> {
        let report = generator_self_ssim(&t.generator, &seeds, &scales, scales[1], NoiseKind::GridSample, cfg.seed)?;
        Ok(SelfSsimCheckpoint { step: t.step, mean_cross_scale: report.mean_cross_scale(), report })
    };

    let report_path = dir.join("report.jsonl");
    let file = std::fs::File::create(&report_path).map_err(|e| CliError::io(&report_path, e))?;
    let mut report = BufWriter::new(file);
    let mut selfssim = Vec::new();
    let mut g_losses = Vec::with_capacity(cfg.steps);
    let start = Instant::now();
    for _ in 0..cfg.steps {
        let rec = trainer.train_step()?;
        let finite = [rec.g_loss, rec.d_loss].iter().chain(rec.r1.iter()).chain(rec.l1.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric(format!("non-finite loss at step {}", rec.step)).into());
        }
        g_losses.push(rec.g_loss);
        serde_json::to_writer(&mut report, &rec)?;
        report.write_all(b"\n").map_err(|e| CliError::io(&report_path, e))?;
        if a.selfssim_every > 0 && trainer.step % a.selfssim_every as u64 == 0 {
            selfssim.push(measure(&trainer)?);
        }
    }
    report.flush().map_err(|e| CliError::io(&report_path, e))?;
    let wall_clock = start.elapsed().as_secs_f64();

    let ckpt = dir.join("checkpoint.spck");
    checkpoint::save(&trainer.generator, &ckpt)?;
    let ma = moving_average(&g_losses, 50);
    let summary = json!({
        "steps": trainer.step,
        "wall_clock_s": wall_clock,
        "final_checkpoint": ckpt,
        "g_loss_moving_average": { "first": ma.first(), "last": ma.last() },
        "selfssim": selfssim,
    });
    write_json(&dir.join("manifest.json"), &json!({ "config": config, "summary": summary }))?;
    println!("{summary}");
    Ok(())
}

fn cmd_project(cli: &Cli, a: &ProjectArgs) -> CliResult<()> {
    let (params, weights) = load_generator(cli)?;
    let mut targets = Vec::with_capacity(a.target.len());
    for path in &a.target {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let ppm = Ppm::decode(&bytes)?;
        let s = padfree_core::FULL_FRAME_EXTENT / ppm.width.max(ppm.height) as f64;
        targets.push(ppm.to_patch(SampleSpec::new([0.0, 0.0], [s, s], [ppm.width, ppm.height])?)?);
    }
    let largest = targets.iter().map(|t| t.width().max(t.height())).max().unwrap_or(1);
    let noise = match NoiseKind::from(a.noise) {
        NoiseKind::Random => NoisePolicy::random(a.noise_seed),
        kind => NoisePolicy { kind, base_seed: a.noise_seed, base_spec: Some(SampleSpec::full_frame(largest)) },
    };
    let mut pc = ProjectConfig::new(a.steps, a.lr, noise);
    pc.optimizer = match a.optimizer {
        OptimizerArg::Sgd => Optimizer::Sgd,
        OptimizerArg::Adam => Optimizer::Adam,
    };
    let dir = out_dir(cli, "project-out")?;
    let config = json!({ "weights": weights, "targets": a.target, "project": pc, "out": dir });
    log_config("project", &config);

    let proj = project(&params, &targets, &pc)?;
    let mut images = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        let grid = grid_for_output(&params, &t.spec)?;
        let img = padfree_core::net::generate_with_styles(&params, &proj.styles, &grid, &noise)?;
        let name = image_name(&format!("reconstruction_{i}"), cli.format);
        write_image(&dir.join(&name), cli.format, &img)?;
        images.push(name);
    }
    write_json(&dir.join("manifest.json"), &json!({ "config": config, "projection": proj, "images": images }))?;
    println!("{}", json!({ "final_losses": proj.final_losses, "steps": a.steps }));
    Ok(())
}

fn cmd_audit(cli: &Cli, a: &AuditArgs) -> CliResult<()> {
    let seed = cli.seed.unwrap_or(0);
    let direct = *a.chain.last().ok_or_else(|| CliError::input("chain", "must not be empty"))?;
    let dir = out_dir(cli, "audit-out")?;
    let config = json!({ "field_seed": seed, "terms": a.terms, "from": a.from, "chain": a.chain, "out": dir });
    log_config("audit-resize", &config);
    let field = make_field(seed, a.terms)?;
    let patch = sample_field(&field, &SampleSpec::full_frame(a.from))?;
    let deviation = resize_transitivity(&patch, &a.chain, direct)?;
    let report = json!({ "deviation": deviation, "from": a.from, "chain": a.chain, "direct": direct });
    write_json(&dir.join("manifest.json"), &json!({ "config": config, "report": report }))?;
    println!("{report}");
    Ok(())
}

fn cmd_serve(cli: &Cli, a: &ServeArgs) -> CliResult<()> {
    let (params, weights) = load_generator(cli)?;
    let addr = format!("{}:{}", a.host, a.port);
    log_config("serve", &json!({ "weights": weights, "addr": addr, "max_resolution": a.max_resolution, "threads": a.threads }));
    let server = tiny_http::Server::http(&addr).map_err(|e| CliError::input("addr", format!("cannot bind {addr}: {e}")))?;
    eprintln!("listening on http://{}", server.server_addr());
    let state = ServiceState { params, max_resolution: a.max_resolution };
    server::run(Arc::new(server), Arc::new(state), a.threads);
    Ok(())
}
