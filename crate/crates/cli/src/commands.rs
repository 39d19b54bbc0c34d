use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use tat_core::episodic::{evaluate, train as train_episodes, DatasetManifest, EvalResult, FileSource, Split, VideoSource};
use tat_core::model::{load_checkpoint, save_checkpoint};
use tat_core::synth::{generate_benchmark, BenchmarkSpec, SyntheticSource};
use tat_core::trajectory::SamplingKind;
use tat_core::{Checkpoint, TatError};

use crate::config::{self, RunConfig};
use crate::plot::{bar_chart, Bar};
use crate::{
    AblateArgs, CliError, CommonArgs, EvalArgs, GenDataArgs, InitArgs, ModelArgs, OptimArgs, PipelineArgs,
    StrategyArg, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

const RESULT_SCHEMA_VERSION: u32 = 1;

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Core(TatError::io(dir, e)))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Core(TatError::io(path, e)))
}

fn load_spec(path: &Path) -> Result<BenchmarkSpec> {
    let text = fs::read_to_string(path).map_err(|_| CliError::Usage(format!("spec not found: {}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Usage(format!("invalid spec {}: {e}", path.display())))
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => load_spec(p)?,
        None => BenchmarkSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let manifest = generate_benchmark(&spec, &args.out)?;
    let base = manifest.entries.iter().filter(|e| e.split == Split::Base).count();
    println!(
        "wrote {} manifest rows ({base} base, {} novel) across {} classes to {}",
        manifest.entries.len(),
        manifest.entries.len() - base,
        manifest.class_names.len(),
        args.out.display()
    );
    Ok(())
}

fn load_run(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = config::load(common.config.as_deref(), &common.set)?;
    if let Some(d) = &common.data {
        cfg.data_dir = d.clone();
    }
    if let Some(c) = &common.checkpoint {
        cfg.checkpoint = c.clone();
    }
    Ok(cfg)
}

fn apply_pipeline(cfg: &mut RunConfig, a: &PipelineArgs) {
    let p = &mut cfg.train.pipeline;
    if let Some(v) = a.points {
        p.point_limit = v;
    }
    if let Some(v) = a.grid {
        p.grid_size = v;
    }
    if let Some(v) = a.frames {
        p.frames = Some(v);
    }
    if let Some(s) = a.strategy {
        p.strategy = strategy_kind(s, a);
    }
    if let Some(v) = a.dedup_delta {
        p.dedup_delta = Some(v);
    }
    if a.no_points {
        p.no_points = true;
    }
}

fn strategy_kind(s: StrategyArg, a: &PipelineArgs) -> SamplingKind {
    match s {
        StrategyArg::Random => SamplingKind::Random,
        StrategyArg::Length => SamplingKind::LengthStratified { num_bins: a.bins },
        StrategyArg::Hod => SamplingKind::HodClustered { num_clusters: a.clusters },
    }
}

fn apply_model(cfg: &mut RunConfig, a: &ModelArgs) {
    let m = &mut cfg.train.model;
    for (dst, v) in [(&mut m.dim, a.dim), (&mut m.depth, a.depth), (&mut m.heads, a.heads), (&mut m.mlp_ratio, a.mlp_ratio)] {
        if let Some(v) = v {
            *dst = v;
        }
    }
    if let Some(s) = a.model_seed {
        m.seed = s;
    }
}

fn apply_optim(cfg: &mut RunConfig, a: &OptimArgs) {
    let t = &mut cfg.train;
    for (dst, v) in [
        (&mut t.epochs, a.epochs),
        (&mut t.episodes_per_epoch, a.episodes_per_epoch),
        (&mut t.n_way, a.n_way),
        (&mut t.k_shot, a.k_shot),
        (&mut t.n_query, a.n_query),
    ] {
        if let Some(v) = v {
            *dst = v;
        }
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.grad_clip {
        t.grad_clip = Some(v);
    }
    if let Some(v) = a.tau {
        t.loss.temperature = v;
    }
    if let Some(v) = a.lambda_ce {
        t.loss.lambda_ce = v;
    }
    if let Some(v) = a.lambda_metric {
        t.loss.lambda_metric = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = &a.log {
        cfg.log = v.clone();
    }
}

/// File-backed source, or an in-memory regeneration when the requested grid
/// differs from the one the stored tracks were built with.
fn open_source(cfg: &RunConfig) -> Result<Box<dyn VideoSource>> {
    let spec_path = cfg.data_dir.join("spec.json");
    if spec_path.exists() {
        let mut spec: BenchmarkSpec = load_spec(&spec_path)?;
        let grid = cfg.train.pipeline.grid_size;
        if spec.grid_size != grid {
            eprintln!(
                "tracks in {} use a {g}x{g} grid; regenerating with {grid}x{grid} in memory",
                cfg.data_dir.display(),
                g = spec.grid_size
            );
            spec.grid_size = grid;
            return Ok(Box::new(SyntheticSource::new(spec)?));
        }
    }
    Ok(Box::new(FileSource::new(&cfg.data_dir)))
}

fn load_manifest(cfg: &RunConfig, explicit: Option<&Path>) -> Result<DatasetManifest> {
    let path = explicit.map_or_else(|| cfg.data_dir.join("manifest.csv"), Path::to_path_buf);
    if !path.exists() {
        return Err(CliError::Usage(format!("manifest not found: {}", path.display())));
    }
    Ok(DatasetManifest::load(&path)?)
}

/// The model must match the data before any training starts.
fn check_data(cfg: &RunConfig, manifest: &DatasetManifest, source: &dyn VideoSource) -> Result<()> {
    let base = manifest.classes(Split::Base).len();
    let model = &cfg.train.model;
    if base != model.num_base_classes {
        return Err(TatError::Data(format!(
            "manifest has {base} base classes, model expects {}",
            model.num_base_classes
        ))
        .into());
    }
    if let Some(e) = manifest.entries.first() {
        let (_, grid) = source.load(&e.video_id)?;
        if grid.dim != model.input_dim {
            return Err(TatError::Data(format!(
                "features have dimension {}, model input_dim is {}",
                grid.dim, model.input_dim
            ))
            .into());
        }
    }
    Ok(())
}

fn log_routing(cfg: &RunConfig) {
    let p = &cfg.train.pipeline;
    if p.no_points {
        eprintln!("tokens: no-points baseline, first {} patches per frame", p.point_limit);
        return;
    }
    match p.strategy {
        SamplingKind::Random => eprintln!("sampling: random, {} points per video", p.point_limit),
        SamplingKind::LengthStratified { num_bins } => {
            eprintln!("sampling: length-stratified over {num_bins} bins, {} points per video", p.point_limit)
        }
        SamplingKind::HodClustered { num_clusters } => {
            eprintln!("sampling: HOD clustering into {num_clusters} clusters, {} points per video", p.point_limit)
        }
    }
}

pub fn init(args: &InitArgs) -> Result<()> {
    let mut cfg = load_run(&args.common)?;
    apply_model(&mut cfg, &args.model);
    let ckpt = Checkpoint::init(cfg.train.model)?;
    save_checkpoint(&cfg.checkpoint, &ckpt)?;
    println!(
        "wrote initial checkpoint ({} parameters) to {}",
        ckpt.params.num_values(),
        cfg.checkpoint.display()
    );
    Ok(())
}

fn run_training(cfg: &RunConfig, log: Option<&Path>) -> Result<Checkpoint> {
    cfg.train.validate()?;
    let manifest = load_manifest(cfg, None)?;
    let source = open_source(cfg)?;
    check_data(cfg, &manifest, source.as_ref())?;
    log_routing(cfg);
    let mut writer = match log {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::Core(TatError::io(dir, e)))?;
            }
            Some(std::io::BufWriter::new(
                fs::File::create(p).map_err(|e| CliError::Core(TatError::io(p, e)))?,
            ))
        }
        None => None,
    };
    let total = cfg.train.total_episodes();
    let report = (total / 10).max(1);
    let mut window = Vec::with_capacity(report);
    let ckpt = train_episodes(&cfg.train, &manifest, source.as_ref(), None, &mut |r: &tat_core::episodic::LossRecord| {
        if let Some(w) = writer.as_mut() {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(w, "{line}").map_err(|e| TatError::io(log.expect("log path"), e))?;
        }
        window.push(r.total);
        if window.len() == report || r.episode + 1 == total {
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            eprintln!("episode {}/{total}: mean loss {mean:.4}", r.episode + 1);
            window.clear();
        }
        Ok(())
    })?;
    if let Some(mut w) = writer {
        w.flush().map_err(|e| CliError::Core(TatError::io(log.expect("log path"), e)))?;
    }
    Ok(ckpt)
}

pub fn train_cmd_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = load_run(&args.common)?;
    apply_pipeline(&mut cfg, &args.pipeline);
    apply_model(&mut cfg, &args.model);
    apply_optim(&mut cfg, &args.optim);
    Ok(cfg)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = train_cmd_config(args)?;
    let ckpt = run_training(&cfg, Some(&cfg.log))?;
    save_checkpoint(&cfg.checkpoint, &ckpt)?;
    println!(
        "trained {} episodes; checkpoint {}, log {}",
        cfg.train.total_episodes(),
        cfg.checkpoint.display(),
        cfg.log.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ResultJson {
    schema_version: u32,
    n_way: usize,
    k_shot: usize,
    episodes: usize,
    accuracy: f64,
    ci95: f64,
    seed: u64,
}

impl From<EvalResult> for ResultJson {
    fn from(r: EvalResult) -> Self {
        ResultJson {
            schema_version: RESULT_SCHEMA_VERSION,
            n_way: r.n_way,
            k_shot: r.k_shot,
            episodes: r.episodes,
            accuracy: r.accuracy,
            ci95: r.ci95,
            seed: r.seed,
        }
    }
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let mut cfg = load_run(&args.common)?;
    apply_pipeline(&mut cfg, &args.pipeline);
    let e = &mut cfg.eval;
    for (dst, v) in [(&mut e.n_way, args.n_way), (&mut e.k_shot, args.k_shot), (&mut e.n_query, args.n_query), (&mut e.episodes, args.episodes)] {
        if let Some(v) = v {
            *dst = v;
        }
    }
    if let Some(s) = args.seed {
        e.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.result = o.clone();
    }
    cfg.train.pipeline.validate()?;
    if !cfg.checkpoint.exists() {
        return Err(CliError::Usage(format!("checkpoint not found: {}", cfg.checkpoint.display())));
    }
    let ckpt = load_checkpoint(&cfg.checkpoint)?;
    let manifest = load_manifest(&cfg, args.manifest.as_deref())?;
    let source = open_source(&cfg)?;
    let result = evaluate(&ckpt, &manifest, source.as_ref(), &cfg.train.pipeline, &cfg.eval)?;
    println!(
        "{}-way {}-shot accuracy over {} episodes: {:.4} ± {:.4}",
        result.n_way, result.k_shot, result.episodes, result.accuracy, result.ci95
    );
    let json = serde_json::to_string_pretty(&ResultJson::from(result)).expect("result serializes");
    write_file(&cfg.result, format!("{json}\n").as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Frames,
    Points,
    Grid,
    Strategy,
    NoPoints,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Axis> {
        match s {
            "frames" => Ok(Axis::Frames),
            "points" => Ok(Axis::Points),
            "grid" => Ok(Axis::Grid),
            "strategy" => Ok(Axis::Strategy),
            "no-points" | "no_points" => Ok(Axis::NoPoints),
            other => Err(TatError::Config(format!(
                "unknown sweep axis '{other}' (expected frames, points, grid, strategy or no-points)"
            ))
            .into()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Frames => "frames",
            Axis::Points => "points",
            Axis::Grid => "grid",
            Axis::Strategy => "strategy",
            Axis::NoPoints => "no-points",
        }
    }

    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            Axis::Frames => &["2", "4", "6", "8"],
            Axis::Points => &["32", "64", "128", "256"],
            Axis::Grid => &["9", "16", "25"],
            Axis::Strategy => &["random", "length", "hod"],
            Axis::NoPoints => &["false", "true"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    fn apply(self, cfg: &mut RunConfig, value: &str, pipeline: &PipelineArgs) -> Result<()> {
        let bad = || CliError::Core(TatError::Config(format!("invalid {} value '{value}'", self.name())));
        let p = &mut cfg.train.pipeline;
        match self {
            Axis::Frames => p.frames = Some(value.parse().map_err(|_| bad())?),
            Axis::Points => p.point_limit = value.parse().map_err(|_| bad())?,
            Axis::Grid => p.grid_size = value.parse().map_err(|_| bad())?,
            Axis::Strategy => {
                let s = StrategyArg::from_str(value, true).map_err(|_| bad())?;
                p.strategy = strategy_kind(s, pipeline);
            }
            Axis::NoPoints => p.no_points = value.parse().map_err(|_| bad())?,
        }
        Ok(())
    }
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let mut base = load_run(&args.common)?;
    apply_pipeline(&mut base, &args.pipeline);
    apply_model(&mut base, &args.model);
    apply_optim(&mut base, &args.optim);
    if let Some(n) = args.eval_episodes {
        base.eval.episodes = n;
    }
    let out_dir: PathBuf = args.out_dir.clone().unwrap_or_else(|| base.ablation_dir.clone());
    let axes = args.axis.iter().map(|a| Axis::parse(a)).collect::<Result<Vec<_>>>()?;
    if !args.values.is_empty() && axes.len() != 1 {
        return Err(CliError::Usage("--values needs exactly one --axis".into()));
    }
    // validate every setting before spending time on training
    for &axis in &axes {
        let values = if args.values.is_empty() { axis.default_values() } else { args.values.clone() };
        for v in &values {
            let mut cfg = base.clone();
            axis.apply(&mut cfg, v, &args.pipeline)?;
            cfg.train.validate()?;
        }
    }
    let manifest = load_manifest(&base, None)?;
    for axis in axes {
        let values = if args.values.is_empty() { axis.default_values() } else { args.values.clone() };
        let mut csv = String::from("setting,accuracy,ci95\n");
        let mut bars = Vec::new();
        for v in &values {
            let mut cfg = base.clone();
            axis.apply(&mut cfg, v, &args.pipeline)?;
            eprintln!("{} = {v}", axis.name());
            let ckpt = run_training(&cfg, None)?;
            let source = open_source(&cfg)?;
            let r = evaluate(&ckpt, &manifest, source.as_ref(), &cfg.train.pipeline, &cfg.eval)?;
            eprintln!("{} = {v}: accuracy {:.4} ± {:.4}", axis.name(), r.accuracy, r.ci95);
            csv.push_str(&format!("{v},{},{}\n", r.accuracy, r.ci95));
            bars.push(Bar {
                label: v.clone(),
                value: r.accuracy,
                err: r.ci95,
            });
        }
        let stem = out_dir.join(axis.name());
        write_file(&stem.with_extension("csv"), csv.as_bytes())?;
        let title = format!("{}-way {}-shot accuracy by {}", base.eval.n_way, base.eval.k_shot, axis.name());
        write_file(&stem.with_extension("svg"), bar_chart(&title, axis.name(), &bars).as_bytes())?;
        println!("wrote {} and {}", stem.with_extension("csv").display(), stem.with_extension("svg").display());
    }
    Ok(())
}
