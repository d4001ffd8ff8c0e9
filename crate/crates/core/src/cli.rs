//! Command-line surface: configuration, run directories and subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::app_trainer::{AppLossWeights, AppTrainConfig, AppTrainer, JointConfig, JointTrainer, MaskSource, PathMode};
use crate::error::{Error, Result};
use crate::losses::{ExtractorConfig, GenAdvForm};
use crate::metrics::{evaluate, train_proxy_classifier, train_proxy_segmenter, EvalConfig, Method, MetricsReport, ProxyConfig, Proxies};
use crate::models::{load_checkpoint, save_checkpoint, ArchConfig, Checkpoint, NetRole};
use crate::optim::AdamConfig;
use crate::pipeline::{run_iterations, train_visible_segmenter, MaskNetConfig, Models, VisibleSegmenter};
use crate::seg_trainer::{DiscMode, SegLossWeights, SegTrainConfig, SegTrainer};
use crate::silhouette_pool::{build_procedural_pool, import_silhouettes, read_pool, write_pool, AlignJitter, SilhouettePool, DEFAULT_POOL_SIZE, POOL_INDEX};
use crate::synth_data::{generate_dataset, read_dataset, write_dataset, SynthConfig, TrainingSample, MANIFEST_NAME};
use crate::train::{fingerprint, logs_to_jsonl, mix, Schedule};

pub const RUN_DIR_ENV: &str = "AMODAL_RUN_DIR";
pub const THREADS_ENV: &str = "AMODAL_THREADS";
const SPLIT_STRIDE: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Val,
    Test,
    Proxy,
}

impl Split {
    fn offset(self) -> u64 {
        self as u64 * SPLIT_STRIDE
    }

    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Proxy => "proxy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    pub proxy_samples: usize,
    /// Directory holding `<split>/manifest.jsonl`; synthesized in memory when absent.
    pub dataset_dir: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { train_samples: 512, val_samples: 64, test_samples: 512, proxy_samples: 256, dataset_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    pub size: usize,
    /// A written pool, or a directory of silhouette images to import, instead of generating.
    pub import_dir: Option<PathBuf>,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self { size: DEFAULT_POOL_SIZE, import_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegSection {
    pub weights: SegLossWeights,
    pub adv_form: GenAdvForm,
    pub disc_mode: DiscMode,
    pub adversarial: bool,
    pub schedule: Schedule,
    pub jitter: AlignJitter,
    pub max_nonfinite_steps: u32,
}

impl Default for SegSection {
    fn default() -> Self {
        let d = SegTrainConfig::default();
        Self {
            weights: d.weights,
            adv_form: d.adv_form,
            disc_mode: d.disc_mode,
            adversarial: d.adversarial,
            schedule: d.schedule,
            jitter: d.jitter,
            max_nonfinite_steps: d.max_nonfinite_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppSection {
    pub weights: AppLossWeights,
    pub adv_form: GenAdvForm,
    pub path_mode: PathMode,
    pub mask_source: MaskSource,
    pub swap_path2_slots: bool,
    pub adversarial: bool,
    pub schedule: Schedule,
    pub max_nonfinite_steps: u32,
}

impl Default for AppSection {
    fn default() -> Self {
        let d = AppTrainConfig::default();
        Self {
            weights: d.weights,
            adv_form: d.adv_form,
            path_mode: d.path_mode,
            mask_source: d.mask_source,
            swap_path2_slots: d.swap_path2_slots,
            adversarial: d.adversarial,
            schedule: d.schedule,
            max_nonfinite_steps: d.max_nonfinite_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointSection {
    pub lr: f64,
    pub steps: u64,
    pub backflow: bool,
}

impl Default for JointSection {
    fn default() -> Self {
        let d = JointConfig::default();
        Self { lr: d.lr, steps: d.steps, backflow: d.backflow }
    }
}

/// Everything a run needs; every field has a default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    /// Worker-thread cap; all parallel reductions are order-deterministic.
    pub threads: Option<usize>,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub pool: PoolConfig,
    pub arch: ArchConfig,
    pub adam: AdamConfig,
    pub extractor: ExtractorConfig,
    pub seg: SegSection,
    pub app: AppSection,
    pub joint: JointSection,
    pub segmenter: MaskNetConfig,
    pub proxy: ProxyConfig,
    pub eval: EvalConfig,
}

impl Config {
    /// Narrow networks and short schedules that train on one CPU core in minutes.
    pub fn toy() -> Self {
        let arch = ArchConfig { gen_width: 24, res_blocks: 2, dilation: 2, disc_width: 8, disc_stages: 3, disc_max_width: 32 };
        let schedule = |steps| Schedule { lr_phases: [1e-3, 1e-4], batch_size: 4, steps, eval_every: 100, plateau_patience: 2, stop_at: None };
        Self {
            data: DataConfig { train_samples: 256, val_samples: 32, test_samples: 512, proxy_samples: 256, dataset_dir: None },
            pool: PoolConfig { size: 512, import_dir: None },
            arch,
            seg: SegSection { schedule: schedule(1000), ..SegSection::default() },
            app: AppSection { schedule: schedule(1500), ..AppSection::default() },
            joint: JointSection { steps: 50, ..JointSection::default() },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.arch.validate()?;
        self.seg.weights.validate()?;
        self.seg.schedule.validate()?;
        self.app.weights.validate()?;
        self.app.schedule.validate()?;
        let d = &self.data;
        if [d.train_samples, d.val_samples, d.test_samples, d.proxy_samples].iter().any(|&n| n as u64 >= SPLIT_STRIDE) {
            return Err(Error::InvalidConfig(format!("split sizes must stay below {SPLIT_STRIDE}")));
        }
        if self.seed > u64::MAX / (8 * SPLIT_STRIDE) {
            return Err(Error::InvalidConfig("seed too large".into()));
        }
        if self.pool.size == 0 {
            return Err(Error::InvalidConfig("pool size must be positive".into()));
        }
        if !(self.joint.lr > 0.0) {
            return Err(Error::InvalidConfig("joint learning rate must be positive".into()));
        }
        if self.eval.iterations == 0 {
            return Err(Error::InvalidConfig("eval.iterations must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        Ok(())
    }

    /// Canonical TOML text; parsing it yields an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }

    pub fn split_seed(&self, split: Split) -> u64 {
        self.seed * 8 * SPLIT_STRIDE + split.offset()
    }

    pub fn split_count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.data.train_samples,
            Split::Val => self.data.val_samples,
            Split::Test => self.data.test_samples,
            Split::Proxy => self.data.proxy_samples,
        }
    }

    pub fn seg_config(&self) -> SegTrainConfig {
        let s = &self.seg;
        SegTrainConfig {
            arch: self.arch.clone(),
            weights: s.weights,
            adv_form: s.adv_form,
            disc_mode: s.disc_mode,
            adversarial: s.adversarial,
            schedule: s.schedule.clone(),
            adam: self.adam,
            jitter: s.jitter,
            extractor: self.extractor.clone(),
            max_nonfinite_steps: s.max_nonfinite_steps,
            seed: mix(self.seed, 0x5E6, 0),
        }
    }

    pub fn app_config(&self) -> AppTrainConfig {
        let a = &self.app;
        AppTrainConfig {
            arch: self.arch.clone(),
            weights: a.weights,
            adv_form: a.adv_form,
            path_mode: a.path_mode,
            mask_source: a.mask_source,
            swap_path2_slots: a.swap_path2_slots,
            adversarial: a.adversarial,
            schedule: a.schedule.clone(),
            adam: self.adam,
            extractor: self.extractor.clone(),
            max_nonfinite_steps: a.max_nonfinite_steps,
            seed: mix(self.seed, 0xA99, 0),
        }
    }

    pub fn joint_config(&self) -> JointConfig {
        JointConfig { lr: self.joint.lr, steps: self.joint.steps, batch_size: self.app.schedule.batch_size, backflow: self.joint.backflow, seed: mix(self.seed, 0x701, 0) }
    }

    pub fn segmenter_config(&self) -> MaskNetConfig {
        MaskNetConfig { seed: mix(self.seed, 0x5E9, self.segmenter.seed), ..self.segmenter.clone() }
    }

    pub fn proxy_config(&self) -> ProxyConfig {
        ProxyConfig { seed: mix(self.seed, 0x9C0, self.proxy.seed), ..self.proxy.clone() }
    }

    /// Samples of a split, from the dataset directory when configured.
    pub fn load_split(&self, split: Split) -> Result<Vec<TrainingSample>> {
        match &self.data.dataset_dir {
            Some(dir) => read_dataset(&dir.join(split.name()).join(MANIFEST_NAME)),
            None => generate_dataset(&self.synth, self.split_seed(split), self.split_count(split)),
        }
    }

    pub fn load_pool(&self) -> Result<SilhouettePool> {
        match &self.pool.import_dir {
            Some(dir) if dir.join(POOL_INDEX).exists() => read_pool(&dir.join(POOL_INDEX)),
            Some(dir) => {
                let out = import_silhouettes(dir)?;
                for p in &out.skipped {
                    log::warn!("skipped silhouette without foreground: {}", p.display());
                }
                Ok(out.pool)
            }
            None => build_procedural_pool(self.pool.size, mix(self.seed, 0x9001, 0)),
        }
    }
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Config::parse(&text)
}

/// Run directory with its fixed layout.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub const LOCK: &'static str = "config.lock";

    /// Create the layout and pin the config; a different existing lock is an error.
    pub fn open(root: &Path, cfg: &Config) -> Result<Self> {
        for sub in ["checkpoints", "logs", "reports", "outputs"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        let lock = root.join(Self::LOCK);
        let text = cfg.to_toml();
        match fs::read_to_string(&lock) {
            Ok(existing) if existing != text => {
                return Err(Error::InvalidConfig(format!("{} was written by a different configuration", lock.display())));
            }
            Ok(_) => {}
            Err(_) => fs::write(&lock, &text).map_err(|e| Error::io(&lock, e))?,
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.ckpt"))
    }

    pub fn log(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(format!("{name}.jsonl"))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn outputs(&self) -> PathBuf {
        self.root.join("outputs")
    }

    pub fn load(&self, name: &str) -> Result<Checkpoint> {
        let p = self.checkpoint(name);
        if !p.exists() {
            return Err(Error::MissingArtifact(p));
        }
        load_checkpoint(&p)
    }

    /// The most trained checkpoint available: joint, then appearance.
    pub fn latest_full(&self) -> Result<Checkpoint> {
        if self.checkpoint("joint").exists() {
            return self.load("joint");
        }
        self.load("app")
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "amodal", about = "Amodal mask completion and appearance recovery for occluded vehicles")]
pub struct Cli {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in configuration used when no file is given.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    Toy,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run directory; `AMODAL_RUN_DIR` overrides the default `runs/default`.
    #[arg(long)]
    pub run: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset split.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Train)]
        split: Split,
    },
    /// Build or import the silhouette pool.
    Pool {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train mask completion (and the visible segmenter).
    TrainSeg(RunArgs),
    /// Train appearance recovery.
    TrainApp(RunArgs),
    /// Fine-tune both stages end to end.
    TrainJoint(RunArgs),
    /// Recover one image.
    Infer {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        image: PathBuf,
        /// Visible mask of the target; the trained segmenter is used otherwise.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint and the copy-input baseline on the test split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Train and score an ablation variant.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(value_enum)]
        variant: Ablation,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// One discriminator with the standard objective, no silhouettes.
    SingleDisc,
    Coupled,
    /// Path 1 only.
    OnePath,
    TwoPath,
    /// Score iterations 1, 2 and 3 of the trained pipeline.
    Iters,
}

impl Ablation {
    fn name(self) -> &'static str {
        match self {
            Ablation::SingleDisc => "single-disc",
            Ablation::Coupled => "coupled",
            Ablation::OnePath => "one-path",
            Ablation::TwoPath => "two-path",
            Ablation::Iters => "iters",
        }
    }
}

fn run_root(args: &RunArgs) -> PathBuf {
    args.run.clone().or_else(|| std::env::var_os(RUN_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("runs/default"))
}

fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match (&cli.config, cli.preset) {
        (Some(path), Preset::Default) => load_config(path)?,
        (Some(_), Preset::Toy) => return Err(Error::InvalidConfig("--config and --preset toy are mutually exclusive".into())),
        (None, Preset::Default) => Config::default(),
        (None, Preset::Toy) => Config::toy(),
    };
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()) {
        cfg.threads = Some(n);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parse `argv` and execute; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    if let Some(n) = cfg.threads {
        // A global pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Synth { out, split } => {
            let samples = generate_dataset(&cfg.synth, cfg.split_seed(*split), cfg.split_count(*split))?;
            let manifest = write_dataset(&samples, out)?;
            println!("{} samples -> {}", samples.len(), manifest.display());
        }
        Command::Pool { out } => {
            let pool = cfg.load_pool()?;
            let index = write_pool(&pool, out)?;
            println!("{} silhouettes -> {}", pool.len(), index.display());
        }
        Command::TrainSeg(args) => {
            let rd = RunDir::open(&run_root(args), &cfg)?;
            train_seg_stage(&cfg, &rd)?;
        }
        Command::TrainApp(args) => {
            let rd = RunDir::open(&run_root(args), &cfg)?;
            train_app_stage(&cfg, &rd)?;
        }
        Command::TrainJoint(args) => {
            let rd = RunDir::open(&run_root(args), &cfg)?;
            let ckpt = rd.load("app")?;
            let seg = SegTrainer::new(cfg.seg_config())?;
            let app = AppTrainer::new(cfg.app_config())?;
            let out = JointTrainer { seg: &seg, app: &app, config: cfg.joint_config() }.train(&cfg.load_split(Split::Train)?, &ckpt, &cfg.load_pool()?)?;
            let mut c = out.checkpoint;
            if let Some(s) = ckpt.nets.get(&NetRole::Segmenter) {
                c.nets.insert(NetRole::Segmenter, s.clone());
            }
            save_checkpoint(&c, &rd.checkpoint("joint"))?;
            write(&rd.log("joint"), &logs_to_jsonl(&out.logs))?;
        }
        Command::Infer { run, image, mask, checkpoint, iterations, out } => {
            let rd = RunDir::open(&run_root(run), &cfg)?;
            let ckpt = match checkpoint {
                Some(p) if !p.exists() => return Err(Error::MissingArtifact(p.clone())),
                Some(p) => load_checkpoint(p)?,
                None => rd.latest_full()?,
            };
            let models = Models::from_checkpoint(&ckpt)?;
            let segmenter = match mask {
                Some(p) => VisibleSegmenter::from_file(p)?,
                None => VisibleSegmenter::Trained(
                    models.segmenter.clone().ok_or_else(|| Error::InvalidInput("no --mask given and the checkpoint has no trained segmenter".into()))?,
                ),
            };
            let img = crate::image::ImageTensor::read_png(image)?;
            let k = iterations.unwrap_or(cfg.eval.iterations);
            let results = run_iterations(&models, &segmenter, &img, k)?;
            let dir = out.clone().unwrap_or_else(|| rd.outputs());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let mut index = Vec::new();
            for r in &results {
                let t = r.iteration_index;
                let files = [
                    (format!("iter{t}_visible.png"), &r.visible_mask),
                    (format!("iter{t}_mask.png"), &r.completed_mask),
                    (format!("iter{t}_invisible.png"), &r.invisible_region),
                ];
                for (name, m) in &files {
                    m.write_png(&dir.join(name))?;
                }
                r.generator_image.write_png(&dir.join(format!("iter{t}_generated.png")))?;
                r.recovered_image.write_png(&dir.join(format!("iter{t}_recovered.png")))?;
                index.push(serde_json::json!({
                    "iteration": t,
                    "visible": files[0].0, "mask": files[1].0, "invisible": files[2].0,
                    "generated": format!("iter{t}_generated.png"), "recovered": format!("iter{t}_recovered.png"),
                }));
            }
            write(&dir.join("index.json"), &serde_json::to_string_pretty(&index)?)?;
            println!("{k} iterations -> {}", dir.display());
        }
        Command::Eval { run, checkpoint, iterations } => {
            let rd = RunDir::open(&run_root(run), &cfg)?;
            let ckpt = match checkpoint {
                Some(p) if !p.exists() => return Err(Error::MissingArtifact(p.clone())),
                Some(p) => load_checkpoint(p)?,
                None => rd.latest_full()?,
            };
            let eval = EvalConfig { iterations: iterations.unwrap_or(cfg.eval.iterations), ..cfg.eval.clone() };
            let reports = eval_reports(&cfg, &ckpt, &eval, "eval")?;
            write_reports(&rd, "eval", &reports)?;
        }
        Command::Ablate { run, variant } => {
            let rd = RunDir::open(&run_root(run), &cfg)?;
            ablate(&cfg, &rd, *variant)?;
        }
    }
    Ok(())
}

fn train_seg_stage(cfg: &Config, rd: &RunDir) -> Result<Checkpoint> {
    let train = cfg.load_split(Split::Train)?;
    let val = cfg.load_split(Split::Val)?;
    let pool = cfg.load_pool()?;
    let out = SegTrainer::new(cfg.seg_config())?.train(&train, Some(&val), &pool, None)?;
    let mut ckpt = out.checkpoint;
    if cfg.segmenter.steps > 0 {
        ckpt.nets.insert(NetRole::Segmenter, train_visible_segmenter(&train, &cfg.segmenter_config())?);
    }
    save_checkpoint(&ckpt, &rd.checkpoint("seg"))?;
    write(&rd.log("seg"), &logs_to_jsonl(&out.logs))?;
    Ok(ckpt)
}

fn train_app_stage(cfg: &Config, rd: &RunDir) -> Result<Checkpoint> {
    let app_cfg = cfg.app_config();
    let seg = match app_cfg.mask_source {
        MaskSource::Predicted => Some(rd.load("seg")?),
        MaskSource::GroundTruth => None,
    };
    let train = cfg.load_split(Split::Train)?;
    let val = cfg.load_split(Split::Val)?;
    let out = AppTrainer::new(app_cfg)?.train(&train, Some(&val), seg.as_ref(), None)?;
    save_checkpoint(&out.checkpoint, &rd.checkpoint("app"))?;
    write(&rd.log("app"), &logs_to_jsonl(&out.logs))?;
    Ok(out.checkpoint)
}

/// Pipeline and copy-input reports on the test split.
fn eval_reports(cfg: &Config, ckpt: &Checkpoint, eval: &EvalConfig, label: &str) -> Result<Vec<MetricsReport>> {
    let test = cfg.load_split(Split::Test)?;
    let models = Models::from_checkpoint(ckpt)?;
    let proxy_cfg = cfg.proxy_config();
    let (clf, seg) = if eval.icp || eval.ss {
        let clean = cfg.load_split(Split::Proxy)?;
        (eval.icp.then(|| train_proxy_classifier(&clean, &proxy_cfg)).transpose()?, eval.ss.then(|| train_proxy_segmenter(&clean, &proxy_cfg)).transpose()?)
    } else {
        (None, None)
    };
    let proxies = Proxies { classifier: clf.as_ref(), segmenter: seg.as_ref() };
    let fp = cfg.fingerprint();
    Ok(vec![
        evaluate(Method::Pipeline(&models), &test, eval, proxies, label, &fp)?,
        evaluate(Method::CopyInput, &test, eval, proxies, "copy-input baseline", &fp)?,
    ])
}

fn write_reports(rd: &RunDir, name: &str, reports: &[MetricsReport]) -> Result<()> {
    let table: String = reports.iter().map(|r| r.to_table() + "\n").collect();
    print!("{table}");
    write(&rd.report(&format!("{name}.txt")), &table)?;
    write(&rd.report(&format!("{name}.jsonl")), &reports[0].rows_jsonl())?;
    write(&rd.report(&format!("{name}.json")), &serde_json::to_string_pretty(reports)?)
}

fn ablate(cfg: &Config, rd: &RunDir, variant: Ablation) -> Result<()> {
    let name = format!("ablate-{}", variant.name());
    let mut v = cfg.clone();
    let ckpt = match variant {
        Ablation::Iters => rd.latest_full()?,
        Ablation::SingleDisc | Ablation::Coupled => {
            v.seg.disc_mode = if variant == Ablation::SingleDisc { DiscMode::Single } else { DiscMode::Coupled };
            let sub = RunDir::open(&rd.root.join(&name), &v)?;
            train_seg_stage(&v, &sub)?;
            v.app.mask_source = MaskSource::Predicted;
            train_app_stage(&v, &sub)?
        }
        Ablation::OnePath | Ablation::TwoPath => {
            v.app.path_mode = if variant == Ablation::OnePath { PathMode::OnePath } else { PathMode::TwoPath };
            if variant == Ablation::OnePath {
                v.app.weights.lambda2 = 0.0;
                v.app.weights.beta2 = 0.0;
            }
            v.app.mask_source = MaskSource::Predicted;
            let sub = RunDir::open(&rd.root.join(&name), &v)?;
            // Both path variants share the run's stage-1 networks when they exist.
            match rd.load("seg") {
                Ok(seg) => save_checkpoint(&seg, &sub.checkpoint("seg"))?,
                Err(Error::MissingArtifact(_)) => {
                    train_seg_stage(&v, &sub)?;
                }
                Err(e) => return Err(e),
            }
            train_app_stage(&v, &sub)?
        }
    };
    let eval = if variant == Ablation::Iters { EvalConfig { iterations: 3, ..cfg.eval.clone() } } else { cfg.eval.clone() };
    let reports = eval_reports(cfg, &ckpt, &eval, &name)?;
    write_reports(rd, &name, &reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!((c.seg.weights.lambda_l1, c.seg.weights.beta_perc), (10.0, 1.0));
        assert_eq!((c.app.weights.lambda1, c.app.weights.lambda2, c.app.weights.beta1, c.app.weights.beta2), (10.0, 10.0, 1.0, 1.0));
        assert_eq!(c.seg.schedule.batch_size, 4);
        assert_eq!(c.seg.schedule.lr_phases, [1e-4, 1e-5]);
        assert_eq!(c.joint.lr, 1e-6);
        assert_eq!(c.eval.iterations, 2);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = Config::parse("sed = 3").unwrap_err().to_string();
        assert!(e.contains("sed"), "{e}");
        let e = Config::parse("[seg.weights]\nlambda = 3.0").unwrap_err().to_string();
        assert!(e.contains("lambda"), "{e}");
    }

    #[test]
    fn canonical_round_trip() {
        for c in [Config::default(), Config::toy()] {
            let text = c.to_toml();
            let back = Config::parse(&text).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_toml(), text);
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::parse("[synth]\nimage_size = 100").is_err());
        assert!(Config::parse("[seg.schedule]\nbatch_size = 0").is_err());
        assert!(Config::parse("[app.weights]\nlambda1 = -1.0").is_err());
    }

    #[test]
    fn split_seeds_do_not_overlap() {
        let c = Config::default();
        let seeds: Vec<u64> = [Split::Train, Split::Val, Split::Test, Split::Proxy].iter().map(|&s| c.split_seed(s)).collect();
        for w in seeds.windows(2) {
            assert!(w[1] - w[0] >= SPLIT_STRIDE);
        }
    }

    #[test]
    fn unknown_subcommand_fails() {
        assert_ne!(run(["amodal", "frobnicate"]), 0);
    }
}
