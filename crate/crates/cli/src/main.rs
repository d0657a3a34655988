//! `featreg`: command-line driver for training-free feature registration.

mod config;
mod overlay;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use featreg::io::atomic_write;
use featreg::*;
use serde::Serialize;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "featreg", version, about = "Training-free deformable 3D registration on dense features")]
struct Cli {
    /// JSON run configuration; command-line flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a NIfTI volume as MIND-SSC features.
    EncodeMind {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        patch_radius: Option<usize>,
        #[arg(long)]
        dilation: Option<usize>,
    },
    /// Fill skipped slices of sparsely encoded features.
    InterpGap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the slice layout stored in the input.
        #[arg(long)]
        gap: Option<usize>,
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        /// Full slice count to restore.
        #[arg(long)]
        extent: Option<usize>,
    },
    /// Reduce two feature volumes onto a shared principal basis.
    Pca {
        #[arg(long)]
        fixed: PathBuf,
        #[arg(long)]
        moving: PathBuf,
        #[arg(long)]
        out_fixed: PathBuf,
        #[arg(long)]
        out_moving: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<PcaModeArg>,
        /// Required for the low-rank mode.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Register moving to fixed and write the displacement field.
    Register(RegisterArgs),
    /// Resample a volume or label map through a displacement field.
    Warp {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Treat the input as an integer label map (nearest neighbour).
        #[arg(long)]
        labels: bool,
        #[arg(long, value_enum, default_value = "trilinear")]
        interp: InterpArg,
    },
    /// Combine two displacement fields.
    Ensemble {
        #[arg(value_enum)]
        mode: EnsembleMode,
        /// Field of the first (earlier) registration.
        #[arg(long)]
        first: PathBuf,
        /// Field of the second registration. With `sequential` it may be
        /// omitted when --fixed and --moving are given: the moving volume is
        /// then warped by the first field, re-encoded and registered again.
        #[arg(long)]
        second: Option<PathBuf>,
        #[arg(long)]
        fixed: Option<PathBuf>,
        #[arg(long)]
        moving: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a displacement field against landmarks and segmentations.
    Evaluate(EvaluateArgs),
    /// Write a checkerboard PNG of fixed vs (warped) moving mid-slices.
    Overlay {
        #[arg(long)]
        fixed: PathBuf,
        #[arg(long)]
        moving: PathBuf,
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Tile edge in pixels.
        #[arg(long, default_value_t = 16)]
        tile: usize,
    },
}

#[derive(Args)]
struct RegisterArgs {
    /// Fixed input: FTV features or a NIfTI volume (encoded with MIND-SSC).
    #[arg(long)]
    fixed: Option<PathBuf>,
    #[arg(long)]
    moving: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    search_radius: Option<usize>,
    #[arg(long)]
    quantization: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    reg_weight: Option<f64>,
    #[arg(long)]
    lcc_window: Option<usize>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long, requires = "landmarks_moving")]
    landmarks_fixed: Option<PathBuf>,
    #[arg(long, requires = "landmarks_fixed")]
    landmarks_moving: Option<PathBuf>,
    /// Fixed voxel spacing `z,y,x` in mm.
    #[arg(long, value_parser = parse_triple, default_value = "1,1,1")]
    spacing_fixed: [f64; 3],
    /// Moving voxel spacing `z,y,x` in mm; landmark errors use this spacing.
    #[arg(long, value_parser = parse_triple, default_value = "1,1,1")]
    spacing_moving: [f64; 3],
    #[arg(long, requires = "seg_moving")]
    seg_fixed: Option<PathBuf>,
    #[arg(long, requires = "seg_fixed")]
    seg_moving: Option<PathBuf>,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Z,
    Y,
    X,
}

#[derive(Clone, Copy, ValueEnum)]
enum PcaModeArg {
    Full,
    Lowrank,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Lcc,
    Ssd,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpArg {
    Trilinear,
    Nearest,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnsembleMode {
    Mean,
    Sequential,
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|p| format!("expected 3 comma-separated values, got {}", p.len()))
}

/// A failed run and its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Bad arguments, configuration or input files.
fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

/// A pipeline stage or output write went wrong.
fn stage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

trait OrFail<T> {
    fn input(self, what: &str) -> Outcome<T>;
    fn stage(self, what: &str) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> OrFail<T> for std::result::Result<T, E> {
    fn input(self, what: &str) -> Outcome<T> {
        self.map_err(|e| usage(e.into().context(what.to_string())))
    }

    fn stage(self, what: &str) -> Outcome<T> {
        self.map_err(|e| stage(e.into().context(what.to_string())))
    }
}

/// Runs `f` and logs how long it took.
fn timed<T>(name: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    log::info!("{name}: {:.2?}", t.elapsed());
    out
}

fn is_ftv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ftv"))
}

fn load_features(p: &Path) -> Outcome<FeatureVolume<f32>> {
    read_feature_tensor::<f32>(p)
        .and_then(FeatureTensor::into_features)
        .input(&format!("reading features {}", p.display()))
}

fn load_field(p: &Path) -> Outcome<DisplacementField<f32>> {
    read_feature_tensor::<f32>(p)
        .and_then(FeatureTensor::into_displacement)
        .input(&format!("reading field {}", p.display()))
}

fn load_volume(p: &Path) -> Outcome<Volume<f32>> {
    read_volume::<f32>(p).input(&format!("reading volume {}", p.display()))
}

/// FTV features as stored, or a NIfTI volume encoded with MIND-SSC.
fn features_or_mind(p: &Path, mind: &MindConfig) -> Outcome<FeatureVolume<f32>> {
    if is_ftv(p) {
        return load_features(p);
    }
    let v = load_volume(p)?;
    timed("encode-mind", || encode_mind_ssc(&v, mind)).stage("MIND encoding")
}

fn write_features(f: FeatureVolume<f32>, out: &Path) -> Outcome<()> {
    write_feature_tensor(&FeatureTensor::Features(f), out).stage("writing features")
}

fn write_field(u: DisplacementField<f32>, out: &Path) -> Outcome<()> {
    write_feature_tensor(&FeatureTensor::Displacement(u), out).stage("writing field")
}

fn write_json(value: &impl Serialize, out: Option<&Path>) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).stage("serializing report")?;
    match out {
        Some(p) => atomic_write(p, |w| {
            use std::io::Write;
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")
        })
        .stage("writing report"),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn register_pair(
    f: &FeatureVolume<f32>,
    m: &FeatureVolume<f32>,
    cc: &ConvexConfig,
    ac: &AdamConfig,
) -> Outcome<DisplacementField<f32>> {
    timed("register", || register(f, m, cc, ac)).stage("registration")
}

fn cmd_register(cfg: RunConfig, a: RegisterArgs) -> Outcome<()> {
    let fixed = a.fixed.or(cfg.fixed).ok_or_else(|| usage(anyhow!("no fixed input (--fixed or config key \"fixed\")")))?;
    let moving = a.moving.or(cfg.moving).ok_or_else(|| usage(anyhow!("no moving input (--moving or config key \"moving\")")))?;
    let out = a.out.or(cfg.output).ok_or_else(|| usage(anyhow!("no output path (--out or config key \"output\")")))?;

    let mut cc = cfg.convex.resolve();
    if let Some(r) = a.search_radius {
        cc.search_radius = r;
    }
    if let Some(q) = a.quantization {
        cc.quantization = q;
    }
    let mut ac = cfg.adam.resolve();
    if let Some(e) = a.epochs {
        ac.epochs = e;
    }
    if let Some(l) = a.learning_rate {
        ac.learning_rate = l;
    }
    if let Some(w) = a.reg_weight {
        ac.reg_weight = w;
    }
    if let Some(w) = a.lcc_window {
        ac.lcc_window = w;
    }
    if let Some(l) = a.loss {
        ac.loss = match l {
            LossArg::Lcc => Loss::Lcc,
            LossArg::Ssd => Loss::Ssd,
        };
    }
    cc.validate().input("convex configuration")?;
    ac.validate().input("adam configuration")?;

    let mind = cfg.mind.resolve();
    let f = features_or_mind(&fixed, &mind)?;
    let m = features_or_mind(&moving, &mind)?;
    let u = register_pair(&f, &m, &cc, &ac)?;
    log::info!("mean |u| = {:.4} voxels", u.mean_magnitude());
    write_field(u, &out)
}

#[derive(Serialize)]
struct EvaluationReport {
    tre_mm: Option<f64>,
    tre30_mm: Option<f64>,
    dice_per_label: Option<std::collections::BTreeMap<u32, f64>>,
    dice_mean: Option<f64>,
    sd_log_jacobian: f64,
    folded_voxel_count: usize,
    per_landmark_mm: Option<Vec<f64>>,
}

fn cmd_evaluate(a: EvaluateArgs) -> Outcome<()> {
    let u = load_field(&a.field)?;
    let mut report = EvaluationReport {
        tre_mm: None,
        tre30_mm: None,
        dice_per_label: None,
        dice_mean: None,
        sd_log_jacobian: 0.0,
        folded_voxel_count: 0,
        per_landmark_mm: None,
    };
    if let (Some(lf), Some(lm)) = (&a.landmarks_fixed, &a.landmarks_moving) {
        let set = read_landmarks(lf, lm, a.spacing_fixed, a.spacing_moving).input("reading landmarks")?;
        let t = tre(&set, &u).stage("TRE")?;
        report.tre30_mm = Some(tre30(&set, &u).stage("TRE30")?);
        report.tre_mm = Some(t.mean_mm);
        report.per_landmark_mm = Some(t.per_landmark_mm);
    }
    if let (Some(sf), Some(sm)) = (&a.seg_fixed, &a.seg_moving) {
        let sf = read_labels(sf).input("reading fixed segmentation")?;
        let sm = read_labels(sm).input("reading moving segmentation")?;
        let d = dice(&sf, &sm, &u).stage("Dice")?;
        report.dice_mean = Some(d.mean);
        report.dice_per_label = Some(d.per_label);
    }
    let j = sd_log_jacobian(&u).stage("Jacobian")?;
    report.sd_log_jacobian = j.sd_log_jacobian;
    report.folded_voxel_count = j.folded_voxel_count;
    write_json(&report, a.out.as_deref())
}

fn run(cli: Cli) -> Outcome<()> {
    let cfg = RunConfig::load(cli.config.as_deref()).map_err(usage)?;
    match cli.command {
        Command::EncodeMind { input, out, patch_radius, dilation } => {
            let mut mind = cfg.mind.resolve();
            if let Some(r) = patch_radius {
                mind.patch_radius = r;
            }
            if let Some(d) = dilation {
                mind.dilation = d;
            }
            mind.validate().input("MIND configuration")?;
            let v = load_volume(&input)?;
            let f = timed("encode-mind", || encode_mind_ssc(&v, &mind)).stage("MIND encoding")?;
            write_features(f, &out)
        }
        Command::InterpGap { input, out, gap, axis, extent } => {
            let f = load_features(&input)?;
            let layout = f.slice_layout;
            let gap = gap
                .or(layout.map(|l| l.gap))
                .ok_or_else(|| usage(anyhow!("--gap is required when the input has no slice layout")))?;
            let axis = match axis {
                Some(AxisArg::Z) => Axis::Z,
                Some(AxisArg::Y) => Axis::Y,
                Some(AxisArg::X) => Axis::X,
                None => layout.map_or(Axis::Z, |l| l.axis),
            };
            let dense = timed("interp-gap", || interpolate_slice_gap(&f, gap, axis, extent)).input("slice-gap interpolation")?;
            write_features(dense, &out)
        }
        Command::Pca { fixed, moving, out_fixed, out_moving, k, mode, seed } => {
            let mut pc = cfg.pca.resolve();
            if let Some(k) = k {
                pc.k = k;
            }
            if let Some(m) = mode {
                pc.mode = match m {
                    PcaModeArg::Full => PcaMode::Full,
                    PcaModeArg::Lowrank => PcaMode::LowRank,
                };
            }
            let seed = seed.or(cfg.pca.seed);
            if pc.mode == PcaMode::LowRank {
                pc.seed = seed.ok_or_else(|| usage(anyhow!("--seed is required for the low-rank PCA mode")))?;
            }
            let f = load_features(&fixed)?;
            let m = load_features(&moving)?;
            let (rf, rm) = timed("pca", || joint_pca(&f, &m, &pc)).stage("PCA")?;
            if let Some(ev) = &rf.explained_variance {
                log::info!("explained variance of {} components: {:.4}", ev.len(), ev.iter().sum::<f64>());
            }
            write_features(rf, &out_fixed)?;
            write_features(rm, &out_moving)
        }
        Command::Register(a) => cmd_register(cfg, a),
        Command::Warp { input, field, out, labels, interp } => {
            let u = load_field(&field)?;
            if labels {
                let l = read_labels(&input).input(&format!("reading labels {}", input.display()))?;
                let w = timed("warp", || warp_labels(&l, &u)).stage("warping labels")?;
                return write_labels(&w, &out).stage("writing labels");
            }
            let v = load_volume(&input)?;
            let interp = match interp {
                InterpArg::Trilinear => Interpolation::Trilinear,
                InterpArg::Nearest => Interpolation::Nearest,
            };
            let w = timed("warp", || warp_volume(&v, &u, interp)).stage("warping volume")?;
            write_volume(&w, &out).stage("writing volume")
        }
        Command::Ensemble { mode, first, second, fixed, moving, out } => {
            let a = load_field(&first)?;
            let combined = match (mode, second) {
                (EnsembleMode::Mean, None) => return Err(usage(anyhow!("mean mode needs --second"))),
                (EnsembleMode::Mean, Some(s)) => {
                    let b = load_field(&s)?;
                    mean_fields(&a, &b).input("averaging fields")?
                }
                (EnsembleMode::Sequential, Some(s)) => {
                    let b = load_field(&s)?;
                    chain_registrations(&a, &b).input("composing fields")?
                }
                (EnsembleMode::Sequential, None) => {
                    let (Some(fp), Some(mp)) = (fixed, moving) else {
                        return Err(usage(anyhow!("sequential mode needs --second, or --fixed and --moving")));
                    };
                    let mind = cfg.mind.resolve();
                    let f = features_or_mind(&fp, &mind)?;
                    let mv = load_volume(&mp)?;
                    let warped = timed("warp", || warp_volume(&mv, &a, Interpolation::Trilinear)).stage("warping moving volume")?;
                    let m = timed("encode-mind", || encode_mind_ssc(&warped, &mind)).stage("MIND encoding")?;
                    let b = register_pair(&f, &m, &cfg.convex.resolve(), &cfg.adam.resolve())?;
                    let b = upsample_field(&b, a.grid()).stage("resampling second field")?;
                    chain_registrations(&a, &b).stage("composing fields")?
                }
            };
            write_field(combined, &out)
        }
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Overlay { fixed, moving, field, out, tile } => {
            let f = load_volume(&fixed)?;
            let mut m = load_volume(&moving)?;
            if f.dims() != m.dims() {
                return Err(usage(anyhow!("fixed {:?} and moving {:?} differ in size", f.dims(), m.dims())));
            }
            if let Some(p) = field {
                let u = load_field(&p)?;
                m = warp_volume(&m, &u, Interpolation::Trilinear).stage("warping moving volume")?;
            }
            let (pixels, w, h) = overlay::checkerboard(&f, &m, tile);
            overlay::write_png(&out, &pixels, w, h).stage("writing PNG")
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
