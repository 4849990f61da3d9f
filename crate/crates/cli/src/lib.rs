//! Command-line front end: label generation, feature transforms, loss
//! evaluation, refinement, metrics, synthetic data, training and benchmarks.
//!
//! [`run`] returns the process exit code: 0 on success, 2 on a usage error,
//! 1 on a runtime error. Diagnostics go to standard error; results go to
//! files under `--out` or to standard output.

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use surround_cod::bench::bench_sacloss_seeded;
use surround_cod::imageio::{load_mask, save_gray, save_mask, save_rgb};
use surround_cod::metrics::evaluate_batch;
use surround_cod::ops::sigmoid_map;
use surround_cod::pipeline::{sample_seed, synth_sample_with_sigma, train_synthetic, TrainConfig};
use surround_cod::refine::{refine_chain, GuidanceBundle, GuidanceLayer};
use surround_cod::sacloss::{sacloss_multi_layer, SacConfig, SamplingMode, SignConvention};
use surround_cod::scct::{scct_forward, scct_inverse, ScctLayout};
use surround_cod::sct::{read_map, read_tensor, write_map, write_tensor};
use surround_cod::surround::{sigma_for_side, surrounding_label, surrounding_pyramid};
use surround_cod::Error;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "SURROUND_COD_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "surround-cod",
    version,
    about = "Surrounding-aware concealed object detection toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Soft surrounding label from a binary mask image.
    GenSurround(GenSurroundArgs),
    /// Stacked stride transform of an SCT1 tensor (or its inverse).
    Scct(ScctArgs),
    /// Contrastive loss of one or more feature layers, as JSON.
    Sacloss(SaclossArgs),
    /// Coarse-to-fine refinement of a coarse logit map.
    Refine(RefineArgs),
    /// Metrics for a directory of predictions against ground truth.
    Eval(EvalArgs),
    /// Synthetic concealed-object scenes.
    Synth(SynthArgs),
    /// Toy end-to-end training run.
    Train(TrainArgs),
    /// Timing of the four sampling modes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenSurroundArgs {
    /// Ground-truth mask (PNG/PGM; mid-grey and above is foreground).
    #[arg(long)]
    gt: PathBuf,
    /// Gaussian spread in pixels; defaults to the spread scaled to the mask size.
    #[arg(long)]
    sigma: Option<f64>,
    /// Extra average-pooled copies, e.g. `2,4`, written next to `--out`
    /// with an `_x<scale>` suffix.
    #[arg(long, value_delimiter = ',')]
    scales: Vec<usize>,
    /// Output label: `.png`/`.pgm` for 8-bit grayscale, `.sct` for SCT1.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScctArgs {
    /// SCT1 tensor.
    #[arg(long = "in", alias = "input")]
    input: PathBuf,
    /// Layer index 2, 3 or 4.
    #[arg(long, alias = "layer")]
    k: u8,
    #[arg(long)]
    inverse: bool,
    /// Output SCT1 file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SaclossArgs {
    /// SCT1 feature tensor; repeat once per layer.
    #[arg(long = "features", required = true)]
    features: Vec<PathBuf>,
    /// Layer index of each `--features`, in the same order.
    #[arg(long = "k", alias = "layer", required = true)]
    layers: Vec<u8>,
    /// Ground-truth mask at image resolution.
    #[arg(long)]
    gt: PathBuf,
    /// Precomputed surrounding label (SCT1, one channel); generated from
    /// `--gt` when absent.
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    /// full | high | sub | scct
    #[arg(long, default_value = "scct")]
    mode: SamplingMode,
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// hinge | literal
    #[arg(long, default_value = "hinge")]
    sign: SignConvention,
}

#[derive(Debug, Args)]
struct RefineArgs {
    /// Coarse logit map (SCT1, one channel) at the deepest layer.
    #[arg(long)]
    coarse: PathBuf,
    /// Object guidance tensors, deepest layer first.
    #[arg(long = "obj")]
    obj: Vec<PathBuf>,
    /// Surrounding guidance tensors, deepest layer first.
    #[arg(long = "sur")]
    sur: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of 8-bit prediction maps.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth masks with matching file stems.
    #[arg(long)]
    gt: PathBuf,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    side: usize,
    #[arg(long, default_value_t = 0.5)]
    difficulty: f64,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 64)]
    h: usize,
    #[arg(long, default_value_t = 64)]
    w: usize,
    #[arg(long, default_value_t = 16)]
    c: usize,
    /// Layer index 2, 3 or 4.
    #[arg(long = "k", alias = "layer", default_value_t = 3)]
    layer: u8,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long)]
    seed: u64,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn ensure_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| {
        Failure::Runtime(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| {
        Failure::Runtime(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("output")
        .to_string()
}

fn parent_dir(path: &Path) -> Outcome {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn save_label(path: &Path, map: &surround_cod::SoftMap) -> surround_cod::Result<()> {
    let is_sct = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("sct"));
    if is_sct {
        write_map(path, map)
    } else {
        save_gray(path, map)
    }
}

fn gen_surround(a: GenSurroundArgs) -> Outcome {
    let gt = load_mask(&a.gt)?;
    let sigma = a
        .sigma
        .unwrap_or_else(|| sigma_for_side(gt.height().max(gt.width())));
    let label = surrounding_label(&gt, sigma)?;
    let pyramid = surrounding_pyramid(&label, &a.scales)?;
    parent_dir(&a.out)?;
    save_label(&a.out, label.map())?;
    let ext = a.out.extension().and_then(|e| e.to_str()).unwrap_or("png");
    for (scale, map) in a.scales.iter().zip(&pyramid) {
        let path = a
            .out
            .with_file_name(format!("{}_x{scale}.{ext}", stem(&a.out)));
        save_label(&path, map)?;
    }
    println!("{} sigma {sigma}", a.out.display());
    Ok(())
}

fn scct(a: ScctArgs) -> Outcome {
    let layout = ScctLayout::for_layer(a.k)?;
    let t = read_tensor(&a.input)?;
    let out = if a.inverse {
        scct_inverse(&t, layout)?
    } else {
        scct_forward(&t, layout)?
    };
    parent_dir(&a.out)?;
    write_tensor(&a.out, &out)?;
    let (c, h, w) = out.shape();
    println!("{} {c}x{h}x{w}", a.out.display());
    Ok(())
}

fn sacloss(a: SaclossArgs) -> Outcome {
    if a.features.len() != a.layers.len() {
        return Err(Failure::Usage(format!(
            "{} --features but {} --k values",
            a.features.len(),
            a.layers.len()
        )));
    }
    let cfg = SacConfig {
        margin: a.margin,
        surround_threshold: a.threshold,
        mode: a.mode,
        sign_convention: a.sign,
    };
    let gt = load_mask(&a.gt)?;
    let lm = match &a.lm {
        Some(p) => read_map(p)?,
        None => {
            let sigma = a
                .sigma
                .unwrap_or_else(|| sigma_for_side(gt.height().max(gt.width())));
            surrounding_label(&gt, sigma)?.into_map()
        }
    };
    let features = a
        .features
        .iter()
        .zip(&a.layers)
        .map(|(p, &k)| Ok((read_tensor(p)?, k)))
        .collect::<surround_cod::Result<Vec<_>>>()?;
    let result = sacloss_multi_layer(&features, &gt, &lm, &cfg)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&result).expect("serializable")
    );
    Ok(())
}

fn refine(a: RefineArgs) -> Outcome {
    if a.obj.len() != a.sur.len() {
        return Err(Failure::Usage(format!(
            "{} --obj but {} --sur tensors",
            a.obj.len(),
            a.sur.len()
        )));
    }
    if a.obj.len() > 3 {
        return Err(Failure::Usage(
            "at most three refinement layers (4, 3, 2)".into(),
        ));
    }
    let coarse = read_map(&a.coarse)?;
    let layers = a
        .obj
        .iter()
        .zip(&a.sur)
        .enumerate()
        .map(|(i, (o, s))| {
            Ok(GuidanceLayer {
                layer: 4 - i as u8,
                g_obj: read_tensor(o)?,
                g_sur: read_tensor(s)?,
            })
        })
        .collect::<surround_cod::Result<Vec<_>>>()?;
    let o_f = refine_chain(&coarse, &GuidanceBundle::new(layers)?)?;
    ensure_dir(&a.out)?;
    write_map(a.out.join("o_f.sct"), &o_f)?;
    save_gray(a.out.join("o_f.png"), &sigmoid_map(&o_f))?;
    println!(
        "{} {}x{}",
        a.out.join("o_f.sct").display(),
        o_f.height(),
        o_f.width()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Outcome {
    let report = evaluate_batch(&a.pred, &a.gt)?;
    for s in &report.unmatched {
        eprintln!("unmatched: {s}");
    }
    for s in &report.failed {
        eprintln!("skipped: {s}");
    }
    if a.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_csv());
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Outcome {
    let sigma = a.sigma.unwrap_or_else(|| sigma_for_side(a.side));
    ensure_dir(&a.out)?;
    for i in 0..a.n {
        let s = synth_sample_with_sigma(sample_seed(a.seed, i), a.side, a.difficulty, sigma)?;
        save_rgb(a.out.join(format!("image_{i:04}.png")), &s.image)?;
        save_mask(a.out.join(format!("gt_{i:04}.png")), &s.gt)?;
        save_mask(a.out.join(format!("edge_{i:04}.png")), &s.edge)?;
        write_map(a.out.join(format!("lm_{i:04}.sct")), s.lm.map())?;
        write_tensor(a.out.join(format!("image_{i:04}.sct")), &s.image)?;
    }
    println!("{} samples in {}", a.n, a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = a.seed;
    cfg.validate()?;
    ensure_dir(&a.out)?;
    let outcome = train_synthetic(&cfg)?;
    write_text(&a.out.join("config.txt"), &cfg.to_kv())?;
    write_text(&a.out.join("loss_curve.csv"), &outcome.curve_csv())?;
    outcome.model.save(a.out.join("checkpoint.json"))?;
    write_text(&a.out.join("report.csv"), &outcome.report.to_csv())?;
    write_text(&a.out.join("report.json"), &outcome.report.to_json())?;
    if let Some(last) = outcome.curve.last() {
        println!(
            "final loss {:.6} after {} epochs",
            last.loss,
            outcome.curve.len()
        );
    }
    if let Some(m) = &outcome.report.means {
        println!(
            "holdout s_alpha {:.4} mae {:.4} e_phi {:.4}",
            m.s_alpha, m.mae, m.e_phi
        );
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Outcome {
    let results = bench_sacloss_seeded(a.h, a.w, a.c, a.layer, a.repeats, a.seed)?;
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&results).expect("serializable")
        );
    } else {
        println!("mode,wall_time,distance_evals,candidate_pairs,loss_value");
        for r in &results {
            println!(
                "{},{},{},{},{}",
                r.mode, r.wall_time, r.distance_evals, r.candidate_pairs, r.loss_value
            );
        }
    }
    Ok(())
}

fn configure_threads() {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .is_err()
            {
                log::debug!("thread pool already initialised");
            }
        }
        _ => log::warn!("ignoring {THREADS_ENV}={v:?}: expected a positive integer"),
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::GenSurround(a) => gen_surround(a),
        Command::Scct(a) => scct(a),
        Command::Sacloss(a) => sacloss(a),
        Command::Refine(a) => refine(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
