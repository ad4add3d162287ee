//! `specqd`: batch front end for seeded models, MXFP4 casting, speculative
//! generation benchmarks, GEMM benchmarks and the analytic speedup model.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use specqd_core::analytics::{linspace, roofline_rows, surface_csv, Machine, SurfaceSpec};
use specqd_core::io::{
    load_model, load_prompts, read_bench_csv, save_model, write_bench_csv, write_csv,
    write_run_outputs, PromptMode,
};
use specqd_core::qgemm::gemm_bench;
use specqd_core::specdec::{run_benchmark, DEFAULT_SPEC_LEN, DEFAULT_THRESHOLD};
use specqd_core::{
    ExecOptions, GemmPath, GemmShape, GenerationConfig, LevelSpec, LmConfig, SpecTree, TinyLmModel,
};

/// Environment variable capping kernel threads.
const THREADS_ENV: &str = "SPECQD_THREADS";

#[derive(Parser, Debug)]
#[command(name = "specqd", version, about = "MXFP4 speculative decoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Initialize a seeded reference-float model and save it.
    ModelInit(ModelInitArgs),
    /// Direct-cast every linear weight of a model to MXFP4.
    Quantize(QuantizeArgs),
    /// Greedy, speculative or multi-level speculative generation over a prompt file.
    Generate(GenerateArgs),
    /// Time the GEMM kernels on seeded data and write a CSV.
    GemmBench(GemmBenchArgs),
    /// Evaluate the analytic speedup model on a grid and write a CSV.
    SpeedupSurface(SurfaceArgs),
    /// Join a GEMM benchmark CSV with roofline predictions.
    Roofline(RooflineArgs),
}

#[derive(Args, Debug)]
struct ModelInitArgs {
    #[arg(long, default_value_t = LmConfig::default().vocab_size)]
    vocab_size: usize,
    #[arg(long, default_value_t = LmConfig::default().d_model)]
    d_model: usize,
    #[arg(long, default_value_t = LmConfig::default().n_layers)]
    n_layers: usize,
    #[arg(long, default_value_t = LmConfig::default().n_heads)]
    n_heads: usize,
    #[arg(long, default_value_t = LmConfig::default().d_ff)]
    d_ff: usize,
    #[arg(long, default_value_t = LmConfig::default().max_seq_len)]
    max_seq_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct QuantizeArgs {
    /// Model to cast.
    #[arg(long)]
    input: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PromptFormat {
    /// Whitespace-separated token ids, one prompt per line.
    Tokens,
    /// Raw text per line through the byte tokenizer.
    Bytes,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PathArg {
    Reference,
    LatescaleF32,
    Int8,
}

impl From<PathArg> for GemmPath {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Reference => GemmPath::Reference,
            PathArg::LatescaleF32 => GemmPath::LatescaleF32,
            PathArg::Int8 => GemmPath::Int8,
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Target model; its greedy output defines the result.
    #[arg(long)]
    target: PathBuf,
    /// Draft models, outermost first; each level drafts for the one above.
    #[arg(long)]
    draft: Vec<PathBuf>,
    /// Speculation length per draft level (one value applies to all levels).
    #[arg(long)]
    spec_len: Vec<usize>,
    /// Confidence threshold per draft level (one value applies to all levels).
    #[arg(long)]
    threshold: Vec<f32>,
    #[arg(long, default_value_t = 32)]
    max_new: usize,
    /// Prompt file.
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long, value_enum, default_value_t = PromptFormat::Tokens)]
    prompt_format: PromptFormat,
    /// Stop a prompt's generation after this token id.
    #[arg(long)]
    eos: Option<u32>,
    /// Kernel for MXFP4 linears.
    #[arg(long, value_enum, default_value_t = PathArg::Int8)]
    gemm_path: PathArg,
    /// Emulated weight-streaming bandwidth in bytes/s for every linear.
    #[arg(long)]
    simulated_bandwidth: Option<f64>,
    /// Fail unless every prompt's output equals greedy decoding.
    #[arg(long)]
    check_lossless: bool,
    /// Directory for summary.json, rounds.csv and acceptance.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GemmBenchArgs {
    /// Shapes as MxNxK, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4096x1x4096,4096x8x4096,11008x1x4096")]
    shapes: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "reference,latescale-f32,int8")]
    paths: Vec<PathArg>,
    #[arg(long, default_value_t = 9)]
    repetitions: usize,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SurfaceKind {
    /// Speedup over (alpha, S) for one draft level.
    Single,
    /// Speedup over (alpha_outer, alpha_inner) for two draft levels.
    Multi,
}

#[derive(Args, Debug)]
struct SurfaceArgs {
    #[arg(long, value_enum, default_value_t = SurfaceKind::Single)]
    kind: SurfaceKind,
    /// Grid points per alpha axis over [0, 1].
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Speculation length (outer level for the multi surface).
    #[arg(long, default_value_t = 4.0)]
    n: f64,
    /// Inner speculation length for the multi surface.
    #[arg(long, default_value_t = 4.0)]
    n_inner: f64,
    /// Draft speed ratios for the single surface.
    #[arg(long, value_delimiter = ',', default_value = "4,20,100")]
    speeds: Vec<f64>,
    /// Outer draft speed relative to the target (multi surface).
    #[arg(long, default_value_t = 4.0)]
    s1: f64,
    /// Inner draft speed relative to the target (multi surface).
    #[arg(long, default_value_t = 100.0)]
    s2: f64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RooflineArgs {
    /// CSV written by `gemm-bench`.
    #[arg(long)]
    bench: PathBuf,
    /// Memory bandwidth roof in GB/s.
    #[arg(long)]
    bandwidth_gbps: f64,
    /// `f32` compute roof in GFLOP/s.
    #[arg(long)]
    f32_gflops: f64,
    /// Integer multiply-accumulate throughput relative to `f32`.
    #[arg(long, default_value_t = 4.0)]
    int8_speedup: f64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::ModelInit(a) => model_init(a),
        Command::Quantize(a) => quantize(a),
        Command::Generate(a) => generate(a),
        Command::GemmBench(a) => bench(a),
        Command::SpeedupSurface(a) => surface(a),
        Command::Roofline(a) => roofline(a),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the kernel thread pool")
}

fn model_init(a: ModelInitArgs) -> Result<()> {
    let config = LmConfig {
        vocab_size: a.vocab_size,
        d_model: a.d_model,
        n_layers: a.n_layers,
        n_heads: a.n_heads,
        d_ff: a.d_ff,
        max_seq_len: a.max_seq_len,
        ..LmConfig::default()
    };
    let model = TinyLmModel::init_seeded(config, a.seed)?;
    save_model(&a.out, &model)?;
    println!("checksum {}", model.checksum());
    Ok(())
}

fn quantize(a: QuantizeArgs) -> Result<()> {
    let model = load_model(&a.input)?;
    let cast = model.direct_cast_mxfp4()?;
    save_model(&a.out, &cast)?;
    // the ratio is always against float storage of the same linears
    let float_bytes = cast.dequantized().linear_weight_bytes();
    let cast_bytes = cast.linear_weight_bytes();
    println!(
        "linear weights {float_bytes} -> {cast_bytes} bytes ({:.2}x smaller than f32)",
        float_bytes as f64 / cast_bytes as f64
    );
    println!("checksum {}", cast.checksum());
    Ok(())
}

/// Expands a per-level flag: empty takes the default, one value is shared.
fn per_level<T: Copy>(values: &[T], levels: usize, default: T, flag: &str) -> Result<Vec<T>> {
    match values.len() {
        0 => Ok(vec![default; levels]),
        1 => Ok(vec![values[0]; levels]),
        n if n == levels => Ok(values.to_vec()),
        n => bail!("--{flag} given {n} times for {levels} draft levels"),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let exec = ExecOptions {
        mxfp4_path: a.gemm_path.into(),
        simulated_bandwidth: a.simulated_bandwidth,
    };
    if let Some(bw) = a.simulated_bandwidth {
        ensure!(bw.is_finite() && bw > 0.0, "--simulated-bandwidth must be positive");
    }
    let load = |p: &Path| -> Result<TinyLmModel> { Ok(load_model(p)?.with_exec(exec)) };
    let target = load(&a.target)?;
    let drafts = a.draft.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let spec_lens = per_level(&a.spec_len, drafts.len(), DEFAULT_SPEC_LEN, "spec-len")?;
    let thresholds = per_level(&a.threshold, drafts.len(), DEFAULT_THRESHOLD, "threshold")?;

    let mut tree = SpecTree::new(&target);
    for ((draft, &n), &th) in drafts.iter().zip(&spec_lens).zip(&thresholds) {
        tree = tree.with_draft(LevelSpec::new(draft).with_spec_len(n).with_threshold(th))?;
    }
    let mode = match a.prompt_format {
        PromptFormat::Tokens => PromptMode::TokenIds,
        PromptFormat::Bytes => PromptMode::Bytes,
    };
    let prompts = load_prompts(&a.prompts, mode)?;
    let config = GenerationConfig { max_new: a.max_new, eos: a.eos };

    let report = run_benchmark(&tree, &prompts, config)?;
    let summary = write_run_outputs(&a.out, &report, a.check_lossless)?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for tokens in &report.outputs {
        let line: Vec<String> = tokens.iter().map(u32::to_string).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    eprintln!(
        "{}: {} prompts, geomean speedup {:.3}x, alpha {}",
        summary.mode,
        summary.prompts,
        summary.geomean_speedup,
        summary
            .alpha
            .iter()
            .skip(1)
            .map(|a| a.map_or("-".into(), |a| format!("{a:.3}")))
            .collect::<Vec<_>>()
            .join(" / ")
    );
    if a.check_lossless && !report.all_lossless() {
        let bad: Vec<usize> = report.prompts.iter().filter(|p| !p.lossless).map(|p| p.index).collect();
        bail!("speculative output differs from greedy decoding on prompts {bad:?}");
    }
    Ok(())
}

fn parse_shape(s: &str) -> Result<GemmShape> {
    let dims: Vec<usize> = s
        .split('x')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("shape {s:?} is not MxNxK"))?;
    let [m, n, k] = dims[..] else {
        bail!("shape {s:?} is not MxNxK");
    };
    Ok(GemmShape::new(m, n, k)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn bench(a: GemmBenchArgs) -> Result<()> {
    ensure!(a.repetitions > 0, "--repetitions must be positive");
    let shapes = a.shapes.iter().map(|s| parse_shape(s)).collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    for shape in shapes {
        for &path in &a.paths {
            let r = gemm_bench(shape, path.into(), a.repetitions)?;
            eprintln!(
                "{:>13} {}x{}x{}: {:.3} ms, {:.2} GB/s",
                r.path.name(),
                r.m,
                r.n,
                r.k,
                r.seconds * 1e3,
                r.gbps
            );
            records.push(r);
        }
    }
    let mut w = create(&a.out)?;
    write_bench_csv(&mut w, &records)?;
    w.flush()?;
    Ok(())
}

fn surface(a: SurfaceArgs) -> Result<()> {
    ensure!(a.points >= 2, "--points must be at least 2");
    let alphas = linspace(0.0, 1.0, a.points);
    let spec = match a.kind {
        SurfaceKind::Single => SurfaceSpec::Single {
            alphas,
            n: a.n,
            speeds: a.speeds,
        },
        SurfaceKind::Multi => SurfaceSpec::Multi {
            alphas_outer: alphas.clone(),
            alphas_inner: alphas,
            n_outer: a.n,
            n_inner: a.n_inner,
            s1: a.s1,
            s2: a.s2,
        },
    };
    let text = surface_csv(&spec)?;
    let mut w = create(&a.out)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn roofline(a: RooflineArgs) -> Result<()> {
    for (v, flag) in [
        (a.bandwidth_gbps, "bandwidth-gbps"),
        (a.f32_gflops, "f32-gflops"),
        (a.int8_speedup, "int8-speedup"),
    ] {
        ensure!(v.is_finite() && v > 0.0, "--{flag} must be positive");
    }
    let f = File::open(&a.bench).with_context(|| format!("opening {}", a.bench.display()))?;
    let records = read_bench_csv(BufReader::new(f))?;
    let machine = Machine {
        bandwidth: a.bandwidth_gbps * 1e9,
        f32_compute: a.f32_gflops * 1e9,
        int8_speedup: a.int8_speedup,
    };
    let rows = roofline_rows(&records, machine)?;
    let mut w = create(&a.out)?;
    write_csv(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}
