//! Command-line front end: encode a clip with or without dependency-
//! scaled multipliers, dump the per-block model state, run the probe
//! observation, sweep model accuracy, or compare rate-distortion
//! curves. Results land as CSV files in --out-dir.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tpl_core::codec::{CodecConfig, GopMode};
use tpl_core::csv::{write_csv, Cell};
use tpl_core::eval::{
    accuracy_rows, accuracy_sweep, bd_rows, compare_encoders, encode_with_model, observe_beta,
    observe_row, rd_rows, ModelKind, ACCURACY_HEADER, BD_HEADER, OBSERVE_HEADER, RD_HEADER,
};
use tpl_core::lambda::{build_lambda_maps_mbtree, build_lambda_maps_tpl};
use tpl_core::mbtree::{self, mbtree_pass, MbVariant};
use tpl_core::media::{parse_y4m, synth_sequence, Sequence, SynthKind};
use tpl_core::tpl::{self, analyze_sequence};
use tpl_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tpltool",
    version,
    about = "Motion-compensated coding testbed with temporal dependency models"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encode a clip and write per-frame statistics
    Encode(EncodeCmd),
    /// Run the model passes and dump per-block state
    TplDump(TplDumpCmd),
    /// Measure true dependency strength by perturbing one frame
    Observe(ObserveCmd),
    /// Sweep quantizers and compare each model against observation
    Accuracy(AccuracyCmd),
    /// Rate-distortion curves and average rate deltas per model
    Bdrate(BdrateCmd),
}

#[derive(Args, Clone)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Y4M clip to read
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Generate a deterministic synthetic clip instead
    #[arg(long, value_enum, value_name = "KIND")]
    synth: Option<SynthArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthArg {
    /// Textured frame repeated unchanged
    Static,
    /// Textured frame translated by (dx, dy) per frame
    Shift,
    /// Shift plus per-pixel noise
    NoisyShift,
    /// Static background, moving inverted patch, plus noise
    Scene,
}

#[derive(Args, Clone)]
struct SynthParams {
    /// Synthetic clip width in pixels
    #[arg(long, default_value_t = 96)]
    width: usize,
    /// Synthetic clip height in pixels
    #[arg(long, default_value_t = 96)]
    height: usize,
    /// Synthetic clip length in frames
    #[arg(long, default_value_t = 33)]
    frames: usize,
    /// Horizontal motion per frame for shifting clips
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    dx: i32,
    /// Vertical motion per frame for shifting clips
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    dy: i32,
    /// Noise amplitude for noisy-shift
    #[arg(long, default_value_t = 6)]
    noise: u8,
    /// Noise generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct GopArgs {
    /// Reference structure
    #[arg(long, value_enum, default_value_t = GopModeArg::Pyramid)]
    gop_mode: GopModeArg,
    /// Frames per group
    #[arg(long, default_value_t = 16)]
    gop_length: usize,
    /// Motion search range in pixels
    #[arg(long, default_value_t = 16)]
    search_range: i32,
}

#[derive(Clone, Copy, ValueEnum)]
enum GopModeArg {
    Pyramid,
    LowDelay,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    None,
    Tpl,
    Mbtree,
    MbtreeQuant,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> ModelKind {
        match m {
            ModelArg::None => ModelKind::Baseline,
            ModelArg::Tpl => ModelKind::Tpl,
            ModelArg::Mbtree => ModelKind::MbTree,
            ModelArg::MbtreeQuant => ModelKind::MbTreeQuant,
        }
    }
}

#[derive(Args)]
struct EncodeCmd {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    synth: SynthParams,
    #[command(flatten)]
    gop: GopArgs,
    /// Base quantizer step
    #[arg(long)]
    qstep: f64,
    /// Multiplier scaling model
    #[arg(long, value_enum, default_value_t = ModelArg::None)]
    model: ModelArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TplDumpCmd {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    synth: SynthParams,
    #[command(flatten)]
    gop: GopArgs,
    /// Base quantizer step
    #[arg(long)]
    qstep: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ObserveCmd {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    synth: SynthParams,
    #[command(flatten)]
    gop: GopArgs,
    /// Base quantizer step
    #[arg(long)]
    qstep: f64,
    /// Factor applied to the probe frame's quantizer
    #[arg(long, default_value_t = 1.1)]
    perturb_ratio: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AccuracyCmd {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    synth: SynthParams,
    #[command(flatten)]
    gop: GopArgs,
    /// Quantizer steps to sweep
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0, 36.0, 56.0])]
    qsteps: Vec<f64>,
    /// Factor applied to the probe frame's quantizer
    #[arg(long, default_value_t = 1.1)]
    perturb_ratio: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BdrateCmd {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    synth: SynthParams,
    #[command(flatten)]
    gop: GopArgs,
    /// Quantizer steps for the rate-distortion curves
    #[arg(long, value_delimiter = ',', default_values_t = [8.0, 16.0, 32.0, 56.0])]
    qsteps: Vec<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Loads or generates the clip and trims it to the longest prefix the
/// group structure can cover exactly.
fn load_sequence(source: &SourceArgs, synth: &SynthParams, gop_length: usize) -> Result<Sequence> {
    let seq = if let Some(path) = &source.input {
        parse_y4m(BufReader::new(File::open(path)?))?
    } else {
        let kind = match source.synth.expect("clap guarantees one source") {
            SynthArg::Static => SynthKind::Static,
            SynthArg::Shift => SynthKind::Shift { dx: synth.dx, dy: synth.dy },
            SynthArg::NoisyShift => SynthKind::NoisyShift {
                dx: synth.dx,
                dy: synth.dy,
                amplitude: synth.noise,
            },
            SynthArg::Scene => SynthKind::Scene {
                dx: synth.dx,
                dy: synth.dy,
                amplitude: synth.noise,
            },
        };
        synth_sequence(kind, synth.width, synth.height, synth.frames, synth.seed)?
    };
    let n = seq.frames.len();
    if n < 1 + gop_length {
        return Err(Error::Config(format!(
            "clip has {n} frames, need at least {} for one group",
            1 + gop_length
        )));
    }
    let usable = 1 + (n - 1) / gop_length * gop_length;
    if usable < n {
        eprintln!("note: trimming clip from {n} to {usable} frames to fill whole groups");
    }
    Ok(seq.prefix(usable))
}

fn codec_config(qstep: f64, gop: &GopArgs) -> CodecConfig {
    let mut cfg = CodecConfig::new(qstep);
    cfg.gop_mode = match gop.gop_mode {
        GopModeArg::Pyramid => GopMode::Pyramid,
        GopModeArg::LowDelay => GopMode::LowDelay,
    };
    cfg.gop_length = gop.gop_length;
    cfg.search_range = gop.search_range;
    cfg
}

fn out_path(dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}

fn run_encode(cmd: EncodeCmd) -> Result<()> {
    let seq = load_sequence(&cmd.source, &cmd.synth, cmd.gop.gop_length)?;
    let cfg = codec_config(cmd.qstep, &cmd.gop);
    let model = ModelKind::from(cmd.model);
    let report = encode_with_model(&seq, &cfg, model)?;
    let header = ["frame", "coding_order", "level", "qstep", "rate_bits", "sse", "psnr"];
    let rows: Vec<Vec<Cell>> = report
        .frames
        .iter()
        .map(|f| {
            vec![
                Cell::from(f.display),
                Cell::from(f.coding_order),
                Cell::from(f.level as i64),
                Cell::from(f.qstep),
                Cell::from(f.rate_bits as i64),
                Cell::from(f.sse as i64),
                Cell::from(f.psnr),
            ]
        })
        .collect();
    write_csv(out_path(&cmd.out_dir, "encode_frames.csv")?, &header, &rows)?;
    println!(
        "encoded {} frames model={} rate_kbps={:.3} psnr={:.3}",
        report.frames.len(),
        model.label(),
        report.kbps(seq.frame_rate),
        report.sequence_psnr()
    );
    Ok(())
}

fn run_tpl_dump(cmd: TplDumpCmd) -> Result<()> {
    let seq = load_sequence(&cmd.source, &cmd.synth, cmd.gop.gop_length)?;
    let cfg = codec_config(cmd.qstep, &cmd.gop);
    let analysis = analyze_sequence(&seq, &cfg)?;
    let tpl_rows = tpl::dump_rows(&analysis);
    write_csv(out_path(&cmd.out_dir, "tpl_blocks.csv")?, &tpl::DUMP_HEADER, &tpl_rows)?;

    let mb = mbtree_pass(&seq, &analysis.plan, &cfg, &analysis.flow)?;
    let mb_rows = mbtree::dump_rows(&mb, &analysis.plan);
    write_csv(out_path(&cmd.out_dir, "mbtree_blocks.csv")?, &mbtree::DUMP_HEADER, &mb_rows)?;

    let tpl_maps = build_lambda_maps_tpl(&analysis, &cfg)?;
    write_csv(
        out_path(&cmd.out_dir, "lambda_tpl.csv")?,
        &tpl_core::lambda::DUMP_HEADER,
        &tpl_core::lambda::dump_rows(&tpl_maps),
    )?;
    let mbq_maps = build_lambda_maps_mbtree(&mb, &analysis.plan, &cfg, MbVariant::Quant)?;
    write_csv(
        out_path(&cmd.out_dir, "lambda_mbtree_quant.csv")?,
        &tpl_core::lambda::DUMP_HEADER,
        &tpl_core::lambda::dump_rows(&mbq_maps),
    )?;
    println!(
        "dumped {} block rows, {} lookahead rows, {} multiplier maps",
        tpl_rows.len(),
        mb_rows.len(),
        tpl_maps.len()
    );
    Ok(())
}

fn run_observe(cmd: ObserveCmd) -> Result<()> {
    let seq = load_sequence(&cmd.source, &cmd.synth, cmd.gop.gop_length)?;
    let cfg = codec_config(cmd.qstep, &cmd.gop);
    let (obs, _, _) = observe_beta(&seq, &cfg, cmd.perturb_ratio)?;
    write_csv(
        out_path(&cmd.out_dir, "observe.csv")?,
        &OBSERVE_HEADER,
        &[observe_row(&obs)],
    )?;
    println!("qstep={} beta_obs={:.6}", obs.qstep, obs.beta_obs);
    Ok(())
}

fn run_accuracy(cmd: AccuracyCmd) -> Result<()> {
    let seq = load_sequence(&cmd.source, &cmd.synth, cmd.gop.gop_length)?;
    let cfg = codec_config(cmd.qsteps.first().copied().unwrap_or(16.0), &cmd.gop);
    let rows = accuracy_sweep(&seq, &cfg, &cmd.qsteps, cmd.perturb_ratio)?;
    write_csv(
        out_path(&cmd.out_dir, "accuracy.csv")?,
        &ACCURACY_HEADER,
        &accuracy_rows(&rows),
    )?;
    for r in &rows {
        println!(
            "qstep={} beta_obs={:.6} beta_tpl={:.6} beta_mb={:.6} beta_mbq={:.6}",
            r.qstep, r.beta_obs, r.beta_tpl, r.beta_mb, r.beta_mbq
        );
    }
    Ok(())
}

fn run_bdrate(cmd: BdrateCmd) -> Result<()> {
    let seq = load_sequence(&cmd.source, &cmd.synth, cmd.gop.gop_length)?;
    let cfg = codec_config(cmd.qsteps.first().copied().unwrap_or(16.0), &cmd.gop);
    let report = compare_encoders(&seq, &cfg, &cmd.qsteps)?;
    write_csv(out_path(&cmd.out_dir, "rd_curves.csv")?, &RD_HEADER, &rd_rows(&report))?;
    write_csv(out_path(&cmd.out_dir, "bd_summary.csv")?, &BD_HEADER, &bd_rows(&report))?;
    for b in &report.bd {
        println!(
            "model={} bd_rate_percent={:.4} runtime_ratio={:.3}",
            b.model.label(),
            b.bd_rate_percent,
            b.runtime_ratio
        );
    }
    Ok(())
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Encode(cmd) => run_encode(cmd),
        Cmd::TplDump(cmd) => run_tpl_dump(cmd),
        Cmd::Observe(cmd) => run_observe(cmd),
        Cmd::Accuracy(cmd) => run_accuracy(cmd),
        Cmd::Bdrate(cmd) => run_bdrate(cmd),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
