//! `dynrate` command-line front end.
//!
//! Diagnostics go to stderr; machine-readable results (JSON, one object per
//! line) go to stdout or to the requested output file.
//!
//! Exit codes:
//!
//! | code | meaning                                   |
//! |------|-------------------------------------------|
//! | 0    | success                                   |
//! | 1    | any other failure                         |
//! | 2    | usage error (bad flags)                   |
//! | 3    | insufficient data to fit                  |
//! | 4    | bitstream was made with a different codec |
//! | 5    | malformed or corrupt input file           |

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::analysis::{
    average_frame_rate_exact, bitrate_kbps, merge_report, parse_annotations, sweep_tau, tau_for_target_rate, to_f64,
};
use crate::codec::{self, pack, unpack, BitLayout, EncodeOptions};
use crate::error::Error;
use crate::features::{
    load_features, save_features, synth_acoustic_companion, synth_event_density, synth_piecewise_constant,
    synth_random_walk, FeatureSequence,
};
use crate::merge::{RefineMode, DEFAULT_L_MAX};
use crate::quant::{fsq_fit, rvq_fit_with_report, CodecModel};
use crate::rate::FrameRate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INSUFFICIENT_DATA: i32 = 3;
pub const EXIT_CODEC_MISMATCH: i32 = 4;
pub const EXIT_BAD_INPUT: i32 = 5;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nformats: FLXF v1 (features), FLXQ v1 (codec), FLXC v1 (bitstream)"
);

#[derive(Debug, Parser)]
#[command(name = "dynrate", version, long_version = LONG_VERSION, about = "Dynamic-frame-rate audio token codec")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit FSQ and RVQ quantizers from paired feature files.
    Fit(FitArgs),
    /// Encode a semantic/acoustic pair into an FLXC bitstream.
    Encode(EncodeArgs),
    /// Decode an FLXC bitstream to fixed-rate FLXF features.
    Decode(DecodeArgs),
    /// Average frame rate and bitrate over a range of thresholds.
    Sweep(SweepArgs),
    /// Per-frame merge report for a bitstream.
    Report(ReportArgs),
    /// Generate synthetic feature fixtures.
    Synth(SynthArgs),
    /// Run an end-to-end round-trip self-test.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RefinerArg {
    Identity,
    WindowedMean,
}

#[derive(Debug, Args)]
pub struct RefinerOpts {
    /// Context refiner applied to merged and unmerged sequences.
    #[arg(long, value_enum, default_value = "identity")]
    pub refiner: RefinerArg,
    /// Half-width of the windowed-mean refiner.
    #[arg(long, default_value_t = 8)]
    pub window: usize,
}

impl RefinerOpts {
    fn mode(&self) -> RefineMode {
        match self.refiner {
            RefinerArg::Identity => RefineMode::Identity,
            RefinerArg::WindowedMean => RefineMode::WindowedMean { window: self.window },
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Semantic FLXF file or directory of `.flxf` files.
    #[arg(long)]
    pub semantic: PathBuf,
    /// Acoustic FLXF file or directory; directory entries pair by file name.
    #[arg(long)]
    pub acoustic: PathBuf,
    /// FSQ low-rank dimensions.
    #[arg(long, default_value_t = 5)]
    pub dims: usize,
    /// FSQ levels per dimension.
    #[arg(long, default_value_t = 8)]
    pub levels: u32,
    /// Acoustic RVQ layers.
    #[arg(long, default_value_t = 7)]
    pub layers: usize,
    /// Codewords per RVQ layer.
    #[arg(long, default_value_t = 4096)]
    pub k: usize,
    /// Lloyd iterations per layer.
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output FLXQ codec file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("rate_control").required(true).args(["tau", "target_rate"]))]
pub struct EncodeArgs {
    #[arg(long)]
    pub semantic: PathBuf,
    #[arg(long)]
    pub acoustic: PathBuf,
    #[arg(long)]
    pub codec: PathBuf,
    /// Merging threshold.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Target average frame rate in Hz, e.g. `6.25` or `25/3`.
    #[arg(long)]
    pub target_rate: Option<FrameRate>,
    /// Tolerance for `--target-rate`, in Hz.
    #[arg(long, default_value_t = 0.3)]
    pub tol: f64,
    /// Total quantizer layers (1 = semantic only).
    #[arg(long, default_value_t = 8)]
    pub n_q: usize,
    #[arg(long, default_value_t = DEFAULT_L_MAX)]
    pub l_max: usize,
    #[command(flatten)]
    pub refine: RefinerOpts,
    /// Output FLXC file, or a directory when the inputs are directories.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub codec: PathBuf,
    #[command(flatten)]
    pub refine: RefinerOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Semantic FLXF file or directory.
    #[arg(long)]
    pub semantic: PathBuf,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',', conflicts_with = "grid")]
    pub taus: Option<Vec<f64>>,
    /// Evenly spaced thresholds as `start:end:count`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = DEFAULT_L_MAX)]
    pub l_max: usize,
    #[arg(long, default_value_t = 8)]
    pub n_q: usize,
    #[arg(long, default_value_t = 3)]
    pub len_bits: u32,
    #[arg(long, default_value_t = 15)]
    pub sem_bits: u32,
    #[arg(long, default_value_t = 12)]
    pub ac_bits: u32,
    /// Write results here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// FLXC bitstream.
    #[arg(long)]
    pub input: PathBuf,
    /// Labelled intervals, one `start end label` per line (seconds).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    RandomWalk,
    Piecewise,
    EventDensity,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "random-walk")]
    pub kind: SynthKind,
    /// Frame count (segment count for `piecewise`).
    #[arg(long, default_value_t = 500)]
    pub frames: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random-walk step scale.
    #[arg(long, default_value_t = 0.3)]
    pub step: f64,
    /// Event probability per frame for `event-density`.
    #[arg(long, default_value_t = 0.3)]
    pub density: f64,
    /// Scale of the acoustic detail added on top of the semantic frames.
    #[arg(long, default_value_t = 0.05)]
    pub detail: f64,
    #[arg(long)]
    pub out_semantic: PathBuf,
    #[arg(long)]
    pub out_acoustic: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses process arguments, runs the command and returns the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}

/// Maps an error chain to a documented exit code.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::InsufficientData { .. }) => EXIT_INSUFFICIENT_DATA,
        Some(Error::CodecMismatch { .. }) => EXIT_CODEC_MISMATCH,
        Some(Error::Format(_) | Error::Corrupt(_)) => EXIT_BAD_INPUT,
        _ => EXIT_FAILURE,
    }
}

pub fn execute(command: &Command) -> anyhow::Result<()> {
    match command {
        Command::Fit(a) => emit(&cmd_fit(a)?, None),
        Command::Encode(a) => {
            for line in cmd_encode(a)? {
                emit(&line, None)?;
            }
            Ok(())
        }
        Command::Decode(a) => emit(&cmd_decode(a)?, None),
        Command::Sweep(a) => {
            let lines = cmd_sweep(a)?;
            let text: String = lines.iter().map(|v| format!("{v}\n")).collect();
            write_text(&text, a.out.as_deref())
        }
        Command::Report(a) => {
            let text = cmd_report(a)?;
            write_text(&text, a.out.as_deref())
        }
        Command::Synth(a) => emit(&cmd_synth(a)?, None),
        Command::Check(a) => {
            let result = cmd_check(a)?;
            emit(&result, None)?;
            if result["passed"] != json!(true) {
                bail!("self-test failed");
            }
            Ok(())
        }
    }
}

fn emit(value: &Value, out: Option<&Path>) -> anyhow::Result<()> {
    write_text(&format!("{value}\n"), out)
}

fn write_text(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// A single file, or the sorted `.flxf` files of a directory.
fn list_features(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if !path.exists() {
        bail!("{} does not exist", path.display());
    }
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "flxf"))
            .collect();
        files.sort();
        if files.is_empty() {
            bail!("no .flxf files in {}", path.display());
        }
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

/// Semantic/acoustic file pairs. Directories pair entries by file name.
fn paired_inputs(semantic: &Path, acoustic: &Path) -> anyhow::Result<Vec<(PathBuf, PathBuf)>> {
    match (semantic.is_dir(), acoustic.is_dir()) {
        (false, false) => {
            for p in [semantic, acoustic] {
                if !p.is_file() {
                    bail!("{} is not a file", p.display());
                }
            }
            Ok(vec![(semantic.to_path_buf(), acoustic.to_path_buf())])
        }
        (true, true) => list_features(semantic)?
            .into_iter()
            .map(|s| {
                let a = acoustic.join(s.file_name().unwrap());
                if !a.is_file() {
                    bail!("no acoustic file {} for {}", a.display(), s.display());
                }
                Ok((s, a))
            })
            .collect(),
        _ => bail!("--semantic and --acoustic must both be files or both be directories"),
    }
}

fn load_pair(s: &Path, a: &Path) -> anyhow::Result<(FeatureSequence, FeatureSequence)> {
    let sem = load_features(s).with_context(|| format!("loading {}", s.display()))?;
    let ac = load_features(a).with_context(|| format!("loading {}", a.display()))?;
    Ok((sem, ac))
}

fn load_pairs(pairs: &[(PathBuf, PathBuf)]) -> anyhow::Result<Vec<(FeatureSequence, FeatureSequence)>> {
    pairs.par_iter().map(|(s, a)| load_pair(s, a)).collect()
}

pub fn cmd_fit(a: &FitArgs) -> anyhow::Result<Value> {
    let pairs = paired_inputs(&a.semantic, &a.acoustic)?;
    let data = load_pairs(&pairs)?;
    for (s, ac) in &data {
        if s.len() != ac.len() || s.dim() != ac.dim() {
            return Err(Error::Alignment(format!(
                "{} and {} do not align ({}x{} vs {}x{})",
                s.source_tag,
                ac.source_tag,
                s.len(),
                s.dim(),
                ac.len(),
                ac.dim()
            ))
            .into());
        }
    }
    let frames: usize = data.iter().map(|(s, _)| s.len()).sum();
    if frames < a.k {
        return Err(anyhow::Error::new(Error::InsufficientData {
            needed: a.k,
            got: frames,
        })
        .context("insufficient data for the requested codebook size"));
    }
    let semantic: Vec<FeatureSequence> = data.iter().map(|(s, _)| s.clone()).collect();
    let fsq = fsq_fit(&semantic, a.dims, a.levels).context("fitting FSQ")?;
    eprintln!(
        "fsq: d={} D={} L={} codebook={}",
        fsq.dim(),
        fsq.dims(),
        fsq.levels(),
        fsq.codebook_size()
    );

    let dim = fsq.dim();
    let residuals: Vec<f32> = data
        .par_iter()
        .flat_map_iter(|(s, ac)| {
            let fsq = &fsq;
            s.frames().zip(ac.frames()).flat_map(move |(sf, af)| {
                let recon = fsq.quantize(sf).recon;
                af.iter().zip(recon).map(|(&x, r)| x - r).collect::<Vec<_>>()
            })
        })
        .collect();
    let (rvq, reports) = rvq_fit_with_report(&residuals, dim, a.layers, a.k, a.iters, a.seed).context("fitting RVQ")?;
    for (i, r) in reports.iter().enumerate() {
        eprintln!(
            "rvq layer {}: residual mse {:.6e} after {} iterations ({} reseeds)",
            i + 1,
            r.residual_mse,
            r.objective.len() - 1,
            r.reseeded
        );
    }
    let model = CodecModel::new(fsq, rvq)?;
    model
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    let fp = model.fingerprint();
    eprintln!("codec fingerprint {fp:016x} -> {}", a.out.display());
    Ok(json!({
        "codec": a.out.display().to_string(),
        "fingerprint": format!("{fp:016x}"),
        "frames": frames,
        "fsq_codebook_size": model.fsq.codebook_size(),
        "rvq_layers": model.rvq.num_layers(),
        "rvq_k": model.rvq.k(),
        "layer_residual_mse": reports.iter().map(|r| r.residual_mse).collect::<Vec<_>>(),
    }))
}

fn encode_one(
    a: &EncodeArgs,
    model: &CodecModel,
    sem_path: &Path,
    ac_path: &Path,
    out: &Path,
) -> anyhow::Result<Value> {
    let (semantic, acoustic) = load_pair(sem_path, ac_path)?;
    let tau = match (a.tau, a.target_rate) {
        (Some(tau), _) => tau,
        (None, Some(target)) => {
            let found = tau_for_target_rate(&semantic, target.as_f64(), a.tol, a.l_max)?;
            eprintln!(
                "{}: tau {:.6} reaches {:.4} Hz for target {} Hz",
                sem_path.display(),
                found.tau,
                found.achieved_rate_hz,
                target
            );
            found.tau
        }
        (None, None) => bail!("either --tau or --target-rate is required"),
    };
    let opts = EncodeOptions {
        tau,
        n_q: a.n_q,
        l_max: a.l_max,
        refiner: a.refine.mode(),
    };
    let ts = codec::encode(&semantic, &acoustic, model, &opts)?;
    let bytes = pack(&ts, model.fingerprint())?;
    fs::write(out, &bytes).with_context(|| format!("writing {}", out.display()))?;
    let layout = ts.layout().bit_layout();
    let (rate_exact, rate, kbps) = if ts.source_frame_count() > 0 {
        let r = average_frame_rate_exact(&ts)?;
        (
            format!("{}/{}", r.numer(), r.denom()),
            to_f64(&r),
            bitrate_kbps(&ts, &layout)?.total_kbps,
        )
    } else {
        ("0/1".to_string(), 0.0, 0.0)
    };
    eprintln!(
        "{}: {} -> {} frames, {:.4} Hz, {:.4} kbps payload",
        out.display(),
        ts.source_frame_count(),
        ts.len(),
        rate,
        kbps
    );
    Ok(json!({
        "output": out.display().to_string(),
        "tau": tau,
        "n_q": ts.n_q(),
        "source_frames": ts.source_frame_count(),
        "merged_frames": ts.len(),
        "avg_rate_hz": rate,
        "avg_rate_exact": rate_exact,
        "payload_bits": ts.payload_bits(),
        "payload_kbps": kbps,
        "bytes": bytes.len(),
    }))
}

pub fn cmd_encode(a: &EncodeArgs) -> anyhow::Result<Vec<Value>> {
    let model = CodecModel::load(&a.codec).with_context(|| format!("loading codec {}", a.codec.display()))?;
    let pairs = paired_inputs(&a.semantic, &a.acoustic)?;
    if a.semantic.is_dir() {
        fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
        pairs
            .par_iter()
            .map(|(s, ac)| {
                let name = Path::new(s.file_name().unwrap()).with_extension("flxc");
                encode_one(a, &model, s, ac, &a.out.join(name))
            })
            .collect()
    } else {
        Ok(vec![encode_one(a, &model, &pairs[0].0, &pairs[0].1, &a.out)?])
    }
}

pub fn cmd_decode(a: &DecodeArgs) -> anyhow::Result<Value> {
    let model = CodecModel::load(&a.codec).with_context(|| format!("loading codec {}", a.codec.display()))?;
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let seq = codec::decode_bitstream(&bytes, &model, &a.refine.mode())
        .with_context(|| format!("decoding {}", a.input.display()))?;
    save_features(&seq, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("{}: {} frames at {} Hz", a.out.display(), seq.len(), seq.rate());
    Ok(json!({
        "output": a.out.display().to_string(),
        "frames": seq.len(),
        "rate_hz": seq.rate().as_f64(),
        "rate_exact": seq.rate().to_string(),
        "dim": seq.dim(),
    }))
}

fn parse_grid(grid: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = grid.split(':').collect();
    let [start, end, count] = parts.as_slice() else {
        bail!("grid must be start:end:count, got {grid:?}");
    };
    let start: f64 = start.parse().context("grid start")?;
    let end: f64 = end.parse().context("grid end")?;
    let count: usize = count.parse().context("grid count")?;
    if count == 0 {
        bail!("grid count must be >= 1");
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    Ok((0..count)
        .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
        .collect())
}

pub fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<Vec<Value>> {
    let taus = match (&a.taus, &a.grid) {
        (Some(t), _) => t.clone(),
        (None, Some(g)) => parse_grid(g)?,
        (None, None) => parse_grid("0.7:1.0:7")?,
    };
    let layout = BitLayout {
        len_bits: a.len_bits,
        sem_bits: a.sem_bits,
        ac_bits: a.ac_bits,
    };
    let files = list_features(&a.semantic)?;
    let curves: Vec<(PathBuf, _)> = files
        .par_iter()
        .map(|f| {
            let seq = load_features(f).with_context(|| format!("loading {}", f.display()))?;
            let curve = sweep_tau(&seq, &taus, a.l_max, a.n_q, &layout)?;
            Ok((f.clone(), curve))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut out = Vec::new();
    for (file, curve) in curves {
        for p in curve.points {
            out.push(json!({
                "input": file.display().to_string(),
                "tau": p.tau,
                "merged_frames": p.merged_frames,
                "avg_rate_hz": p.avg_rate_hz,
                "payload_kbps": p.payload_kbps,
            }));
        }
    }
    Ok(out)
}

pub fn cmd_report(a: &ReportArgs) -> anyhow::Result<String> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let ts = unpack(&bytes)?.stream;
    let labels = match &a.labels {
        Some(p) => Some(parse_annotations(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?),
        None => None,
    };
    Ok(merge_report(&ts, labels.as_deref())?.to_jsonl())
}

pub fn cmd_synth(a: &SynthArgs) -> anyhow::Result<Value> {
    let semantic = match a.kind {
        SynthKind::RandomWalk => synth_random_walk(a.frames, a.dim, a.step, a.seed),
        SynthKind::Piecewise => synth_piecewise_constant(a.frames, (1, 8), a.dim, a.seed).sequence,
        SynthKind::EventDensity => synth_event_density(a.frames, a.dim, a.density, a.seed),
    };
    save_features(&semantic, &a.out_semantic).with_context(|| format!("writing {}", a.out_semantic.display()))?;
    if let Some(path) = &a.out_acoustic {
        let acoustic = synth_acoustic_companion(&semantic, a.detail, a.seed.wrapping_add(1));
        save_features(&acoustic, path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(json!({
        "semantic": a.out_semantic.display().to_string(),
        "acoustic": a.out_acoustic.as_ref().map(|p| p.display().to_string()),
        "frames": semantic.len(),
        "dim": semantic.dim(),
        "rate_exact": semantic.rate().to_string(),
    }))
}

/// Fits a small codec on a synthetic pair and checks every round trip the
/// formats promise.
pub fn cmd_check(a: &CheckArgs) -> anyhow::Result<Value> {
    let mut results: BTreeMap<&str, bool> = BTreeMap::new();
    let semantic = synth_random_walk(600, 8, 0.25, a.seed);
    let acoustic = synth_acoustic_companion(&semantic, 0.05, a.seed.wrapping_add(1));

    let feat_ok = FeatureSequence::from_bytes(&semantic.to_bytes())? == semantic;
    results.insert("flxf_roundtrip", feat_ok);

    let fsq = fsq_fit(std::slice::from_ref(&semantic), 4, 8)?;
    let residuals: Vec<f32> = semantic
        .frames()
        .zip(acoustic.frames())
        .flat_map(|(s, ac)| {
            let r = fsq.quantize(s).recon;
            ac.iter().zip(r).map(|(&x, y)| x - y).collect::<Vec<_>>()
        })
        .collect();
    let (rvq, _) = rvq_fit_with_report(&residuals, 8, 3, 32, 8, a.seed)?;
    let model = CodecModel::new(fsq, rvq)?;
    let model_bytes = model.to_bytes();
    results.insert(
        "flxq_roundtrip",
        CodecModel::from_bytes(&model_bytes)?.to_bytes() == model_bytes,
    );

    let opts = EncodeOptions {
        tau: 0.9,
        n_q: 4,
        ..EncodeOptions::default()
    };
    let first = codec::encode_to_bitstream(&semantic, &acoustic, &model, &opts)?;
    let unpacked = unpack(&first)?;
    results.insert(
        "flxc_repack_identical",
        pack(&unpacked.stream, unpacked.fingerprint)? == first,
    );
    let decoded = codec::decode_bitstream(&first, &model, &RefineMode::Identity)?;
    results.insert("decode_preserves_length", decoded.len() == semantic.len());
    let second = codec::encode_to_bitstream(&semantic, &acoustic, &model, &opts)?;
    results.insert("encode_deterministic", first == second);

    let mut other = model.clone();
    let mut layer0 = other.rvq.layer(0).to_vec();
    layer0[0] += 1.0;
    let layers = (0..other.rvq.num_layers())
        .map(|i| {
            if i == 0 {
                layer0.clone()
            } else {
                other.rvq.layer(i).to_vec()
            }
        })
        .collect();
    other.rvq = crate::quant::RvqCodebooks::new(layers, other.rvq.k(), other.rvq.dim())?;
    let mismatch = matches!(
        codec::decode_bitstream(&first, &other, &RefineMode::Identity),
        Err(Error::CodecMismatch { .. })
    );
    results.insert("codec_mismatch_detected", mismatch);

    let mut corrupt = first.clone();
    corrupt[0] = b'X';
    results.insert("bad_magic_rejected", unpack(&corrupt).is_err());
    results.insert("truncation_rejected", unpack(&first[..first.len() - 1]).is_err());

    let passed = results.values().all(|&ok| ok);
    for (name, ok) in &results {
        eprintln!("{} {name}", if *ok { "ok  " } else { "FAIL" });
    }
    Ok(json!({ "passed": passed, "checks": results }))
}
