//! `phaseharm` command-line driver.
//!
//! Every report goes to stdout as JSON (or CSV for `sweep`). Exit status is 0
//! on success, 2 on invalid input and 1 on runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use phaseharm::descriptors::{
    describe, mean_flatness, select_coefficients, DescriptorSet, SelectionParams, DEFAULT_BETA,
};
use phaseharm::filterbank::{build_bank_1d, build_bank_2d, export_bank, frame_report, FilterBank};
use phaseharm::lbfgs::LbfgsConfig;
use phaseharm::phase_harmonics::{hhat_table, FilterKind};
use phaseharm::recovery::{decay_sweep, reconstruct, RecoveryConfig, Schedule, Weighting};
use phaseharm::signal_io::{
    gen_disk_image, gen_modulated_cosine_bins, gen_piecewise_regular, gen_white_noise, load_signal,
    save_signal, RngSpec, Signal,
};
use phaseharm::transform::analyze;
use phaseharm::{Error, Result};

#[derive(Parser)]
#[command(
    name = "phaseharm",
    version,
    about = "Wavelet phase harmonics: analysis, descriptors and recovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test signal as raw f64 plus JSON sidecar.
    GenSignal(GenArgs),
    /// Frame bounds (Littlewood-Paley sum) of a filter bank.
    FilterbankCheck(BankCheckArgs),
    /// Wavelet coefficients of a signal, one file per channel.
    Analyze(AnalyzeArgs),
    /// Harmonic means and correlations of a signal.
    Describe(DescribeArgs),
    /// Recover a signal from a descriptor file.
    Reconstruct(ReconstructArgs),
    /// PSNR against descriptor count over a list of scale ranges.
    Sweep(SweepArgs),
    /// Fourier coefficients of a phase filter.
    Hhat(HhatArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalKind {
    Piecewise,
    Modcos,
    Noise,
    Disk,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: SignalKind,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// 2 for an n x n image (noise only; disk is always 2D).
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of jumps of the piecewise signal.
    #[arg(long, default_value_t = 8)]
    singularities: usize,
    #[arg(long, default_value_t = 4)]
    nu_bin: usize,
    #[arg(long, default_value_t = 256)]
    lam_bin: usize,
    /// Disk radius in pixels.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    inside: f64,
    #[arg(long, default_value_t = 0.0)]
    outside: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct BankArgs {
    /// Signal dimension, 1 or 2.
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Number of octaves; defaults to log2 n.
    #[arg(long)]
    j: Option<usize>,
    /// Scales per octave (1D).
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// Number of angles (2D).
    #[arg(long, default_value_t = 4)]
    l: usize,
}

impl BankArgs {
    fn build(&self) -> Result<FilterBank> {
        let j = match self.j {
            Some(j) => j,
            None if self.n.is_power_of_two() => self.n.trailing_zeros() as usize,
            None => {
                return Err(Error::InvalidArgument(format!(
                    "n must be a power of two, got {}",
                    self.n
                )))
            }
        };
        match self.d {
            1 => build_bank_1d(self.n, j, self.q),
            2 => build_bank_2d(self.n, j, self.l),
            d => Err(Error::InvalidArgument(format!("d must be 1 or 2, got {d}"))),
        }
    }

    /// Same layout, with `n` taken from a signal.
    fn for_signal(&self, x: &Signal) -> Result<FilterBank> {
        BankArgs {
            d: x.dim(),
            n: x.side(),
            ..self.clone()
        }
        .build()
    }
}

#[derive(Args)]
struct BankCheckArgs {
    #[command(flatten)]
    bank: BankArgs,
    /// Also write every filter and a bank.json index here.
    #[arg(long)]
    export_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    bank: BankArgs,
    /// Directory for channel_XXX.c64 files (interleaved re, im) and index.json.
    #[arg(long)]
    dump_dir: PathBuf,
}

#[derive(Args, Clone)]
struct SelectArgs {
    #[arg(long, default_value_t = 4)]
    delta: usize,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = 16)]
    kprime_max: usize,
    #[arg(long)]
    no_lowpass: bool,
    /// 2D: pair different angles across scales.
    #[arg(long)]
    cross_angles: bool,
}

impl SelectArgs {
    fn params(&self) -> SelectionParams {
        SelectionParams {
            delta: self.delta,
            beta: self.beta,
            kprime_max: self.kprime_max,
            include_lowpass: !self.no_lowpass,
            cross_angles: self.cross_angles,
        }
    }
}

#[derive(Args)]
struct DescribeArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    bank: BankArgs,
    #[command(flatten)]
    select: SelectArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct OptimArgs {
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 200)]
    stage_iters: usize,
    #[arg(long, default_value_t = 10)]
    memory: usize,
    #[arg(long, default_value_t = 1e-4)]
    c1: f64,
    #[arg(long, default_value_t = 0.9)]
    c2: f64,
    #[arg(long, default_value_t = 1e-12)]
    grad_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    /// uniform or normalized
    #[arg(long, default_value = "normalized")]
    weighting: Weighting,
    /// direct or coarse-to-fine
    #[arg(long, default_value = "coarse-to-fine")]
    schedule: Schedule,
}

impl OptimArgs {
    fn config(&self) -> RecoveryConfig {
        RecoveryConfig {
            restarts: self.restarts,
            lbfgs: LbfgsConfig {
                memory: self.memory,
                max_iters: self.max_iters,
                c1: self.c1,
                c2: self.c2,
                grad_tol: self.grad_tol,
                ..LbfgsConfig::default()
            },
            rng: RngSpec::new(self.seed),
            init_scale: self.init_scale,
            weighting: self.weighting,
            schedule: self.schedule,
            stage_iters: self.stage_iters,
        }
    }
}

#[derive(Args)]
struct ReconstructArgs {
    /// Descriptor JSON written by `describe`.
    #[arg(long)]
    desc: PathBuf,
    #[command(flatten)]
    optim: OptimArgs,
    /// Original signal, for aligned PSNR.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// JSON report path; stdout only when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    bank: BankArgs,
    /// Comma-separated ascending scale ranges.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    deltas: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = 16)]
    kprime_max: usize,
    #[command(flatten)]
    optim: OptimArgs,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HhatArgs {
    /// rectifier, absolute or identity
    #[arg(long, default_value = "rectifier")]
    kind: FilterKind,
    #[arg(long, default_value_t = 8)]
    kmax: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSignal(a) => gen_signal(a),
        Command::FilterbankCheck(a) => filterbank_check(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Describe(a) => describe_cmd(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Hhat(a) => hhat_cmd(a),
    }
}

fn print_json(v: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn gen_signal(a: GenArgs) -> Result<()> {
    let x = match a.kind {
        SignalKind::Piecewise => gen_piecewise_regular(a.n, a.singularities, RngSpec::new(a.seed))?,
        SignalKind::Modcos => gen_modulated_cosine_bins(a.n, a.nu_bin, a.lam_bin)?,
        SignalKind::Noise => {
            let shape = match a.d {
                1 => vec![a.n],
                2 => vec![a.n, a.n],
                d => return Err(Error::InvalidArgument(format!("d must be 1 or 2, got {d}"))),
            };
            gen_white_noise(&shape, RngSpec::new(a.seed))?
        }
        SignalKind::Disk => gen_disk_image(
            a.n,
            a.radius.unwrap_or(a.n as f64 / 4.0),
            a.inside,
            a.outside,
        )?,
    };
    save_signal(&x, &a.out)?;
    print_json(&json!({
        "out": a.out,
        "shape": x.shape(),
        "max_abs": x.max_abs(),
        "mean": x.mean(),
        "std": x.std(),
    }))
}

fn filterbank_check(a: BankCheckArgs) -> Result<()> {
    let bank = a.bank.build()?;
    let r = frame_report(&bank);
    if let Some(dir) = &a.export_dir {
        export_bank(&bank, dir)?;
    }
    print_json(&json!({
        "bank": bank.spec(),
        "channels": bank.num_channels(),
        "eta": r.eta,
        "min_sum": r.min_sum,
        "max_sum": r.max_sum,
        "frame_scale": r.frame_scale,
        "band": r.band,
        "worst_freq": r.worst_freq,
        "grid_min": r.grid_min,
        "grid_max": r.grid_max,
    }))
}

fn analyze_cmd(a: AnalyzeArgs) -> Result<()> {
    let x = load_signal(&a.input)?;
    let bank = a.bank.for_signal(&x)?;
    let wx = analyze(&x, &bank)?;
    fs::create_dir_all(&a.dump_dir).map_err(|source| Error::Io {
        path: a.dump_dir.clone(),
        source,
    })?;
    let mut entries = Vec::new();
    for (i, (ch, c)) in bank.channels().iter().zip(&wx.coeffs).enumerate() {
        let name = format!("channel_{i:03}.c64");
        let bytes: Vec<u8> = c
            .iter()
            .flat_map(|v| [v.re.to_le_bytes(), v.im.to_le_bytes()])
            .flatten()
            .collect();
        let path = a.dump_dir.join(&name);
        fs::write(&path, bytes).map_err(|source| Error::Io { path, source })?;
        entries.push(
            json!({ "file": name, "label": ch.label, "center": ch.center, "weight": ch.weight }),
        );
    }
    let index =
        json!({ "bank": bank.spec(), "shape": x.shape(), "dtype": "c64le", "channels": entries });
    write_file(
        &a.dump_dir.join("index.json"),
        &serde_json::to_string_pretty(&index)?,
    )?;
    print_json(
        &json!({ "dump_dir": a.dump_dir, "channels": bank.num_channels(), "energy": wx.energy(&bank) }),
    )
}

fn describe_cmd(a: DescribeArgs) -> Result<()> {
    let x = load_signal(&a.input)?;
    let bank = a.bank.for_signal(&x)?;
    let sel = select_coefficients(&bank, a.select.params())?;
    let desc = describe(&x, &bank, &sel)?;
    desc.save(&bank, &a.out)?;
    print_json(&json!({
        "out": a.out,
        "m": desc.len(),
        "m_means": desc.means.len(),
        "m_corrs": desc.corrs.len(),
        "mean_flatness": mean_flatness(&desc, &bank),
    }))
}

fn reconstruct_cmd(a: ReconstructArgs) -> Result<()> {
    let desc = DescriptorSet::load(&a.desc)?;
    let bank = desc.bank.build()?;
    let reference = a.reference.as_ref().map(load_signal).transpose()?;
    let res = reconstruct(&desc, &bank, &a.optim.config(), reference.as_ref())?;
    save_signal(&res.signal, &a.out)?;
    let report = json!({
        "out": a.out,
        "m": res.m,
        "best": res.best,
        "loss": res.losses[res.best],
        "losses": res.losses,
        "restarts": res.restarts,
        "psnr": res.psnr,
        "shift": res.shift,
        "trace": res.trace,
    });
    if let Some(p) = &a.report {
        write_file(p, &serde_json::to_string_pretty(&report)?)?;
    }
    print_json(&json!({
        "out": a.out,
        "m": res.m,
        "loss": res.losses[res.best],
        "psnr": res.psnr,
        "shift": res.shift,
    }))
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let x = load_signal(&a.input)?;
    let bank = a.bank.for_signal(&x)?;
    let base = SelectionParams {
        beta: a.beta,
        kprime_max: a.kprime_max,
        ..SelectionParams::default()
    };
    let table = decay_sweep(&x, &bank, &a.deltas, base, &a.optim.config())?;
    let csv = table.to_csv();
    match &a.out {
        Some(p) => {
            write_file(p, &csv)?;
            print_json(&json!({ "out": p, "rows": table.rows.len(), "chi": table.chi }))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn hhat_cmd(a: HhatArgs) -> Result<()> {
    let h = hhat_table(a.kind, a.kmax)?;
    let entries: Vec<Value> = h
        .entries()
        .map(|(k, v)| json!({ "k": k, "re": v.re, "im": v.im }))
        .collect();
    print_json(&json!({
        "kind": a.kind,
        "kmax": a.kmax,
        "table_norm": h.table_norm(),
        "exact_norm": h.exact_norm(),
        "entries": entries,
    }))
}
