use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use corti::chirpstats::{corpus_summary, write_corpus_csv};
use corti::kernel::{discretize, mc_oracle, Axis, KernelParams};
use corti::pipeline::{KernelSettings, LiftSettings, StftSettings, WcSettings};
use corti::signal::{add_noise, gen_chirp, gen_sine, gen_vowel, read_wav, write_wav, BitDepth, Signal};
use corti::tfr::{StftConfig, WindowKind};
use corti::{default_eps_grid, denoise_sweep, process, PipelineConfig};

/// Malformed invocation or configuration; exits with status 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(
    name = "corti",
    version,
    about = "Chirpiness-lifted Wilson-Cowan processing of sound"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline on one WAV file; writes <out>.report.json beside the output.
    Process(ProcessArgs),
    /// Add noise at each level, process, and tabulate distances before and after.
    DenoiseSweep(SweepArgs),
    /// Fit a Cauchy law to the chirpiness of each file and report D_n.
    Chirpiness(ChirpinessArgs),
    /// Discretize the diffusion kernel on a grid and dump one row as CSV.
    KernelDump(KernelArgs),
    /// Write a synthetic test signal.
    Synth(SynthArgs),
}

fn with_default(text: &str, value: impl std::fmt::Display) -> String {
    format!("{text} [default: {value}]")
}

/// Pipeline parameters. Unset flags fall back to the config file, then to the built-in defaults.
#[derive(Args, Default)]
struct PipelineFlags {
    /// JSON config with objects `stft`, `lift`, `kernel`, `wc` and a scalar `mix`; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(
        long,
        help = "Analysis window length in samples [default: 2^ceil(log2(0.023 s * rate))]"
    )]
    window_size: Option<usize>,
    #[arg(long, help = "Hop in samples [default: window / 4]")]
    hop: Option<usize>,
    #[arg(long, value_parser = parse_window, help = "Analysis window: hann or hamming [default: hann]")]
    window: Option<WindowKind>,
    #[arg(long, help = with_default("Mask entries with |d|S|/dω| at or below eta times its maximum", LiftSettings::default().eta))]
    eta: Option<f64>,
    #[arg(long, help = with_default("Probability mass of the chirpiness interval", LiftSettings::default().p_value))]
    p_value: Option<f64>,
    #[arg(long, help = with_default("Number of chirpiness slots", LiftSettings::default().n_nu))]
    n_nu: Option<usize>,
    #[arg(long, help = "Kernel time in seconds [default: the interaction delay]")]
    kernel_delta: Option<f64>,
    #[arg(long, help = "Chirpiness diffusion b [default: 2 * slot_width^2 / kernel_delta]")]
    kernel_b: Option<f64>,
    #[arg(long, help = with_default("Decay rate α in 1/s", WcSettings::default().alpha))]
    alpha: Option<f64>,
    #[arg(long, help = with_default("Input gain β in 1/s", WcSettings::default().beta))]
    beta: Option<f64>,
    #[arg(long, help = with_default("Interaction gain γ in 1/s", WcSettings::default().gamma))]
    gamma: Option<f64>,
    #[arg(long, help = with_default("Sigmoid slope κ", WcSettings::default().kappa))]
    kappa: Option<f64>,
    #[arg(
        long,
        help = "Interaction delay in seconds, a multiple of the hop time [default: one hop]"
    )]
    delay: Option<f64>,
    #[arg(long, help = with_default("Euler substeps per frame", WcSettings::default().substeps))]
    substeps: Option<usize>,
    #[arg(long, help = with_default("Output blend: 0 = analysis/synthesis only, 1 = fully processed", 1.0))]
    mix: Option<f64>,
}

impl PipelineFlags {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| usage(format!("[cli] cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<PipelineConfig>(&text)
                    .map_err(|e| usage(format!("[cli] invalid config {}: {e}", path.display())))?
            }
            None => PipelineConfig::default(),
        };
        let StftSettings {
            window_size,
            hop,
            window_kind,
        } = &mut c.stft;
        set_some(window_size, self.window_size);
        set_some(hop, self.hop);
        set(window_kind, self.window);
        let LiftSettings { eta, p_value, n_nu } = &mut c.lift;
        set(eta, self.eta);
        set(p_value, self.p_value);
        set(n_nu, self.n_nu);
        let KernelSettings { delta, b } = &mut c.kernel;
        set_some(delta, self.kernel_delta);
        set_some(b, self.kernel_b);
        let w = &mut c.wc;
        set(&mut w.alpha, self.alpha);
        set(&mut w.beta, self.beta);
        set(&mut w.gamma, self.gamma);
        set(&mut w.kappa, self.kappa);
        set_some(&mut w.delay, self.delay);
        set(&mut w.substeps, self.substeps);
        set(&mut c.mix, self.mix);
        Ok(c)
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_some<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn parse_window(s: &str) -> Result<WindowKind, String> {
    match s {
        "hann" => Ok(WindowKind::Hann),
        "hamming" => Ok(WindowKind::Hamming),
        other => Err(format!("unknown window '{other}' (expected hann or hamming)")),
    }
}

#[derive(Args)]
struct ProcessArgs {
    /// Input WAV file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output WAV file [default: <in stem>.processed.wav beside the input].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output encoding: 16, 24 or f32.
    #[arg(long, default_value = "16")]
    bits: BitDepth,
    /// Write the input spectrogram; a `.bin` extension selects the binary format, anything else CSV.
    #[arg(long)]
    dump_spec: Option<PathBuf>,
    /// Write the chirpiness field as CSV.
    #[arg(long)]
    dump_chirpiness: Option<PathBuf>,
    /// Write the per-frame activation energy as CSV.
    #[arg(long)]
    trace_energy: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct SweepArgs {
    /// Clean input WAV file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Comma-separated noise levels [default: 12 log-spaced values in 0.001..0.3].
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Base seed; row i uses seed + i.
    #[arg(long, env = "CORTI_SEED", default_value_t = 0)]
    seed: u64,
    /// CSV output [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report with the config snapshot [default: <out>.report.json when --out is given].
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct ChirpinessArgs {
    /// WAV files to summarize.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// CSV output [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, help = with_default("Gradient mask threshold", LiftSettings::default().eta))]
    eta: Option<f64>,
    #[arg(long, help = "Analysis window length [default: per file, from its sample rate]")]
    window_size: Option<usize>,
    #[arg(long, help = "Hop in samples [default: window / 4]")]
    hop: Option<usize>,
}

#[derive(Args)]
struct KernelArgs {
    /// Kernel time δ in seconds.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Chirpiness diffusion b.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Frequency axis as start:step:len.
    #[arg(long, default_value = "-4:0.25:33", value_parser = parse_axis)]
    omega: Axis,
    /// Chirpiness axis as start:step:len.
    #[arg(long, default_value = "-4:0.5:17", value_parser = parse_axis)]
    nu: Axis,
    /// Source frequency index [default: centre].
    #[arg(long)]
    src_omega: Option<usize>,
    /// Source chirpiness index [default: centre].
    #[arg(long)]
    src_nu: Option<usize>,
    /// Also estimate the transition moments from this many simulated paths.
    #[arg(long)]
    mc_paths: Option<usize>,
    /// Seed for the simulated paths.
    #[arg(long, env = "CORTI_SEED", default_value_t = 0)]
    seed: u64,
    /// CSV output [default: stdout]; the report goes to <out>.report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, step, len] = parts[..] else {
        return Err(format!("expected start:step:len, got '{s}'"));
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"));
    let len = len.trim().parse::<usize>().map_err(|e| format!("'{len}': {e}"))?;
    Axis::new(num(start)?, num(step)?, len).map_err(|e| e.to_string())
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("kind").required(true).args(["sine", "chirp", "vowel"])))]
struct SynthArgs {
    /// Sine frequency in Hz.
    #[arg(long)]
    sine: Option<f64>,
    /// Linear chirp start frequency in Hz; see --rate.
    #[arg(long)]
    chirp: Option<f64>,
    /// Chirp rate in Hz/s.
    #[arg(long, default_value_t = 1000.0)]
    rate: f64,
    /// Vowel-like harmonic tone with vibrato; fundamental in Hz.
    #[arg(long)]
    vowel: Option<f64>,
    /// Duration in seconds.
    #[arg(long, default_value_t = 1.0)]
    dur: f64,
    /// Sample rate in Hz.
    #[arg(long, default_value_t = 8000.0)]
    sr: f64,
    /// Sine amplitude.
    #[arg(long, default_value_t = 0.5)]
    amp: f64,
    /// Standard deviation of added white noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Noise seed.
    #[arg(long, env = "CORTI_SEED", default_value_t = 0)]
    seed: u64,
    /// Output WAV file.
    #[arg(long)]
    out: PathBuf,
    /// Output encoding: 16, 24 or f32.
    #[arg(long, default_value = "16")]
    bits: BitDepth,
}

fn report_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("[cli] cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).context("[cli] JSON encoding failed")?;
    w.write_all(b"\n")?;
    w.flush()
        .with_context(|| format!("[cli] cannot write {}", path.display()))
}

/// Runs `body` against the file at `path`, or stdout when no path is given.
fn with_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w)?;
            w.flush().with_context(|| format!("[cli] cannot write {}", p.display()))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush().context("[cli] cannot write to stdout")
        }
    }
}

fn run_process(a: ProcessArgs) -> Result<()> {
    let config = a.pipeline.resolve()?;
    let out = a.out.unwrap_or_else(|| a.input.with_extension("processed.wav"));
    let signal = read_wav(&a.input)?;
    let processed = process(&signal, &config)?;
    let written = write_wav(&processed.signal, &out, a.bits)?;

    if let Some(p) = &a.dump_spec {
        let mut w = create(p)?;
        if p.extension().is_some_and(|e| e == "bin") {
            processed
                .spectrogram
                .write_binary(&mut w)
                .with_context(|| format!("[cli] cannot write {}", p.display()))?;
        } else {
            processed.spectrogram.write_csv(&mut w)?;
        }
        w.flush()?;
    }
    if let Some(p) = &a.dump_chirpiness {
        with_output(Some(p), |w| {
            Ok(processed.chirpiness.write_csv(&processed.spectrogram, w)?)
        })?;
    }
    if let Some(p) = &a.trace_energy {
        with_output(Some(p), |w| {
            writeln!(w, "t,energy")?;
            for (t, e) in &processed.energy {
                writeln!(w, "{t},{e}")?;
            }
            Ok(())
        })?;
    }

    #[derive(Serialize)]
    struct Report<'a> {
        input: &'a Path,
        output: &'a Path,
        bits: BitDepth,
        clipped: usize,
        config: &'a PipelineConfig,
        run: &'a corti::RunReport,
    }
    write_json(
        &report_path(&out),
        &Report {
            input: &a.input,
            output: &out,
            bits: a.bits,
            clipped: written.clipped,
            config: &config,
            run: &processed.report,
        },
    )?;
    if written.clipped > 0 {
        eprintln!(
            "warning: {} samples clipped while writing {}",
            written.clipped,
            out.display()
        );
    }
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let config = a.pipeline.resolve()?;
    let eps = a.eps.unwrap_or_else(default_eps_grid);
    let signal = read_wav(&a.input)?;
    let result = denoise_sweep(&signal, &eps, &config, a.seed)?;
    with_output(a.out.as_deref(), |w| Ok(result.write_csv(w)?))?;
    let report = a.report.or_else(|| a.out.as_deref().map(report_path));
    if let Some(p) = report {
        let json = result.to_json()?;
        fs::write(&p, json + "\n").with_context(|| format!("[cli] cannot write {}", p.display()))?;
    }
    Ok(())
}

fn run_chirpiness(a: ChirpinessArgs) -> Result<()> {
    let stft = match (a.window_size, a.hop) {
        (None, None) => None,
        (Some(n), hop) => Some(StftConfig::new(n, hop.unwrap_or((n / 4).max(1)), WindowKind::Hann)?),
        (None, Some(_)) => return Err(usage("[cli] --hop requires --window-size")),
    };
    let eta = a.eta.unwrap_or(LiftSettings::default().eta);
    let rows = corpus_summary(&a.files, stft, eta);
    with_output(a.out.as_deref(), |w| Ok(write_corpus_csv(&rows, w)?))?;
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().err().map(|e| format!("{}: {e}", r.path.display())))
        .collect();
    if !failed.is_empty() {
        bail!(
            "{} of {} files failed:\n  {}",
            failed.len(),
            rows.len(),
            failed.join("\n  ")
        );
    }
    Ok(())
}

fn run_kernel_dump(a: KernelArgs) -> Result<()> {
    let params = KernelParams::new(a.delta, a.b)?;
    let op = discretize(a.omega, a.nu, params)?;
    let i = a.src_omega.unwrap_or(a.omega.len / 2);
    let q = a.src_nu.unwrap_or(a.nu.len / 2);
    if i >= a.omega.len || q >= a.nu.len {
        return Err(usage(format!(
            "[cli] source index ({i}, {q}) outside the {} x {} grid",
            a.omega.len, a.nu.len
        )));
    }
    let src = (a.omega.point(i), a.nu.point(q));
    let mc = a
        .mc_paths
        .map(|n| mc_oracle(src, &params, n, 200, a.seed))
        .transpose()?;
    with_output(a.out.as_deref(), |w| Ok(op.write_row_csv(i, q, w)?))?;
    if let Some(out) = &a.out {
        #[derive(Serialize)]
        struct Report<'a> {
            params: KernelParams,
            source: (f64, f64),
            mean: (f64, f64),
            covariance: [[f64; 2]; 2],
            diagnostics: &'a corti::kernel::KernelDiagnostics,
            mc_seed: Option<u64>,
            mc: Option<corti::kernel::McMoments>,
        }
        write_json(
            &report_path(out),
            &Report {
                params,
                source: src,
                mean: params.mean(src),
                covariance: params.covariance(),
                diagnostics: op.diagnostics(),
                mc_seed: mc.as_ref().map(|_| a.seed),
                mc,
            },
        )?;
    }
    Ok(())
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let clean = match (a.sine, a.chirp, a.vowel) {
        (Some(f), None, None) => gen_sine(f, a.dur, a.sr, a.amp)?,
        (None, Some(f0), None) => gen_chirp(f0, a.rate, a.dur, a.sr)?,
        (None, None, Some(f0)) => gen_vowel(f0, a.dur, a.sr)?,
        _ => return Err(usage("[cli] choose exactly one of --sine, --chirp, --vowel")),
    };
    let signal: Signal = if a.noise > 0.0 {
        add_noise(&clean, a.noise, a.seed)?
    } else {
        clean
    };
    let written = write_wav(&signal, &a.out, a.bits)?;
    if written.clipped > 0 {
        eprintln!(
            "warning: {} samples clipped while writing {}",
            written.clipped,
            a.out.display()
        );
    }
    Ok(())
}

/// Joins the error chain, skipping causes already spelled out by the message above them.
fn render(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let part = cause.to_string();
        if !text.contains(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = match cli.command {
        Command::Process(a) => run_process(a),
        Command::DenoiseSweep(a) => run_sweep(a),
        Command::Chirpiness(a) => run_chirpiness(a),
        Command::KernelDump(a) => run_kernel_dump(a),
        Command::Synth(a) => run_synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_shows_the_library_defaults() {
        let mut cmd = Cli::command();
        let help = cmd
            .find_subcommand_mut("process")
            .unwrap()
            .render_long_help()
            .to_string();
        let wc = WcSettings::default();
        assert!(help.contains(&format!("[default: {}]", wc.kappa)), "{help}");
        assert!(help.contains(&format!("[default: {}]", wc.alpha)));
        assert!(help.contains(&format!("[default: {}]", LiftSettings::default().n_nu)));
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"wc": {"kappa": 0.5, "alpha": 30}, "mix": 0.25}"#).unwrap();
        let flags = PipelineFlags {
            config: Some(path),
            kappa: Some(0.75),
            ..Default::default()
        };
        let c = flags.resolve().unwrap();
        assert_eq!(c.wc.kappa, 0.75);
        assert_eq!(c.wc.alpha, 30.0);
        assert_eq!(c.mix, 0.25);
        assert_eq!(c.wc.beta, WcSettings::default().beta);
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"wc": {"kapa": 0.5}}"#).unwrap();
        let flags = PipelineFlags {
            config: Some(path),
            ..Default::default()
        };
        let err = flags.resolve().unwrap_err();
        assert!(err.is::<UsageError>());
        assert!(err.to_string().contains("kapa"));
    }

    #[test]
    fn axis_syntax() {
        let a = parse_axis("-4:0.25:33").unwrap();
        assert_eq!((a.start, a.step, a.len), (-4.0, 0.25, 33));
        assert!(parse_axis("1:2").is_err());
        assert!(parse_axis("0:x:3").is_err());
    }

    #[test]
    fn report_sits_beside_the_output() {
        assert_eq!(report_path(Path::new("a/b.wav")), PathBuf::from("a/b.wav.report.json"));
    }
}
