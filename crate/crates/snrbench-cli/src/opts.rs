//! Command-line surface. Most options are `Option<...>` so the key=value
//! config file can supply defaults; flags always win over file values.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use snrbench_core::augment::SnrGrid;
use snrbench_core::harness::{NotesFormat, Split, System, TranscriberSpec};
use snrbench_core::stats::{Metric, TTestKind};
use snrbench_core::wav::WavEncoding;

#[derive(Parser)]
#[command(
    name = "snrbench",
    version,
    about = "Noise-robustness benchmarking for music transcription systems",
    after_help = "Exit codes: 0 success, 1 operational error, 2 usage error."
)]
pub struct Cli {
    /// Optional key=value config file; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Mix white noise into one WAV at an exact SNR.
    Inject(InjectArgs),
    /// Generate an augmented corpus: every manifest record at every grid
    /// level, or one CNR-policy draw per record.
    Augment(AugmentArgs),
    /// Run the full (system x recording x SNR) evaluation sweep.
    Sweep(SweepArgs),
    /// Baseline-vs-variant significance table from a sweep result.
    Compare(CompareArgs),
    /// Render score-vs-SNR curves (SVG) and summary tables from a sweep.
    Report(ReportArgs),
    /// End-to-end demo: synthetic corpus, mock transcriber, full sweep.
    Selftest(SelftestArgs),
}

#[derive(Args)]
pub struct InjectArgs {
    /// Input WAV file.
    #[arg(long = "in", value_name = "WAV")]
    pub input: Option<PathBuf>,
    /// Target SNR in dB.
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
    /// Noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output WAV path; a JSON sidecar lands next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Hard-clip limit (default 1.0).
    #[arg(long)]
    pub clip_limit: Option<f64>,
    /// Output encoding: pcm16 or float32 (default float32).
    #[arg(long)]
    pub encoding: Option<String>,
}

#[derive(Args)]
pub struct AugmentArgs {
    /// Corpus manifest (CSV or JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Restrict to one split: train, validation, or test.
    #[arg(long)]
    pub split: Option<String>,
    /// SNR grid as lo:hi:step in dB (default -6:45:3).
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Clean-to-noise ratio (e.g. 0, 1/3, 1, 3, inf); one decision per
    /// record, SNR drawn uniformly from [--snr-lo, --snr-hi]. Mutually
    /// exclusive with --grid.
    #[arg(long)]
    pub cnr: Option<String>,
    /// Lower SNR bound for --cnr draws (default 0).
    #[arg(long, allow_negative_numbers = true)]
    pub snr_lo: Option<f64>,
    /// Upper SNR bound for --cnr draws (default 24).
    #[arg(long, allow_negative_numbers = true)]
    pub snr_hi: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output encoding: pcm16 or float32 (default float32).
    #[arg(long)]
    pub encoding: Option<String>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Corpus manifest (CSV or JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Restrict to one split: train, validation, or test.
    #[arg(long)]
    pub split: Option<String>,
    /// SNR grid as lo:hi:step in dB (default -6:45:3).
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Onset matching tolerance in seconds (default 0.05).
    #[arg(long)]
    pub tolerance_s: Option<f64>,
    /// External system as "id=command template"; the template must use
    /// {input} and {output} once each. "id:midi=..." marks MIDI output
    /// (default is TSV). Repeatable.
    #[arg(long = "system", value_name = "ID=TEMPLATE")]
    pub systems: Vec<String>,
    /// Add the built-in mock transcriber under this system id.
    #[arg(long)]
    pub mock_system: Option<String>,
    /// Default output format for systems without a suffix: tsv or midi.
    #[arg(long)]
    pub format: Option<String>,
    /// Per-cell transcriber timeout in seconds (default 600).
    #[arg(long)]
    pub timeout_s: Option<f64>,
    /// Cache directory; finished cells are skipped on reruns.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Keep synthesized noisy audio next to the output file.
    #[arg(long)]
    pub keep_audio: bool,
    /// Worker pool size (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output JSON path; a tidy CSV lands next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Sweep result JSON produced by `sweep`.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Baseline system id.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Variant system id (repeatable; default: all other systems).
    #[arg(long = "variant")]
    pub variants: Vec<String>,
    /// Significance threshold (default 0.05).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Test kind: paired or welch (default paired).
    #[arg(long)]
    pub test: Option<String>,
    /// Output path: .json, .md, or a stem for both.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Sweep result (.json or the tidy .csv).
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Metric to plot: precision, recall, or f1 (default f1).
    #[arg(long)]
    pub metric: Option<String>,
    /// Output SVG path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a per-system mean/stderr CSV here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args)]
pub struct SelftestArgs {
    /// Output directory (default selftest-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker pool size.
    #[arg(long)]
    pub workers: Option<usize>,
}

pub fn parse_grid(text: &str) -> Result<SnrGrid> {
    let parts: Vec<&str> = text.split(':').collect();
    let err = || super::usage(format!("--grid expects lo:hi:step in dB, got {text:?}"));
    if parts.len() != 3 {
        return Err(err());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| err())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| err())?;
    let step: f64 = parts[2].trim().parse().map_err(|_| err())?;
    SnrGrid::new(lo, hi, step).map_err(|e| super::usage(e.to_string()))
}

pub fn parse_cnr(text: &str) -> Result<f64> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") || t == "\u{221e}" {
        return Ok(f64::INFINITY);
    }
    let value = if let Some((num, den)) = t.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|_| bad_cnr(text))?;
        let d: f64 = den.trim().parse().map_err(|_| bad_cnr(text))?;
        if d == 0.0 {
            return Err(bad_cnr(text));
        }
        n / d
    } else {
        t.parse().map_err(|_| bad_cnr(text))?
    };
    if value.is_nan() || value < 0.0 {
        return Err(bad_cnr(text));
    }
    Ok(value)
}

fn bad_cnr(text: &str) -> anyhow::Error {
    super::usage(format!(
        "--cnr expects a non-negative number, fraction, or inf, got {text:?}"
    ))
}

pub fn parse_split_opt(text: Option<String>) -> Result<Option<Split>> {
    match text {
        None => Ok(None),
        Some(t) => t
            .parse::<Split>()
            .map(Some)
            .map_err(|e| super::usage(e.to_string())),
    }
}

pub fn parse_encoding(text: &str) -> Result<WavEncoding> {
    match text.trim().to_ascii_lowercase().as_str() {
        "pcm16" => Ok(WavEncoding::Pcm16),
        "float32" => Ok(WavEncoding::Float32),
        other => Err(super::usage(format!(
            "--encoding expects pcm16 or float32, got {other:?}"
        ))),
    }
}

pub fn parse_format(text: &str) -> Result<NotesFormat> {
    match text.trim().to_ascii_lowercase().as_str() {
        "tsv" => Ok(NotesFormat::Tsv),
        "midi" | "mid" => Ok(NotesFormat::Midi),
        other => Err(super::usage(format!(
            "--format expects tsv or midi, got {other:?}"
        ))),
    }
}

pub fn parse_test_kind(text: &str) -> Result<TTestKind> {
    match text.trim().to_ascii_lowercase().as_str() {
        "paired" => Ok(TTestKind::Paired),
        "welch" => Ok(TTestKind::Welch),
        other => Err(super::usage(format!(
            "--test expects paired or welch, got {other:?}"
        ))),
    }
}

pub fn parse_metric(text: &str) -> Result<Metric> {
    match text.trim().to_ascii_lowercase().as_str() {
        "precision" | "p" => Ok(Metric::Precision),
        "recall" | "r" => Ok(Metric::Recall),
        "f1" => Ok(Metric::F1),
        other => Err(super::usage(format!(
            "--metric expects precision, recall, or f1, got {other:?}"
        ))),
    }
}

/// Parse "id=template" (optionally "id:midi=template" / "id:tsv=template").
pub fn parse_system(text: &str, default_format: NotesFormat, timeout_s: f64) -> Result<System> {
    let (head, template) = text.split_once('=').ok_or_else(|| {
        super::usage(format!(
            "--system expects \"id=command template\", got {text:?}"
        ))
    })?;
    let (id, format) = match head.split_once(':') {
        Some((id, fmt)) => (id, parse_format(fmt)?),
        None => (head, default_format),
    };
    if id.trim().is_empty() {
        return Err(super::usage("--system id must not be empty"));
    }
    let spec = TranscriberSpec::new(id.trim(), template.trim(), format, timeout_s)
        .map_err(|e| super::usage(e.to_string()))?;
    Ok(System::External(spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parses_and_validates() {
        let g = parse_grid("-6:45:3").unwrap();
        assert_eq!((g.lo_db, g.hi_db, g.step_db), (-6.0, 45.0, 3.0));
        assert!(parse_grid("45:-6:3").is_err());
        assert!(parse_grid("0:10").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }

    #[test]
    fn cnr_accepts_fractions_and_infinity() {
        assert_eq!(parse_cnr("3").unwrap(), 3.0);
        assert_eq!(parse_cnr("1/3").unwrap(), 1.0 / 3.0);
        assert!(parse_cnr("inf").unwrap().is_infinite());
        assert!(parse_cnr("-1").is_err());
        assert!(parse_cnr("1/0").is_err());
    }

    #[test]
    fn system_spec_parses_format_suffix() {
        let s = parse_system("sysb:midi=run.sh {input} {output}", NotesFormat::Tsv, 5.0).unwrap();
        match s {
            System::External(spec) => {
                assert_eq!(spec.system_id, "sysb");
                assert_eq!(spec.output_format, NotesFormat::Midi);
            }
            _ => panic!("expected external"),
        }
        assert!(parse_system("noequals", NotesFormat::Tsv, 5.0).is_err());
        assert!(parse_system("x=missing placeholders", NotesFormat::Tsv, 5.0).is_err());
    }
}
