//! snrbench: noise-robustness benchmarking for music transcription.
//!
//! Exit codes: 0 success, 1 operational error, 2 usage error.

mod config;
mod opts;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use snrbench_core::augment::{self, CnrPolicy, Sidecar, SnrGrid};
use snrbench_core::harness::{
    self, compare_systems, load_manifest, run_sweep, SweepConfig, SweepResult, System,
};
use snrbench_core::report::{self, PlotSeries};
use snrbench_core::seed::SeedHasher;
use snrbench_core::selftest::run_selftest;
use snrbench_core::stats::Metric;
use snrbench_core::wav;

use config::FileConfig;
use opts::{Cli, Command};

/// Operator mistakes (missing/contradictory options, empty inputs) exit 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Write to stdout, exiting quietly when the downstream pipe has closed
/// (e.g. `snrbench selftest | head`); EPIPE is not our error.
fn emit(args: std::fmt::Arguments<'_>, newline: bool) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let ok = out.write_fmt(args).is_ok() && (!newline || out.write_all(b"\n").is_ok());
    if !ok {
        std::process::exit(0);
    }
}

macro_rules! say {
    ($($arg:tt)*) => { crate::emit(format_args!($($arg)*), true) };
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(), // clap uses exit code 2 for usage errors
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file_config = match &cli.config {
        Some(path) => {
            FileConfig::load(path).with_context(|| format!("reading config {}", path.display()))?
        }
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Inject(args) => cmd_inject(args, &file_config),
        Command::Augment(args) => cmd_augment(args, &file_config),
        Command::Sweep(args) => cmd_sweep(args, &file_config),
        Command::Compare(args) => cmd_compare(args, &file_config),
        Command::Report(args) => cmd_report(args, &file_config),
        Command::Selftest(args) => cmd_selftest(args, &file_config),
    }
}

fn cmd_inject(args: opts::InjectArgs, cfg: &FileConfig) -> Result<()> {
    let input = args
        .input
        .or_else(|| cfg.path("in"))
        .ok_or_else(|| usage("--in is required"))?;
    let out = args
        .out
        .or_else(|| cfg.path("out"))
        .ok_or_else(|| usage("--out is required"))?;
    let snr_db = match args.snr.or_else(|| cfg.f64("snr")) {
        Some(v) => v,
        None => return Err(usage("--snr is required")),
    };
    let seed = args.seed.or_else(|| cfg.u64("seed")).unwrap_or(0);
    let clip_limit = args
        .clip_limit
        .or_else(|| cfg.f64("clip-limit"))
        .unwrap_or(1.0);
    let encoding = opts::parse_encoding(
        &args
            .encoding
            .or_else(|| cfg.string("encoding"))
            .unwrap_or_else(|| "float32".into()),
    )?;

    let signal = wav::read_wav(&input)?;
    let noise_seed = SeedHasher::new("inject-cli").u64(seed).finish();
    let (mixed, meta) = augment::inject_noise(&signal, snr_db, noise_seed, clip_limit)?;
    wav::write_wav(&mixed, &out, encoding)?;

    let source_id = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| input.display().to_string());
    let sidecar = Sidecar::new(&source_id, &meta);
    let sidecar_path = out.with_extension("json");
    std::fs::write(&sidecar_path, serde_json::to_vec_pretty(&sidecar)?)
        .with_context(|| format!("writing {}", sidecar_path.display()))?;

    say!(
        "wrote {} (target {} dB, achieved {:.4} dB, {} of {} samples clipped) and {}",
        out.display(),
        snr_db,
        meta.achieved_snr_db,
        meta.clip.clipped_sample_count,
        meta.clip.total_sample_count,
        sidecar_path.display()
    );
    Ok(())
}

fn cmd_augment(args: opts::AugmentArgs, cfg: &FileConfig) -> Result<()> {
    let manifest_path = args
        .manifest
        .or_else(|| cfg.path("manifest"))
        .ok_or_else(|| usage("--manifest is required"))?;
    let out_dir = args
        .out
        .or_else(|| cfg.path("out"))
        .ok_or_else(|| usage("--out is required"))?;
    let split = opts::parse_split_opt(args.split.or_else(|| cfg.string("split")))?;
    let seed = args.seed.or_else(|| cfg.u64("seed")).unwrap_or(0);
    let encoding = opts::parse_encoding(
        &args
            .encoding
            .or_else(|| cfg.string("encoding"))
            .unwrap_or_else(|| "float32".into()),
    )?;
    let cnr_text = args.cnr.or_else(|| cfg.string("cnr"));
    let grid_text = args.grid.or_else(|| cfg.string("grid"));

    let manifest = load_manifest(&manifest_path, split)?;
    if manifest.is_empty() {
        return Err(usage("manifest has no records after filtering"));
    }

    if let Some(cnr_text) = cnr_text {
        if grid_text.is_some() {
            return Err(usage("--cnr and --grid are mutually exclusive"));
        }
        let snr_lo = args.snr_lo.or_else(|| cfg.f64("snr-lo")).unwrap_or(0.0);
        let snr_hi = args.snr_hi.or_else(|| cfg.f64("snr-hi")).unwrap_or(24.0);
        return augment_by_policy(
            &manifest,
            &cnr_text,
            seed,
            (snr_lo, snr_hi),
            &out_dir,
            encoding,
        );
    }

    let grid = match grid_text {
        Some(text) => opts::parse_grid(&text)?,
        None => SnrGrid::sweep_default(),
    };
    let report = augment::augment_corpus(&manifest, &grid, seed, &out_dir, encoding)?;
    say!(
        "augmented {} records x {} levels -> {} files in {} ({} failures)",
        manifest.len(),
        grid.levels().len(),
        report.entries.len(),
        out_dir.display(),
        report.failures.len()
    );
    for failure in &report.failures {
        eprintln!(
            "failed: {} @ {} dB: {}",
            failure.source_id, failure.snr_db, failure.reason
        );
    }
    if report.entries.is_empty() && !report.failures.is_empty() {
        bail!("all {} augmentation jobs failed", report.failures.len());
    }
    Ok(())
}

/// Training-style augmentation: one CNR-policy draw per record. Clean draws
/// pass through untouched (recorded only); noisy draws inject at the drawn
/// SNR. Decisions land in decisions.jsonl.
fn augment_by_policy(
    manifest: &harness::Manifest,
    cnr_text: &str,
    seed: u64,
    (snr_lo, snr_hi): (f64, f64),
    out_dir: &Path,
    encoding: wav::WavEncoding,
) -> Result<()> {
    let cnr = opts::parse_cnr(cnr_text)?;
    let policy = CnrPolicy::with_snr_range(cnr, snr_lo, snr_hi, seed)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut decisions = String::new();
    let mut failures = 0usize;
    for (index, record) in manifest.records.iter().enumerate() {
        let decision = policy.sample_decision(index as u64);
        match decision {
            augment::AugmentationDecision::Clean => {
                decisions.push_str(&format!(
                    "{}\n",
                    serde_json::json!({"id": record.id, "kind": "clean"})
                ));
            }
            augment::AugmentationDecision::Noisy { snr_db } => {
                let noise_seed = SeedHasher::new("cnr-noise")
                    .u64(seed)
                    .str(&record.id)
                    .finish();
                let outcome = wav::read_wav(&record.audio_path)
                    .map_err(anyhow::Error::from)
                    .and_then(|signal| Ok(augment::inject_noise(&signal, snr_db, noise_seed, 1.0)?))
                    .and_then(|(mixed, meta)| {
                        let path = out_dir.join(augment::augmented_filename(&record.id, snr_db));
                        wav::write_wav(&mixed, &path, encoding)?;
                        Ok((path, meta))
                    });
                match outcome {
                    Ok((path, meta)) => decisions.push_str(&format!(
                        "{}\n",
                        serde_json::json!({
                            "id": record.id,
                            "kind": "noisy",
                            "snr_db": snr_db,
                            "achieved_snr_db": meta.achieved_snr_db,
                            "noise_seed": meta.noise_seed,
                            "wav": path.display().to_string(),
                        })
                    )),
                    Err(e) => {
                        failures += 1;
                        eprintln!("failed: {}: {e:#}", record.id);
                    }
                }
            }
        }
    }
    let decisions_path = out_dir.join("decisions.jsonl");
    std::fs::write(&decisions_path, decisions)
        .with_context(|| format!("writing {}", decisions_path.display()))?;
    say!(
        "sampled {} decisions (CNR {cnr_text}, clean probability {:.4}) -> {}",
        manifest.len(),
        policy.clean_probability(),
        decisions_path.display()
    );
    if failures == manifest.len() {
        bail!("all {failures} injection jobs failed");
    }
    Ok(())
}

fn cmd_sweep(args: opts::SweepArgs, cfg: &FileConfig) -> Result<()> {
    let manifest_path = args
        .manifest
        .or_else(|| cfg.path("manifest"))
        .ok_or_else(|| usage("--manifest is required"))?;
    let out = args
        .out
        .or_else(|| cfg.path("out"))
        .ok_or_else(|| usage("--out is required"))?;
    let split = opts::parse_split_opt(args.split.or_else(|| cfg.string("split")))?;
    let grid = match args.grid.or_else(|| cfg.string("grid")) {
        Some(text) => opts::parse_grid(&text)?,
        None => SnrGrid::sweep_default(),
    };
    let master_seed = args.seed.or_else(|| cfg.u64("seed")).unwrap_or(0);
    let tolerance = args
        .tolerance_s
        .or_else(|| cfg.f64("tolerance-s"))
        .unwrap_or(0.05);
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(usage(format!(
            "--tolerance-s must be positive, got {tolerance}"
        )));
    }
    let timeout_s = args
        .timeout_s
        .or_else(|| cfg.f64("timeout-s"))
        .unwrap_or(600.0);
    let default_format = opts::parse_format(
        &args
            .format
            .or_else(|| cfg.string("format"))
            .unwrap_or_else(|| "tsv".into()),
    )?;

    let mut systems: Vec<System> = Vec::new();
    let mut system_specs = args.systems.clone();
    if system_specs.is_empty() {
        system_specs = cfg.strings("system");
    }
    for text in &system_specs {
        systems.push(opts::parse_system(text, default_format, timeout_s)?);
    }
    if let Some(id) = args.mock_system.or_else(|| cfg.string("mock-system")) {
        systems.push(System::mock(id, Default::default()));
    }
    if systems.is_empty() {
        return Err(usage(
            "at least one --system \"id=command template\" (or --mock-system) is required",
        ));
    }

    let keep_audio = args.keep_audio || cfg.flag("keep-audio");
    let keep_audio_dir = keep_audio.then(|| {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned());
        out.with_file_name(format!("{}_audio", stem.unwrap_or_else(|| "sweep".into())))
    });

    let config = SweepConfig {
        grid,
        master_seed,
        onset_tolerance_s: tolerance,
        cache_dir: args.cache_dir.or_else(|| cfg.path("cache-dir")),
        keep_audio_dir,
        workers: args.workers.or_else(|| cfg.usize("workers")),
        ..SweepConfig::default()
    };

    let manifest = load_manifest(&manifest_path, split)?;
    let sweep = run_sweep(&manifest, &systems, &config)?;

    std::fs::write(&out, sweep.to_json_string())
        .with_context(|| format!("writing {}", out.display()))?;
    let csv_path = out.with_extension("csv");
    std::fs::write(&csv_path, sweep.to_csv_string())
        .with_context(|| format!("writing {}", csv_path.display()))?;

    say!(
        "swept {} cells ({} failures) -> {} and {}",
        sweep.cell_count(),
        sweep.failures.len(),
        out.display(),
        csv_path.display()
    );
    for failure in sweep.failures.iter().take(10) {
        eprintln!(
            "failed: {} / {} @ {} dB: {}",
            failure.system_id, failure.recording_id, failure.snr_db, failure.reason
        );
    }
    if sweep.failures.len() > 10 {
        eprintln!("... and {} more failures", sweep.failures.len() - 10);
    }
    if sweep.cell_count() == 0 {
        bail!("every sweep cell failed");
    }
    Ok(())
}

fn cmd_compare(args: opts::CompareArgs, cfg: &FileConfig) -> Result<()> {
    let sweep_path = args
        .sweep
        .or_else(|| cfg.path("sweep"))
        .ok_or_else(|| usage("--sweep is required"))?;
    let baseline = args
        .baseline
        .or_else(|| cfg.string("baseline"))
        .ok_or_else(|| usage("--baseline is required"))?;
    let mut variants = args.variants.clone();
    if variants.is_empty() {
        variants = cfg.strings("variant");
    }
    let alpha = args.alpha.or_else(|| cfg.f64("alpha")).unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    let kind = opts::parse_test_kind(
        &args
            .test
            .or_else(|| cfg.string("test"))
            .unwrap_or_else(|| "paired".into()),
    )?;

    let text = std::fs::read_to_string(&sweep_path)
        .with_context(|| format!("reading {}", sweep_path.display()))?;
    let sweep = SweepResult::from_json_str(&text)?;
    if variants.is_empty() {
        // Default: every other system in the sweep.
        variants = sweep
            .system_ids()
            .into_iter()
            .filter(|id| *id != baseline)
            .collect();
    }
    if variants.is_empty() {
        return Err(usage("no variant systems to compare against the baseline"));
    }

    let table = compare_systems(&sweep, &baseline, &variants, alpha, kind)?;
    let markdown = table.to_markdown();
    emit(format_args!("{markdown}"), false);

    if let Some(out) = args.out.or_else(|| cfg.path("out")) {
        match out.extension().and_then(|e| e.to_str()) {
            Some("md") => std::fs::write(&out, &markdown)
                .with_context(|| format!("writing {}", out.display()))?,
            Some("json") => std::fs::write(&out, table.to_json_string())
                .with_context(|| format!("writing {}", out.display()))?,
            _ => {
                let json = out.with_extension("json");
                let md = out.with_extension("md");
                std::fs::write(&json, table.to_json_string())
                    .with_context(|| format!("writing {}", json.display()))?;
                std::fs::write(&md, &markdown)
                    .with_context(|| format!("writing {}", md.display()))?;
            }
        }
    }
    Ok(())
}

fn cmd_report(args: opts::ReportArgs, cfg: &FileConfig) -> Result<()> {
    let sweep_path = args
        .sweep
        .or_else(|| cfg.path("sweep"))
        .ok_or_else(|| usage("--sweep is required"))?;
    let out = args
        .out
        .or_else(|| cfg.path("out"))
        .ok_or_else(|| usage("--out is required"))?;
    let metric = opts::parse_metric(
        &args
            .metric
            .or_else(|| cfg.string("metric"))
            .unwrap_or_else(|| "f1".into()),
    )?;

    let text = std::fs::read_to_string(&sweep_path)
        .with_context(|| format!("reading {}", sweep_path.display()))?;
    let is_csv = sweep_path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));

    let series: Vec<PlotSeries>;
    let mut summary: Option<String> = None;
    if is_csv {
        let cells = SweepResult::cells_from_csv(&text)?;
        if cells.is_empty() {
            return Err(usage("sweep CSV contains no cells"));
        }
        series = report::series_from_cell_pairs(cells.iter().map(|(k, e)| (k, e)), metric);
    } else {
        let sweep = SweepResult::from_json_str(&text)?;
        if sweep.cell_count() == 0 {
            return Err(usage("sweep result contains no cells"));
        }
        series = report::series_for_metric(&sweep, metric);
        summary = Some(report::summary_csv(&sweep));
    }

    report::render_snr_curves(&series, &out)?;
    say!(
        "wrote {} ({} series, metric {})",
        out.display(),
        series.len(),
        metric.label()
    );

    if let Some(table_path) = args.table.or_else(|| cfg.path("table")) {
        match summary {
            Some(csv) => {
                std::fs::write(&table_path, csv)
                    .with_context(|| format!("writing {}", table_path.display()))?;
                say!("wrote {}", table_path.display());
            }
            None => eprintln!("--table requires a JSON sweep input; skipping"),
        }
    }
    Ok(())
}

fn cmd_selftest(args: opts::SelftestArgs, cfg: &FileConfig) -> Result<()> {
    let out_dir: PathBuf = args
        .out
        .or_else(|| cfg.path("out"))
        .unwrap_or_else(|| PathBuf::from("selftest-out"));
    let seed = args.seed.or_else(|| cfg.u64("seed")).unwrap_or(0);
    let workers = args.workers.or_else(|| cfg.usize("workers"));

    let outcome = run_selftest(&out_dir, seed, workers)?;
    say!(
        "selftest ok: {} cells; wrote {}, {}, {}",
        outcome.cell_count,
        outcome.sweep_json_path.display(),
        outcome.sweep_csv_path.display(),
        outcome.svg_path.display()
    );
    // Quick visibility: the mean F1 curve per system.
    let text = std::fs::read_to_string(&outcome.sweep_json_path)?;
    let sweep = SweepResult::from_json_str(&text)?;
    for series in report::series_for_metric(&sweep, Metric::F1) {
        let curve: Vec<String> = series
            .points
            .iter()
            .map(|p| format!("{}:{:.3}", augment::format_snr_level(p.snr_db), p.mean))
            .collect();
        say!("{}: {}", series.label, curve.join(" "));
    }
    Ok(())
}
