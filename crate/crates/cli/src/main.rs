//! `menagerie`: generate synthetic iris-code datasets, match them, analyze
//! the score distributions and detect wolves, lambs and goats.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use menagerie_core::distributions::write_roc_csv;
use menagerie_core::*;

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_FORMAT: u8 = 4;
const EXIT_PRECONDITION: u8 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "menagerie",
    version,
    about = "Iris-code menagerie analysis on synthetic data"
)]
#[command(after_help = "Examples:
  menagerie --seed 7 gen --classes 50 --samples 4 --rows 16 --cols 256 --p 0.12 --block 16 -o ds.json
  menagerie --workers 4 match --dataset ds.json -o scores.csv
  menagerie analyze --scores scores.csv --roc roc.csv -o analysis.json
  menagerie menagerie --dataset ds.json --mode both -o reports/
  menagerie --format csv compare a.json b.json c.json -o stability.csv")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Generator seed
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for matching
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    workers: u32,

    /// Output format for `analyze` and `compare`
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Output file (a directory for `menagerie`); stdout when omitted
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset
    Gen(GenArgs),
    /// All-to-all matching of a dataset into a score CSV
    Match {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// EER, t_EER and the maximal safety band of a score set
    Analyze {
        #[command(flatten)]
        input: Input,
        /// Also write the ROC curve as CSV
        #[arg(long)]
        roc: Option<PathBuf>,
    },
    /// Detect first (marginal) and last wolves, lambs and goats
    Menagerie {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Stability of wolf and goat sets across calibrations
    Compare {
        /// Menagerie reports, named after their file stems
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    classes: u32,
    #[arg(long)]
    samples: u32,
    #[arg(long, default_value_t = 16)]
    rows: u32,
    #[arg(long, default_value_t = 256)]
    cols: u32,
    /// Per-bit flip rate
    #[arg(long)]
    p: f64,
    /// Bits per prototype block
    #[arg(long, default_value_t = 1)]
    block: u32,
    /// Goat class as CLASS:STRENGTH (repeatable)
    #[arg(long, value_parser = parse_goat)]
    goat: Vec<AnomalySpec>,
    /// Wolf/lamb pair as SRC:DST:STRENGTH (repeatable)
    #[arg(long, value_parser = parse_wolf_lamb)]
    wolf_lamb: Vec<AnomalySpec>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = true)]
struct Input {
    /// Dataset JSON; supplies user ids when given with --scores
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Score CSV from `match`
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ParamArgs {
    /// Minimum wolf qualification count
    #[arg(long, default_value_t = 2)]
    wolf_min_fa: u32,
    /// Minimum false rejects for a goat
    #[arg(long, default_value_t = 2)]
    goat_min_fr: u32,
    /// Count raw wolf roles instead of distinct partner classes
    #[arg(long)]
    raw_wolf_roles: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    First,
    Last,
    Both,
}

fn parse_goat(s: &str) -> std::result::Result<AnomalySpec, String> {
    match s.split(':').collect::<Vec<_>>()[..] {
        [class, strength] => Ok(AnomalySpec::GoatClass {
            class_id: class.parse().map_err(|e| format!("class: {e}"))?,
            strength: strength.parse().map_err(|e| format!("strength: {e}"))?,
        }),
        _ => Err("expected CLASS:STRENGTH".into()),
    }
}

fn parse_wolf_lamb(s: &str) -> std::result::Result<AnomalySpec, String> {
    match s.split(':').collect::<Vec<_>>()[..] {
        [src, dst, strength] => Ok(AnomalySpec::WolfLambPair {
            classes: [
                src.parse().map_err(|e| format!("source class: {e}"))?,
                dst.parse().map_err(|e| format!("target class: {e}"))?,
            ],
            strength: strength.parse().map_err(|e| format!("strength: {e}"))?,
        }),
        _ => Err("expected SRC:DST:STRENGTH".into()),
    }
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type Outcome<T> = std::result::Result<T, Failure>;

fn fail(code: u8, error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code,
        error: error.into(),
    }
}

/// Errors from reading an input file: I/O or malformed content.
fn load_failure(path: &Path, e: Error) -> Failure {
    let code = match &e {
        Error::Io(_) => EXIT_IO,
        Error::Csv(c) if c.is_io_error() => EXIT_IO,
        _ => EXIT_FORMAT,
    };
    fail(
        code,
        anyhow!(e).context(format!("reading {}", path.display())),
    )
}

/// Errors from computations on already-loaded inputs.
fn compute_failure(e: Error) -> Failure {
    let code = match &e {
        Error::Io(_) => EXIT_IO,
        Error::Precondition(_) | Error::NoOverlap { .. } => EXIT_PRECONDITION,
        Error::InvalidSpec(_) | Error::InvalidDimensions { .. } => EXIT_USAGE,
        _ => EXIT_FORMAT,
    };
    fail(code, e)
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Outcome<()> {
    let result = match path {
        Some(p) => {
            fs::write(p, bytes).map_err(|e| anyhow!(e).context(format!("writing {}", p.display())))
        }
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(anyhow::Error::from),
    };
    result.map_err(|e| fail(EXIT_IO, e))
}

fn load_ds(path: &Path) -> Outcome<Dataset> {
    load_dataset(path).map_err(|e| load_failure(path, e))
}

fn load_scores(path: &Path) -> Outcome<ScoreMatrix> {
    let file = fs::File::open(path).map_err(|e| load_failure(path, e.into()))?;
    ScoreMatrix::read_csv(std::io::BufReader::new(file)).map_err(|e| load_failure(path, e))
}

/// The score matrix plus, when available, the dataset it came from.
fn load_input(input: &Input) -> Outcome<(ScoreMatrix, Option<Dataset>)> {
    let ds = input.dataset.as_deref().map(load_ds).transpose()?;
    let m = match (&input.scores, &ds) {
        (Some(path), _) => load_scores(path)?,
        (None, Some(ds)) => compute_score_matrix(ds).map_err(compute_failure)?,
        (None, None) => unreachable!("clap requires --dataset or --scores"),
    };
    if let Some(ds) = &ds {
        let classes: Vec<u32> = ds.records().iter().map(|r| r.class_id).collect();
        if classes != m.classes() || ds.shape().n_bits() != m.n_bits() {
            return Err(fail(
                EXIT_PRECONDITION,
                anyhow!("scores do not belong to the dataset"),
            ));
        }
    }
    Ok((m, ds))
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> Outcome<()> {
    let out = cli
        .output
        .as_deref()
        .ok_or_else(|| fail(EXIT_USAGE, anyhow!("gen needs -o/--output")))?;
    let spec = CalibrationSpec {
        rows: args.rows,
        cols: args.cols,
        n_classes: args.classes,
        samples_per_class: args.samples,
        flip_rate: args.p,
        block: args.block,
        seed: cli.seed,
        anomalies: args.goat.iter().chain(&args.wolf_lamb).cloned().collect(),
    };
    spec.validate().map_err(|e| fail(EXIT_USAGE, e))?;
    let ds = generate_dataset(&spec).map_err(compute_failure)?;
    save_dataset(&ds, out).map_err(|e| {
        fail(
            EXIT_IO,
            anyhow!(e).context(format!("writing {}", out.display())),
        )
    })?;
    println!(
        "{} templates, {} classes, {} ({} bits), seed {}",
        ds.len(),
        spec.n_classes,
        spec.shape(),
        spec.shape().n_bits(),
        spec.seed
    );
    Ok(())
}

fn cmd_match(cli: &Cli, dataset: &Path) -> Outcome<()> {
    let ds = load_ds(dataset)?;
    let m = compute_score_matrix_parallel(&ds, cli.workers as usize).map_err(compute_failure)?;
    let csv = m.to_csv_string().map_err(compute_failure)?;
    write_output(cli.output.as_deref(), csv.as_bytes())
}

fn cmd_analyze(cli: &Cli, input: &Input, roc: Option<&Path>) -> Outcome<()> {
    let (m, _) = load_input(input)?;
    let d = split_scores(&m).map_err(compute_failure)?;
    let mut roc_csv = Vec::new();
    write_roc_csv(&d.roc_curve(), &mut roc_csv).map_err(compute_failure)?;
    let main = match cli.format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&AnalysisReport::from_summary(&d))
                .map_err(|e| fail(EXIT_FORMAT, e))?;
            text.push('\n');
            text.into_bytes()
        }
        Format::Csv => roc_csv.clone(),
    };
    if let Some(path) = roc {
        fs::write(path, &roc_csv).map_err(|e| {
            fail(
                EXIT_IO,
                anyhow!(e).context(format!("writing {}", path.display())),
            )
        })?;
    }
    write_output(cli.output.as_deref(), &main)
}

fn cmd_menagerie(cli: &Cli, input: &Input, mode: Mode, p: &ParamArgs) -> Outcome<()> {
    let dir = cli
        .output
        .as_deref()
        .ok_or_else(|| fail(EXIT_USAGE, anyhow!("menagerie needs -o/--output DIR")))?;
    let params = MenagerieParams {
        wolf_min_fa: p.wolf_min_fa,
        goat_min_fr: p.goat_min_fr,
        wolf_distinct_partners: !p.raw_wolf_roles,
    };
    params.validate().map_err(|e| fail(EXIT_USAGE, e))?;
    let (m, ds) = load_input(input)?;
    let d = split_scores(&m).map_err(compute_failure)?;

    let attach = |r: MenagerieReport| -> Outcome<MenagerieReport> {
        match &ds {
            Some(ds) => r.with_dataset(ds).map_err(compute_failure),
            None => Ok(r),
        }
    };
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    if mode != Mode::Last {
        if !d.has_overlap() {
            return Err(fail(
                EXIT_PRECONDITION,
                anyhow!(
                    "first templates need overlapping scores, but mGS={} >= MIS={}",
                    d.mgs(),
                    d.mis()
                ),
            ));
        }
        let (first, trace) =
            first_templates_with_trace(&d, &m, &params).map_err(compute_failure)?;
        let first = attach(first)?;
        files.push((
            "first_report.json",
            first.to_json().map_err(compute_failure)?.into_bytes(),
        ));
        let mut csv = Vec::new();
        if let Some(trace) = trace {
            trace.write_csv(&mut csv).map_err(compute_failure)?;
        }
        files.push(("trace.csv", csv));
    }
    if mode != Mode::First {
        let last = attach(last_templates(&d, &m, &params).map_err(compute_failure)?)?;
        files.push((
            "last_report.json",
            last.to_json().map_err(compute_failure)?.into_bytes(),
        ));
    }

    fs::create_dir_all(dir).map_err(|e| {
        fail(
            EXIT_IO,
            anyhow!(e).context(format!("creating {}", dir.display())),
        )
    })?;
    for (name, bytes) in &files {
        write_output(Some(&dir.join(name)), bytes)?;
    }
    println!(
        "eer {:.4} at t_eer {:.4}; wrote {}",
        d.eer(),
        d.t_eer(),
        files.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

fn cmd_compare(cli: &Cli, paths: &[PathBuf]) -> Outcome<()> {
    let mut reports = Vec::new();
    for path in paths {
        let report = MenagerieReport::load(path).map_err(|e| load_failure(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        reports.push((name, report));
    }
    let s = compare_calibrations(&reports).map_err(compute_failure)?;
    let bytes = match cli.format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&s).map_err(|e| fail(EXIT_FORMAT, e))?;
            text.push('\n');
            text.into_bytes()
        }
        Format::Csv => {
            let mut out = Vec::new();
            s.write_csv(&mut out).map_err(compute_failure)?;
            out
        }
    };
    write_output(cli.output.as_deref(), &bytes)
}

fn run(cli: &Cli) -> Outcome<()> {
    match &cli.command {
        Command::Gen(args) => cmd_gen(cli, args),
        Command::Match { dataset } => cmd_match(cli, dataset),
        Command::Analyze { input, roc } => cmd_analyze(cli, input, roc.as_deref()),
        Command::Menagerie {
            input,
            mode,
            params,
        } => cmd_menagerie(cli, input, *mode, params),
        Command::Compare { reports } => cmd_compare(cli, reports),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
