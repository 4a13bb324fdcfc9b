//! `ledger-signal` command-line interface.
//!
//! Exit codes: 0 on success, 1 for input or usage errors, 2 for numerical
//! failures (zero-variance groups, non-converging integrals).

use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use ledger_signal::anomaly::{DetectParams, DEFAULT_CONTAMINATION, DEFAULT_N_TREES, DEFAULT_PSI};
use ledger_signal::config::KvFile;
use ledger_signal::ingest::IngestConfig;
use ledger_signal::report::{self, AnalyzeOptions, InputFile, Outputs};
use ledger_signal::series::{CreditBasis, Grain, Grouping};
use ledger_signal::{Error, Result, DEFAULT_SEED};

#[derive(Parser, Debug)]
#[command(name = "ledger-signal", version, about = "Spending time-series analysis from bank statements")]
struct Cli {
    /// Config file with `[ingest]`, `[analyze]` and `[detect]` sections.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for randomized steps (default 20170101).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert raw statement exports and clean CSVs into one clean ledger.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Also write the privacy-preserving normalized dataset.
        #[arg(long)]
        normalized: bool,
    },
    /// Generate a synthetic ledger and labels from a scenario file.
    Synth { spec: PathBuf },
    /// Group statistics, Welch ANOVA, Games-Howell, burstiness, credit ratios.
    Analyze {
        ledger: PathBuf,
        /// Label CSV (`pole,level,start,end`).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Grain for grouped statistics: daily, weekly or monthly.
        #[arg(long)]
        grain: Option<String>,
        /// three-level, binary or both.
        #[arg(long)]
        grouping: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Add per-account burstiness.
        #[arg(long)]
        per_account: bool,
        /// count or volume.
        #[arg(long)]
        credit_basis: Option<String>,
        /// Include real per-account amount ranges in the report.
        #[arg(long)]
        unsafe_raw: bool,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Isolation-forest anomaly detection on weekly spending frequency.
    Detect {
        ledger: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
        /// Comma-separated contamination values, e.g. 0.01,0.05,0.1.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
    },
}

#[derive(Args, Debug)]
struct ForestArgs {
    #[arg(long)]
    contamination: Option<f64>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    psi: Option<usize>,
    /// Use weekly volume as a second feature.
    #[arg(long)]
    with_volume: bool,
}

/// Values from a `[section]` of the config file.
struct Section<'a> {
    kv: Option<&'a KvFile>,
    name: &'a str,
}

impl Section<'_> {
    fn check(&self, allowed: &[&str]) -> Result<()> {
        let Some(kv) = self.kv else { return Ok(()) };
        for b in kv.sections(self.name) {
            if let Some(e) = b.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
                return Err(kv.error(e, format!("unknown key `{}` in [{}]", e.key, self.name)));
            }
        }
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(kv) = self.kv else { return Ok(None) };
        kv.sections(self.name)
            .filter_map(|b| b.get(key))
            .last()
            .map(|e| kv.value(e))
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(kv) = self.kv else { return Ok(None) };
        let Some(e) = kv.sections(self.name).filter_map(|b| b.get(key)).last() else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|err| kv.error(e, format!("bad value for `{key}`: {err}"))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

const FOREST_KEYS: [&str; 5] = ["contamination", "n_trees", "psi", "with_volume", "seed"];

fn detect_params(args: &ForestArgs, section: &Section, seed: Option<u64>) -> Result<DetectParams> {
    Ok(DetectParams {
        contamination: pick(args.contamination, section.get("contamination")?, DEFAULT_CONTAMINATION),
        n_trees: pick(args.n_trees, section.get("n_trees")?, DEFAULT_N_TREES),
        psi: pick(args.psi, section.get("psi")?, DEFAULT_PSI),
        seed: pick(seed, section.get("seed")?, DEFAULT_SEED),
        with_volume: args.with_volume || section.get("with_volume")?.unwrap_or(false),
    })
}

fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

fn parse_groupings(text: &str) -> Result<Vec<Grouping>> {
    match text.to_ascii_lowercase().as_str() {
        "both" => Ok(vec![Grouping::ThreeLevel, Grouping::Binary]),
        other => Ok(vec![other.parse()?]),
    }
}

fn read(path: &Path) -> Result<InputFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(InputFile::new(path.display().to_string(), text))
}

fn write_outputs(dir: &Path, outputs: &Outputs) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, contents) in outputs {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let kv = cli
        .config
        .as_deref()
        .map(|p| read(p).and_then(|f| KvFile::parse(&f.text, &f.name)))
        .transpose()?;
    let section = |name| Section { kv: kv.as_ref(), name };
    let outputs = match &cli.command {
        Command::Ingest { files, normalized } => {
            let cfg = kv.as_ref().map(IngestConfig::from_kv).transpose()?.unwrap_or_default();
            let inputs = files.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
            report::cmd_ingest(&inputs, &cfg, *normalized)?
        }
        Command::Synth { spec } => report::cmd_synth(&read(spec)?, cli.seed)?,
        Command::Analyze {
            ledger,
            labels,
            grain,
            grouping,
            alpha,
            per_account,
            credit_basis,
            unsafe_raw,
            forest,
        } => {
            let s = section("analyze");
            s.check(&[&FOREST_KEYS[..], &["grain", "grouping", "alpha", "per_account", "credit_basis"]].concat())?;
            let grain: Grain = match grain {
                Some(g) => g.parse()?,
                None => s.get("grain")?.unwrap_or(Grain::Daily),
            };
            let groupings = match grouping.clone().or(s.get::<String>("grouping")?) {
                Some(g) => parse_groupings(&g)?,
                None => vec![Grouping::ThreeLevel, Grouping::Binary],
            };
            let credit_basis: CreditBasis = match credit_basis {
                Some(b) => b.parse()?,
                None => s.get("credit_basis")?.unwrap_or(CreditBasis::Count),
            };
            let opts = AnalyzeOptions {
                grain,
                groupings,
                alpha: pick(*alpha, s.get("alpha")?, ledger_signal::stats::DEFAULT_ALPHA),
                per_account: *per_account || s.get("per_account")?.unwrap_or(false),
                credit_basis,
                unsafe_raw: *unsafe_raw,
                detect: detect_params(forest, &s, cli.seed)?,
            };
            let labels = labels.as_deref().map(read).transpose()?;
            report::cmd_analyze(&read(ledger)?, labels.as_ref(), &opts)?
        }
        Command::Detect { ledger, forest, sweep } => {
            let s = section("detect");
            s.check(&[&FOREST_KEYS[..], &["sweep"]].concat())?;
            let params = detect_params(forest, &s, cli.seed)?;
            let sweep = match sweep {
                Some(v) => Some(v.clone()),
                None => s.list("sweep")?,
            };
            report::cmd_detect(&read(ledger)?, &params, sweep.as_deref())?
        }
    };
    write_outputs(&cli.out, &outputs)
}

fn styled() -> bool {
    std::env::var_os("LEDGER_SIGNAL_NO_COLOR").is_none() && std::io::stderr().is_terminal()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let label = if styled() { "\x1b[1;31merror\x1b[0m" } else { "error" };
            eprintln!("{label}: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
