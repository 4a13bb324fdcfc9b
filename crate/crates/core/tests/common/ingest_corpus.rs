//! Runner for the statement fixtures under `tests/fixtures/ingest`.
//!
//! A case directory holds raw statement files (read in name order), an
//! optional `ingest.conf`, and either `expected.txt` plus `expected.csv` or
//! `expected_error.txt` with the `file:line` or `file:first-last` location.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ledger_signal::config::KvFile;
use ledger_signal::formats::write_clean_csv;
use ledger_signal::ingest::{ingest_statements, parse_clean_csv, IngestConfig};
use ledger_signal::Error;

/// Case directories under `root`, in name order.
pub fn case_dirs(root: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .expect("fixture dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs
}

fn location(err: &Error) -> String {
    match err {
        Error::Parse { pos, .. } => format!("{}:{}", pos.file, pos.line),
        Error::ParseRange { file, first, last, .. } => format!("{file}:{first}-{last}"),
        Error::Stage { source, .. } => location(source),
        other => format!("<no location: {other}>"),
    }
}

/// Runs one case; `Err` carries a description of the first mismatch.
pub fn run_case(dir: &Path) -> Result<(), String> {
    let read = |name: &str| fs::read_to_string(dir.join(name)).ok();
    let cfg = match read("ingest.conf") {
        Some(text) => {
            let kv = KvFile::parse(&text, "ingest.conf").map_err(|e| e.to_string())?;
            IngestConfig::from_kv(&kv).map_err(|e| e.to_string())?
        }
        None => IngestConfig::default(),
    };
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.expect("dir entry").file_name().to_string_lossy().into_owned())
        .filter(|n| n != "ingest.conf" && !n.starts_with("expected"))
        .collect();
    names.sort();
    let files: Vec<(String, String)> = names
        .iter()
        .map(|n| (n.clone(), read(n).expect("statement file")))
        .collect();
    let result = ingest_statements(&files, &cfg);

    if let Some(want) = read("expected_error.txt") {
        let want = want.trim();
        return match result {
            Ok(l) => Err(format!("expected error at {want}, got {} transactions", l.len())),
            Err(e) if location(&e) == want => Ok(()),
            Err(e) => Err(format!("expected error at {want}, got `{e}`")),
        };
    }

    let ledger = result.map_err(|e| format!("unexpected error: {e}"))?;
    let summary: BTreeMap<String, String> = read("expected.txt")
        .ok_or("missing expected.txt")?
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let txns = ledger.transactions();
    let cents = |expenditure: bool| -> i64 {
        txns.iter()
            .filter(|t| t.is_expenditure() == expenditure)
            .map(|t| t.amount.cents())
            .sum()
    };
    let accounts = ledger
        .accounts()
        .map(|a| format!("{}:{}", a.id, a.kind))
        .collect::<Vec<_>>()
        .join(" ");
    let got = [
        ("count", txns.len().to_string()),
        ("expenditures", txns.iter().filter(|t| t.is_expenditure()).count().to_string()),
        ("expenditure_total", cents(true).to_string()),
        ("income_total", cents(false).to_string()),
        ("accounts", accounts),
    ];
    for (key, value) in got {
        let want = summary.get(key).ok_or(format!("expected.txt lacks `{key}`"))?;
        if *want != value {
            return Err(format!("{key}: expected {want}, got {value}"));
        }
    }

    let golden = read("expected.csv").ok_or("missing expected.csv")?;
    let written = write_clean_csv(&ledger);
    if written != golden {
        return Err(format!("clean CSV differs from golden:\n{written}"));
    }
    let reparsed = parse_clean_csv(golden.as_bytes()).map_err(|e| e.to_string())?;
    if reparsed.transactions() != txns {
        return Err("golden CSV does not parse back to the ingested ledger".into());
    }
    Ok(())
}
