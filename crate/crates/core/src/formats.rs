//! CSV encodings shared by the command-line tools.
//!
//! All writers use `\n` line endings and fixed column orders so identical
//! inputs produce identical bytes.

use std::io::Read;

use csv::{Terminator, WriterBuilder};

use crate::anomaly::AnomalyReport;
use crate::error::{Error, Result};
use crate::ingest::{CLEAN_HEADER, NORMALIZED_MARKER};
use crate::ledger::{AccountId, AccountKind, Date, LabelTimeline, Ledger, Level, Pole, SeverityLabel};
use crate::privacy::{NormalizedEntry, NormalizedSeries};
use crate::series::{MonthRatio, ResampledSeries};

pub const LABEL_HEADER: [&str; 4] = ["pole", "level", "start", "end"];
pub const SERIES_HEADER: [&str; 4] = ["period_start", "frequency", "volume", "severity"];
pub const ANOMALY_HEADER: [&str; 3] = ["period_start", "score", "flagged"];
pub const CREDIT_HEADER: [&str; 3] = ["month", "ratio", "n_expenditures"];

fn write_rows<I, R>(prefix: &str, header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(prefix.as_bytes().to_vec());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// Canonical clean ledger. Accounts without transactions are not represented.
pub fn write_clean_csv(ledger: &Ledger) -> String {
    write_rows(
        "",
        &CLEAN_HEADER,
        ledger.transactions().iter().map(|t| {
            [
                t.date.to_string(),
                t.account_id.to_string(),
                ledger
                    .kind_of(&t.account_id)
                    .expect("ledger invariant: account exists")
                    .to_string(),
                t.direction.to_string(),
                t.amount.to_string(),
                t.description.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// Clean-CSV layout behind a `# normalized` line, with an empty description
/// column and the scaled amount. Scale parameters are never written.
pub fn write_normalized_csv(series: &NormalizedSeries) -> String {
    write_rows(
        &format!("{NORMALIZED_MARKER}\n"),
        &CLEAN_HEADER,
        series.entries.iter().map(|e| {
            [
                e.date.to_string(),
                e.account_id.to_string(),
                e.account_kind.to_string(),
                "expenditure".to_string(),
                e.amount.to_string(),
                String::new(),
            ]
        }),
    )
}

fn csv_reader(input: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(None)
        .from_reader(input)
}

fn check_header(name: &str, line: usize, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if got.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(Error::parse(
            name,
            line,
            format!("header must be exactly `{}`", want.join(",")),
        ));
    }
    Ok(())
}

fn record_line(r: &csv::StringRecord) -> usize {
    r.position().map_or(0, |p| p.line() as usize)
}

fn csv_err(name: &str, e: csv::Error) -> Error {
    Error::parse(name, e.position().map_or(0, |p| p.line() as usize), e.to_string())
}

/// Reads a file written by [`write_normalized_csv`]. Values outside `[0, 1]`
/// or non-empty descriptions are rejected.
pub fn parse_normalized_csv(text: &str, name: &str) -> Result<NormalizedSeries> {
    let body = text
        .strip_prefix(NORMALIZED_MARKER)
        .and_then(|r| r.strip_prefix('\n').or_else(|| r.strip_prefix("\r\n")))
        .ok_or_else(|| Error::parse(name, 1, format!("expected `{NORMALIZED_MARKER}` as the first line")))?;
    let mut records = csv_reader(body.as_bytes()).into_records();
    let header = records
        .next()
        .ok_or_else(|| Error::parse(name, 2, "missing header"))?
        .map_err(|e| csv_err(name, e))?;
    check_header(name, 2, &header, &CLEAN_HEADER)?;
    let mut entries = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_err(name, e))?;
        let line = record_line(&record) + 1;
        let err = |msg: String| Error::parse(name, line, msg);
        if record.len() != CLEAN_HEADER.len() {
            return Err(err(format!("expected {} columns, got {}", CLEAN_HEADER.len(), record.len())));
        }
        let date: Date = record[0].parse().map_err(|_| err(format!("bad date `{}`", &record[0])))?;
        let account_id = AccountId::new(&record[1]).map_err(|e| err(e.to_string()))?;
        let account_kind: AccountKind = record[2].parse().map_err(|e: Error| err(e.to_string()))?;
        if &record[3] != "expenditure" {
            return Err(err(format!("normalized rows must be expenditures, got `{}`", &record[3])));
        }
        let amount: f64 = record[4].parse().map_err(|_| err(format!("bad amount `{}`", &record[4])))?;
        if !(0.0..=1.0).contains(&amount) {
            return Err(err(format!("normalized amount {amount} is outside [0, 1]")));
        }
        if !record[5].is_empty() {
            return Err(err("normalized rows must not carry descriptions".into()));
        }
        entries.push(NormalizedEntry {
            date,
            account_id,
            account_kind,
            amount,
        });
    }
    if entries.windows(2).any(|w| w[1].date < w[0].date) {
        return Err(Error::parse(name, 0, "normalized rows must be in date order"));
    }
    Ok(NormalizedSeries {
        entries,
        params: Default::default(),
    })
}

/// `pole,level,start,end`, one row per label. An empty file is an empty
/// timeline.
pub fn write_labels_csv(timeline: &LabelTimeline) -> String {
    write_rows(
        "",
        &LABEL_HEADER,
        timeline.labels().iter().map(|l| {
            [
                l.pole.to_string(),
                l.level.to_string(),
                l.start.to_string(),
                l.end.to_string(),
            ]
        }),
    )
}

pub fn parse_labels_csv(text: &str, name: &str) -> Result<LabelTimeline> {
    if text.trim().is_empty() {
        return Ok(LabelTimeline::default());
    }
    let mut records = csv_reader(text.as_bytes()).into_records();
    let header = records
        .next()
        .expect("non-empty text has a record")
        .map_err(|e| csv_err(name, e))?;
    check_header(name, 1, &header, &LABEL_HEADER)?;
    let mut labels = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_err(name, e))?;
        let line = record_line(&record);
        let err = |msg: String| Error::parse(name, line, msg);
        if record.len() != LABEL_HEADER.len() {
            return Err(err(format!("expected 4 columns, got {}", record.len())));
        }
        let pole: Pole = record[0].parse().map_err(|e: Error| err(e.to_string()))?;
        let level: Level = record[1].parse().map_err(|e: Error| err(e.to_string()))?;
        let date = |s: &str| s.trim().parse::<Date>().map_err(|_| err(format!("bad date `{s}` (expected YYYY-MM-DD)")));
        let label = SeverityLabel::new(date(&record[2])?, date(&record[3])?, pole, level)
            .map_err(|e| err(e.to_string()))?;
        labels.push(label);
    }
    LabelTimeline::new(labels).map_err(|e| match e {
        Error::Invalid(msg) => Error::parse(name, 0, msg),
        other => other,
    })
}

/// Plot data: `period_start,frequency,volume,severity`.
pub fn write_series_csv(series: &ResampledSeries) -> String {
    write_rows(
        "",
        &SERIES_HEADER,
        series.points.iter().map(|p| {
            [
                p.period_start.to_string(),
                p.frequency.to_string(),
                p.volume.to_string(),
                p.severity.to_string(),
            ]
        }),
    )
}

/// Plot data: `period_start,score,flagged`.
pub fn write_anomaly_csv(report: &AnomalyReport) -> String {
    write_rows(
        "",
        &ANOMALY_HEADER,
        report.points.iter().map(|p| {
            [
                p.period_start.to_string(),
                p.score.to_string(),
                p.flagged.to_string(),
            ]
        }),
    )
}

pub fn write_credit_csv(ratios: &[MonthRatio]) -> String {
    write_rows(
        "",
        &CREDIT_HEADER,
        ratios.iter().map(|m| {
            [
                m.month.to_string(),
                m.ratio.to_string(),
                m.n_expenditures.to_string(),
            ]
        }),
    )
}
