//! Statement ingestion.
//!
//! Raw statement text (delimited text extracted from PDF statements) goes
//! through four steps:
//!
//! 1. [`parse_raw_rows`] splits lines into cells,
//! 2. [`split_accounts`] cuts the rows into per-account sections at marker rows,
//! 3. [`merge_wrapped_rows`] glues transactions that wrapped over several lines,
//! 4. [`assemble_ledger`] joins per-month files into one sorted [`Ledger`].
//!
//! [`parse_clean_csv`] reads the canonical interchange format directly.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use regex::{Regex, RegexBuilder};

use crate::config::KvFile;
use crate::error::{Error, Result};
use crate::ledger::{
    parse_decimal_cents, Account, AccountId, AccountKind, Date, Direction, Ledger, Money,
    Transaction,
};

pub const CLEAN_HEADER: [&str; 6] = [
    "date",
    "account_id",
    "account_kind",
    "direction",
    "amount",
    "description",
];

/// First line of a privacy-transformed file.
pub const NORMALIZED_MARKER: &str = "# normalized";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub cells: Vec<String>,
    pub source_file: String,
    pub line_no: usize,
}

impl RawRow {
    fn text(&self) -> String {
        self.cells
            .iter()
            .filter(|c| !c.is_empty())
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    /// Tab if the line contains one, comma otherwise.
    Auto,
    Comma,
    Tab,
}

/// Where a row keeps its money.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmountLayout {
    /// `date, description.., amount` with negative amounts for expenditures.
    Signed,
    /// `date, description.., debit, credit` with exactly one of the two filled.
    DebitCredit,
}

#[derive(Debug, Clone)]
pub struct AccountMarker {
    /// Upper-cased text a marker row starts with.
    pub text: String,
    pub account: Account,
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub date_formats: Vec<String>,
    pub account_markers: Vec<AccountMarker>,
    pub decimal_separator: char,
    pub delimiter: Delimiter,
    pub layout: AmountLayout,
    pub default_account: Option<Account>,
    pub header_patterns: Vec<Regex>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        let marker = |text: &str, id: &str, kind| AccountMarker {
            text: text.to_string(),
            account: Account {
                id: AccountId::new(id).expect("non-empty"),
                kind,
            },
        };
        IngestConfig {
            date_formats: ["%m/%d/%Y", "%m/%d/%y", "%Y-%m-%d"]
                .map(String::from)
                .to_vec(),
            account_markers: vec![
                marker("CHECKING", "checking", AccountKind::Checking),
                marker("CREDIT", "credit", AccountKind::Credit),
            ],
            decimal_separator: '.',
            delimiter: Delimiter::Auto,
            layout: AmountLayout::Signed,
            default_account: None,
            header_patterns: [r"^page\s+\d+", r"^date\b", r"^statement\b"]
                .iter()
                .map(|p| header_regex(p).expect("valid builtin pattern"))
                .collect(),
        }
    }
}

fn header_regex(pattern: &str) -> std::result::Result<Regex, regex::Error> {
    RegexBuilder::new(pattern).case_insensitive(true).build()
}

fn parse_account_spec(text: &str, default_id: &str) -> Result<Account> {
    // `kind` or `kind:id`
    let (kind, id) = match text.split_once(':') {
        Some((k, id)) => (k, id.trim()),
        None => (text, default_id),
    };
    Ok(Account {
        kind: kind.parse()?,
        id: AccountId::new(id)?,
    })
}

impl IngestConfig {
    /// Reads the top-level and `[ingest]` entries of a config file. Keys given
    /// in the file replace the corresponding defaults; repeatable keys
    /// (`date_format`, `account.<MARKER>`, `header_pattern`) replace the whole
    /// default list when present at least once.
    ///
    /// ```text
    /// date_format = %d.%m.%Y
    /// delimiter = tab              # auto | comma | tab
    /// decimal_separator = ,
    /// layout = debit_credit        # signed | debit_credit
    /// account.GIROKONTO = checking:giro
    /// account.VISA = credit
    /// default_account = checking:giro
    /// header_pattern = ^seite \d+
    /// ```
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut cfg = IngestConfig::default();
        let mut formats = Vec::new();
        let mut markers = Vec::new();
        let mut headers = Vec::new();
        for entry in kv.scoped("ingest") {
            let value = entry.value.as_str();
            match entry.key.as_str() {
                "date_format" => formats.push(value.to_string()),
                "delimiter" => {
                    cfg.delimiter = match value.to_ascii_lowercase().as_str() {
                        "auto" => Delimiter::Auto,
                        "comma" | "," => Delimiter::Comma,
                        "tab" | "\\t" => Delimiter::Tab,
                        other => return Err(kv.error(entry, format!("unknown delimiter `{other}`"))),
                    }
                }
                "decimal_separator" => {
                    cfg.decimal_separator = match value {
                        "." => '.',
                        "," => ',',
                        other => {
                            return Err(kv.error(entry, format!("decimal separator must be `.` or `,`, got `{other}`")))
                        }
                    }
                }
                "layout" => {
                    cfg.layout = match value.to_ascii_lowercase().as_str() {
                        "signed" => AmountLayout::Signed,
                        "debit_credit" => AmountLayout::DebitCredit,
                        other => return Err(kv.error(entry, format!("unknown layout `{other}`"))),
                    }
                }
                "default_account" => {
                    let account = parse_account_spec(value, value)
                        .map_err(|e| kv.error(entry, e.to_string()))?;
                    cfg.default_account = Some(account);
                }
                "header_pattern" => headers.push(
                    header_regex(value).map_err(|e| kv.error(entry, format!("bad pattern: {e}")))?,
                ),
                key => {
                    let Some(marker) = key.strip_prefix("account.") else {
                        return Err(kv.error(entry, format!("unknown ingest key `{key}`")));
                    };
                    let marker = marker.trim();
                    let default_id = marker.to_ascii_lowercase().replace(char::is_whitespace, "-");
                    let account = parse_account_spec(value, &default_id)
                        .map_err(|e| kv.error(entry, e.to_string()))?;
                    markers.push(AccountMarker {
                        text: marker.to_ascii_uppercase(),
                        account,
                    });
                }
            }
        }
        if !formats.is_empty() {
            cfg.date_formats = formats;
        }
        if !markers.is_empty() {
            cfg.account_markers = markers;
        }
        if !headers.is_empty() {
            cfg.header_patterns = headers;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.date_formats.is_empty() {
            return Err(Error::Config("at least one date format is required".into()));
        }
        let mut kinds: BTreeMap<&AccountId, AccountKind> = BTreeMap::new();
        let accounts = self
            .account_markers
            .iter()
            .map(|m| &m.account)
            .chain(self.default_account.as_ref());
        for account in accounts {
            if let Some(prev) = kinds.insert(&account.id, account.kind) {
                if prev != account.kind {
                    return Err(Error::Config(format!(
                        "account `{}` configured as both {prev} and {}",
                        account.id, account.kind
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn parse_date(&self, text: &str) -> Option<Date> {
        let text = text.trim();
        if text.is_empty() {
            return None;
        }
        // `%Y` happily reads "17" as year 17, so two-digit years would never
        // reach a later `%y` format without the range check.
        self.date_formats
            .iter()
            .filter_map(|fmt| NaiveDate::parse_from_str(text, fmt).ok())
            .find(|d| (1900..=2999).contains(&d.year()))
    }

    /// Parses a statement amount into signed cents. Accepts currency symbols,
    /// thousands separators, a leading `+`/`-`/`−`, a trailing `-`, parentheses
    /// for negatives and `CR`/`DR` suffixes. Exactly two fractional digits are
    /// required so that numbers inside descriptions are not taken for amounts.
    pub fn parse_amount(&self, text: &str) -> Option<i64> {
        let mut s: String = text
            .chars()
            .filter(|c| !c.is_whitespace() && !matches!(c, '$' | '€' | '£' | '\''))
            .collect();
        if s.is_empty() {
            return None;
        }
        let mut negative = false;
        let upper = s.to_ascii_uppercase();
        if upper.ends_with("CR") {
            s.truncate(s.len() - 2);
        } else if upper.ends_with("DR") {
            s.truncate(s.len() - 2);
            negative = true;
        }
        if s.starts_with('(') && s.ends_with(')') && s.len() > 2 {
            s = s[1..s.len() - 1].to_string();
            negative = !negative;
        }
        if let Some(rest) = s.strip_prefix(['-', '\u{2212}']) {
            s = rest.to_string();
            negative = !negative;
        } else if let Some(rest) = s.strip_prefix('+') {
            s = rest.to_string();
        } else if let Some(rest) = s.strip_suffix('-') {
            s = rest.to_string();
            negative = !negative;
        }
        let thousands = if self.decimal_separator == '.' { ',' } else { '.' };
        let (int_part, frac_part) = s.rsplit_once(self.decimal_separator)?;
        if frac_part.len() != 2 || int_part.is_empty() {
            return None;
        }
        let int_digits: String = int_part.chars().filter(|&c| c != thousands).collect();
        let cents = parse_decimal_cents(&format!("{int_digits}.{frac_part}"))?;
        Some(if negative { -cents } else { cents })
    }

    fn is_page_header(&self, row: &RawRow) -> bool {
        let text = row.text();
        self.header_patterns.iter().any(|re| re.is_match(&text))
    }

    fn marker_for(&self, row: &RawRow) -> Option<&Account> {
        let text = row.text().to_ascii_uppercase();
        self.account_markers
            .iter()
            .find(|m| text.starts_with(&m.text))
            .map(|m| &m.account)
    }

    /// Account kind for an id named by a marker or the default account.
    pub fn kind_of(&self, id: &AccountId) -> Option<AccountKind> {
        self.account_markers
            .iter()
            .map(|m| &m.account)
            .chain(self.default_account.as_ref())
            .find(|a| &a.id == id)
            .map(|a| a.kind)
    }

    fn classify(&self, row: &RawRow) -> Classified {
        let cells = &row.cells;
        let date = cells.first().and_then(|c| self.parse_date(c));
        let body_start = usize::from(date.is_some());
        let amount = match self.layout {
            AmountLayout::Signed => {
                if cells.len() > body_start {
                    cells.last().and_then(|c| self.parse_amount(c))
                } else {
                    None
                }
            }
            AmountLayout::DebitCredit => {
                let n = cells.len();
                if n >= body_start + 2 {
                    let debit = &cells[n - 2];
                    let credit = &cells[n - 1];
                    match (debit.is_empty(), credit.is_empty()) {
                        (false, true) => self.parse_amount(debit).map(|c| -c.abs()),
                        (true, false) => self.parse_amount(credit).map(i64::abs),
                        _ => None,
                    }
                } else {
                    None
                }
            }
        };
        let body_end = match (amount, self.layout) {
            (None, _) => cells.len(),
            (Some(_), AmountLayout::Signed) => cells.len() - 1,
            (Some(_), AmountLayout::DebitCredit) => cells.len() - 2,
        };
        let text = cells[body_start..body_end]
            .iter()
            .filter(|c| !c.is_empty())
            .cloned()
            .collect::<Vec<_>>()
            .join(" ");
        Classified { date, amount, text }
    }
}

struct Classified {
    date: Option<Date>,
    amount: Option<i64>,
    text: String,
}

fn format_signed_cents(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let abs = cents.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

/// Splits delimited text into rows of trimmed cells. Blank lines are dropped;
/// line numbers are 1-based positions in the input.
pub fn parse_raw_rows(text: &str, source_name: &str, delimiter: Delimiter) -> Result<Vec<RawRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let sep = match delimiter {
            Delimiter::Comma => ',',
            Delimiter::Tab => '\t',
            Delimiter::Auto if line.contains('\t') => '\t',
            Delimiter::Auto => ',',
        };
        let cells = split_line(line, sep).map_err(|msg| Error::parse(source_name, line_no, msg))?;
        if cells.iter().all(String::is_empty) {
            continue;
        }
        rows.push(RawRow {
            cells,
            source_file: source_name.to_string(),
            line_no,
        });
    }
    Ok(rows)
}

/// RFC-4180 style field splitting for a single physical line.
fn split_line(line: &str, sep: char) -> std::result::Result<Vec<String>, String> {
    let mut cells = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        let mut cell = String::new();
        // skip leading blanks so ` "x"` is still a quoted field
        while chars.peek().is_some_and(|&c| c != sep && c.is_whitespace()) {
            chars.next();
        }
        if chars.peek() == Some(&'"') {
            chars.next();
            loop {
                match chars.next() {
                    None => return Err("unterminated quoted field".into()),
                    Some('"') if chars.peek() == Some(&'"') => {
                        chars.next();
                        cell.push('"');
                    }
                    Some('"') => break,
                    Some(c) => cell.push(c),
                }
            }
            while chars.peek().is_some_and(|&c| c != sep && c.is_whitespace()) {
                chars.next();
            }
            match chars.peek() {
                None => {}
                Some(&c) if c == sep => {}
                Some(&c) => return Err(format!("unexpected `{c}` after closing quote")),
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c == sep {
                    break;
                }
                if c == '"' {
                    return Err("quote inside unquoted field".into());
                }
                cell.push(c);
                chars.next();
            }
        }
        cells.push(cell.trim().to_string());
        match chars.next() {
            Some(_) => continue,
            None => break,
        }
    }
    Ok(cells)
}

/// Joins transactions that wrapped over several lines.
///
/// A row without a date in its first cell and without an amount is a
/// continuation: its text is appended to the description of the nearest
/// preceding dated row. A dated row without an amount absorbs following rows
/// until one of them carries the amount. Rows matching a page-header pattern
/// (and carrying neither date nor amount) are dropped.
///
/// Output rows have exactly three cells: date text, description and the signed
/// amount (`-12.00` for expenditures).
pub fn merge_wrapped_rows(rows: &[RawRow], cfg: &IngestConfig) -> Result<Vec<RawRow>> {
    struct Pending {
        row: RawRow,
        date_text: String,
        description: Vec<String>,
        amount: Option<i64>,
        last_line: usize,
    }

    fn finish(p: Pending) -> RawRow {
        RawRow {
            cells: vec![
                p.date_text,
                p.description.join(" "),
                format_signed_cents(p.amount.expect("only complete rows are finished")),
            ],
            source_file: p.row.source_file,
            line_no: p.row.line_no,
        }
    }

    let mut out = Vec::with_capacity(rows.len());
    let mut pending: Option<Pending> = None;
    for row in rows {
        let c = cfg.classify(row);
        if c.date.is_some() {
            if let Some(p) = pending.take() {
                if p.amount.is_none() {
                    return Err(Error::ParseRange {
                        file: p.row.source_file.clone(),
                        first: p.row.line_no,
                        last: row.line_no - 1,
                        msg: "transaction has a date but no amount before the next dated row"
                            .into(),
                    });
                }
                out.push(finish(p));
            }
            pending = Some(Pending {
                date_text: row.cells[0].clone(),
                description: if c.text.is_empty() { vec![] } else { vec![c.text] },
                amount: c.amount,
                last_line: row.line_no,
                row: row.clone(),
            });
            continue;
        }
        if c.amount.is_none() && cfg.is_page_header(row) {
            continue;
        }
        let Some(p) = pending.as_mut() else {
            return Err(Error::parse(
                &row.source_file,
                row.line_no,
                format!("continuation row `{}` has no preceding dated row", row.text()),
            ));
        };
        match (p.amount, c.amount) {
            (_, None) => {}
            (None, Some(amount)) => p.amount = Some(amount),
            (Some(_), Some(_)) => {
                return Err(Error::parse(
                    &row.source_file,
                    row.line_no,
                    "row carries an amount but no date, and the preceding transaction already has one",
                ))
            }
        }
        if !c.text.is_empty() {
            p.description.push(c.text);
        }
        p.last_line = row.line_no;
    }
    if let Some(p) = pending {
        if p.amount.is_none() {
            return Err(Error::ParseRange {
                file: p.row.source_file.clone(),
                first: p.row.line_no,
                last: p.last_line,
                msg: "transaction has a date but no amount".into(),
            });
        }
        out.push(finish(p));
    }
    Ok(out)
}

/// Assigns rows to the account named by the most recent marker row. Marker rows
/// themselves are consumed. Rows before the first marker go to the configured
/// default account; page headers there are dropped.
pub fn split_accounts(
    rows: &[RawRow],
    cfg: &IngestConfig,
) -> Result<BTreeMap<AccountId, Vec<RawRow>>> {
    let mut out: BTreeMap<AccountId, Vec<RawRow>> = BTreeMap::new();
    let mut current = cfg.default_account.as_ref().map(|a| a.id.clone());
    for row in rows {
        let c = cfg.classify(row);
        if c.date.is_none() && c.amount.is_none() {
            if let Some(account) = cfg.marker_for(row) {
                current = Some(account.id.clone());
                continue;
            }
        }
        match &current {
            Some(id) => out.entry(id.clone()).or_default().push(row.clone()),
            None if c.date.is_none() && c.amount.is_none() && cfg.is_page_header(row) => {}
            None => {
                return Err(Error::parse(
                    &row.source_file,
                    row.line_no,
                    "row appears before any account marker and no default account is configured",
                ))
            }
        }
    }
    Ok(out)
}

/// One statement file after [`split_accounts`].
pub type AccountSections = BTreeMap<AccountId, Vec<RawRow>>;

/// Joins per-month files (in chronological order) into a ledger. Identical
/// transactions are all kept.
pub fn assemble_ledger(files: &[AccountSections], cfg: &IngestConfig) -> Result<Ledger> {
    let mut per_account: BTreeMap<AccountId, Vec<Transaction>> = BTreeMap::new();
    for sections in files {
        for (id, rows) in sections {
            let merged = merge_wrapped_rows(rows, cfg)?;
            let txns = per_account.entry(id.clone()).or_default();
            for row in &merged {
                txns.push(row_to_transaction(row, id, cfg)?);
            }
        }
    }
    let mut ledger = Ledger::default();
    for id in per_account.keys() {
        let kind = cfg.kind_of(id).ok_or_else(|| {
            Error::Config(format!("no account kind configured for `{id}`"))
        })?;
        ledger.add_account(Account {
            id: id.clone(),
            kind,
        })?;
    }
    ledger.extend(per_account.into_values().flatten())?;
    Ok(ledger)
}

fn row_to_transaction(row: &RawRow, id: &AccountId, cfg: &IngestConfig) -> Result<Transaction> {
    let err = |msg: String| Error::parse(&row.source_file, row.line_no, msg);
    let [date, description, amount] = row.cells.as_slice() else {
        return Err(err(format!("expected 3 cells after merging, got {}", row.cells.len())));
    };
    let date = cfg
        .parse_date(date)
        .ok_or_else(|| err(format!("unparseable date `{date}`")))?;
    // merged rows always carry the canonical `-12.34` form
    let signed = match amount.strip_prefix('-') {
        Some(abs) => parse_decimal_cents(abs).map(|c| -c),
        None => parse_decimal_cents(amount),
    }
    .ok_or_else(|| err(format!("unparseable amount `{amount}`")))?;
    let direction = if signed < 0 {
        Direction::Expenditure
    } else {
        Direction::Income
    };
    let amount = Money::from_cents(signed.abs()).map_err(|e| err(e.to_string()))?;
    Ok(Transaction::new(
        date,
        amount,
        direction,
        id.clone(),
        Some(description.clone()),
    ))
}

/// Full raw-statement pipeline over `(source name, text)` pairs given in
/// chronological order. Files are parsed in parallel and joined in order.
pub fn ingest_statements(files: &[(String, String)], cfg: &IngestConfig) -> Result<Ledger> {
    let sections = files
        .par_iter()
        .map(|(name, text)| {
            let rows = parse_raw_rows(text, name, cfg.delimiter)?;
            split_accounts(&rows, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_ledger(&sections, cfg)
}

/// True when the text starts with the canonical clean-CSV header.
pub fn looks_like_clean_csv(text: &str) -> bool {
    text.lines()
        .next()
        .is_some_and(|l| l.trim_end_matches('\r') == CLEAN_HEADER.join(","))
}

/// Reads the canonical `date,account_id,account_kind,direction,amount,description`
/// format. Row numbers in errors are file line numbers.
pub fn parse_clean_csv(input: impl Read) -> Result<Ledger> {
    parse_clean_csv_named(input, "<clean csv>")
}

pub fn parse_clean_csv_named(input: impl Read, name: &str) -> Result<Ledger> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::parse(name, 1, "empty file (missing header)")),
        Some(h) => h.map_err(|e| csv_error(name, e))?,
    };
    if header.get(0).is_some_and(|f| f.starts_with('#')) {
        return Err(Error::parse(
            name,
            1,
            "file is a normalized dataset, not a clean ledger",
        ));
    }
    if header.iter().ne(CLEAN_HEADER) {
        let missing: Vec<&str> = CLEAN_HEADER
            .iter()
            .copied()
            .filter(|c| !header.iter().any(|h| h == *c))
            .collect();
        let msg = if missing.is_empty() {
            format!("header must be exactly `{}`", CLEAN_HEADER.join(","))
        } else {
            format!(
                "header must be exactly `{}` (missing: {})",
                CLEAN_HEADER.join(","),
                missing.join(", ")
            )
        };
        return Err(Error::parse(name, 1, msg));
    }

    let mut ledger = Ledger::default();
    let mut txns = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(name, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let err = |msg: String| Error::parse(name, line, msg);
        if record.len() != CLEAN_HEADER.len() {
            return Err(err(format!(
                "expected {} columns, got {}",
                CLEAN_HEADER.len(),
                record.len()
            )));
        }
        let date: Date = record[0]
            .parse()
            .map_err(|_| err(format!("bad date `{}` (expected YYYY-MM-DD)", &record[0])))?;
        let id = AccountId::new(&record[1]).map_err(|e| err(e.to_string()))?;
        let kind: AccountKind = record[2].parse().map_err(|e: Error| err(e.to_string()))?;
        let direction: Direction = record[3].parse().map_err(|e: Error| err(e.to_string()))?;
        let cents = parse_decimal_cents(&record[4])
            .ok_or_else(|| err(format!("bad amount `{}`", &record[4])))?;
        let amount = Money::from_cents(cents).map_err(|e| err(e.to_string()))?;
        ledger
            .add_account(Account {
                id: id.clone(),
                kind,
            })
            .map_err(|e| err(e.to_string()))?;
        let description = Some(record[5].to_string());
        txns.push(Transaction::new(date, amount, direction, id, description));
    }
    ledger.extend(txns)?;
    Ok(ledger)
}

fn csv_error(name: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(name, line, e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(lines: &[&str]) -> Vec<RawRow> {
        parse_raw_rows(&lines.join("\n"), "t.csv", Delimiter::Auto).unwrap()
    }

    fn cfg() -> IngestConfig {
        IngestConfig::default()
    }

    #[test]
    fn raw_rows_basic() {
        let r = parse_raw_rows("01/05/2017,COFFEE SHOP,4.50\n", "a", Delimiter::Auto).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].cells, ["01/05/2017", "COFFEE SHOP", "4.50"]);
        assert_eq!(r[0].line_no, 1);
        assert!(parse_raw_rows("\n\n", "a", Delimiter::Auto).unwrap().is_empty());
        let r = parse_raw_rows("\n\"a,b\"\t x \n", "a", Delimiter::Auto).unwrap();
        assert_eq!(r[0].cells, ["a,b", "x"]);
        assert_eq!(r[0].line_no, 2);
    }

    #[test]
    fn raw_rows_quote_errors_cite_line() {
        let err = parse_raw_rows("a,b\n01/05/2017,\"OPEN,4.50\n", "stmt.csv", Delimiter::Auto)
            .unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().starts_with("stmt.csv:2:"), "{err}");
        assert!(parse_raw_rows("\"a\"b,c", "s", Delimiter::Comma).is_err());
        assert!(parse_raw_rows("a\"b,c", "s", Delimiter::Comma).is_err());
        let ok = parse_raw_rows("\"say \"\"hi\"\"\",1.00", "s", Delimiter::Comma).unwrap();
        assert_eq!(ok[0].cells[0], "say \"hi\"");
    }

    #[test]
    fn merge_wrapped_description() {
        let merged =
            merge_wrapped_rows(&rows(&["01/05/2017,AMAZON MKTP", "US RETAIL,-23.10"]), &cfg())
                .unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].cells, ["01/05/2017", "AMAZON MKTP US RETAIL", "-23.10"]);
        assert_eq!(merged[0].line_no, 1);
    }

    #[test]
    fn merge_identity_and_trailing_continuation() {
        let merged = merge_wrapped_rows(&rows(&["01/05/2017,SHOP,4.50"]), &cfg()).unwrap();
        assert_eq!(merged[0].cells, ["01/05/2017", "SHOP", "4.50"]);
        let merged =
            merge_wrapped_rows(&rows(&["01/05/2017,SHOP,-4.50", "REF 1234"]), &cfg()).unwrap();
        assert_eq!(merged[0].cells[1], "SHOP REF 1234");
    }

    #[test]
    fn merge_errors() {
        let err = merge_wrapped_rows(&rows(&["US RETAIL,23.10"]), &cfg()).unwrap_err();
        assert_eq!(err.line(), Some(1));
        let err = merge_wrapped_rows(
            &rows(&["01/05/2017,SHOP", "MORE TEXT", "01/06/2017,OTHER,1.00"]),
            &cfg(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("lines 1-2"), "{err}");
        let err = merge_wrapped_rows(&rows(&["01/05/2017,A,1.00", "B,2.00"]), &cfg()).unwrap_err();
        assert_eq!(err.line(), Some(2));
    }

    #[test]
    fn merge_drops_page_headers() {
        let merged = merge_wrapped_rows(
            &rows(&["01/05/2017,AMAZON", "Page 2 of 3", "Date,Description,Amount", "MKTP,-3.00"]),
            &cfg(),
        )
        .unwrap();
        assert_eq!(merged[0].cells[1], "AMAZON MKTP");
    }

    #[test]
    fn split_by_markers() {
        let r = rows(&[
            "CHECKING ACCOUNT ...1234",
            "01/05/2017,A,-1.00",
            "CREDIT CARD ...9999",
            "01/06/2017,B,-2.00",
        ]);
        let split = split_accounts(&r, &cfg()).unwrap();
        let chk = &split[&AccountId::new("checking").unwrap()];
        let crd = &split[&AccountId::new("credit").unwrap()];
        assert_eq!(chk.len(), 1);
        assert_eq!(chk[0].line_no, 2);
        assert_eq!(crd[0].line_no, 4);
    }

    #[test]
    fn split_default_and_missing() {
        let r = rows(&["01/05/2017,A,-1.00"]);
        assert!(split_accounts(&r, &cfg()).is_err());
        let mut c = cfg();
        c.default_account = Some(Account {
            id: AccountId::new("checking").unwrap(),
            kind: AccountKind::Checking,
        });
        let split = split_accounts(&r, &c).unwrap();
        assert_eq!(split[&AccountId::new("checking").unwrap()].len(), 1);
        // a header before the first marker is not an error
        let r = rows(&["Page 1", "CHECKING", "01/05/2017,A,-1.00"]);
        assert!(split_accounts(&r, &cfg()).is_ok());
    }

    #[test]
    fn amounts() {
        let c = cfg();
        assert_eq!(c.parse_amount("\u{2212}12.00"), Some(-1200));
        assert_eq!(c.parse_amount("-12.00"), Some(-1200));
        assert_eq!(c.parse_amount("12.00-"), Some(-1200));
        assert_eq!(c.parse_amount("(1,234.56)"), Some(-123456));
        assert_eq!(c.parse_amount("$ 4.50"), Some(450));
        assert_eq!(c.parse_amount("4.50 DR"), Some(-450));
        assert_eq!(c.parse_amount("4.50CR"), Some(450));
        assert_eq!(c.parse_amount("1234"), None);
        assert_eq!(c.parse_amount("4.5"), None);
        assert_eq!(c.parse_amount("US RETAIL"), None);
        let mut eu = cfg();
        eu.decimal_separator = ',';
        assert_eq!(eu.parse_amount("1.234,56"), Some(123456));
        assert_eq!(eu.parse_amount("-12,00"), Some(-1200));
    }

    #[test]
    fn debit_credit_layout() {
        let mut c = cfg();
        c.layout = AmountLayout::DebitCredit;
        let r = rows(&["01/05/2017,SHOP,\u{2212}12.00,", "01/06/2017,PAY,,100.00", "01/07/2017,WRAP", "MORE,3.00,"]);
        let merged = merge_wrapped_rows(&r, &c).unwrap();
        let amounts: Vec<&str> = merged.iter().map(|r| r.cells[2].as_str()).collect();
        assert_eq!(amounts, ["-12.00", "100.00", "-3.00"]);
        assert_eq!(merged[2].cells[1], "WRAP MORE");
    }

    #[test]
    fn assemble_sorts_and_keeps_duplicates() {
        let mut c = cfg();
        c.default_account = Some(Account {
            id: AccountId::new("checking").unwrap(),
            kind: AccountKind::Checking,
        });
        let feb = split_accounts(&rows(&["02/03/2017,A,-1.00", "02/01/2017,B,-2.00", "02/02/2017,C,-3.00"]), &c).unwrap();
        let jan = split_accounts(&rows(&["01/03/2017,D,-1.00", "01/03/2017,D,-1.00", "01/02/2017,E,5.00"]), &c).unwrap();
        let ledger = assemble_ledger(&[jan, feb], &c).unwrap();
        assert_eq!(ledger.len(), 6);
        let dates: Vec<Date> = ledger.transactions().iter().map(|t| t.date).collect();
        assert!(dates.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(ledger.transactions()[0].direction, Direction::Income);
        assert_eq!(ledger.transactions()[1].description.as_deref(), Some("D"));
        assert_eq!(ledger.transactions()[2].description.as_deref(), Some("D"));
    }

    #[test]
    fn assemble_rejects_zero_amount() {
        let mut c = cfg();
        c.default_account = Some(Account {
            id: AccountId::new("checking").unwrap(),
            kind: AccountKind::Checking,
        });
        let s = split_accounts(&rows(&["01/03/2017,X,1.00", "01/04/2017,Y,0.00"]), &c).unwrap();
        let err = assemble_ledger(&[s], &c).unwrap_err();
        assert_eq!(err.line(), Some(2));
    }

    #[test]
    fn clean_csv() {
        let text = "date,account_id,account_kind,direction,amount,description\n\
                    2017-01-02,chk,checking,expenditure,4.50,COFFEE\n\
                    2017-01-01,chk,checking,income,100.00,\n\
                    2017-01-02,visa,credit,expenditure,12.00,\"A, B\"\n";
        let ledger = parse_clean_csv(text.as_bytes()).unwrap();
        assert_eq!(ledger.len(), 3);
        assert_eq!(ledger.transactions()[0].direction, Direction::Income);
        assert_eq!(ledger.transactions()[0].description, None);
        assert_eq!(ledger.transactions()[2].description.as_deref(), Some("A, B"));
        assert_eq!(ledger.accounts().count(), 2);
    }

    #[test]
    fn clean_csv_errors() {
        let head = "date,account_id,account_kind,direction,amount,description\n";
        let zero = format!("{head}2017-01-02,chk,checking,expenditure,0,X\n");
        let err = parse_clean_csv(zero.as_bytes()).unwrap_err();
        assert_eq!(err.line(), Some(2));
        let transfer = format!("{head}2017-01-02,chk,checking,expenditure,1.00,X\n2017-01-02,chk,checking,transfer,1.00,X\n");
        let err = parse_clean_csv(transfer.as_bytes()).unwrap_err();
        assert_eq!(err.line(), Some(3));
        assert!(err.to_string().contains("transfer"));
        let missing = "date,account_id,direction,amount,description\n";
        let err = parse_clean_csv(missing.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("account_kind"), "{err}");
        let conflict = format!("{head}2017-01-02,a,checking,expenditure,1.00,X\n2017-01-03,a,credit,expenditure,1.00,X\n");
        assert!(parse_clean_csv(conflict.as_bytes()).is_err());
    }

    #[test]
    fn two_digit_years_fall_through() {
        let c = IngestConfig::default();
        assert_eq!(c.parse_date("10/02/17"), NaiveDate::from_ymd_opt(2017, 10, 2));
        assert_eq!(c.parse_date("10/02/2017"), NaiveDate::from_ymd_opt(2017, 10, 2));
        assert_eq!(c.parse_date("2017-10-02"), NaiveDate::from_ymd_opt(2017, 10, 2));
        assert_eq!(c.parse_date("13/02/17"), None);
    }

    #[test]
    fn config_file() {
        let kv = KvFile::parse(
            "date_format = %d.%m.%Y\ndecimal_separator = ,\ndelimiter = tab\n\
             account.GIROKONTO = checking:giro\naccount.VISA KARTE = credit\n\
             default_account = checking:giro\n[analyze]\nalpha = 0.1\n",
            "bank.conf",
        )
        .unwrap();
        let c = IngestConfig::from_kv(&kv).unwrap();
        assert_eq!(c.date_formats, ["%d.%m.%Y"]);
        assert_eq!(c.delimiter, Delimiter::Tab);
        assert_eq!(c.account_markers[1].account.id.as_str(), "visa-karte");
        assert_eq!(c.parse_date("05.01.2017"), NaiveDate::from_ymd_opt(2017, 1, 5));
        let bad = KvFile::parse("bogus = 1\n", "bank.conf").unwrap();
        assert_eq!(IngestConfig::from_kv(&bad).unwrap_err().line(), Some(1));
        let clash = KvFile::parse("account.A = checking:x\naccount.B = credit:x\n", "c").unwrap();
        assert!(IngestConfig::from_kv(&clash).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        // each transaction: (day, amount cents, description fragments, amount on continuation?)
        fn arb_statement() -> impl Strategy<Value = Vec<(u32, i64, Vec<String>, bool)>> {
            prop::collection::vec(
                (
                    1u32..28,
                    -500_000i64..500_000,
                    prop::collection::vec("[A-Z]{1,8}", 0..4),
                    any::<bool>(),
                ),
                0..30,
            )
        }

        proptest! {
            #[test]
            fn merge_conserves_amounts(stmt in arb_statement()) {
                let c = cfg();
                let mut lines = Vec::new();
                let mut expected = 0i64;
                for (day, cents, words, wrap_amount) in &stmt {
                    let cents = if *cents == 0 { 1 } else { *cents };
                    expected += cents;
                    let amount = format_signed_cents(cents);
                    let date = format!("03/{day:02}/2017");
                    match (words.split_first(), wrap_amount) {
                        (Some((first, rest)), true) => {
                            lines.push(format!("{date},{first}"));
                            for w in rest { lines.push(w.clone()); }
                            lines.push(format!("MORE,{amount}"));
                        }
                        (Some((first, rest)), false) => {
                            lines.push(format!("{date},{first},{amount}"));
                            for w in rest { lines.push(w.clone()); }
                        }
                        (None, _) => lines.push(format!("{date},,{amount}")),
                    }
                }
                let raw = parse_raw_rows(&lines.join("\n"), "p", Delimiter::Comma).unwrap();
                let merged = merge_wrapped_rows(&raw, &c).unwrap();
                prop_assert_eq!(merged.len(), stmt.len());
                let mut total = 0i64;
                for row in &merged {
                    prop_assert!(c.parse_date(&row.cells[0]).is_some());
                    total += c.parse_amount(row.cells.last().unwrap()).unwrap();
                }
                prop_assert_eq!(total, expected);
            }

            #[test]
            fn assembled_ledger_sorted_for_any_file_order(
                days in prop::collection::vec(prop::collection::vec(1u32..28, 1..6), 1..5)
            ) {
                let mut c = cfg();
                c.default_account = Some(Account { id: AccountId::new("checking").unwrap(), kind: AccountKind::Checking });
                let files: Vec<AccountSections> = days.iter().enumerate().map(|(m, ds)| {
                    let text: Vec<String> = ds.iter().map(|d| format!("{:02}/{d:02}/2017,X,-1.00", 12 - m)).collect();
                    split_accounts(&parse_raw_rows(&text.join("\n"), "f", Delimiter::Comma).unwrap(), &c).unwrap()
                }).collect();
                let ledger = assemble_ledger(&files, &c).unwrap();
                prop_assert_eq!(ledger.len(), days.iter().map(Vec::len).sum::<usize>());
                prop_assert!(ledger.transactions().windows(2).all(|w| w[0].date <= w[1].date));
            }
        }
    }
}
