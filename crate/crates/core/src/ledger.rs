//! Domain types shared by every stage: transactions, accounts, the ledger and
//! the symptom-severity timeline. Nothing here performs I/O.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Date = NaiveDate;

/// A strictly positive amount of money in minor units (cents).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub fn from_cents(cents: i64) -> Result<Self> {
        if cents <= 0 {
            return Err(Error::Invalid(format!(
                "amount must be positive, got {}",
                Money(cents)
            )));
        }
        Ok(Money(cents))
    }

    pub fn cents(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

/// Parses a plain decimal such as `12`, `12.3` or `12.34`. At most two
/// fractional digits are accepted; no signs, currency symbols or separators.
pub fn parse_decimal_cents(text: &str) -> Option<i64> {
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if frac_part.len() > 2
        || !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
        || (text.contains('.') && frac_part.is_empty())
    {
        return None;
    }
    let whole: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().ok()?
    };
    let frac: i64 = match frac_part.len() {
        0 => 0,
        1 => frac_part.parse::<i64>().ok()? * 10,
        _ => frac_part.parse().ok()?,
    };
    whole.checked_mul(100)?.checked_add(frac)
}

macro_rules! text_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Invalid(format!(
                        concat!("unknown ", stringify!($name), " `{}` (expected one of: {})"),
                        other,
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

text_enum!(
    Direction {
        Expenditure => "expenditure",
        Income => "income",
    }
);

text_enum!(
    AccountKind {
        Checking => "checking",
        Credit => "credit",
    }
);

text_enum!(
    Pole {
        Mania => "mania",
        Depression => "depression",
    }
);

text_enum!(
    /// Symptom severity. `Symptomatic` only appears after
    /// [`LabelTimeline::merge_symptomatic`] collapses the graded levels.
    Level {
        None => "none",
        Mild => "mild",
        Moderate => "moderate",
        Severe => "severe",
        Symptomatic => "symptomatic",
    }
);

impl Level {
    pub fn is_symptomatic(self) -> bool {
        self != Level::None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(String);

impl AccountId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let id = id.trim();
        if id.is_empty() {
            return Err(Error::Invalid("account id must not be empty".into()));
        }
        Ok(AccountId(id.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub date: Date,
    pub amount: Money,
    pub direction: Direction,
    pub account_id: AccountId,
    pub description: Option<String>,
}

impl Transaction {
    pub fn new(
        date: Date,
        amount: Money,
        direction: Direction,
        account_id: AccountId,
        description: Option<String>,
    ) -> Self {
        let description = description.filter(|d| !d.is_empty());
        Transaction {
            date,
            amount,
            direction,
            account_id,
            description,
        }
    }

    pub fn is_expenditure(&self) -> bool {
        self.direction == Direction::Expenditure
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub id: AccountId,
    pub kind: AccountKind,
}

/// Accounts plus their transactions, kept sorted by date. Ties keep the order
/// in which transactions were added.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledger {
    accounts: BTreeMap<AccountId, AccountKind>,
    transactions: Vec<Transaction>,
}

impl Ledger {
    pub fn new(
        accounts: impl IntoIterator<Item = Account>,
        transactions: impl IntoIterator<Item = Transaction>,
    ) -> Result<Self> {
        let mut ledger = Ledger::default();
        for account in accounts {
            ledger.add_account(account)?;
        }
        ledger.extend(transactions)?;
        Ok(ledger)
    }

    /// Registers an account. Re-registering with the same kind is a no-op.
    pub fn add_account(&mut self, account: Account) -> Result<()> {
        match self.accounts.get(&account.id) {
            Some(kind) if *kind != account.kind => Err(Error::Invalid(format!(
                "account `{}` already registered as {kind}, cannot change to {}",
                account.id, account.kind
            ))),
            Some(_) => Ok(()),
            None => {
                self.accounts.insert(account.id, account.kind);
                Ok(())
            }
        }
    }

    pub fn push(&mut self, txn: Transaction) -> Result<()> {
        if !self.accounts.contains_key(&txn.account_id) {
            return Err(Error::Invalid(format!(
                "transaction on {} references unknown account `{}`",
                txn.date, txn.account_id
            )));
        }
        let at = self.transactions.partition_point(|t| t.date <= txn.date);
        self.transactions.insert(at, txn);
        Ok(())
    }

    pub fn extend(&mut self, txns: impl IntoIterator<Item = Transaction>) -> Result<()> {
        let start = self.transactions.len();
        for txn in txns {
            if !self.accounts.contains_key(&txn.account_id) {
                self.transactions.truncate(start);
                return Err(Error::Invalid(format!(
                    "transaction on {} references unknown account `{}`",
                    txn.date, txn.account_id
                )));
            }
            self.transactions.push(txn);
        }
        // stable: equal dates keep insertion order
        self.transactions.sort_by_key(|t| t.date);
        Ok(())
    }

    pub fn accounts(&self) -> impl Iterator<Item = Account> + '_ {
        self.accounts.iter().map(|(id, kind)| Account {
            id: id.clone(),
            kind: *kind,
        })
    }

    pub fn kind_of(&self, id: &AccountId) -> Option<AccountKind> {
        self.accounts.get(id).copied()
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    /// Same accounts, only the transactions matching `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&Transaction) -> bool) -> Ledger {
        Ledger {
            accounts: self.accounts.clone(),
            transactions: self
                .transactions
                .iter()
                .filter(|t| keep(t))
                .cloned()
                .collect(),
        }
    }

    /// Date span covered by the transactions.
    pub fn span(&self) -> Option<(Date, Date)> {
        Some((self.transactions.first()?.date, self.transactions.last()?.date))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityLabel {
    pub start: Date,
    pub end: Date,
    pub pole: Pole,
    pub level: Level,
}

impl SeverityLabel {
    pub fn new(start: Date, end: Date, pole: Pole, level: Level) -> Result<Self> {
        if start > end {
            return Err(Error::Invalid(format!(
                "label range starts after it ends ({start} > {end})"
            )));
        }
        Ok(SeverityLabel {
            start,
            end,
            pole,
            level,
        })
    }

    /// Label spanning a whole calendar month.
    pub fn month(year: i32, month: u32, pole: Pole, level: Level) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(year, month, 1)
            .ok_or_else(|| Error::Invalid(format!("invalid month {year}-{month}")))?;
        let end = crate::series::next_month(start) - Days::new(1);
        SeverityLabel::new(start, end, pole, level)
    }

    pub fn contains(&self, date: Date) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Severity labels for both poles. Within a pole ranges never overlap; days
/// outside every range are level `none`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTimeline {
    labels: Vec<SeverityLabel>,
}

impl LabelTimeline {
    pub fn new(labels: impl IntoIterator<Item = SeverityLabel>) -> Result<Self> {
        let mut labels: Vec<SeverityLabel> = labels.into_iter().collect();
        labels.sort_by_key(|l| (l.pole, l.start, l.end));
        for pair in labels.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.pole == b.pole && b.start <= a.end {
                return Err(Error::Invalid(format!(
                    "{} labels overlap: {}..{} and {}..{}",
                    a.pole, a.start, a.end, b.start, b.end
                )));
            }
        }
        Ok(LabelTimeline { labels })
    }

    pub fn labels(&self) -> &[SeverityLabel] {
        &self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn severity_at(&self, date: Date, pole: Pole) -> Level {
        self.labels
            .iter()
            .find(|l| l.pole == pole && l.contains(date))
            .map_or(Level::None, |l| l.level)
    }

    /// Collapses every graded level into a single `symptomatic` level and
    /// coalesces ranges that touch or overlap. `none` labels are dropped since
    /// uncovered days are `none` anyway.
    pub fn merge_symptomatic(&self) -> LabelTimeline {
        let mut merged: Vec<SeverityLabel> = Vec::new();
        // labels are sorted by (pole, start)
        for label in self.labels.iter().filter(|l| l.level.is_symptomatic()) {
            let label = SeverityLabel {
                level: Level::Symptomatic,
                ..*label
            };
            match merged.last_mut() {
                Some(prev)
                    if prev.pole == label.pole
                        && label.start <= prev.end.succ_opt().unwrap_or(prev.end) =>
                {
                    prev.end = prev.end.max(label.end);
                }
                _ => merged.push(label),
            }
        }
        LabelTimeline { labels: merged }
    }
}
