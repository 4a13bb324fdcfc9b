//! Privacy-preserving analysis dataset: expenditures only, no descriptions,
//! amounts min-max scaled to `[0, 1]` within each account.

use std::collections::BTreeMap;

use crate::ledger::{AccountId, AccountKind, Date, Ledger};

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedEntry {
    pub date: Date,
    pub account_id: AccountId,
    pub account_kind: AccountKind,
    pub amount: f64,
}

/// Original per-account expenditure range. Kept in memory only; it would leak
/// real amounts if written next to the normalized values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormalizedSeries {
    pub entries: Vec<NormalizedEntry>,
    pub params: BTreeMap<AccountId, ScaleParams>,
}

impl NormalizedSeries {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = Date> + '_ {
        self.entries.iter().map(|e| e.date)
    }

    /// Entries of a single account, parameters included.
    pub fn for_account(&self, id: &AccountId) -> NormalizedSeries {
        NormalizedSeries {
            entries: self
                .entries
                .iter()
                .filter(|e| &e.account_id == id)
                .cloned()
                .collect(),
            params: self
                .params
                .iter()
                .filter(|(k, _)| *k == id)
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }

    pub fn account_ids(&self) -> Vec<AccountId> {
        let mut ids: Vec<AccountId> = self.entries.iter().map(|e| e.account_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

pub fn filter_expenditures(ledger: &Ledger) -> Ledger {
    ledger.filtered(|t| t.is_expenditure())
}

/// Min-max scaling per account. An account whose expenditures all have the
/// same amount maps every entry to `0.0`. Income rows are ignored, so callers
/// normally pass the output of [`filter_expenditures`].
pub fn normalize_per_account(ledger: &Ledger) -> NormalizedSeries {
    let mut params: BTreeMap<AccountId, ScaleParams> = BTreeMap::new();
    let expenditures = || ledger.transactions().iter().filter(|t| t.is_expenditure());
    for t in expenditures() {
        let v = t.amount.as_f64();
        params
            .entry(t.account_id.clone())
            .and_modify(|p| {
                p.min = p.min.min(v);
                p.max = p.max.max(v);
            })
            .or_insert(ScaleParams { min: v, max: v });
    }
    let entries = expenditures()
        .map(|t| {
            let p = params[&t.account_id];
            let v = t.amount.as_f64();
            let amount = if p.max > p.min {
                ((v - p.min) / (p.max - p.min)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            NormalizedEntry {
                date: t.date,
                account_id: t.account_id.clone(),
                account_kind: ledger
                    .kind_of(&t.account_id)
                    .expect("ledger invariant: account exists"),
                amount,
            }
        })
        .collect();
    NormalizedSeries { entries, params }
}

/// `filter_expenditures` followed by `normalize_per_account`.
pub fn privacy_transform(ledger: &Ledger) -> NormalizedSeries {
    normalize_per_account(&filter_expenditures(ledger))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Account, Direction, Money, Transaction};

    fn ledger(rows: &[(&str, i64, Direction)]) -> Ledger {
        let accounts = [
            Account { id: AccountId::new("a").unwrap(), kind: AccountKind::Checking },
            Account { id: AccountId::new("b").unwrap(), kind: AccountKind::Credit },
        ];
        let txns = rows.iter().enumerate().map(|(i, (acct, cents, dir))| {
            Transaction::new(
                Date::from_ymd_opt(2017, 1, 1 + i as u32).unwrap(),
                Money::from_cents(*cents).unwrap(),
                *dir,
                AccountId::new(*acct).unwrap(),
                Some("secret".into()),
            )
        });
        Ledger::new(accounts, txns).unwrap()
    }

    use Direction::{Expenditure as E, Income as I};

    #[test]
    fn filter() {
        let l = ledger(&[("a", 100, E), ("a", 200, I), ("b", 300, E)]);
        assert_eq!(filter_expenditures(&l).len(), 2);
        assert!(filter_expenditures(&ledger(&[("a", 1, I)])).is_empty());
        assert!(filter_expenditures(&Ledger::default()).is_empty());
    }

    #[test]
    fn min_max_endpoints() {
        let s = normalize_per_account(&ledger(&[("a", 1000, E), ("a", 2000, E), ("a", 3000, E)]));
        let v: Vec<f64> = s.entries.iter().map(|e| e.amount).collect();
        assert_eq!(v, [0.0, 0.5, 1.0]);
        assert_eq!(s.params[&AccountId::new("a").unwrap()], ScaleParams { min: 10.0, max: 30.0 });
    }

    #[test]
    fn degenerate_account_maps_to_zero() {
        let s = normalize_per_account(&ledger(&[("a", 4200, E)]));
        assert_eq!(s.entries[0].amount, 0.0);
    }

    #[test]
    fn accounts_scaled_independently() {
        let s = normalize_per_account(&ledger(&[
            ("a", 1000, E),
            ("a", 2000, E),
            ("b", 10000, E),
            ("b", 30000, E),
        ]));
        let v: Vec<f64> = s.entries.iter().map(|e| e.amount).collect();
        assert_eq!(v, [0.0, 1.0, 0.0, 1.0]);
        assert_eq!(s.entries[2].account_kind, AccountKind::Credit);
    }

    #[test]
    fn income_excluded_from_range() {
        let s = privacy_transform(&ledger(&[("a", 1000, E), ("a", 99999, I), ("a", 2000, E)]));
        assert_eq!(s.len(), 2);
        assert_eq!(s.entries[1].amount, 1.0);
    }
}
