//! Random ledgers for property tests.

use chrono::{Days, NaiveDate};
use proptest::prelude::*;

use ledger_signal::ledger::{Account, AccountId, AccountKind, Direction, Ledger, Money, Transaction};

const IDS: [(&str, AccountKind); 3] = [
    ("main", AccountKind::Checking),
    ("visa", AccountKind::Credit),
    ("store-card", AccountKind::Credit),
];

/// Upper-case descriptions with separators, quotes and line breaks. They can
/// never occur by accident in normalized output, which is lower-case and
/// numeric.
pub fn description() -> impl Strategy<Value = Option<String>> {
    proptest::option::weighted(0.9, "[A-Z][A-Z0-9 ,\"\n]{2,20}[A-Z]")
}

fn transaction() -> impl Strategy<Value = Transaction> {
    (0u64..730, 1i64..2_000_000, any::<bool>(), 0usize..IDS.len(), description()).prop_map(
        |(day, cents, expenditure, acct, description)| {
            let date = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap() + Days::new(day);
            let direction = if expenditure { Direction::Expenditure } else { Direction::Income };
            Transaction::new(
                date,
                Money::from_cents(cents).unwrap(),
                direction,
                AccountId::new(IDS[acct].0).unwrap(),
                description,
            )
        },
    )
}

/// Ledgers whose accounts all carry at least one transaction.
pub fn ledger(max_len: usize) -> impl Strategy<Value = Ledger> {
    proptest::collection::vec(transaction(), 1..max_len).prop_map(|txns| {
        let accounts = IDS
            .iter()
            .filter(|(id, _)| txns.iter().any(|t| t.account_id.as_str() == *id))
            .map(|(id, kind)| Account { id: AccountId::new(*id).unwrap(), kind: *kind })
            .collect::<Vec<_>>();
        Ledger::new(accounts, txns).unwrap()
    })
}
