//! The privacy property of the normalized export.

use ledger_signal::formats::{parse_normalized_csv, write_normalized_csv};
use ledger_signal::ledger::Ledger;
use ledger_signal::privacy::privacy_transform;

/// Checks that the normalized export of `ledger` carries no description text,
/// no raw amounts and only values in `[0, 1]`.
pub fn check(ledger: &Ledger) -> Result<(), String> {
    let text = write_normalized_csv(&privacy_transform(ledger));
    for t in ledger.transactions() {
        if let Some(d) = &t.description {
            if d.lines().map(str::trim).any(|part| part.chars().any(|c| c.is_ascii_uppercase()) && text.contains(part)) {
                return Err(format!("description `{d}` leaked"));
            }
        }
    }
    let parsed = parse_normalized_csv(&text, "normalized.csv").map_err(|e| e.to_string())?;
    let expenditures = ledger.transactions().iter().filter(|t| t.is_expenditure()).count();
    if parsed.entries.len() != expenditures {
        return Err(format!("{} entries for {expenditures} expenditures", parsed.entries.len()));
    }
    if let Some(e) = parsed.entries.iter().find(|e| !(0.0..=1.0).contains(&e.amount)) {
        return Err(format!("value {} outside [0, 1]", e.amount));
    }
    if !parsed.params.is_empty() {
        return Err("scale parameters written to the normalized file".into());
    }
    for line in text.lines().skip(2) {
        let amount = line.split(',').nth(4).unwrap_or("");
        if amount.parse::<f64>().map_or(true, |v| !(0.0..=1.0).contains(&v)) {
            return Err(format!("bad amount cell in `{line}`"));
        }
        if !line.ends_with(',') {
            return Err(format!("description column not empty in `{line}`"));
        }
    }
    Ok(())
}
