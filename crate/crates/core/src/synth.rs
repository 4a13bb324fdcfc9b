//! Seeded synthetic ledgers with known symptom episodes.
//!
//! Daily transaction counts are Poisson. Episodes multiply the daily rate and
//! may move spending share between checking and credit accounts. Every day is
//! drawn from its own RNG stream so days can be generated independently.
//!
//! Scenario files use the `key = value` format:
//!
//! ```text
//! seed = 7
//! start = 2017-01-01
//! end = 2018-12-31
//! baseline_daily_rate = 3
//! amount_law = lognormal(3.0, 0.8)
//!
//! [account]
//! id = everyday
//! kind = checking
//! share = 0.7
//!
//! [episode]
//! start = 2017-04-01
//! end = 2017-04-30
//! pole = mania
//! level = moderate
//! rate_multiplier = 1.5
//! credit_share_delta = 0.1
//! ```

use std::collections::BTreeSet;
use std::str::FromStr;

use chrono::Days;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use rayon::prelude::*;

use crate::config::{Block, Entry, KvFile};
use crate::error::{Error, Result};
use crate::ledger::{
    Account, AccountId, AccountKind, Date, Direction, LabelTimeline, Ledger, Level, Money, Pole,
    SeverityLabel, Transaction,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmountLaw {
    /// Parameters of the underlying normal, amounts in currency units.
    LogNormal { mu: f64, sigma: f64 },
    Uniform { low: f64, high: f64 },
}

impl AmountLaw {
    fn validate(self) -> Result<()> {
        let ok = match self {
            AmountLaw::LogNormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
            AmountLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && low > 0.0 && low < high,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid amount law {self:?}")))
        }
    }

    fn sample_cents(self, rng: &mut ChaCha8Rng) -> i64 {
        let units = match self {
            AmountLaw::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
                .expect("validated parameters")
                .sample(rng),
            AmountLaw::Uniform { low, high } => rng.random_range(low..high),
        };
        ((units * 100.0).round() as i64).max(1)
    }
}

impl FromStr for AmountLaw {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| format!("expected `lognormal(mu, sigma)` or `uniform(low, high)`, got `{s}`"))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| format!("missing `)` in `{s}`"))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", a.trim())))
            .collect::<std::result::Result<_, _>>()?;
        let [a, b] = nums[..] else {
            return Err(format!("`{s}` needs exactly two parameters"));
        };
        match name.trim().to_ascii_lowercase().as_str() {
            "lognormal" => Ok(AmountLaw::LogNormal { mu: a, sigma: b }),
            "uniform" => Ok(AmountLaw::Uniform { low: a, high: b }),
            other => Err(format!("unknown amount law `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountShare {
    pub id: AccountId,
    pub kind: AccountKind,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub start: Date,
    pub end: Date,
    pub pole: Pole,
    pub level: Level,
    pub rate_multiplier: f64,
    /// Added to the combined credit share while the episode is active.
    pub credit_share_delta: f64,
}

impl Episode {
    fn contains(&self, d: Date) -> bool {
        self.start <= d && d <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub start: Date,
    pub end: Date,
    pub baseline_daily_rate: f64,
    pub amount_law: AmountLaw,
    pub accounts: Vec<AccountShare>,
    pub episodes: Vec<Episode>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.start > self.end {
            return Err(Error::Invalid(format!("scenario starts after it ends ({} > {})", self.start, self.end)));
        }
        if !(self.baseline_daily_rate >= 0.0 && self.baseline_daily_rate.is_finite()) {
            return Err(Error::Invalid(format!(
                "baseline_daily_rate must be a finite non-negative number, got {}",
                self.baseline_daily_rate
            )));
        }
        self.amount_law.validate()?;
        if self.accounts.is_empty() {
            return Err(Error::Invalid("scenario needs at least one account".into()));
        }
        let mut ids = BTreeSet::new();
        for a in &self.accounts {
            if !ids.insert(&a.id) {
                return Err(Error::Invalid(format!("duplicate account `{}`", a.id)));
            }
            if !(0.0..=1.0).contains(&a.share) {
                return Err(Error::Invalid(format!("share of `{}` must be in [0, 1], got {}", a.id, a.share)));
            }
        }
        let total: f64 = self.accounts.iter().map(|a| a.share).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("account shares sum to {total}, expected 1")));
        }
        let has = |k| self.accounts.iter().any(|a| a.kind == k);
        for e in &self.episodes {
            if e.start > e.end || e.start < self.start || e.end > self.end {
                return Err(Error::Invalid(format!(
                    "episode {}..{} must be ordered and inside the scenario span",
                    e.start, e.end
                )));
            }
            if !(e.rate_multiplier > 0.0 && e.rate_multiplier.is_finite()) {
                return Err(Error::Invalid(format!("rate_multiplier must be > 0, got {}", e.rate_multiplier)));
            }
            if !(-1.0..=1.0).contains(&e.credit_share_delta) {
                return Err(Error::Invalid(format!(
                    "credit_share_delta must be in [-1, 1], got {}",
                    e.credit_share_delta
                )));
            }
            if e.credit_share_delta != 0.0 && !(has(AccountKind::Credit) && has(AccountKind::Checking)) {
                return Err(Error::Invalid(
                    "credit_share_delta needs both a checking and a credit account".into(),
                ));
            }
        }
        self.timeline().map(|_| ())
    }

    /// One label per episode.
    pub fn timeline(&self) -> Result<LabelTimeline> {
        LabelTimeline::new(
            self.episodes
                .iter()
                .map(|e| SeverityLabel::new(e.start, e.end, e.pole, e.level))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// Account shares in effect on `date`.
    pub fn shares_on(&self, date: Date) -> Vec<f64> {
        let delta: f64 = self
            .episodes
            .iter()
            .filter(|e| e.contains(date))
            .map(|e| e.credit_share_delta)
            .sum();
        let base: Vec<f64> = self.accounts.iter().map(|a| a.share).collect();
        if delta == 0.0 {
            return base;
        }
        let is_credit = |i: usize| self.accounts[i].kind == AccountKind::Credit;
        let credit: f64 = (0..base.len()).filter(|&i| is_credit(i)).map(|i| base[i]).sum();
        let target = (credit + delta).clamp(0.0, 1.0);
        let rescale = |i: usize, from: f64, to: f64, count: usize| {
            if from > 0.0 {
                base[i] * to / from
            } else {
                to / count as f64
            }
        };
        let n_credit = (0..base.len()).filter(|&i| is_credit(i)).count();
        let n_other = base.len() - n_credit;
        (0..base.len())
            .map(|i| {
                if is_credit(i) {
                    rescale(i, credit, target, n_credit)
                } else {
                    rescale(i, 1.0 - credit, 1.0 - target, n_other)
                }
            })
            .collect()
    }

    pub fn rate_on(&self, date: Date) -> f64 {
        self.episodes
            .iter()
            .filter(|e| e.contains(date))
            .fold(self.baseline_daily_rate, |r, e| r * e.rate_multiplier)
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let top = kv.top();
        let need = |block: &Block, key: &str| -> Result<Entry> {
            block.get(key).cloned().ok_or_else(|| {
                Error::parse(&kv.name, block.line.max(1), format!("missing required key `{key}`"))
            })
        };
        let check_keys = |block: &Block, allowed: &[&str]| -> Result<()> {
            match block.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
                Some(e) => Err(kv.error(e, format!("unknown key `{}`", e.key))),
                None => Ok(()),
            }
        };
        check_keys(top, &["seed", "start", "end", "baseline_daily_rate", "amount_law"])?;
        if let Some(b) = kv
            .blocks
            .iter()
            .find(|b| !matches!(b.section.as_deref(), None | Some("account") | Some("episode")))
        {
            return Err(Error::parse(
                &kv.name,
                b.line,
                format!("unknown section `[{}]`", b.section.as_deref().unwrap_or_default()),
            ));
        }
        let seed = match top.get("seed") {
            Some(e) => kv.value(e)?,
            None => crate::DEFAULT_SEED,
        };
        let amount_law = match top.get("amount_law") {
            Some(e) => kv.value(e)?,
            None => AmountLaw::LogNormal { mu: 3.0, sigma: 0.8 },
        };
        let mut accounts = Vec::new();
        for b in kv.sections("account") {
            check_keys(b, &["id", "kind", "share"])?;
            let id_entry = need(b, "id")?;
            accounts.push(AccountShare {
                id: AccountId::new(&id_entry.value).map_err(|e| kv.error(&id_entry, e.to_string()))?,
                kind: kv.value(&need(b, "kind")?)?,
                share: kv.value(&need(b, "share")?)?,
            });
        }
        let mut episodes = Vec::new();
        for b in kv.sections("episode") {
            check_keys(b, &["start", "end", "pole", "level", "rate_multiplier", "credit_share_delta"])?;
            episodes.push(Episode {
                start: kv.value(&need(b, "start")?)?,
                end: kv.value(&need(b, "end")?)?,
                pole: b.get("pole").map(|e| kv.value(e)).transpose()?.unwrap_or(Pole::Mania),
                level: kv.value(&need(b, "level")?)?,
                rate_multiplier: b.get("rate_multiplier").map(|e| kv.value(e)).transpose()?.unwrap_or(1.0),
                credit_share_delta: b
                    .get("credit_share_delta")
                    .map(|e| kv.value(e))
                    .transpose()?
                    .unwrap_or(0.0),
            });
        }
        let spec = ScenarioSpec {
            start: kv.value(&need(top, "start")?)?,
            end: kv.value(&need(top, "end")?)?,
            baseline_daily_rate: kv.value(&need(top, "baseline_daily_rate")?)?,
            amount_law,
            accounts,
            episodes,
            seed,
        };
        spec.validate().map_err(|e| match e {
            Error::Invalid(msg) => Error::Config(format!("{}: {msg}", kv.name)),
            other => other,
        })?;
        Ok(spec)
    }

    pub fn parse(text: &str, name: &str) -> Result<Self> {
        Self::from_kv(&KvFile::parse(text, name)?)
    }
}

fn pick(shares: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, s) in shares.iter().enumerate() {
        acc += s;
        if u < acc {
            return i;
        }
    }
    shares.iter().rposition(|&s| s > 0.0).unwrap_or(0)
}

/// Generates the ledger and the label timeline that mirrors the episodes.
pub fn generate(spec: &ScenarioSpec) -> Result<(Ledger, LabelTimeline)> {
    spec.validate()?;
    let timeline = spec.timeline()?;
    let n_days = (spec.end - spec.start).num_days() as u64 + 1;
    let days: Vec<Vec<Transaction>> = (0..n_days)
        .into_par_iter()
        .map(|day| {
            let date = spec.start + Days::new(day);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(day);
            let rate = spec.rate_on(date);
            let count = if rate > 0.0 {
                Poisson::new(rate).expect("positive finite rate").sample(&mut rng) as usize
            } else {
                0
            };
            let shares = spec.shares_on(date);
            (0..count)
                .map(|_| {
                    let account = &spec.accounts[pick(&shares, rng.random::<f64>())];
                    Transaction::new(
                        date,
                        Money::from_cents(spec.amount_law.sample_cents(&mut rng)).expect("at least one cent"),
                        Direction::Expenditure,
                        account.id.clone(),
                        None,
                    )
                })
                .collect()
        })
        .collect();
    let accounts = spec.accounts.iter().map(|a| Account {
        id: a.id.clone(),
        kind: a.kind,
    });
    let ledger = Ledger::new(accounts, days.into_iter().flatten())?;
    Ok((ledger, timeline))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Date {
        s.parse().unwrap()
    }

    fn base_spec() -> ScenarioSpec {
        ScenarioSpec {
            start: d("2017-01-01"),
            end: d("2017-12-31"),
            baseline_daily_rate: 4.0,
            amount_law: AmountLaw::Uniform { low: 1.0, high: 50.0 },
            accounts: vec![
                AccountShare { id: AccountId::new("chk").unwrap(), kind: AccountKind::Checking, share: 0.6 },
                AccountShare { id: AccountId::new("cc").unwrap(), kind: AccountKind::Credit, share: 0.4 },
            ],
            episodes: vec![Episode {
                start: d("2017-05-01"),
                end: d("2017-06-25"),
                pole: Pole::Mania,
                level: Level::Moderate,
                rate_multiplier: 3.0,
                credit_share_delta: 0.0,
            }],
            seed: 1,
        }
    }

    #[test]
    fn zero_rate_still_emits_labels() {
        let mut s = base_spec();
        s.baseline_daily_rate = 0.0;
        let (ledger, labels) = generate(&s).unwrap();
        assert!(ledger.is_empty());
        assert_eq!(labels.labels().len(), 1);
        assert_eq!(ledger.accounts().count(), 2);
    }

    #[test]
    fn deterministic() {
        let s = base_spec();
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let mut other = s.clone();
        other.seed = 2;
        assert_ne!(generate(&s).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn timeline_mirrors_episodes() {
        let (_, labels) = generate(&base_spec()).unwrap();
        let l = &labels.labels()[0];
        assert_eq!((l.start, l.end, l.pole, l.level), (d("2017-05-01"), d("2017-06-25"), Pole::Mania, Level::Moderate));
    }

    #[test]
    fn credit_shift() {
        let mut s = base_spec();
        s.episodes[0].credit_share_delta = 0.2;
        let shares = s.shares_on(d("2017-05-10"));
        assert!((shares[0] - 0.4).abs() < 1e-12 && (shares[1] - 0.6).abs() < 1e-12);
        assert_eq!(s.shares_on(d("2017-01-10")), [0.6, 0.4]);
        s.episodes[0].credit_share_delta = 1.0;
        assert_eq!(s.shares_on(d("2017-05-10")), [0.0, 1.0]);
    }

    #[test]
    fn invalid_specs() {
        let mut s = base_spec();
        s.accounts[0].share = 0.5;
        assert!(generate(&s).is_err());
        let mut s = base_spec();
        s.episodes[0].end = d("2018-02-01");
        assert!(s.validate().is_err());
        let mut s = base_spec();
        s.episodes[0].rate_multiplier = 0.0;
        assert!(s.validate().is_err());
        let mut s = base_spec();
        s.accounts.pop();
        s.accounts[0].share = 1.0;
        s.episodes[0].credit_share_delta = 0.1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn parse_scenario_file() {
        let text = "seed = 9\nstart = 2017-01-01\nend = 2017-03-31\nbaseline_daily_rate = 2.5\n\
                    amount_law = lognormal(2.0, 0.5)\n\
                    [account]\nid = a\nkind = checking\nshare = 1\n\
                    [episode]\nstart = 2017-02-01\nend = 2017-02-28\nlevel = mild\nrate_multiplier = 2\n";
        let s = ScenarioSpec::parse(text, "s.conf").unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.amount_law, AmountLaw::LogNormal { mu: 2.0, sigma: 0.5 });
        assert_eq!(s.episodes[0].pole, Pole::Mania);
        assert_eq!(s.episodes[0].credit_share_delta, 0.0);

        let err = ScenarioSpec::parse(&text.replace("share = 1", "share = 1\ncolour = red"), "s.conf").unwrap_err();
        assert_eq!(err.to_string(), "s.conf:10: unknown key `colour`");
        let err = ScenarioSpec::parse(&text.replace("baseline_daily_rate = 2.5\n", ""), "s.conf").unwrap_err();
        assert!(err.to_string().contains("baseline_daily_rate"));
        assert!("uniform(1, 2, 3)".parse::<AmountLaw>().is_err());
        assert!("gamma(1, 2)".parse::<AmountLaw>().is_err());
    }

    #[test]
    fn rate_multiplier_recovered() {
        let mut inside = 0usize;
        let mut outside = 0usize;
        let spec = base_spec();
        let ep = &spec.episodes[0];
        let in_days = ((ep.end - ep.start).num_days() + 1) as f64;
        let out_days = ((spec.end - spec.start).num_days() + 1) as f64 - in_days;
        for seed in 0..50 {
            let mut s = spec.clone();
            s.seed = seed;
            let (ledger, _) = generate(&s).unwrap();
            for t in ledger.transactions() {
                if ep.contains(t.date) {
                    inside += 1;
                } else {
                    outside += 1;
                }
            }
        }
        let ratio = (inside as f64 / in_days) / (outside as f64 / out_days);
        assert!((ratio / 3.0 - 1.0).abs() < 0.05, "ratio {ratio}");
    }
}
