//! Resampling, phase grouping, burstiness and credit ratios.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{AccountKind, Date, LabelTimeline, Ledger, Level, Pole};
use crate::privacy::NormalizedSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grain {
    Daily,
    Weekly,
    Monthly,
}

impl Grain {
    pub const ALL: [Grain; 3] = [Grain::Daily, Grain::Weekly, Grain::Monthly];

    pub fn as_str(self) -> &'static str {
        match self {
            Grain::Daily => "daily",
            Grain::Weekly => "weekly",
            Grain::Monthly => "monthly",
        }
    }

    /// First day of the period containing `date`. Weeks start on Monday.
    pub fn period_start(self, date: Date) -> Date {
        match self {
            Grain::Daily => date,
            Grain::Weekly => date - Days::new(u64::from(date.weekday().num_days_from_monday())),
            Grain::Monthly => date.with_day(1).expect("day 1 exists"),
        }
    }

    pub fn next_period(self, start: Date) -> Date {
        match self {
            Grain::Daily => start + Days::new(1),
            Grain::Weekly => start + Days::new(7),
            Grain::Monthly => next_month(start),
        }
    }

    fn index(self, origin: Date, date: Date) -> usize {
        let start = self.period_start(date);
        match self {
            Grain::Daily => (start - origin).num_days() as usize,
            Grain::Weekly => ((start - origin).num_days() / 7) as usize,
            Grain::Monthly => {
                let months = (start.year() - origin.year()) * 12 + start.month() as i32
                    - origin.month() as i32;
                months as usize
            }
        }
    }
}

impl fmt::Display for Grain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "daily" => Ok(Grain::Daily),
            "weekly" => Ok(Grain::Weekly),
            "monthly" => Ok(Grain::Monthly),
            other => Err(Error::Invalid(format!(
                "unknown grain `{other}` (expected daily, weekly or monthly)"
            ))),
        }
    }
}

/// First day of the month after the one containing `date`.
pub fn next_month(date: NaiveDate) -> NaiveDate {
    date.with_day(1).expect("day 1 exists") + Months::new(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub period_start: Date,
    pub frequency: u64,
    pub volume: f64,
    pub severity: Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampledSeries {
    pub grain: Grain,
    pub points: Vec<SeriesPoint>,
}

impl ResampledSeries {
    pub fn total_frequency(&self) -> u64 {
        self.points.iter().map(|p| p.frequency).sum()
    }

    pub(crate) fn require(&self, grain: Grain) -> Result<()> {
        if self.grain != grain {
            return Err(Error::Invalid(format!(
                "expected a {grain} series, got {}",
                self.grain
            )));
        }
        Ok(())
    }
}

/// Highest mania level of any label touching `[start, end]`.
fn max_mania_level(timeline: &LabelTimeline, start: Date, end: Date) -> Level {
    timeline
        .labels()
        .iter()
        .filter(|l| l.pole == Pole::Mania && l.start <= end && l.end >= start)
        .map(|l| l.level)
        .max()
        .unwrap_or(Level::None)
}

/// Buckets the series into contiguous periods from the first to the last
/// transaction. Empty periods are present with zero frequency and volume.
pub fn resample(
    series: &NormalizedSeries,
    grain: Grain,
    timeline: &LabelTimeline,
) -> Result<ResampledSeries> {
    let (Some(first), Some(last)) = (series.dates().min(), series.dates().max()) else {
        return Err(Error::InsufficientData("cannot resample an empty series".into()));
    };
    let origin = grain.period_start(first);
    let mut points = Vec::new();
    let mut start = origin;
    while start <= last {
        let next = grain.next_period(start);
        points.push(SeriesPoint {
            period_start: start,
            frequency: 0,
            volume: 0.0,
            severity: max_mania_level(timeline, start, next - Days::new(1)),
        });
        start = next;
    }
    for entry in &series.entries {
        let p = &mut points[grain.index(origin, entry.date)];
        p.frequency += 1;
        p.volume += entry.amount;
    }
    Ok(ResampledSeries { grain, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// none / mild / moderate (and severe when present).
    ThreeLevel,
    /// none / symptomatic.
    Binary,
}

impl Grouping {
    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::ThreeLevel => "three-level",
            Grouping::Binary => "binary",
        }
    }

    pub fn group_of(self, level: Level) -> Level {
        match self {
            Grouping::ThreeLevel => level,
            Grouping::Binary if level.is_symptomatic() => Level::Symptomatic,
            Grouping::Binary => Level::None,
        }
    }

    fn expected(self) -> &'static [Level] {
        match self {
            Grouping::ThreeLevel => &[Level::None, Level::Mild, Level::Moderate],
            Grouping::Binary => &[Level::None, Level::Symptomatic],
        }
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "three-level" | "three_level" | "three" => Ok(Grouping::ThreeLevel),
            "binary" => Ok(Grouping::Binary),
            other => Err(Error::Invalid(format!(
                "unknown grouping `{other}` (expected three-level or binary)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub group: Level,
    pub n_periods: usize,
    pub mean_frequency: f64,
    pub mean_volume: f64,
    #[serde(skip)]
    pub frequencies: Vec<f64>,
    #[serde(skip)]
    pub volumes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedStats {
    pub grain: Grain,
    pub grouping: Grouping,
    pub groups: Vec<GroupStat>,
    /// Expected groups that had no days.
    pub omitted: Vec<Level>,
}

/// Mean per-period frequency and volume per severity group. Binary grouping
/// folds every non-`none` level into `symptomatic`, which is the same as
/// resampling against the merged timeline.
pub fn group_stats(series: &ResampledSeries, grouping: Grouping) -> Result<GroupedStats> {
    if series.points.is_empty() {
        return Err(Error::InsufficientData("cannot group an empty series".into()));
    }
    let mut by_group: BTreeMap<Level, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in &series.points {
        let (f, v) = by_group.entry(grouping.group_of(p.severity)).or_default();
        f.push(p.frequency as f64);
        v.push(p.volume);
    }
    let omitted = grouping
        .expected()
        .iter()
        .copied()
        .filter(|l| !by_group.contains_key(l))
        .collect();
    let groups = by_group
        .into_iter()
        .map(|(group, (frequencies, volumes))| GroupStat {
            group,
            n_periods: frequencies.len(),
            mean_frequency: mean(&frequencies),
            mean_volume: mean(&volumes),
            frequencies,
            volumes,
        })
        .collect();
    Ok(GroupedStats {
        grain: series.grain,
        grouping,
        groups,
        omitted,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Day differences between successive transactions in date order.
pub fn interevent_days(dates: impl IntoIterator<Item = Date>) -> Result<Vec<f64>> {
    let mut dates: Vec<Date> = dates.into_iter().collect();
    if dates.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "interevent intervals need at least 2 transactions, got {}",
            dates.len()
        )));
    }
    dates.sort();
    Ok(dates
        .windows(2)
        .map(|w| (w[1] - w[0]).num_days() as f64)
        .collect())
}

/// Lengths of maximal runs of consecutive zero-frequency days.
pub fn zero_gap_runs(daily: &ResampledSeries) -> Result<Vec<f64>> {
    daily.require(Grain::Daily)?;
    Ok(zero_runs(daily.points.iter().map(|p| p.frequency)))
}

fn zero_runs(freqs: impl IntoIterator<Item = u64>) -> Vec<f64> {
    let mut runs = Vec::new();
    let mut run = 0u64;
    for f in freqs {
        if f == 0 {
            run += 1;
        } else if run > 0 {
            runs.push(run as f64);
            run = 0;
        }
    }
    if run > 0 {
        runs.push(run as f64);
    }
    runs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BurstinessVariant {
    /// Intervals are day differences between successive transactions.
    #[serde(rename = "B_D")]
    Days,
    /// Intervals are lengths of runs of days without any expenditure.
    #[serde(rename = "B_C")]
    ZeroRuns,
}

impl BurstinessVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            BurstinessVariant::Days => "B_D",
            BurstinessVariant::ZeroRuns => "B_C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstinessResult {
    #[serde(rename = "B")]
    pub b: f64,
    pub tau: f64,
    pub sigma: f64,
    pub n_intervals: usize,
    pub variant: BurstinessVariant,
}

/// `B = (r - 1) / (r + 1)` with `r = sigma / tau`; `sigma` is the population
/// standard deviation of the intervals and `tau` their mean.
pub fn burstiness(intervals: &[f64], variant: BurstinessVariant) -> Result<BurstinessResult> {
    if intervals.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "burstiness needs at least 2 intervals, got {}",
            intervals.len()
        )));
    }
    if intervals.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Invalid("intervals must be finite and non-negative".into()));
    }
    let n = intervals.len() as f64;
    let tau = intervals.iter().sum::<f64>() / n;
    if tau <= 0.0 {
        return Err(Error::InsufficientData(
            "burstiness undefined: every interval is zero".into(),
        ));
    }
    let sigma = (intervals.iter().map(|x| (x - tau).powi(2)).sum::<f64>() / n).sqrt();
    let r = sigma / tau;
    let b = ((r - 1.0) / (r + 1.0)).clamp(-1.0, 1.0);
    Ok(BurstinessResult {
        b,
        tau,
        sigma,
        n_intervals: intervals.len(),
        variant,
    })
}

/// Burstiness of the whole series for the given variant.
pub fn overall_burstiness(
    series: &NormalizedSeries,
    daily: &ResampledSeries,
    variant: BurstinessVariant,
) -> Result<BurstinessResult> {
    let intervals = match variant {
        BurstinessVariant::Days => interevent_days(series.dates())?,
        BurstinessVariant::ZeroRuns => zero_gap_runs(daily)?,
    };
    burstiness(&intervals, variant)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentBurstiness {
    pub start: Date,
    pub end: Date,
    pub n_transactions: usize,
    pub result: BurstinessResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBurstiness {
    pub group: Level,
    pub mean_b: f64,
    pub segments: Vec<SegmentBurstiness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSegment {
    pub group: Level,
    pub start: Date,
    pub end: Date,
    pub n_transactions: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBurstinessReport {
    pub variant: BurstinessVariant,
    pub grouping: Grouping,
    pub phases: Vec<PhaseBurstiness>,
    pub skipped: Vec<SkippedSegment>,
}

/// Minimum transactions a contiguous segment needs to get a burstiness value.
pub const MIN_SEGMENT_TRANSACTIONS: usize = 3;

/// Burstiness per contiguous same-severity segment of the daily series,
/// averaged within each severity group. Segments are never concatenated, so
/// no interval spans a gap between two separate episodes.
pub fn burstiness_by_phase(
    series: &NormalizedSeries,
    daily: &ResampledSeries,
    grouping: Grouping,
    variant: BurstinessVariant,
) -> Result<PhaseBurstinessReport> {
    daily.require(Grain::Daily)?;
    let mut dates: Vec<Date> = series.dates().collect();
    dates.sort();

    let mut by_group: BTreeMap<Level, Vec<SegmentBurstiness>> = BTreeMap::new();
    let mut skipped = Vec::new();
    let points = &daily.points;
    let mut i = 0;
    while i < points.len() {
        let group = grouping.group_of(points[i].severity);
        let mut j = i;
        while j + 1 < points.len() && grouping.group_of(points[j + 1].severity) == group {
            j += 1;
        }
        let (start, end) = (points[i].period_start, points[j].period_start);
        let lo = dates.partition_point(|d| *d < start);
        let hi = dates.partition_point(|d| *d <= end);
        let n_transactions = hi - lo;
        let skip = |reason: String| SkippedSegment {
            group,
            start,
            end,
            n_transactions,
            reason,
        };
        if n_transactions < MIN_SEGMENT_TRANSACTIONS {
            skipped.push(skip(format!(
                "fewer than {MIN_SEGMENT_TRANSACTIONS} transactions"
            )));
        } else {
            let intervals = match variant {
                BurstinessVariant::Days => interevent_days(dates[lo..hi].iter().copied()),
                BurstinessVariant::ZeroRuns => {
                    Ok(zero_runs(points[i..=j].iter().map(|p| p.frequency)))
                }
            };
            match intervals.and_then(|iv| burstiness(&iv, variant)) {
                Ok(result) => by_group.entry(group).or_default().push(SegmentBurstiness {
                    start,
                    end,
                    n_transactions,
                    result,
                }),
                Err(e) => skipped.push(skip(e.to_string())),
            }
        }
        i = j + 1;
    }
    let phases = by_group
        .into_iter()
        .map(|(group, segments)| PhaseBurstiness {
            group,
            mean_b: segments.iter().map(|s| s.result.b).sum::<f64>() / segments.len() as f64,
            segments,
        })
        .collect();
    Ok(PhaseBurstinessReport {
        variant,
        grouping,
        phases,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CreditBasis {
    /// Share of expenditure transactions made on credit accounts.
    Count,
    /// Share of expenditure money spent on credit accounts.
    Volume,
}

impl FromStr for CreditBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "count" => Ok(CreditBasis::Count),
            "volume" => Ok(CreditBasis::Volume),
            other => Err(Error::Invalid(format!(
                "unknown credit basis `{other}` (expected count or volume)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthRatio {
    pub month: Date,
    pub ratio: f64,
    pub n_expenditures: usize,
}

/// Per calendar month, the credit share of expenditures. Income rows are
/// ignored; months without expenditures are omitted.
pub fn credit_ratio_monthly(ledger: &Ledger, basis: CreditBasis) -> Vec<MonthRatio> {
    // month -> (credit, total, n)
    let mut months: BTreeMap<Date, (f64, f64, usize)> = BTreeMap::new();
    for t in ledger.transactions().iter().filter(|t| t.is_expenditure()) {
        let weight = match basis {
            CreditBasis::Count => 1.0,
            CreditBasis::Volume => t.amount.as_f64(),
        };
        let is_credit = ledger.kind_of(&t.account_id) == Some(AccountKind::Credit);
        let e = months.entry(Grain::Monthly.period_start(t.date)).or_default();
        if is_credit {
            e.0 += weight;
        }
        e.1 += weight;
        e.2 += 1;
    }
    months
        .into_iter()
        .map(|(month, (credit, total, n))| MonthRatio {
            month,
            ratio: (credit / total).clamp(0.0, 1.0),
            n_expenditures: n,
        })
        .collect()
}
