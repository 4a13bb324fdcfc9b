//! Command pipelines and the JSON reports they produce.
//!
//! Each `cmd_*` function takes file contents and returns the output files as
//! `(file name, contents)` pairs. Nothing here touches the filesystem, which
//! keeps the commands deterministic and easy to test.

use std::sync::OnceLock;

use serde::Serialize;
use serde_json::Value;

use crate::anomaly::{self, AnomalyReport, DetectParams, SweepEntry, MIN_WEEKS};
use crate::error::{Error, Result};
use crate::formats;
use crate::ingest::{self, IngestConfig};
use crate::ledger::{AccountKind, Date, LabelTimeline, Ledger, Level};
use crate::privacy::{self, NormalizedSeries};
use crate::series::{
    self, BurstinessResult, BurstinessVariant, CreditBasis, Grain, GroupedStats, Grouping,
    MonthRatio, PhaseBurstinessReport, ResampledSeries,
};
use crate::stats::{self, GamesHowellResult, SampleGroup, WelchAnovaResult};
use crate::synth::ScenarioSpec;

pub const SCHEMA_VERSION: &str = "1.0";
pub const TOOL: &str = "ledger-signal";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const ANALYSIS_SCHEMA: &str = include_str!("../schemas/analysis-report.schema.json");
pub const ANOMALY_SCHEMA: &str = include_str!("../schemas/anomaly-report.schema.json");

const ANOMALY_SCHEMA_URI: &str = "https://example.invalid/ledger-signal/anomaly-report.schema.json";

/// Input file contents with the name used in diagnostics and metadata.
#[derive(Debug, Clone)]
pub struct InputFile {
    pub name: String,
    pub text: String,
}

impl InputFile {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        InputFile {
            name: name.into(),
            text: text.into(),
        }
    }
}

/// Output files in the order they should be written.
pub type Outputs = Vec<(String, String)>;

fn validator(schema: &str) -> &'static jsonschema::Validator {
    static ANALYSIS: OnceLock<jsonschema::Validator> = OnceLock::new();
    static ANOMALY: OnceLock<jsonschema::Validator> = OnceLock::new();
    let build = |text: &str| {
        let value: Value = serde_json::from_str(text).expect("bundled schema is JSON");
        let anomaly: Value = serde_json::from_str(ANOMALY_SCHEMA).expect("bundled schema is JSON");
        let resource = jsonschema::Resource::from_contents(anomaly)
            .expect("bundled schema is a valid resource");
        jsonschema::options()
            .with_resource(ANOMALY_SCHEMA_URI, resource)
            .build(&value)
            .expect("bundled schema compiles")
    };
    if schema == ANALYSIS_SCHEMA {
        ANALYSIS.get_or_init(|| build(ANALYSIS_SCHEMA))
    } else {
        ANOMALY.get_or_init(|| build(ANOMALY_SCHEMA))
    }
}

fn validate_against(schema: &str, value: &Value) -> Result<()> {
    let errors: Vec<String> = validator(schema)
        .iter_errors(value)
        .take(5)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Schema(errors.join("; ")))
    }
}

/// Serializes, checks against the bundled schema and pretty-prints.
fn to_validated_json(value: &impl Serialize, schema: &str) -> Result<String> {
    let json = serde_json::to_value(value)?;
    validate_against(schema, &json).map_err(|e| e.in_stage("report"))?;
    let mut text = serde_json::to_string_pretty(&json)?;
    text.push('\n');
    Ok(text)
}

pub fn validate_analysis_json(text: &str) -> Result<()> {
    validate_against(ANALYSIS_SCHEMA, &serde_json::from_str(text)?)
}

pub fn validate_anomaly_json(text: &str) -> Result<()> {
    validate_against(ANOMALY_SCHEMA, &serde_json::from_str(text)?)
}

fn load_ledger(input: &InputFile) -> Result<Ledger> {
    ingest::parse_clean_csv_named(input.text.as_bytes(), &input.name).map_err(|e| e.in_stage("ingest"))
}

/// Reads raw statements and clean CSV files (recognized by their header)
/// into one ledger.
pub fn load_inputs(inputs: &[InputFile], cfg: &IngestConfig) -> Result<Ledger> {
    let (clean, raw): (Vec<&InputFile>, Vec<&InputFile>) =
        inputs.iter().partition(|f| ingest::looks_like_clean_csv(&f.text));
    let raw_pairs: Vec<(String, String)> = raw.iter().map(|f| (f.name.clone(), f.text.clone())).collect();
    let mut ledger = if raw_pairs.is_empty() {
        Ledger::default()
    } else {
        ingest::ingest_statements(&raw_pairs, cfg)?
    };
    for f in clean {
        let part = load_ledger(f)?;
        for account in part.accounts() {
            ledger.add_account(account).map_err(|e| e.in_stage("ingest"))?;
        }
        ledger.extend(part.transactions().iter().cloned())?;
    }
    Ok(ledger)
}

/// Ingest raw statements and/or clean CSVs into `ledger.csv`, optionally
/// with the privacy-transformed `normalized.csv`.
pub fn cmd_ingest(inputs: &[InputFile], cfg: &IngestConfig, emit_normalized: bool) -> Result<Outputs> {
    if inputs.is_empty() {
        return Err(Error::Invalid("no input files".into()));
    }
    let ledger = load_inputs(inputs, cfg).map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => e.in_stage("ingest"),
    })?;
    let mut out = vec![("ledger.csv".to_string(), formats::write_clean_csv(&ledger))];
    if emit_normalized {
        out.push((
            "normalized.csv".into(),
            formats::write_normalized_csv(&privacy::privacy_transform(&ledger)),
        ));
    }
    Ok(out)
}

/// Generate `ledger.csv` and `labels.csv` from a scenario file.
pub fn cmd_synth(spec: &InputFile, seed: Option<u64>) -> Result<Outputs> {
    let mut spec = ScenarioSpec::parse(&spec.text, &spec.name).map_err(|e| e.in_stage("synth"))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let (ledger, labels) = crate::synth::generate(&spec).map_err(|e| e.in_stage("synth"))?;
    Ok(vec![
        ("ledger.csv".into(), formats::write_clean_csv(&ledger)),
        ("labels.csv".into(), formats::write_labels_csv(&labels)),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Frequency,
    Volume,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Frequency => "frequency",
            Measure::Volume => "volume",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    /// Grain of the grouped statistics and tests.
    pub grain: Grain,
    pub groupings: Vec<Grouping>,
    pub alpha: f64,
    pub per_account: bool,
    pub credit_basis: CreditBasis,
    /// Adds the per-account scaling parameters (real amounts) to the report.
    pub unsafe_raw: bool,
    pub detect: DetectParams,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            grain: Grain::Daily,
            groupings: vec![Grouping::ThreeLevel, Grouping::Binary],
            alpha: stats::DEFAULT_ALPHA,
            per_account: false,
            credit_basis: CreditBasis::Count,
            unsafe_raw: false,
            detect: DetectParams::with_seed(crate::DEFAULT_SEED),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AccountSummary {
    pub id: String,
    pub kind: AccountKind,
    pub n_expenditures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub inputs: Vec<String>,
    pub labels: Option<String>,
    pub grain: Grain,
    pub groupings: Vec<Grouping>,
    pub alpha: f64,
    pub seed: u64,
    pub credit_basis: CreditBasis,
    pub per_account: bool,
    pub n_transactions: usize,
    pub n_expenditures: usize,
    pub span_start: Date,
    pub span_end: Date,
    pub accounts: Vec<AccountSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WelchEntry {
    pub grouping: Grouping,
    pub measure: Measure,
    pub groups: Vec<Level>,
    pub result: Option<WelchAnovaResult>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GamesHowellEntry {
    pub grouping: Grouping,
    pub measure: Measure,
    #[serde(flatten)]
    pub result: GamesHowellResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct AccountBurstiness {
    pub account_id: String,
    pub kind: AccountKind,
    pub overall: Vec<BurstinessResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BurstinessSection {
    pub overall: Vec<BurstinessResult>,
    pub per_phase: Vec<PhaseBurstinessReport>,
    pub per_account: Option<Vec<AccountBurstiness>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CreditSection {
    pub basis: CreditBasis,
    pub months: Vec<MonthRatio>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizationParam {
    pub account_id: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema_version: &'static str,
    pub metadata: Metadata,
    pub grouped_stats: Vec<GroupedStats>,
    pub welch: Vec<WelchEntry>,
    pub games_howell: Vec<GamesHowellEntry>,
    pub burstiness: BurstinessSection,
    pub credit_ratios: CreditSection,
    pub anomaly: Option<AnomalyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Vec<NormalizationParam>>,
    /// Pooled series at every grain.
    pub series: Vec<ResampledSeries>,
    pub warnings: Vec<String>,
}

fn sample_groups(stats: &GroupedStats, measure: Measure) -> Result<Vec<SampleGroup>> {
    stats
        .groups
        .iter()
        .map(|g| {
            let values = match measure {
                Measure::Frequency => g.frequencies.clone(),
                Measure::Volume => g.volumes.clone(),
            };
            SampleGroup::new(g.group.as_str(), values)
        })
        .collect()
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn burstiness_pair(
    series: &NormalizedSeries,
    daily: &ResampledSeries,
    context: &str,
    warnings: &mut Vec<String>,
) -> Vec<BurstinessResult> {
    [BurstinessVariant::Days, BurstinessVariant::ZeroRuns]
        .into_iter()
        .filter_map(|v| match series::overall_burstiness(series, daily, v) {
            Ok(r) => Some(r),
            Err(e) => {
                warnings.push(format!("{context}{} burstiness skipped: {e}", v.as_str()));
                None
            }
        })
        .collect()
}

/// Full analysis of a clean ledger against an optional label file.
pub fn analyze(
    ledger_file: &InputFile,
    labels_file: Option<&InputFile>,
    opts: &AnalyzeOptions,
) -> Result<(AnalysisReport, Outputs)> {
    if opts.groupings.is_empty() {
        return Err(Error::Invalid("at least one grouping is required".into()));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must be in (0, 1), got {}", opts.alpha)));
    }
    let ledger = load_ledger(ledger_file)?;
    let mut warnings = Vec::new();
    let timeline = match labels_file {
        Some(f) => formats::parse_labels_csv(&f.text, &f.name).map_err(|e| e.in_stage("labels"))?,
        None => LabelTimeline::default(),
    };
    if timeline.is_empty() {
        warnings.push("no severity labels: every period is grouped as none".into());
    }

    let series = privacy::privacy_transform(&ledger);
    if series.is_empty() {
        return Err(Error::InsufficientData("ledger has no expenditures".into()).in_stage("privacy-transform"));
    }
    let resampled: Vec<ResampledSeries> = Grain::ALL
        .iter()
        .map(|&g| series::resample(&series, g, &timeline))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("resample"))?;
    let by_grain = |g: Grain| &resampled[Grain::ALL.iter().position(|&x| x == g).expect("all grains")];
    let daily = by_grain(Grain::Daily);
    let analysis = by_grain(opts.grain);

    let mut grouped_stats = Vec::new();
    let mut welch = Vec::new();
    let mut games_howell = Vec::new();
    for &grouping in &opts.groupings {
        let gs = series::group_stats(analysis, grouping).map_err(|e| e.in_stage("group-stats"))?;
        if !gs.omitted.is_empty() {
            let names: Vec<&str> = gs.omitted.iter().map(|l| l.as_str()).collect();
            warnings.push(format!("{} grouping: no {} periods for {}", grouping.as_str(), opts.grain, names.join(", ")));
        }
        for measure in [Measure::Frequency, Measure::Volume] {
            let groups_levels: Vec<Level> = gs.groups.iter().map(|g| g.group).collect();
            let skip_reason = if gs.groups.len() < 2 {
                Some("fewer than 2 groups".to_string())
            } else {
                gs.groups
                    .iter()
                    .find(|g| g.n_periods < 2)
                    .map(|g| format!("group {} has fewer than 2 periods", g.group))
            };
            let (result, skipped) = match skip_reason {
                Some(reason) => {
                    warnings.push(format!(
                        "{} grouping, {}: Welch ANOVA and Games-Howell skipped ({reason})",
                        grouping.as_str(),
                        measure.as_str()
                    ));
                    (None, Some(reason))
                }
                None => {
                    let groups = sample_groups(&gs, measure).map_err(|e| e.in_stage("welch"))?;
                    let w = stats::welch_anova(&groups).map_err(|e| e.in_stage("welch"))?;
                    let gh = stats::games_howell(&groups, opts.alpha).map_err(|e| e.in_stage("games-howell"))?;
                    games_howell.push(GamesHowellEntry {
                        grouping,
                        measure,
                        result: gh,
                    });
                    (Some(w), None)
                }
            };
            welch.push(WelchEntry {
                grouping,
                measure,
                groups: groups_levels,
                result,
                skipped,
            });
        }
        grouped_stats.push(gs);
    }

    let overall = burstiness_pair(&series, daily, "", &mut warnings);
    let mut per_phase = Vec::new();
    for &grouping in &opts.groupings {
        for variant in [BurstinessVariant::Days, BurstinessVariant::ZeroRuns] {
            let r = series::burstiness_by_phase(&series, daily, grouping, variant)
                .map_err(|e| e.in_stage("burstiness"))?;
            for s in &r.skipped {
                warnings.push(format!(
                    "{} {} burstiness: skipped {} segment {}..{} ({})",
                    grouping.as_str(),
                    variant.as_str(),
                    s.group,
                    s.start,
                    s.end,
                    s.reason
                ));
            }
            per_phase.push(r);
        }
    }
    let per_account = if opts.per_account {
        let mut out = Vec::new();
        for id in series.account_ids() {
            let sub = series.for_account(&id);
            let sub_daily = series::resample(&sub, Grain::Daily, &timeline).map_err(|e| e.in_stage("resample"))?;
            let context = format!("account {id}: ");
            out.push(AccountBurstiness {
                account_id: id.to_string(),
                kind: sub.entries[0].account_kind,
                overall: burstiness_pair(&sub, &sub_daily, &context, &mut warnings),
            });
        }
        Some(out)
    } else {
        None
    };

    let credit = series::credit_ratio_monthly(&ledger, opts.credit_basis);

    let weekly = by_grain(Grain::Weekly);
    let anomaly = if weekly.points.len() < MIN_WEEKS {
        warnings.push(format!(
            "anomaly detection skipped: {} weeks of data, at least {MIN_WEEKS} needed",
            weekly.points.len()
        ));
        None
    } else {
        let r = anomaly::detect(weekly, &opts.detect).map_err(|e| e.in_stage("anomaly"))?;
        if r.psi_clamped {
            warnings.push(format!("isolation forest subsample size clamped to {} weeks", r.psi));
        }
        Some(r)
    };

    let (span_start, span_end) = ledger.span().expect("non-empty ledger");
    let accounts = ledger
        .accounts()
        .map(|a| AccountSummary {
            n_expenditures: series.entries.iter().filter(|e| e.account_id == a.id).count(),
            id: a.id.to_string(),
            kind: a.kind,
        })
        .collect();
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        metadata: Metadata {
            tool: TOOL,
            version: VERSION,
            inputs: vec![ledger_file.name.clone()],
            labels: labels_file.map(|f| f.name.clone()),
            grain: opts.grain,
            groupings: opts.groupings.clone(),
            alpha: opts.alpha,
            seed: opts.detect.seed,
            credit_basis: opts.credit_basis,
            per_account: opts.per_account,
            n_transactions: ledger.len(),
            n_expenditures: series.len(),
            span_start,
            span_end,
            accounts,
        },
        grouped_stats,
        welch,
        games_howell,
        burstiness: BurstinessSection {
            overall,
            per_phase,
            per_account,
        },
        credit_ratios: CreditSection {
            basis: opts.credit_basis,
            months: credit,
        },
        anomaly,
        normalization: opts.unsafe_raw.then(|| {
            series
                .params
                .iter()
                .map(|(id, p)| NormalizationParam {
                    account_id: id.to_string(),
                    min: p.min,
                    max: p.max,
                })
                .collect()
        }),
        series: resampled.clone(),
        warnings,
    };

    let mut outputs = vec![("report.json".to_string(), to_validated_json(&report, ANALYSIS_SCHEMA)?)];
    for s in &resampled {
        outputs.push((format!("series_{}.csv", s.grain), formats::write_series_csv(s)));
    }
    for id in series.account_ids() {
        let sub = series.for_account(&id);
        for g in Grain::ALL {
            let s = series::resample(&sub, g, &timeline).map_err(|e| e.in_stage("resample"))?;
            outputs.push((
                format!("series_{g}_{}.csv", file_safe(id.as_str())),
                formats::write_series_csv(&s),
            ));
        }
    }
    outputs.push(("credit_ratio.csv".into(), formats::write_credit_csv(&report.credit_ratios.months)));
    if let Some(a) = &report.anomaly {
        outputs.push(("anomaly_weekly.csv".into(), formats::write_anomaly_csv(a)));
    }
    Ok((report, outputs))
}

pub fn cmd_analyze(ledger: &InputFile, labels: Option<&InputFile>, opts: &AnalyzeOptions) -> Result<Outputs> {
    analyze(ledger, labels, opts).map(|(_, out)| out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectMetadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub input: String,
    pub n_weeks: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectOutput {
    pub schema_version: &'static str,
    pub metadata: DetectMetadata,
    pub report: AnomalyReport,
    pub sweep: Option<Vec<SweepEntry>>,
}

/// Isolation-forest detection over the pooled weekly series.
pub fn detect(ledger_file: &InputFile, params: &DetectParams, sweep: Option<&[f64]>) -> Result<DetectOutput> {
    let ledger = load_ledger(ledger_file)?;
    let series = privacy::privacy_transform(&ledger);
    let weekly = series::resample(&series, Grain::Weekly, &LabelTimeline::default())
        .map_err(|e| e.in_stage("resample"))?;
    let report = anomaly::detect(&weekly, params).map_err(|e| e.in_stage("anomaly"))?;
    let sweep = sweep
        .map(|values| anomaly::sweep_contamination(&weekly, values, params))
        .transpose()
        .map_err(|e| e.in_stage("anomaly"))?;
    Ok(DetectOutput {
        schema_version: SCHEMA_VERSION,
        metadata: DetectMetadata {
            tool: TOOL,
            version: VERSION,
            input: ledger_file.name.clone(),
            n_weeks: weekly.points.len(),
        },
        report,
        sweep,
    })
}

pub fn cmd_detect(ledger: &InputFile, params: &DetectParams, sweep: Option<&[f64]>) -> Result<Outputs> {
    let out = detect(ledger, params, sweep)?;
    Ok(vec![
        ("anomaly.json".into(), to_validated_json(&out, ANOMALY_SCHEMA)?),
        ("anomaly_weekly.csv".into(), formats::write_anomaly_csv(&out.report)),
    ])
}
