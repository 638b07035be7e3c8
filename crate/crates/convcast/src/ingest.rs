//! OHLCV CSV ingestion.
//!
//! Parses Yahoo-Finance-format historical data (header
//! `Date,Open,High,Low,Close,Adj Close,Volume`, ISO dates) into an ordered
//! daily series. Rows containing a literal `null` in any numeric field are
//! dropped and counted, matching how the vendor marks holidays without data.

use crate::error::{Error, Result};
use chrono::NaiveDate;
use std::io::Read;

pub const OHLCV_HEADER: &str = "Date,Open,High,Low,Close,Adj Close,Volume";

/// One trading day of vendor data.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcvRecord {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    /// Shares traded; integer-valued but kept as f64 like the other fields.
    pub volume: f64,
}

impl OhlcvRecord {
    /// Vendor data occasionally violates the OHLC ordering; callers warn
    /// rather than reject, so this is a query, not a validator.
    pub fn ohlc_consistent(&self) -> bool {
        let lo = self.open.min(self.close);
        let hi = self.open.max(self.close);
        self.low <= lo && hi <= self.high
    }
}

/// Strictly date-ascending series of daily records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DailySeries {
    records: Vec<OhlcvRecord>,
}

impl DailySeries {
    pub fn records(&self) -> &[OhlcvRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.records.first().map(|r| r.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.records.last().map(|r| r.date)
    }

    /// Keep only records with `start <= date <= end`.
    pub fn filter_range(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Result<DailySeries> {
        let records: Vec<OhlcvRecord> = self
            .records
            .iter()
            .filter(|r| start.is_none_or(|s| r.date >= s) && end.is_none_or(|e| r.date <= e))
            .cloned()
            .collect();
        if records.is_empty() {
            return Err(Error::EmptySeries);
        }
        Ok(DailySeries { records })
    }

    /// Serialize back to the vendor CSV format. Numbers use the shortest
    /// round-trip representation, so parse -> write -> parse is lossless.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{OHLCV_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.date, r.open, r.high, r.low, r.close, r.adj_close, r.volume
            )?;
        }
        Ok(())
    }
}

/// Counters reported alongside a parsed series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestSummary {
    /// Data rows seen (excluding the header).
    pub rows_total: usize,
    /// Rows retained in the series.
    pub rows_parsed: usize,
    /// Rows dropped for a literal `null` field.
    pub rows_dropped_null: usize,
    /// Retained rows violating `low <= min(open, close) <= max(open, close) <= high`.
    pub ohlc_violations: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
}

/// Parse a Yahoo-format OHLCV stream into a date-sorted series.
///
/// Input row order does not matter: records are sorted ascending by date
/// after parsing, and duplicate dates are rejected.
pub fn parse_ohlcv_csv<R: Read>(source: R) -> Result<(DailySeries, IngestSummary)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);

    let expected = OHLCV_HEADER.split(',').collect::<Vec<_>>();
    let headers = reader
        .headers()
        .map_err(|_| Error::MissingHeader { expected: OHLCV_HEADER })?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::MissingHeader { expected: OHLCV_HEADER });
    }

    let mut summary = IngestSummary::default();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| malformed(&e))?;
        let line = row.position().map_or(0, |p| p.line());
        summary.rows_total += 1;
        if row.len() != 7 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 7 fields, got {}", row.len()),
            });
        }
        if row.iter().skip(1).any(|f| f.trim() == "null") {
            summary.rows_dropped_null += 1;
            continue;
        }
        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d").map_err(|e| Error::MalformedRow {
            line,
            reason: format!("bad date `{}`: {e}", &row[0]),
        })?;
        let mut nums = [0.0f64; 6];
        for (slot, field) in nums.iter_mut().zip(row.iter().skip(1)) {
            *slot = field.trim().parse().map_err(|e| Error::MalformedRow {
                line,
                reason: format!("bad number `{field}`: {e}"),
            })?;
        }
        let rec = OhlcvRecord {
            date,
            open: nums[0],
            high: nums[1],
            low: nums[2],
            close: nums[3],
            adj_close: nums[4],
            volume: nums[5],
        };
        if rec.close <= 0.0 || rec.volume < 0.0 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("close must be > 0 and volume >= 0, got close={}, volume={}", rec.close, rec.volume),
            });
        }
        if !rec.ohlc_consistent() {
            summary.ohlc_violations += 1;
        }
        records.push(rec);
    }

    if records.is_empty() {
        return Err(Error::EmptySeries);
    }
    records.sort_by_key(|r| r.date);
    for pair in records.windows(2) {
        if pair[0].date == pair[1].date {
            return Err(Error::DuplicateDate(pair[0].date));
        }
    }
    summary.rows_parsed = records.len();
    summary.first_date = records.first().map(|r| r.date);
    summary.last_date = records.last().map(|r| r.date);
    Ok((DailySeries { records }, summary))
}

fn malformed(e: &csv::Error) -> Error {
    let line = match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, .. } => pos.as_ref().map_or(0, |p| p.line()),
        _ => e.position().map_or(0, |p| p.line()),
    };
    Error::MalformedRow {
        line,
        reason: e.to_string(),
    }
}

/// Which vendor column feeds the price channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceColumn {
    #[default]
    Close,
    AdjClose,
}

/// One day of model input: the price and volume channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    pub date: NaiveDate,
    pub close: f64,
    pub volume: f64,
}

/// Ordered (close, volume) observations extracted from a series; channel
/// order is fixed as (close, volume) = (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    points: Vec<FeaturePoint>,
}

impl FeatureSeries {
    pub fn new(points: Vec<FeaturePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySeries);
        }
        Ok(FeatureSeries { points })
    }

    pub fn points(&self) -> &[FeaturePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Deterministic sinusoid-plus-trend series with constant volume, used by
    /// examples and sanity tests: a series any working forecaster must ace.
    pub fn synthetic_sine(n: usize, period_days: f64, amplitude: f64, slope: f64, base: f64, volume: f64) -> Self {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let points = (0..n)
            .map(|t| FeaturePoint {
                date: start + chrono::Days::new(t as u64),
                close: base + slope * t as f64 + amplitude * (2.0 * std::f64::consts::PI * t as f64 / period_days).sin(),
                volume,
            })
            .collect();
        FeatureSeries { points }
    }
}

/// Project a daily series onto its two model channels.
pub fn select_features(series: &DailySeries, price: PriceColumn) -> Result<FeatureSeries> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let points = series
        .records()
        .iter()
        .map(|r| FeaturePoint {
            date: r.date,
            close: match price {
                PriceColumn::Close => r.close,
                PriceColumn::AdjClose => r.adj_close,
            },
            volume: r.volume,
        })
        .collect();
    FeatureSeries::new(points)
}
