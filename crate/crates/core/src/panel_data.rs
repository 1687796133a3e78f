//! Panel ingestion, min-max regularization and transition extraction.
//!
//! A panel holds one quarterly series per (country, indicator). One indicator
//! is designated the target (GDP); the others form the state of the economy.
//! After regularization every series lies in `[0, 1]` and adjacent quarters
//! of a country become [`Transition`]s whose cost is the squared
//! quarter-over-quarter change of the regularized target.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

/// A calendar quarter, ordered by `(year, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    year: i32,
    index: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuarterParseError {
    Format,
    IndexOutOfRange,
}

impl fmt::Display for QuarterParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuarterParseError::Format => f.write_str("expected YYYYQn"),
            QuarterParseError::IndexOutOfRange => f.write_str("quarter index out of range"),
        }
    }
}

impl std::error::Error for QuarterParseError {}

impl Quarter {
    pub fn new(year: i32, index: u8) -> Option<Self> {
        (1..=4).contains(&index).then_some(Self { year, index })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn index(self) -> u8 {
        self.index
    }

    pub fn succ(self) -> Self {
        if self.index == 4 {
            Self { year: self.year + 1, index: 1 }
        } else {
            Self { year: self.year, index: self.index + 1 }
        }
    }

    pub fn pred(self) -> Self {
        if self.index == 1 {
            Self { year: self.year - 1, index: 4 }
        } else {
            Self { year: self.year, index: self.index - 1 }
        }
    }

    /// Signed number of quarters from `self` to `other`.
    pub fn distance(self, other: Quarter) -> i64 {
        let a = self.year as i64 * 4 + self.index as i64;
        let b = other.year as i64 * 4 + other.index as i64;
        b - a
    }
}

impl FromStr for Quarter {
    type Err = QuarterParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() != 6 || bytes[4] != b'Q' || !bytes[..4].iter().all(u8::is_ascii_digit) {
            return Err(QuarterParseError::Format);
        }
        if !bytes[5].is_ascii_digit() {
            return Err(QuarterParseError::Format);
        }
        let year: i32 = s[..4].parse().map_err(|_| QuarterParseError::Format)?;
        let index = bytes[5] - b'0';
        Quarter::new(year, index).ok_or(QuarterParseError::IndexOutOfRange)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}Q{}", self.year, self.index)
    }
}

/// One raw panel cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub country: String,
    pub quarter: Quarter,
    pub indicator: String,
    pub value: f64,
}

/// Min and max of one (country, indicator) series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    pub min: f64,
    pub max: f64,
}

impl RegularizationParams {
    /// `None` for empty or constant series.
    pub fn fit(series: &[f64]) -> Option<Self> {
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (max > min).then_some(Self { min, max })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, v: f64) -> f64 {
        inverse_regularize(v, self)
    }
}

/// Maps a regularized value back to native units. Values outside `[0, 1]`
/// are extrapolated.
pub fn inverse_regularize(value: f64, params: &RegularizationParams) -> f64 {
    value * (params.max - params.min) + params.min
}

/// Regularization constants keyed by (country, indicator).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegularizationTable {
    entries: BTreeMap<(String, String), RegularizationParams>,
}

impl RegularizationTable {
    pub fn get(&self, country: &str, indicator: &str) -> Option<&RegularizationParams> {
        self.entries.get(&(country.to_string(), indicator.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &RegularizationParams)> {
        self.entries.iter().map(|((c, i), p)| (c.as_str(), i.as_str(), p))
    }

    /// Writes `country,indicator,min,max`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["country", "indicator", "min", "max"])?;
        for (c, i, p) in self.iter() {
            w.write_record([c, i, &p.min.to_string(), &p.max.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One quarter of one country: state indicators in panel order plus the target.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub quarter: Quarter,
    pub indicators: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountryPanel {
    pub country: String,
    pub rows: Vec<PanelRow>,
}

impl CountryPanel {
    pub fn row(&self, quarter: Quarter) -> Option<&PanelRow> {
        self.rows.binary_search_by(|r| r.quarter.cmp(&quarter)).ok().map(|i| &self.rows[i])
    }
}

/// A quarter removed because some indicators were missing.
#[derive(Debug, Clone, PartialEq)]
pub struct DroppedQuarter {
    pub country: String,
    pub quarter: Quarter,
    pub missing: Vec<String>,
}

/// A run of absent quarters between two present ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Gap {
    pub country: String,
    pub after: Quarter,
    pub before: Quarter,
}

impl Gap {
    pub fn missing_quarters(&self) -> i64 {
        self.after.distance(self.before) - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    target: String,
    indicators: Vec<String>,
    countries: Vec<CountryPanel>,
    regularization: Option<RegularizationTable>,
    dropped: Vec<DroppedQuarter>,
}

impl PanelDataset {
    /// Builds a raw dataset. Indicator order is first appearance; countries
    /// are sorted by code and rows by quarter.
    pub fn from_observations<I>(observations: I, target: &str) -> Result<Self>
    where
        I: IntoIterator<Item = Observation>,
    {
        Self::build(observations.into_iter().map(|o| (0, o)), target)
    }

    fn build<I>(observations: I, target: &str) -> Result<Self>
    where
        I: Iterator<Item = (u64, Observation)>,
    {
        let mut indicator_order: Vec<String> = Vec::new();
        let mut seen_indicators: HashSet<String> = HashSet::new();
        // country -> quarter -> indicator -> value
        let mut cells: BTreeMap<String, BTreeMap<Quarter, BTreeMap<String, f64>>> = BTreeMap::new();

        for (line, obs) in observations {
            if !obs.value.is_finite() {
                return Err(Error::NonFinite {
                    line,
                    country: obs.country,
                    quarter: obs.quarter.to_string(),
                    indicator: obs.indicator,
                });
            }
            if seen_indicators.insert(obs.indicator.clone()) && obs.indicator != target {
                indicator_order.push(obs.indicator.clone());
            }
            let slot = cells.entry(obs.country.clone()).or_default().entry(obs.quarter).or_default();
            if slot.insert(obs.indicator.clone(), obs.value).is_some() {
                return Err(Error::DuplicateKey {
                    line,
                    country: obs.country,
                    quarter: obs.quarter.to_string(),
                    indicator: obs.indicator,
                });
            }
        }

        if cells.is_empty() {
            return Err(Error::InvalidPanel("no observations".into()));
        }
        if !seen_indicators.contains(target) {
            return Err(Error::InvalidPanel(format!("target indicator {target:?} not present")));
        }
        if indicator_order.is_empty() {
            return Err(Error::InvalidPanel("no state indicators besides the target".into()));
        }

        let mut countries = Vec::with_capacity(cells.len());
        let mut dropped = Vec::new();
        for (country, quarters) in cells {
            let present: BTreeSet<&str> =
                quarters.values().flat_map(|m| m.keys().map(String::as_str)).collect();
            if let Some(missing) = seen_indicators.iter().filter(|i| !present.contains(i.as_str())).min() {
                return Err(Error::InvalidPanel(format!(
                    "country {country} has no observations for indicator {missing}"
                )));
            }

            let mut rows = Vec::with_capacity(quarters.len());
            for (quarter, values) in quarters {
                let mut missing: Vec<String> = indicator_order
                    .iter()
                    .chain(std::iter::once(&target.to_string()))
                    .filter(|i| !values.contains_key(i.as_str()))
                    .cloned()
                    .collect();
                if !missing.is_empty() {
                    missing.sort();
                    dropped.push(DroppedQuarter { country: country.clone(), quarter, missing });
                    continue;
                }
                rows.push(PanelRow {
                    quarter,
                    indicators: indicator_order.iter().map(|i| values[i]).collect(),
                    target: values[target],
                });
            }
            countries.push(CountryPanel { country, rows });
        }

        Ok(Self {
            target: target.to_string(),
            indicators: indicator_order,
            countries,
            regularization: None,
            dropped,
        })
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    /// State indicators in feature order (target excluded).
    pub fn indicators(&self) -> &[String] {
        &self.indicators
    }

    pub fn countries(&self) -> &[CountryPanel] {
        &self.countries
    }

    pub fn country(&self, code: &str) -> Option<&CountryPanel> {
        self.countries.iter().find(|c| c.country == code)
    }

    pub fn regularization(&self) -> Option<&RegularizationTable> {
        self.regularization.as_ref()
    }

    pub fn is_regularized(&self) -> bool {
        self.regularization.is_some()
    }

    pub fn dropped_quarters(&self) -> &[DroppedQuarter] {
        &self.dropped
    }

    pub fn observation_count(&self) -> usize {
        self.countries.iter().map(|c| c.rows.len() * (self.indicators.len() + 1)).sum()
    }

    pub fn gaps(&self) -> Vec<Gap> {
        let mut gaps = Vec::new();
        for c in &self.countries {
            for pair in c.rows.windows(2) {
                if pair[0].quarter.succ() != pair[1].quarter {
                    gaps.push(Gap {
                        country: c.country.clone(),
                        after: pair[0].quarter,
                        before: pair[1].quarter,
                    });
                }
            }
        }
        gaps
    }

    /// Min-max scales every (country, indicator) series, target included.
    pub fn regularize(self) -> Result<Self> {
        regularize(self)
    }

    pub fn build_transitions(&self, filter: &CountryFilter) -> Result<TransitionSet> {
        build_transitions(self, filter)
    }

    /// Writes the panel in the long `country,quarter,indicator,value` layout.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["country", "quarter", "indicator", "value"])?;
        for c in &self.countries {
            for row in &c.rows {
                let q = row.quarter.to_string();
                for (name, v) in self.indicators.iter().zip(&row.indicators) {
                    w.write_record([c.country.as_str(), &q, name, &v.to_string()])?;
                }
                w.write_record([c.country.as_str(), &q, &self.target, &row.target.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a panel from CSV with header `country,quarter,indicator,value`.
pub fn parse_panel_csv<R: Read>(raw: R, target: &str) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(raw);

    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["country", "quarter", "indicator", "value"] {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!(
                "expected header `country,quarter,indicator,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut observations = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::MalformedRow { line, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let (country, quarter, indicator, value) = (&record[0], &record[1], &record[2], &record[3]);
        if country.is_empty() || indicator.is_empty() {
            return Err(Error::MalformedRow { line, message: "empty country or indicator".into() });
        }
        let quarter = quarter.parse::<Quarter>().map_err(|e| match e {
            QuarterParseError::Format => Error::QuarterFormat { line, label: quarter.to_string() },
            QuarterParseError::IndexOutOfRange => {
                Error::QuarterOutOfRange { line, label: quarter.to_string() }
            }
        })?;
        let value = value
            .parse::<f64>()
            .map_err(|_| Error::MalformedRow { line, message: format!("cannot parse value {value:?}") })?;
        observations.push((
            line,
            Observation { country: country.to_string(), quarter, indicator: indicator.to_string(), value },
        ));
    }
    PanelDataset::build(observations.into_iter(), target)
}

/// Replaces every value by `(x - min) / (max - min)` computed per country and
/// per indicator over the full available series.
pub fn regularize(mut dataset: PanelDataset) -> Result<PanelDataset> {
    if dataset.regularization.is_some() {
        return Err(Error::AlreadyRegularized);
    }
    let mut table = RegularizationTable::default();
    for c in &mut dataset.countries {
        if c.rows.is_empty() {
            continue;
        }
        let n_ind = dataset.indicators.len();
        for col in 0..=n_ind {
            let name = if col < n_ind { &dataset.indicators[col] } else { &dataset.target };
            let get = |r: &PanelRow| if col < n_ind { r.indicators[col] } else { r.target };
            let series: Vec<f64> = c.rows.iter().map(get).collect();
            let params = RegularizationParams::fit(&series).ok_or_else(|| Error::DegenerateSeries {
                country: c.country.clone(),
                indicator: name.clone(),
                value: series[0],
            })?;
            for r in &mut c.rows {
                let slot = if col < n_ind { &mut r.indicators[col] } else { &mut r.target };
                *slot = params.apply(*slot);
            }
            table.entries.insert((c.country.clone(), name.clone()), params);
        }
    }
    dataset.regularization = Some(table);
    Ok(dataset)
}

/// One adjacent-quarter step of one country.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub country: String,
    pub quarter_i: Quarter,
    pub x_i: Vec<f64>,
    pub x_j: Vec<f64>,
    /// Change of the regularized target from `i` to `j`.
    pub u: f64,
    /// Adjustment cost, `u * u`.
    pub g: f64,
}

impl Transition {
    pub fn new(country: &str, quarter_i: Quarter, x_i: Vec<f64>, x_j: Vec<f64>, u: f64) -> Self {
        Self { country: country.to_string(), quarter_i, x_i, x_j, u, g: u * u }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CountryFilter {
    All,
    Only(Vec<String>),
    Exclude(Vec<String>),
}

impl CountryFilter {
    pub fn includes(&self, country: &str) -> bool {
        match self {
            CountryFilter::All => true,
            CountryFilter::Only(list) => list.iter().any(|c| c == country),
            CountryFilter::Exclude(list) => !list.iter().any(|c| c == country),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCountry {
    pub country: String,
    pub quarters: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionSet {
    pub transitions: Vec<Transition>,
    /// Countries with fewer than two quarters.
    pub skipped: Vec<SkippedCountry>,
}

/// Emits one transition per pair of consecutive quarters. Gaps break the chain.
pub fn build_transitions(dataset: &PanelDataset, filter: &CountryFilter) -> Result<TransitionSet> {
    if !dataset.is_regularized() {
        return Err(Error::NotRegularized);
    }
    let mut set = TransitionSet::default();
    for c in dataset.countries.iter().filter(|c| filter.includes(&c.country)) {
        if c.rows.len() < 2 {
            set.skipped.push(SkippedCountry { country: c.country.clone(), quarters: c.rows.len() });
            continue;
        }
        for pair in c.rows.windows(2) {
            let (i, j) = (&pair[0], &pair[1]);
            if i.quarter.succ() != j.quarter {
                continue;
            }
            set.transitions.push(Transition::new(
                &c.country,
                i.quarter,
                i.indicators.clone(),
                j.indicators.clone(),
                j.target - i.target,
            ));
        }
    }
    Ok(set)
}
