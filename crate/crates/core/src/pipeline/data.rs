//! Fault-count and weather CSV ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terms::{Covariates, Dataset};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Where a covariate row comes from: reanalysis (training), the HRES run or an EPS member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Reanalysis,
    Hres,
    /// EPS member 1..=50.
    Member(u8),
}

pub const N_MEMBERS: u8 = 50;

impl Source {
    /// Member id used by the ensemble combiner; HRES is 0.
    pub fn member_id(self) -> Option<u32> {
        match self {
            Source::Reanalysis => None,
            Source::Hres => Some(0),
            Source::Member(m) => Some(m as u32),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Reanalysis => write!(f, "reanalysis"),
            Source::Hres => write!(f, "hres"),
            Source::Member(m) => write!(f, "m{m:02}"),
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reanalysis" => Ok(Source::Reanalysis),
            "hres" => Ok(Source::Hres),
            _ => {
                let m = s
                    .strip_prefix('m')
                    .filter(|d| d.len() == 2)
                    .and_then(|d| d.parse::<u8>().ok())
                    .filter(|m| (1..=N_MEMBERS).contains(m));
                m.map(Source::Member).ok_or_else(|| Error::Validation(format!("unknown source `{s}`")))
            }
        }
    }
}

impl Serialize for Source {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Source {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRow {
    pub district: String,
    pub date: NaiveDate,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherRow {
    pub district: String,
    pub date: NaiveDate,
    pub source: Source,
    pub lead_h: i64,
    pub covariates: Covariates,
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| Error::Validation(format!("bad date `{s}`: {e}")))
}

fn check_header(found: &csv::StringRecord, expected: &[&str], what: &str) -> Result<()> {
    let got: Vec<&str> = found.iter().take(expected.len()).map(str::trim).collect();
    if got != expected {
        return Err(Error::Validation(format!(
            "{what} header must start with `{}`, found `{}`",
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

pub fn read_faults<R: Read>(reader: R) -> Result<Vec<ObservationRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    check_header(&header, &["district", "date", "count"], "fault file")?;
    if header.len() != 3 {
        return Err(Error::Validation(format!("fault file must have 3 columns, found {}", header.len())));
    }
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let district = rec[0].to_string();
        let date = parse_date(&rec[1]).map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
        let count: i64 = rec[2]
            .parse()
            .map_err(|_| Error::Validation(format!("line {line}: count `{}` is not an integer", &rec[2])))?;
        if count < 0 {
            return Err(Error::Validation(format!("line {line}: negative count {count}")));
        }
        if !seen.insert((district.clone(), date)) {
            return Err(Error::Validation(format!("line {line}: duplicate key ({district}, {date})")));
        }
        rows.push(ObservationRow { district, date, count: count as u64 });
    }
    Ok(rows)
}

pub fn load_faults(path: &Path) -> Result<Vec<ObservationRow>> {
    read_faults(std::fs::File::open(path)?)
}

/// Weather rows; empty or `NA` cells are left out of the covariate map.
pub fn read_weather<R: Read>(reader: R) -> Result<Vec<WeatherRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    check_header(&header, &["district", "date", "source", "lead_h"], "weather file")?;
    let names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let err = |msg: String| Error::Validation(format!("line {line}: {msg}"));
        let district = rec[0].to_string();
        let date = parse_date(&rec[1]).map_err(|e| err(e.to_string()))?;
        let source: Source = rec[2].parse().map_err(|e: Error| err(e.to_string()))?;
        let lead_h: i64 = rec[3].parse().map_err(|_| err(format!("lead_h `{}` is not an integer", &rec[3])))?;
        if lead_h < 0 {
            return Err(err(format!("negative lead time {lead_h}")));
        }
        let mut covariates = Covariates::new();
        for (name, cell) in names.iter().zip(rec.iter().skip(4)) {
            if cell.is_empty() || cell == "NA" {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| err(format!("{name} = `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(format!("{name} is not finite")));
            }
            covariates.insert(name.clone(), v);
        }
        if !seen.insert((district.clone(), date, source, lead_h)) {
            return Err(err(format!("duplicate key ({district}, {date}, {source}, {lead_h})")));
        }
        rows.push(WeatherRow { district, date, source, lead_h, covariates });
    }
    Ok(rows)
}

pub fn load_weather(path: &Path) -> Result<Vec<WeatherRow>> {
    read_weather(std::fs::File::open(path)?)
}

/// Training rows of one district: counts joined to reanalysis covariates.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub district: String,
    pub dates: Vec<NaiveDate>,
    pub data: Dataset,
}

impl TrainingData {
    pub fn subset(&self, idx: &[usize]) -> TrainingData {
        TrainingData {
            district: self.district.clone(),
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            data: self.data.subset(idx),
        }
    }
}

const MAX_DIAGNOSTICS: usize = 5;

/// Join one district's counts with its reanalysis rows. Rows missing a weather record or any
/// of `covariates` are rejected, naming up to five offending dates.
pub fn training_data(
    faults: &[ObservationRow],
    weather: &[WeatherRow],
    district: &str,
    covariates: &[&str],
) -> Result<TrainingData> {
    let reanalysis: BTreeMap<NaiveDate, &Covariates> = weather
        .iter()
        .filter(|w| w.district == district && w.source == Source::Reanalysis)
        .map(|w| (w.date, &w.covariates))
        .collect();
    let mut obs: Vec<&ObservationRow> = faults.iter().filter(|r| r.district == district).collect();
    if obs.is_empty() {
        return Err(Error::Validation(format!("no fault counts for district {district}")));
    }
    obs.sort_by_key(|r| r.date);

    let mut problems = Vec::new();
    let mut columns: BTreeMap<String, Vec<f64>> = covariates.iter().map(|c| (c.to_string(), vec![])).collect();
    let mut y = Vec::with_capacity(obs.len());
    let mut dates = Vec::with_capacity(obs.len());
    for r in obs {
        let Some(cov) = reanalysis.get(&r.date) else {
            problems.push(format!("{}: no reanalysis row", r.date));
            continue;
        };
        let missing: Vec<&str> = covariates.iter().copied().filter(|c| !cov.contains_key(*c)).collect();
        if !missing.is_empty() {
            problems.push(format!("{}: missing {}", r.date, missing.join(", ")));
            continue;
        }
        for c in covariates {
            columns.get_mut(*c).expect("column created").push(cov[*c]);
        }
        y.push(r.count as f64);
        dates.push(r.date);
    }
    if !problems.is_empty() {
        let shown: Vec<&str> = problems.iter().take(MAX_DIAGNOSTICS).map(String::as_str).collect();
        return Err(Error::Validation(format!(
            "district {district}: {} training rows lack covariates ({}{})",
            problems.len(),
            shown.join("; "),
            if problems.len() > MAX_DIAGNOSTICS { "; ..." } else { "" }
        )));
    }
    Ok(TrainingData { district: district.to_string(), dates, data: Dataset { y, columns } })
}

/// Distinct districts in first-seen order.
pub fn districts(faults: &[ObservationRow]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    faults.iter().filter(|r| seen.insert(r.district.clone())).map(|r| r.district.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_row_file() {
        let csv = "district,date,count\nd1,2020-01-01,3\nd1,2020-01-02,0\nd2,2020-01-01,12\n";
        let rows = read_faults(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].count, 12);
    }

    #[test]
    fn duplicate_key_is_named() {
        let csv = "district,date,count\nd1,2020-01-01,3\nd1,2020-01-01,4\n";
        let msg = read_faults(csv.as_bytes()).unwrap_err().to_string();
        assert!(msg.contains("duplicate key (d1, 2020-01-01)"), "{msg}");
    }

    #[test]
    fn negative_count_rejected() {
        let csv = "district,date,count\nd1,2020-01-01,-1\n";
        assert!(read_faults(csv.as_bytes()).unwrap_err().to_string().contains("negative count"));
    }

    #[test]
    fn schema_mismatch() {
        assert!(read_faults("district,day,count\n".as_bytes()).is_err());
        assert!(read_weather("district,date,lead_h,source\n".as_bytes()).is_err());
    }

    #[test]
    fn sources_round_trip() {
        for s in ["reanalysis", "hres", "m01", "m50"] {
            assert_eq!(s.parse::<Source>().unwrap().to_string(), s);
        }
        for s in ["m00", "m51", "m1", "ens"] {
            assert!(s.parse::<Source>().is_err());
        }
        assert_eq!(Source::Member(7).member_id(), Some(7));
    }

    #[test]
    fn join_reports_missing_covariates() {
        let faults = read_faults("district,date,count\nd1,2020-01-01,3\nd1,2020-01-02,1\n".as_bytes()).unwrap();
        let weather = read_weather(
            "district,date,source,lead_h,ws,tp\nd1,2020-01-01,reanalysis,0,10.5,1\nd1,2020-01-02,reanalysis,0,NA,2\n"
                .as_bytes(),
        )
        .unwrap();
        let msg = training_data(&faults, &weather, "d1", &["ws", "tp"]).unwrap_err().to_string();
        assert!(msg.contains("2020-01-02: missing ws"), "{msg}");
        let t = training_data(&faults, &weather, "d1", &["tp"]).unwrap();
        assert_eq!(t.data.y, vec![3.0, 1.0]);
        assert_eq!(t.data.columns["tp"], vec![1.0, 2.0]);
    }
}
