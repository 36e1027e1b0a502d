//! Regulatory-year (April to March) cross-validation folds.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar year in which the regulatory year containing `date` starts.
pub fn regulatory_year(date: NaiveDate) -> i32 {
    if date.month() >= 4 {
        date.year()
    } else {
        date.year() - 1
    }
}

/// `2010/11` for the year starting April 2010.
pub fn year_label(start_year: i32) -> String {
    format!("{start_year}/{:02}", (start_year + 1).rem_euclid(100))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub label: String,
    pub year: i32,
    /// Inclusive bounds, clipped to the data range.
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Fold {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn fold_of(&self, date: NaiveDate) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(date))
    }

    /// `(training, evaluation)` row indices for fold `k`.
    pub fn split(&self, dates: &[NaiveDate], k: usize) -> (Vec<usize>, Vec<usize>) {
        let f = &self.folds[k];
        (0..dates.len()).partition(|&i| !f.contains(dates[i]))
    }
}

/// One fold per regulatory year between the earliest and latest date.
pub fn make_folds(dates: &[NaiveDate]) -> Result<FoldPlan> {
    let (Some(&lo), Some(&hi)) = (dates.iter().min(), dates.iter().max()) else {
        return Err(Error::Empty("date range"));
    };
    let folds = (regulatory_year(lo)..=regulatory_year(hi))
        .map(|y| {
            let start = NaiveDate::from_ymd_opt(y, 4, 1).expect("valid date").max(lo);
            let end = NaiveDate::from_ymd_opt(y + 1, 3, 31).expect("valid date").min(hi);
            Fold { label: year_label(y), year: y, start, end }
        })
        .collect();
    Ok(FoldPlan { folds })
}
