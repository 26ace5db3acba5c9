use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::time::day_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Month,
    #[default]
    Quarter,
    Year,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "month" => Ok(Granularity::Month),
            "quarter" => Ok(Granularity::Quarter),
            "year" => Ok(Granularity::Year),
            _ => Err(format!("unknown granularity '{s}' (month|quarter|year)")),
        }
    }
}

impl Granularity {
    fn months(self) -> u32 {
        match self {
            Granularity::Month => 1,
            Granularity::Quarter => 3,
            Granularity::Year => 12,
        }
    }

    fn floor(self, d: NaiveDate) -> NaiveDate {
        let m0 = (d.month0() / self.months()) * self.months();
        NaiveDate::from_ymd_opt(d.year(), m0 + 1, 1).expect("valid bin start")
    }

    fn label(self, start: NaiveDate) -> String {
        match self {
            Granularity::Month => format!("{}-{:02}", start.year(), start.month()),
            Granularity::Quarter => format!("{}Q{}", start.year(), start.month0() / 3 + 1),
            Granularity::Year => format!("{}", start.year()),
        }
    }
}

/// Half-open calendar bin `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub index: usize,
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Interval {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d < self.end
    }

    /// Midpoint on the day axis.
    pub fn midpoint_day(&self) -> f64 {
        0.5 * (day_number(self.start) + day_number(self.end))
    }
}

/// Consecutive calendar bins from the bin holding the earliest date to the bin
/// holding the latest, empty bins included. Returns no bins for no dates.
pub fn bin_intervals(dates: &[NaiveDate], granularity: Granularity) -> Vec<Interval> {
    let (Some(&first), Some(&last)) = (dates.iter().min(), dates.iter().max()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut start = granularity.floor(first);
    while start <= last {
        let end = start
            .checked_add_months(chrono::Months::new(granularity.months()))
            .expect("date in range");
        out.push(Interval {
            index: out.len(),
            label: granularity.label(start),
            start,
            end,
        });
        start = end;
    }
    out
}

pub(crate) fn locate(intervals: &[Interval], d: NaiveDate) -> Option<usize> {
    let i = intervals.partition_point(|iv| iv.end <= d);
    intervals.get(i).filter(|iv| iv.contains(d)).map(|iv| iv.index)
}
