//! Calendar dates as a continuous day axis.

use chrono::{Duration, NaiveDate};

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

/// Days elapsed since 1970-01-01.
pub fn day_number(date: NaiveDate) -> f64 {
    date.signed_duration_since(epoch()).num_days() as f64
}

/// Calendar date containing the given (possibly fractional) day number.
pub fn date_of_day(day: f64) -> NaiveDate {
    epoch() + Duration::days(day.floor() as i64)
}

pub const DAYS_PER_YEAR: f64 = 365.25;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn day_number_round_trips() {
        let d = NaiveDate::from_ymd_opt(2004, 3, 14).unwrap();
        assert_eq!(date_of_day(day_number(d)), d);
        assert_eq!(date_of_day(day_number(d) + 0.75), d);
        assert_eq!(day_number(epoch()), 0.0);
    }
}
