use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

pub const SECONDS_PER_WEEK: f64 = 604_800.0;
const SECONDS_PER_DAY: i64 = 86_400;

/// Days between 1970-01-01 and the GPS epoch 1980-01-06.
const GPS_EPOCH_UNIX_DAYS: i64 = 3657;

/// Instant on the continuous GPS time scale, stored as week number plus
/// seconds of week so that sub-microsecond differences survive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnssTime {
    pub week: i32,
    pub sow: f64,
}

impl GnssTime {
    pub fn new(week: i32, sow: f64) -> Self {
        Self { week, sow }.normalized()
    }

    fn normalized(mut self) -> Self {
        if !self.sow.is_finite() {
            return self;
        }
        while self.sow >= SECONDS_PER_WEEK {
            self.sow -= SECONDS_PER_WEEK;
            self.week += 1;
        }
        while self.sow < 0.0 {
            self.sow += SECONDS_PER_WEEK;
            self.week -= 1;
        }
        self
    }

    /// Converts a calendar date expressed in the GPS time scale.
    pub fn from_calendar(year: i32, month: u32, day: u32, hour: u32, minute: u32, second: f64) -> Self {
        let days = days_from_civil(year, month, day) - GPS_EPOCH_UNIX_DAYS;
        let week = days.div_euclid(7);
        let dow = days.rem_euclid(7);
        let sow = (dow * SECONDS_PER_DAY + i64::from(hour) * 3600 + i64::from(minute) * 60) as f64 + second;
        Self::new(week as i32, sow)
    }

    /// Calendar breakdown `(year, month, day, hour, minute, second)` in the GPS time scale.
    pub fn to_calendar(&self) -> (i32, u32, u32, u32, u32, f64) {
        let whole_days = (self.sow / SECONDS_PER_DAY as f64).floor() as i64;
        let days = i64::from(self.week) * 7 + whole_days + GPS_EPOCH_UNIX_DAYS;
        let (y, m, d) = civil_from_days(days);
        let mut rem = self.sow - (whole_days * SECONDS_PER_DAY) as f64;
        let hour = (rem / 3600.0).floor() as u32;
        rem -= f64::from(hour) * 3600.0;
        let minute = (rem / 60.0).floor() as u32;
        rem -= f64::from(minute) * 60.0;
        (y, m, d, hour, minute, rem)
    }

    /// Signed seconds `self - other`.
    pub fn seconds_since(&self, other: &GnssTime) -> f64 {
        f64::from(self.week - other.week) * SECONDS_PER_WEEK + (self.sow - other.sow)
    }

    pub fn add_seconds(&self, dt: f64) -> GnssTime {
        GnssTime::new(self.week, self.sow + dt)
    }

    /// Seconds since the GPS epoch. Loses precision below ~1e-7 s; use
    /// [`GnssTime::seconds_since`] for differences.
    pub fn total_seconds(&self) -> f64 {
        f64::from(self.week) * SECONDS_PER_WEEK + self.sow
    }
}

impl PartialOrd for GnssTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.week.cmp(&other.week) {
            Ordering::Equal => self.sow.partial_cmp(&other.sow),
            ord => Some(ord),
        }
    }
}

impl fmt::Display for GnssTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "week {} sow {:.3}", self.week, self.sow)
    }
}

// Howard Hinnant's days_from_civil.
fn days_from_civil(y: i32, m: u32, d: u32) -> i64 {
    let y = i64::from(y) - i64::from(m <= 2);
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = i64::from(m);
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + i64::from(d) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i32, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    ((y + i64::from(m <= 2)) as i32, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gps_epoch_is_week_zero() {
        let t = GnssTime::from_calendar(1980, 1, 6, 0, 0, 0.0);
        assert_eq!(t.week, 0);
        assert_eq!(t.sow, 0.0);
    }

    #[test]
    fn known_calendar_date() {
        // 2020-01-01 was a Wednesday in GPS week 2086.
        let t = GnssTime::from_calendar(2020, 1, 1, 0, 0, 0.0);
        assert_eq!(t.week, 2086);
        assert_eq!(t.sow, 3.0 * 86400.0);
    }

    #[test]
    fn calendar_round_trip() {
        for &(y, mo, d, h, mi, s) in &[(2020, 1, 1, 0, 0, 0.0), (2023, 12, 31, 23, 59, 59.5), (2024, 2, 29, 12, 30, 15.25)] {
            let t = GnssTime::from_calendar(y, mo, d, h, mi, s);
            assert_eq!(t.to_calendar(), (y, mo, d, h, mi, s));
        }
    }

    #[test]
    fn differences_cross_week_boundary() {
        let a = GnssTime::new(100, 604_799.5);
        let b = a.add_seconds(1.0);
        assert_eq!(b.week, 101);
        assert!((b.sow - 0.5).abs() < 1e-12);
        assert!((b.seconds_since(&a) - 1.0).abs() < 1e-12);
        assert!(b > a);
    }
}
