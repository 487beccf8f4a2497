//! RINEX 3.0x navigation file reader and writer (GPS and Galileo Keplerian records).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rinex_obs::header_label;
use super::{read_text, Constellation, ParseReport, SatelliteId};
use crate::{Error, GnssTime, Result};

/// Klobuchar broadcast coefficients (alpha in s, s/semicircle, ...; beta in s, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonoParams {
    pub alpha: [f64; 4],
    pub beta: [f64; 4],
}

/// Broadcast Keplerian orbit and clock parameters of one navigation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastEphemeris {
    pub satellite: SatelliteId,
    pub toc: GnssTime,
    pub toe: GnssTime,
    pub sqrt_a: f64,
    pub e: f64,
    pub i0: f64,
    pub omega0: f64,
    pub omega: f64,
    pub m0: f64,
    pub delta_n: f64,
    pub i_dot: f64,
    pub omega_dot: f64,
    pub cuc: f64,
    pub cus: f64,
    pub crc: f64,
    pub crs: f64,
    pub cic: f64,
    pub cis: f64,
    pub af0: f64,
    pub af1: f64,
    pub af2: f64,
    /// Group delay (GPS TGD, Galileo BGD E5a/E1) in seconds.
    pub tgd: f64,
    pub health: u32,
    pub iode: f64,
}

impl BroadcastEphemeris {
    pub fn is_healthy(&self) -> bool {
        self.health == 0
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(0.0..0.1).contains(&self.e) {
            return Err(format!("eccentricity {} outside [0, 0.1)", self.e));
        }
        let nominal = 26.56e6f64.sqrt();
        if (self.sqrt_a - nominal).abs() > 0.1 * nominal {
            return Err(format!("sqrtA {} not a medium Earth orbit", self.sqrt_a));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct NavData {
    pub ephemerides: Vec<BroadcastEphemeris>,
    pub iono: Option<IonoParams>,
    pub report: ParseReport,
}

pub fn parse_nav(path: &Path) -> Result<NavData> {
    let text = read_text(path)?;
    parse_nav_str(&text, path)
}

fn parse_num(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    if t.is_empty() {
        return Ok(0.0);
    }
    t.replace(['D', 'd'], "E")
        .parse()
        .map_err(|_| format!("bad number '{t}'"))
}

fn nav_field(line: &str, k: usize) -> std::result::Result<f64, String> {
    let start = 4 + 19 * k;
    if start >= line.len() {
        return Ok(0.0);
    }
    let end = (start + 19).min(line.len());
    parse_num(line.get(start..end).ok_or("non-ascii field")?)
}

fn iono_coeffs(line: &str, path: &Path, lineno: usize) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (k, v) in out.iter_mut().enumerate() {
        let s = line.get(5 + 12 * k..17 + 12 * k).unwrap_or("");
        *v = parse_num(s).map_err(|m| Error::parse(path, lineno, m))?;
    }
    Ok(out)
}

pub fn parse_nav_str(text: &str, path: &Path) -> Result<NavData> {
    let lines: Vec<&str> = text.lines().collect();
    let first = lines.first().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    if header_label(first) != "RINEX VERSION / TYPE" {
        return Err(Error::parse(path, 1, "missing RINEX VERSION / TYPE header line"));
    }
    let version: f64 = first
        .get(0..9)
        .unwrap_or("")
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, 1, "unreadable RINEX version"))?;
    if !(3.0..4.0).contains(&version) || first.get(20..21) != Some("N") {
        return Err(Error::parse(path, 1, "expected a RINEX 3.x navigation file"));
    }

    let mut alpha = None;
    let mut beta = None;
    let mut body = None;
    for (idx, line) in lines.iter().enumerate().skip(1) {
        match header_label(line) {
            "IONOSPHERIC CORR" => match line.get(0..4) {
                Some("GPSA") => alpha = Some(iono_coeffs(line, path, idx + 1)?),
                Some("GPSB") => beta = Some(iono_coeffs(line, path, idx + 1)?),
                _ => {}
            },
            "END OF HEADER" => {
                body = Some(idx + 1);
                break;
            }
            _ => {}
        }
    }
    let body = body.ok_or_else(|| Error::parse(path, lines.len(), "END OF HEADER not found"))?;
    let iono = match (alpha, beta) {
        (Some(alpha), Some(beta)) => Some(IonoParams { alpha, beta }),
        _ => None,
    };

    let mut report = ParseReport::default();
    let mut ephemerides = Vec::new();
    let mut keys = BTreeSet::new();
    let mut i = body;
    while i < lines.len() {
        let line = lines[i];
        if line.trim().is_empty() || line.starts_with(' ') {
            i += 1;
            continue;
        }
        let start = i;
        let sys = line.chars().next().unwrap_or(' ');
        i += 1;
        while i < lines.len() && lines[i].starts_with("    ") {
            i += 1;
        }
        let Some(constellation) = Constellation::from_letter(sys) else {
            report.unsupported(format!("system {sys}"));
            continue;
        };
        match parse_record(&lines[start..i], constellation) {
            Ok(eph) => {
                if let Err(msg) = eph.check() {
                    report.records_skipped += 1;
                    report.warn(format!("line {}: {msg}", start + 1));
                    continue;
                }
                let key = (eph.satellite, eph.toe.week, eph.toe.sow.to_bits());
                if !keys.insert(key) {
                    report.warn(format!("line {}: duplicate record for {} at {}", start + 1, eph.satellite, eph.toe));
                    report.records_skipped += 1;
                    continue;
                }
                report.records_read += 1;
                ephemerides.push(eph);
            }
            Err(msg) => {
                report.records_skipped += 1;
                report.warn(format!("line {}: {msg}", start + 1));
            }
        }
    }
    Ok(NavData {
        ephemerides,
        iono,
        report,
    })
}

fn parse_record(lines: &[&str], constellation: Constellation) -> std::result::Result<BroadcastEphemeris, String> {
    if lines.len() < 8 {
        return Err(format!("record has {} lines, expected 8", lines.len()));
    }
    let head = lines[0];
    let prn: u8 = head
        .get(1..3)
        .and_then(|s| s.trim().parse().ok())
        .ok_or("bad satellite id")?;
    let tokens: Vec<&str> = head.get(3..23).ok_or("truncated record line")?.split_whitespace().collect();
    if tokens.len() != 6 {
        return Err("bad clock epoch".into());
    }
    let n = |k: usize| tokens[k].parse::<u32>().map_err(|_| format!("bad epoch field '{}'", tokens[k]));
    let year: i32 = tokens[0].parse().map_err(|_| "bad year".to_string())?;
    let toc = GnssTime::from_calendar(year, n(1)?, n(2)?, n(3)?, n(4)?, f64::from(n(5)?));
    let head_field = |k: usize| -> std::result::Result<f64, String> {
        let start = 23 + 19 * k;
        let end = (start + 19).min(head.len());
        if start >= head.len() {
            return Ok(0.0);
        }
        parse_num(&head[start..end])
    };
    let o = |row: usize, k: usize| nav_field(lines[row], k);

    let week = o(5, 2)?;
    let toe = GnssTime::new(week as i32, o(3, 0)?);
    Ok(BroadcastEphemeris {
        satellite: SatelliteId::new(constellation, prn),
        toc,
        toe,
        af0: head_field(0)?,
        af1: head_field(1)?,
        af2: head_field(2)?,
        iode: o(1, 0)?,
        crs: o(1, 1)?,
        delta_n: o(1, 2)?,
        m0: o(1, 3)?,
        cuc: o(2, 0)?,
        e: o(2, 1)?,
        cus: o(2, 2)?,
        sqrt_a: o(2, 3)?,
        cic: o(3, 1)?,
        omega0: o(3, 2)?,
        cis: o(3, 3)?,
        i0: o(4, 0)?,
        crc: o(4, 1)?,
        omega: o(4, 2)?,
        omega_dot: o(4, 3)?,
        i_dot: o(5, 0)?,
        health: o(6, 1)? as u32,
        tgd: o(6, 2)?,
    })
}

/// Formats a value as a RINEX `D19.12` field.
fn d19(x: f64) -> String {
    dfmt(x, 12)
}

fn dfmt(x: f64, decimals: usize) -> String {
    if x == 0.0 {
        return format!(" 0.{}D+00", "0".repeat(decimals));
    }
    let s = format!("{:.*E}", decimals, x.abs());
    let (mantissa, exp) = s.split_once('E').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let sign = if x < 0.0 { '-' } else { ' ' };
    let esign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{mantissa}D{esign}{:02}", exp.abs())
}

fn header_line(content: &str, label: &str) -> String {
    format!("{content:<60}{label}\n")
}

/// Writes ephemerides as a RINEX 3.04 navigation file.
pub fn format_rinex_nav(ephemerides: &[BroadcastEphemeris], iono: Option<&IonoParams>) -> String {
    let mut out = String::new();
    out.push_str(&header_line("     3.04           N: GNSS NAV DATA    M: MIXED", "RINEX VERSION / TYPE"));
    if let Some(iono) = iono {
        for (tag, c) in [("GPSA", &iono.alpha), ("GPSB", &iono.beta)] {
            let mut content = format!("{tag} ");
            for v in c {
                let _ = write!(content, "{:>12}", dfmt(*v, 4));
            }
            out.push_str(&header_line(&content, "IONOSPHERIC CORR"));
        }
    }
    out.push_str(&header_line("", "END OF HEADER"));
    for eph in ephemerides {
        let (y, mo, d, h, mi, s) = eph.toc.to_calendar();
        let _ = write!(
            out,
            "{} {y:04} {mo:02} {d:02} {h:02} {mi:02} {:02}{}{}{}\n",
            eph.satellite,
            s.round() as u32,
            d19(eph.af0),
            d19(eph.af1),
            d19(eph.af2)
        );
        let rows: [[f64; 4]; 7] = [
            [eph.iode, eph.crs, eph.delta_n, eph.m0],
            [eph.cuc, eph.e, eph.cus, eph.sqrt_a],
            [eph.toe.sow, eph.cic, eph.omega0, eph.cis],
            [eph.i0, eph.crc, eph.omega, eph.omega_dot],
            [eph.i_dot, 0.0, f64::from(eph.toe.week), 0.0],
            [2.0, f64::from(eph.health), eph.tgd, eph.iode],
            [eph.toe.sow, 4.0, 0.0, 0.0],
        ];
        for row in rows {
            out.push_str("    ");
            for v in row {
                out.push_str(&d19(v));
            }
            out.push('\n');
        }
    }
    out
}
