//! RINEX 3.0x observation file reader.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::{
    read_text, valid_cn0, valid_pseudorange, Constellation, ObsData, ObservationEpoch, ParseReport,
    SatSignalObservation, SatelliteId, SignalConfig,
};
use crate::{Error, GnssTime, Result};

const OBS_FIELD_WIDTH: usize = 16;
const OBS_VALUE_WIDTH: usize = 14;

pub fn parse_obs(path: &Path, signals: &[SignalConfig]) -> Result<ObsData> {
    let text = read_text(path)?;
    parse_obs_str(&text, path, signals)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TimeSystem {
    Gps,
    Galileo,
    BeiDou,
    Utc,
}

#[derive(Debug, Default)]
struct Header {
    obs_types: BTreeMap<char, Vec<String>>,
    leap_seconds: Option<i32>,
    time_system: Option<TimeSystem>,
    body_start: usize,
}

pub(crate) fn header_label(line: &str) -> &str {
    line.get(60..).map(str::trim).unwrap_or("")
}

fn parse_header(lines: &[&str], path: &Path) -> Result<Header> {
    let mut header = Header::default();
    let first = lines
        .first()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    if header_label(first) != "RINEX VERSION / TYPE" {
        return Err(Error::parse(path, 1, "missing RINEX VERSION / TYPE header line"));
    }
    let version: f64 = first
        .get(0..9)
        .unwrap_or("")
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, 1, "unreadable RINEX version"))?;
    if !(3.0..4.0).contains(&version) {
        return Err(Error::parse(path, 1, format!("unsupported RINEX version {version}, expected 3.x")));
    }
    if first.get(20..21) != Some("O") {
        return Err(Error::parse(path, 1, "not an observation file (type is not 'O')"));
    }

    let mut current_sys: Option<(char, usize)> = None;
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        match header_label(line) {
            "SYS / # / OBS TYPES" => {
                let sys_char = line.chars().next().unwrap_or(' ');
                let (sys, expected) = if sys_char != ' ' {
                    let n: usize = line
                        .get(3..6)
                        .unwrap_or("")
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(path, lineno, "bad observation type count"))?;
                    current_sys = Some((sys_char, n));
                    (sys_char, n)
                } else {
                    current_sys.ok_or_else(|| Error::parse(path, lineno, "orphan SYS / # / OBS TYPES continuation"))?
                };
                let types = header.obs_types.entry(sys).or_default();
                types.extend(line.get(7..58).unwrap_or("").split_whitespace().map(str::to_string));
                if types.len() > expected {
                    return Err(Error::parse(path, lineno, "more observation types than declared"));
                }
            }
            "LEAP SECONDS" => {
                header.leap_seconds = line.get(0..6).and_then(|s| s.trim().parse().ok());
            }
            "TIME OF FIRST OBS" => {
                header.time_system = match line.get(48..51).unwrap_or("").trim() {
                    "" | "GPS" => Some(TimeSystem::Gps),
                    "GAL" => Some(TimeSystem::Galileo),
                    "BDT" => Some(TimeSystem::BeiDou),
                    "GLO" | "UTC" => Some(TimeSystem::Utc),
                    other => {
                        return Err(Error::parse(path, lineno, format!("unsupported time system '{other}'")));
                    }
                };
            }
            "END OF HEADER" => {
                if header.obs_types.is_empty() {
                    return Err(Error::parse(path, lineno, "no SYS / # / OBS TYPES declared"));
                }
                for (sys, types) in &header.obs_types {
                    if let Some((s, n)) = current_sys.filter(|(s, _)| s == sys) {
                        if types.len() != n {
                            return Err(Error::parse(path, lineno, format!("system {s}: declared {n} types, found {}", types.len())));
                        }
                    }
                }
                header.body_start = idx + 1;
                return Ok(header);
            }
            _ => {}
        }
    }
    Err(Error::parse(path, lines.len(), "END OF HEADER not found"))
}

/// Column indices of the configured pseudorange and C/N0 codes for one system.
struct SignalColumns<'a> {
    signal: &'a SignalConfig,
    pseudorange: usize,
    cn0: Option<usize>,
}

fn field(line: &str, index: usize) -> Option<&str> {
    let start = 3 + index * OBS_FIELD_WIDTH;
    let end = (start + OBS_VALUE_WIDTH).min(line.len());
    if start >= line.len() {
        return None;
    }
    let s = line.get(start..end)?.trim();
    (!s.is_empty()).then_some(s)
}

enum EpochOutcome {
    Parsed(ObservationEpoch),
    Event,
}

pub fn parse_obs_str(text: &str, path: &Path, signals: &[SignalConfig]) -> Result<ObsData> {
    let lines: Vec<&str> = text.lines().collect();
    let header = parse_header(&lines, path)?;
    let time_offset = match header.time_system.unwrap_or(TimeSystem::Gps) {
        TimeSystem::Gps | TimeSystem::Galileo => 0.0,
        TimeSystem::BeiDou => 14.0,
        TimeSystem::Utc => {
            let leap = header
                .leap_seconds
                .ok_or_else(|| Error::parse(path, header.body_start, "UTC-based time system without LEAP SECONDS"))?;
            f64::from(leap)
        }
    };

    let mut columns: BTreeMap<char, Vec<SignalColumns>> = BTreeMap::new();
    let mut used: BTreeMap<char, HashSet<usize>> = BTreeMap::new();
    for signal in signals {
        let sys = signal.constellation.letter();
        let Some(types) = header.obs_types.get(&sys) else { continue };
        let Some(pr) = types.iter().position(|t| *t == signal.code) else { continue };
        let cn0 = types.iter().position(|t| *t == signal.cn0_code());
        let set = used.entry(sys).or_default();
        set.insert(pr);
        if let Some(c) = cn0 {
            set.insert(c);
        }
        columns.entry(sys).or_default().push(SignalColumns {
            signal,
            pseudorange: pr,
            cn0,
        });
    }

    let mut report = ParseReport::default();
    let mut epochs: Vec<ObservationEpoch> = Vec::new();
    let mut i = header.body_start;
    while i < lines.len() {
        let line = lines[i];
        if line.trim().is_empty() {
            i += 1;
            continue;
        }
        if !line.starts_with('>') {
            report.warn(format!("line {}: stray line outside an epoch", i + 1));
            i += 1;
            continue;
        }
        let start = i;
        match parse_epoch(&lines, &mut i, &header, &columns, &used, time_offset, &mut report) {
            Ok(EpochOutcome::Parsed(epoch)) => {
                if let Some(last) = epochs.last() {
                    if epoch.time.seconds_since(&last.time) <= 0.0 {
                        report.epochs_skipped += 1;
                        report.warn(format!("line {}: epoch time not increasing, skipped", start + 1));
                        continue;
                    }
                }
                report.epochs_read += 1;
                epochs.push(epoch);
            }
            Ok(EpochOutcome::Event) => {}
            Err(msg) => {
                report.epochs_skipped += 1;
                report.warn(format!("line {}: {msg}", start + 1));
                // resynchronize on the next epoch marker
                while i < lines.len() && !lines[i].starts_with('>') {
                    i += 1;
                }
            }
        }
    }
    Ok(ObsData {
        epochs,
        leap_seconds: header.leap_seconds,
        report,
    })
}

fn parse_epoch(
    lines: &[&str],
    i: &mut usize,
    header: &Header,
    columns: &BTreeMap<char, Vec<SignalColumns>>,
    used: &BTreeMap<char, HashSet<usize>>,
    time_offset: f64,
    report: &mut ParseReport,
) -> std::result::Result<EpochOutcome, String> {
    let line = lines[*i];
    *i += 1;
    let tokens: Vec<&str> = line[1..].split_whitespace().collect();
    if tokens.len() < 8 {
        return Err("truncated epoch line".into());
    }
    let num = |k: usize| tokens[k].parse::<u32>().map_err(|_| format!("bad epoch field '{}'", tokens[k]));
    let year = tokens[0].parse::<i32>().map_err(|_| "bad epoch year".to_string())?;
    let (month, day, hour, minute) = (num(1)?, num(2)?, num(3)?, num(4)?);
    let second: f64 = tokens[5].parse().map_err(|_| "bad epoch seconds".to_string())?;
    let flag = num(6)?;
    let count = num(7)? as usize;
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) || hour > 23 || minute > 59 || !(0.0..61.0).contains(&second) {
        return Err("epoch date out of range".into());
    }

    if flag > 1 {
        // event record: `count` special lines follow
        *i += count;
        return Ok(EpochOutcome::Event);
    }

    let time = GnssTime::from_calendar(year, month, day, hour, minute, second).add_seconds(time_offset);
    let mut observations = Vec::new();
    let mut seen = HashSet::new();
    for _ in 0..count {
        let Some(sat_line) = lines.get(*i) else {
            return Err("file ends inside epoch".into());
        };
        if sat_line.starts_with('>') {
            return Err("fewer satellite lines than announced".into());
        }
        *i += 1;
        let sys = sat_line.chars().next().unwrap_or(' ');
        let Some(types) = header.obs_types.get(&sys) else {
            report.unsupported(format!("system {sys}"));
            continue;
        };
        let Some(constellation) = Constellation::from_letter(sys) else {
            report.unsupported(format!("system {sys}"));
            continue;
        };
        let prn: u8 = sat_line
            .get(1..3)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| format!("bad satellite id '{}'", sat_line.get(0..3).unwrap_or(sat_line)))?;
        let satellite = SatelliteId::new(constellation, prn);

        let used_cols = used.get(&sys);
        for (k, code) in types.iter().enumerate() {
            if used_cols.is_some_and(|u| u.contains(&k)) {
                continue;
            }
            if field(sat_line, k).is_some() {
                report.unsupported(format!("{sys}:{code}"));
            }
        }

        for cols in columns.get(&sys).into_iter().flatten() {
            let Some(pr_text) = field(sat_line, cols.pseudorange) else { continue };
            let pr: f64 = pr_text.parse().map_err(|_| format!("bad pseudorange '{pr_text}' for {satellite}"))?;
            if !valid_pseudorange(pr) {
                report.invalid_values += 1;
                continue;
            }
            let cn0 = match cols.cn0.and_then(|c| field(sat_line, c)) {
                Some(t) => {
                    let v: f64 = t.parse().map_err(|_| format!("bad C/N0 '{t}' for {satellite}"))?;
                    if valid_cn0(v) {
                        Some(v)
                    } else {
                        report.invalid_values += 1;
                        None
                    }
                }
                None => None,
            };
            if !seen.insert((satellite, cols.signal.band)) {
                report.warn(format!("duplicate {satellite} {} in epoch at {time}", cols.signal.band));
                continue;
            }
            observations.push(SatSignalObservation {
                satellite,
                band: cols.signal.band,
                pseudorange_m: pr,
                cn0_dbhz: cn0,
            });
        }
    }
    Ok(EpochOutcome::Parsed(ObservationEpoch { time, observations }))
}
