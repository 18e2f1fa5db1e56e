//! Reading UbiqLog-style lifelog directories into typed, per-day events.
//!
//! Each raw line is a self-contained JSON record whose single top-level key
//! names the sensor, e.g.
//! `{"Call":{"Number":"+98...","Duration":"47","Time":"11-5-2013 9:12:00","Type":"incoming"}}`.
//! Timestamps are device wall-clock and are never shifted between zones.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use walkdir::WalkDir;

/// The closed set of sensors a lifelog event can come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SensorKind {
    WiFi,
    Location,
    Sms,
    Call,
    ApplicationUsage,
    BluetoothProximity,
    ActivityState,
}

impl SensorKind {
    pub const ALL: [SensorKind; 7] = [
        SensorKind::WiFi,
        SensorKind::Location,
        SensorKind::Sms,
        SensorKind::Call,
        SensorKind::ApplicationUsage,
        SensorKind::BluetoothProximity,
        SensorKind::ActivityState,
    ];

    /// Position in [`SensorKind::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::WiFi => "WiFi",
            SensorKind::Location => "Location",
            SensorKind::Sms => "SMS",
            SensorKind::Call => "Call",
            SensorKind::ApplicationUsage => "ApplicationUsage",
            SensorKind::BluetoothProximity => "BluetoothProximity",
            SensorKind::ActivityState => "ActivityState",
        }
    }

    /// Maps a raw top-level record key (including the short names the
    /// logging app writes) onto a sensor.
    pub fn from_record_key(key: &str) -> Option<Self> {
        let k = key.trim().to_ascii_lowercase().replace([' ', '_', '-'], "");
        Some(match k.as_str() {
            "wifi" => SensorKind::WiFi,
            "location" => SensorKind::Location,
            "sms" => SensorKind::Sms,
            "call" => SensorKind::Call,
            "application" | "applicationusage" | "app" => SensorKind::ApplicationUsage,
            "bluetooth" | "bluetoothproximity" => SensorKind::BluetoothProximity,
            "activity" | "activitystate" => SensorKind::ActivityState,
            _ => return None,
        })
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SensorKind::from_record_key(s).ok_or_else(|| format!("unknown sensor '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::M => "M",
            Gender::F => "F",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M" | "m" | "male" | "Male" => Ok(Gender::M),
            "F" | "f" | "female" | "Female" => Ok(Gender::F),
            other => Err(format!("unknown gender '{other}'")),
        }
    }
}

/// One normalized sensor event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifelogEvent {
    pub user_id: String,
    pub sensor: SensorKind,
    pub entity_key: String,
    pub start: NaiveDateTime,
    pub end: Option<NaiveDateTime>,
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserMeta {
    pub user_id: String,
    pub gender: Gender,
    pub day_count: usize,
}

/// All events of one user on one calendar day, sorted by start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayBucket {
    pub user_id: String,
    pub date: NaiveDate,
    pub events: Vec<LifelogEvent>,
}

impl DayBucket {
    pub fn empty(user_id: impl Into<String>, date: NaiveDate) -> Self {
        Self {
            user_id: user_id.into(),
            date,
            events: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    UnknownSensor(String),
    Malformed(String),
    UnparseableTimestamp,
    MissingEntity,
    EndBeforeStart,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::UnknownSensor(k) => write!(f, "unknown sensor key '{k}'"),
            RejectReason::Malformed(m) => write!(f, "malformed record: {m}"),
            RejectReason::UnparseableTimestamp => f.write_str("unparseable timestamp"),
            RejectReason::MissingEntity => f.write_str("missing entity field"),
            RejectReason::EndBeforeStart => f.write_str("end before start"),
        }
    }
}

/// A raw line that could not be turned into an event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseReject {
    pub line: String,
    pub reason: RejectReason,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("no user directories under {0} match the configured pattern")]
    EmptyDataset(PathBuf),
    #[error("invalid user directory pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("user directory pattern needs two capture groups (user id, gender)")]
    PatternGroups,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("event file line {line}: {reason}")]
    EventFile { line: usize, reason: String },
    #[error("user table line {line}: {reason}")]
    UserTable { line: usize, reason: String },
    #[error("no gender known for user '{0}'")]
    MissingGender(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

const START_KEYS: &[&str] = &[
    "Start", "start", "Time", "time", "Date", "date", "Timestamp", "timestamp",
];
const END_KEYS: &[&str] = &["End", "end", "EndTime", "endTime"];

fn entity_keys(sensor: SensorKind) -> &'static [&'static str] {
    match sensor {
        SensorKind::Call => &["Number", "number", "PhoneNumber"],
        SensorKind::Sms => &["Address", "address", "Number", "number"],
        SensorKind::ApplicationUsage => &["ProcessName", "processName", "Name", "name", "Package", "package"],
        SensorKind::WiFi => &["SSID", "ssid", "BSSID", "bssid"],
        SensorKind::BluetoothProximity => &["address", "Address", "name", "Name"],
        SensorKind::Location => &["Place", "place", "Name", "name"],
        SensorKind::ActivityState => &["Activity", "activity", "Type", "type", "State", "state", "Label", "label"],
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Parses a timestamp with the given strftime pattern. Integer values of 10
/// or 13 digits are read as epoch seconds / milliseconds.
pub fn parse_timestamp(raw: &str, timestamp_format: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    if let Ok(t) = NaiveDateTime::parse_from_str(raw, timestamp_format) {
        return t.with_nanosecond(0);
    }
    if raw.bytes().all(|b| b.is_ascii_digit()) {
        let n: i64 = raw.parse().ok()?;
        let secs = match raw.len() {
            13 => n / 1000,
            10 => n,
            _ => return None,
        };
        return chrono::DateTime::from_timestamp(secs, 0).map(|t| t.naive_utc());
    }
    None
}

/// Rounded coordinate token so that repeated visits collapse onto one place.
pub fn location_token(lat: f64, lon: f64) -> String {
    format!("{lat:.3},{lon:.3}")
}

/// Parses one raw log line. The returned event has an empty `user_id`;
/// callers that know the owner fill it in.
pub fn parse_log_line(line: &str, timestamp_format: &str) -> Result<LifelogEvent, ParseReject> {
    parse_log_line_any(line, &[timestamp_format])
}

/// Like [`parse_log_line`] but tries several timestamp patterns in order.
pub fn parse_log_line_any(line: &str, formats: &[&str]) -> Result<LifelogEvent, ParseReject> {
    let reject = |reason| ParseReject {
        line: line.to_string(),
        reason,
    };
    let value: Value = serde_json::from_str(line.trim())
        .map_err(|e| reject(RejectReason::Malformed(e.to_string())))?;
    let Value::Object(top) = value else {
        return Err(reject(RejectReason::Malformed("not an object".into())));
    };
    if top.len() != 1 {
        return Err(reject(RejectReason::Malformed(format!(
            "expected one top-level key, found {}",
            top.len()
        ))));
    }
    let (key, body) = top.into_iter().next().expect("one entry");
    let sensor = SensorKind::from_record_key(&key)
        .ok_or_else(|| reject(RejectReason::UnknownSensor(key.clone())))?;
    let Value::Object(body) = body else {
        return Err(reject(RejectReason::Malformed("sensor body is not an object".into())));
    };
    let mut fields: BTreeMap<String, String> = body
        .iter()
        .filter_map(|(k, v)| scalar_text(v).map(|s| (k.clone(), s)))
        .collect();

    let parse_time = |raw: &str| formats.iter().find_map(|f| parse_timestamp(raw, f));

    let start_key = START_KEYS
        .iter()
        .find(|k| fields.contains_key(**k))
        .ok_or_else(|| reject(RejectReason::UnparseableTimestamp))?;
    let start = parse_time(&fields[*start_key])
        .ok_or_else(|| reject(RejectReason::UnparseableTimestamp))?;
    fields.remove(*start_key);

    let mut end = None;
    if let Some(k) = END_KEYS.iter().find(|k| fields.contains_key(**k)) {
        let raw = fields.remove(*k).expect("present");
        if !raw.trim().is_empty() {
            end = Some(parse_time(&raw).ok_or_else(|| reject(RejectReason::UnparseableTimestamp))?);
        }
    }
    if end.is_none() && sensor == SensorKind::Call {
        let secs = ["Duration", "duration"]
            .iter()
            .find_map(|k| fields.get(*k).and_then(|d| d.trim().parse::<f64>().ok()));
        if let Some(secs) = secs.filter(|s| s.is_finite() && *s >= 0.0 && *s < 86_400.0 * 7.0) {
            end = Some(start + Duration::seconds(secs.round() as i64));
        }
    }
    if let Some(e) = end {
        if e < start {
            return Err(reject(RejectReason::EndBeforeStart));
        }
    }

    let entity_key = if sensor == SensorKind::Location {
        let coord = |names: &[&str]| {
            names
                .iter()
                .find_map(|k| fields.get(*k).and_then(|v| v.trim().parse::<f64>().ok()))
                .filter(|v| v.is_finite())
        };
        match (coord(&["Latitude", "latitude", "lat"]), coord(&["Longitude", "longitude", "lon"])) {
            (Some(lat), Some(lon)) => {
                for k in ["Latitude", "latitude", "lat", "Longitude", "longitude", "lon"] {
                    fields.remove(k);
                }
                Some(location_token(lat, lon))
            }
            _ => take_entity(&mut fields, entity_keys(sensor)),
        }
    } else if sensor == SensorKind::WiFi {
        // SSID may be blank for hidden networks.
        take_entity(&mut fields, &["SSID", "ssid"]).or_else(|| take_entity(&mut fields, &["BSSID", "bssid"]))
    } else {
        take_entity(&mut fields, entity_keys(sensor))
    };
    let entity_key = entity_key.ok_or_else(|| reject(RejectReason::MissingEntity))?;

    Ok(LifelogEvent {
        user_id: String::new(),
        sensor,
        entity_key,
        start,
        end,
        attrs: fields,
    })
}

fn take_entity(fields: &mut BTreeMap<String, String>, keys: &[&str]) -> Option<String> {
    for k in keys {
        if let Some(v) = fields.get(*k) {
            let v = v.trim();
            if !v.is_empty() {
                let v = v.to_string();
                fields.remove(*k);
                return Some(v);
            }
        }
    }
    None
}

/// Settings for [`scan_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Regex over user directory names; group 1 (or `user`) is the user id,
    /// group 2 (or `gender`) the gender letter.
    pub user_dir_pattern: String,
    pub timestamp_formats: Vec<String>,
    /// Users with fewer active days are dropped.
    pub min_days: usize,
    /// Optional `user_id<TAB>gender` table used when the directory name has no gender.
    pub gender_table: Option<PathBuf>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            user_dir_pattern: r"^(\d+)_([MFmf])$".to_string(),
            timestamp_formats: vec![
                "%m-%d-%Y %H:%M:%S".to_string(),
                "%Y-%m-%d %H:%M:%S".to_string(),
                "%Y-%m-%dT%H:%M:%S".to_string(),
            ],
            min_days: 1,
            gender_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectRecord {
    pub file: PathBuf,
    pub line_no: usize,
    pub reject: ParseReject,
}

#[derive(Debug, Clone, Default)]
pub struct ScanOutput {
    pub users: Vec<UserMeta>,
    /// Ordered by user, then start time, then file order.
    pub events: Vec<LifelogEvent>,
    pub rejects: Vec<RejectRecord>,
    pub warnings: Vec<String>,
}

/// Sort key that orders numeric user ids numerically and the rest lexically.
pub fn user_sort_key(user_id: &str) -> (u8, u64, String) {
    match user_id.parse::<u64>() {
        Ok(n) => (0, n, String::new()),
        Err(_) => (1, 0, user_id.to_string()),
    }
}

pub fn read_gender_table(path: &Path) -> Result<HashMap<String, Gender>, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(user), Some(g)) = (cols.next(), cols.next()) else {
            return Err(IngestError::UserTable {
                line: i + 1,
                reason: "expected user_id<TAB>gender".into(),
            });
        };
        let gender = g.parse().map_err(|reason| IngestError::UserTable { line: i + 1, reason })?;
        out.insert(user.to_string(), gender);
    }
    Ok(out)
}

/// Walks `root`, parsing every regular file under each matching user directory.
pub fn scan_dataset(root: &Path, config: &ScanConfig) -> Result<ScanOutput, IngestError> {
    let pattern = Regex::new(&config.user_dir_pattern)?;
    if pattern.captures_len() < 3 {
        return Err(IngestError::PatternGroups);
    }
    let sidecar = match &config.gender_table {
        Some(p) => read_gender_table(p)?,
        None => HashMap::new(),
    };
    let formats: Vec<&str> = config.timestamp_formats.iter().map(String::as_str).collect();

    let mut user_dirs = Vec::new();
    if root.is_dir() {
        for entry in fs::read_dir(root).map_err(io_err(root))? {
            let entry = entry.map_err(io_err(root))?;
            if !entry.path().is_dir() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(caps) = pattern.captures(&name) else {
                continue;
            };
            let user = caps
                .name("user")
                .or_else(|| caps.get(1))
                .map(|m| m.as_str().to_string())
                .unwrap_or_default();
            let gender_text = caps.name("gender").or_else(|| caps.get(2)).map(|m| m.as_str());
            let gender = match gender_text.and_then(|g| g.parse::<Gender>().ok()) {
                Some(g) => g,
                None => *sidecar
                    .get(&user)
                    .ok_or_else(|| IngestError::MissingGender(user.clone()))?,
            };
            user_dirs.push((user, gender, entry.path()));
        }
    }
    if user_dirs.is_empty() {
        return Err(IngestError::EmptyDataset(root.to_path_buf()));
    }
    user_dirs.sort_by(|a, b| user_sort_key(&a.0).cmp(&user_sort_key(&b.0)));

    let mut out = ScanOutput::default();
    for (user, gender, dir) in user_dirs {
        let mut user_events: Vec<LifelogEvent> = Vec::new();
        let mut files = Vec::new();
        for entry in WalkDir::new(&dir).sort_by_file_name() {
            match entry {
                Ok(e) if e.file_type().is_file() => files.push(e),
                Ok(_) => {}
                Err(err) => out.warnings.push(format!("skipping unreadable entry: {err}")),
            }
        }
        for file in files {
            let path = file.path();
            let reader = match fs::File::open(path) {
                Ok(f) => BufReader::new(f),
                Err(err) => {
                    out.warnings.push(format!("skipping {}: {err}", path.display()));
                    continue;
                }
            };
            for (i, line) in reader.split(b'\n').enumerate() {
                let bytes = match line {
                    Ok(b) => b,
                    Err(err) => {
                        out.warnings.push(format!("stopped reading {}: {err}", path.display()));
                        break;
                    }
                };
                let text = String::from_utf8_lossy(&bytes);
                if text.trim().is_empty() {
                    continue;
                }
                match parse_log_line_any(&text, &formats) {
                    Ok(mut ev) => {
                        ev.user_id = user.clone();
                        user_events.push(ev);
                    }
                    Err(reject) => out.rejects.push(RejectRecord {
                        file: path.to_path_buf(),
                        line_no: i + 1,
                        reject,
                    }),
                }
            }
        }
        // Stable: ties keep file order.
        user_events.sort_by_key(|e| e.start);
        let day_count = count_days(&user_events);
        if day_count < config.min_days {
            continue;
        }
        out.users.push(UserMeta {
            user_id: user,
            gender,
            day_count,
        });
        out.events.extend(user_events);
    }
    Ok(out)
}

fn count_days(events: &[LifelogEvent]) -> usize {
    let mut days: Vec<NaiveDate> = events.iter().map(|e| e.start.date()).collect();
    days.dedup();
    days.len()
}

fn next_midnight(date: NaiveDate) -> NaiveDateTime {
    date.succ_opt()
        .expect("date in range")
        .and_time(NaiveTime::MIN)
}

/// Groups events into per-user calendar days. An event whose end lies past
/// the following midnight is clipped there and its remainder re-emitted
/// into the next day starting at 00:00.
pub fn partition_by_day<I>(events: I) -> Vec<DayBucket>
where
    I: IntoIterator<Item = LifelogEvent>,
{
    let mut buckets: BTreeMap<((u8, u64, String), NaiveDate), DayBucket> = BTreeMap::new();
    let mut push = |ev: LifelogEvent| {
        let date = ev.start.date();
        buckets
            .entry((user_sort_key(&ev.user_id), date))
            .or_insert_with(|| DayBucket::empty(ev.user_id.clone(), date))
            .events
            .push(ev);
    };
    for ev in events {
        let mut current = ev;
        loop {
            let midnight = next_midnight(current.start.date());
            match current.end {
                Some(end) if end > midnight => {
                    let mut head = current.clone();
                    head.end = Some(midnight);
                    push(head);
                    current.start = midnight;
                }
                _ => {
                    push(current);
                    break;
                }
            }
        }
    }
    let mut out: Vec<DayBucket> = buckets.into_values().collect();
    for b in &mut out {
        b.events.sort_by_key(|e| e.start);
    }
    out
}

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

const ISO: &str = "%Y-%m-%dT%H:%M:%S";

pub const EVENT_FILE_COLUMNS: &str = "user_id\tsensor\tentity_key\tstart\tend";

/// Writes the normalized tab-separated event file. `header` lines are
/// emitted first, each prefixed with `# `.
pub fn write_event_file<W: Write>(
    mut w: W,
    header: &[String],
    events: &[LifelogEvent],
) -> std::io::Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    writeln!(w, "{EVENT_FILE_COLUMNS}")?;
    for e in events {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            escape_field(&e.user_id),
            e.sensor.as_str(),
            escape_field(&e.entity_key),
            e.start.format(ISO),
            e.end.map(|t| t.format(ISO).to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

pub fn read_event_file(path: &Path) -> Result<Vec<LifelogEvent>, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_event_file(&text)
}

pub fn parse_event_file(text: &str) -> Result<Vec<LifelogEvent>, IngestError> {
    let mut events = Vec::new();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let bad = |reason: String| IngestError::EventFile { line: i + 1, reason };
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !seen_header {
            if line != EVENT_FILE_COLUMNS {
                return Err(bad(format!("expected column header '{EVENT_FILE_COLUMNS}'")));
            }
            seen_header = true;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad(format!("expected 5 columns, found {}", cols.len())));
        }
        let sensor = cols[1].parse::<SensorKind>().map_err(bad)?;
        let start = NaiveDateTime::parse_from_str(cols[3], ISO).map_err(|e| bad(e.to_string()))?;
        let end = if cols[4].is_empty() {
            None
        } else {
            Some(NaiveDateTime::parse_from_str(cols[4], ISO).map_err(|e| bad(e.to_string()))?)
        };
        events.push(LifelogEvent {
            user_id: unescape_field(cols[0]),
            sensor,
            entity_key: unescape_field(cols[2]),
            start,
            end,
            attrs: BTreeMap::new(),
        });
    }
    Ok(events)
}

pub fn write_reject_log<W: Write>(mut w: W, header: &[String], rejects: &[RejectRecord]) -> std::io::Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    for r in rejects {
        writeln!(
            w,
            "{}:{}\t{}\t{}",
            r.file.display(),
            r.line_no,
            r.reject.reason,
            escape_field(r.reject.line.trim_end())
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FMT: &str = "%m-%d-%Y %H:%M:%S";

    fn dt(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
    }

    #[test]
    fn call_record_maps_number_and_duration() {
        let line = r#"{"Call":{"Number":"+989121234567","Duration":"47","Time":"11-5-2013 9:12:00","Type":"incoming"}}"#;
        let ev = parse_log_line(line, FMT).unwrap();
        assert_eq!(ev.sensor, SensorKind::Call);
        assert_eq!(ev.entity_key, "+989121234567");
        assert_eq!(ev.start, dt("2013-11-05 09:12:00"));
        assert_eq!(ev.end, Some(dt("2013-11-05 09:12:47")));
        assert_eq!(ev.attrs.get("Type").map(String::as_str), Some("incoming"));
        assert_eq!(ev.attrs.get("Duration").map(String::as_str), Some("47"));
    }

    #[test]
    fn per_sensor_entities() {
        let cases = [
            (r#"{"Application":{"ProcessName":"com.android.chrome","Start":"1-6-2014 13:56:39","End":"1-6-2014 13:58:00"}}"#,
             SensorKind::ApplicationUsage, "com.android.chrome"),
            (r#"{"WiFi":{"SSID":"","BSSID":"00:11:22:33:44:55","level":"-60","time":"1-6-2014 10:00:00"}}"#,
             SensorKind::WiFi, "00:11:22:33:44:55"),
            (r#"{"WiFi":{"SSID":"home","BSSID":"00:11:22:33:44:55","time":"1-6-2014 10:00:00"}}"#,
             SensorKind::WiFi, "home"),
            (r#"{"Bluetooth":{"name":"headset","address":"AA:BB:CC:DD:EE:FF","time":"1-6-2014 10:00:00"}}"#,
             SensorKind::BluetoothProximity, "AA:BB:CC:DD:EE:FF"),
            (r#"{"Location":{"Latitude":"35.70123","Longitude":"51.40987","Accuracy":"20","time":"1-6-2014 10:00:00"}}"#,
             SensorKind::Location, "35.701,51.410"),
            (r#"{"SMS":{"Address":"+98912","type":"2","date":"1-6-2014 10:00:00"}}"#,
             SensorKind::Sms, "+98912"),
            (r#"{"Activity":{"type":"walking","start":"1-6-2014 10:00:00","end":"1-6-2014 10:20:00"}}"#,
             SensorKind::ActivityState, "walking"),
        ];
        for (line, sensor, entity) in cases {
            let ev = parse_log_line(line, FMT).unwrap_or_else(|r| panic!("{line}: {:?}", r.reason));
            assert_eq!(ev.sensor, sensor, "{line}");
            assert_eq!(ev.entity_key, entity, "{line}");
        }
    }

    #[test]
    fn rejects() {
        let r = parse_log_line(r#"{"Foo":{"time":"1-6-2014 10:00:00"}}"#, FMT).unwrap_err();
        assert_eq!(r.reason, RejectReason::UnknownSensor("Foo".into()));
        let r = parse_log_line(r#"{"Call":{"Number":"1"}}"#, FMT).unwrap_err();
        assert_eq!(r.reason, RejectReason::UnparseableTimestamp);
        let r = parse_log_line(r#"{"Call":{"Number":"1","Time":"yesterday"}}"#, FMT).unwrap_err();
        assert_eq!(r.reason, RejectReason::UnparseableTimestamp);
        let r = parse_log_line("not json", FMT).unwrap_err();
        assert!(matches!(r.reason, RejectReason::Malformed(_)));
        let r = parse_log_line(r#"{"Call":{"Time":"1-6-2014 10:00:00"}}"#, FMT).unwrap_err();
        assert_eq!(r.reason, RejectReason::MissingEntity);
        let r = parse_log_line(
            r#"{"Application":{"ProcessName":"x","Start":"1-6-2014 10:00:00","End":"1-6-2014 09:00:00"}}"#,
            FMT,
        )
        .unwrap_err();
        assert_eq!(r.reason, RejectReason::EndBeforeStart);
    }

    #[test]
    fn partition_groups_and_sorts() {
        let mk = |s: &str| LifelogEvent {
            user_id: "1".into(),
            sensor: SensorKind::Sms,
            entity_key: "x".into(),
            start: dt(s),
            end: None,
            attrs: BTreeMap::new(),
        };
        let events = vec![
            mk("2013-11-05 10:00:00"),
            mk("2013-11-06 01:00:00"),
            mk("2013-11-05 08:00:00"),
            mk("2013-11-05 23:59:59"),
            mk("2013-11-05 00:00:00"),
            mk("2013-11-06 12:00:00"),
            mk("2013-11-05 13:00:00"),
        ];
        let buckets = partition_by_day(events);
        assert_eq!(buckets.len(), 2);
        assert_eq!(buckets[0].events.len(), 5);
        assert_eq!(buckets[1].events.len(), 2);
        assert!(buckets[0].events.windows(2).all(|w| w[0].start <= w[1].start));
        assert!(partition_by_day(Vec::new()).is_empty());
    }

    #[test]
    fn midnight_split_clips_both_sides() {
        let ev = LifelogEvent {
            user_id: "1".into(),
            sensor: SensorKind::Call,
            entity_key: "n".into(),
            start: dt("2013-11-05 23:50:00"),
            end: Some(dt("2013-11-06 00:20:00")),
            attrs: BTreeMap::new(),
        };
        let buckets = partition_by_day(vec![ev]);
        assert_eq!(buckets.len(), 2);
        let a = &buckets[0].events[0];
        let b = &buckets[1].events[0];
        assert_eq!(a.end, Some(dt("2013-11-06 00:00:00")));
        assert_eq!(b.start, dt("2013-11-06 00:00:00"));
        assert_eq!(b.end, Some(dt("2013-11-06 00:20:00")));
        // Minute-grid brute force: every minute of the original span is covered exactly once.
        let mut covered = 0;
        let mut t = dt("2013-11-05 23:50:00");
        while t < dt("2013-11-06 00:20:00") {
            let hits = [a, b]
                .iter()
                .filter(|e| e.start <= t && t < e.end.unwrap())
                .count();
            assert_eq!(hits, 1, "minute {t}");
            covered += 1;
            t += Duration::minutes(1);
        }
        assert_eq!(covered, 30);
    }

    #[test]
    fn end_exactly_at_midnight_is_not_split() {
        let ev = LifelogEvent {
            user_id: "1".into(),
            sensor: SensorKind::Call,
            entity_key: "n".into(),
            start: dt("2013-11-05 23:50:00"),
            end: Some(dt("2013-11-06 00:00:00")),
            attrs: BTreeMap::new(),
        };
        assert_eq!(partition_by_day(vec![ev]).len(), 1);
    }

    #[test]
    fn event_file_roundtrip_with_escapes() {
        let ev = LifelogEvent {
            user_id: "7".into(),
            sensor: SensorKind::WiFi,
            entity_key: "cafe\tnet\\5".into(),
            start: dt("2013-11-05 23:50:00"),
            end: None,
            attrs: BTreeMap::new(),
        };
        let mut buf = Vec::new();
        write_event_file(&mut buf, &["seed=1".into()], std::slice::from_ref(&ev)).unwrap();
        let back = parse_event_file(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, vec![ev]);
    }
}
