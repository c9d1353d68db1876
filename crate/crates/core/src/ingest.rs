//! AIS CSV parsing, cleaning, trip segmentation and trip-level splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AisRecord, HEADING_UNAVAILABLE};
use crate::rng;

pub const AIS_HEADER: [&str; 13] = [
    "SHIP_ID",
    "SHIPTYPE",
    "SPEED",
    "LON",
    "LAT",
    "COURSE",
    "HEADING",
    "TIMESTAMP",
    "DEPARTURE_PORT_NAME",
    "REPORTED_DRAUGHT",
    "ARRIVAL_TIME",
    "ARRIVAL_PORT",
    "TRIP_ID",
];

/// A data row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub reason: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

/// Parses a canonical AIS CSV stream. Malformed rows are returned with their
/// line number rather than dropped; only a missing or wrong header is fatal.
pub fn parse_csv<R: Read>(reader: R) -> Result<(Vec<AisRecord>, Vec<RowError>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(Error::Header(e.to_string())),
    };
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != AIS_HEADER {
        return Err(Error::Header(format!(
            "expected {}, found {}",
            AIS_HEADER.join(","),
            found.join(",")
        )));
    }

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for row in rdr.records() {
        match row {
            Ok(row) => {
                let line = row.position().map_or(0, |p| p.line());
                match parse_row(&row) {
                    Ok(rec) => records.push(rec),
                    Err(reason) => errors.push(RowError { line, reason }),
                }
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                errors.push(RowError {
                    line,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok((records, errors))
}

/// Parses one headerless data line, as received by the serve loop.
pub fn parse_line(line: &str) -> std::result::Result<AisRecord, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(line.as_bytes());
    let mut row = csv::StringRecord::new();
    match rdr.read_record(&mut row) {
        Ok(true) => parse_row(&row),
        Ok(false) => Err("empty line".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<AisRecord, String> {
    if row.len() != AIS_HEADER.len() {
        return Err(format!(
            "expected {} fields, found {}",
            AIS_HEADER.len(),
            row.len()
        ));
    }
    let get = |i: usize| row.get(i).unwrap_or_default().trim();
    let real = |i: usize| -> std::result::Result<f64, String> {
        get(i)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("{} not numeric", AIS_HEADER[i]))
    };
    let int = |i: usize| -> std::result::Result<i64, String> {
        get(i)
            .parse::<i64>()
            .map_err(|_| format!("{} not an integer", AIS_HEADER[i]))
    };
    let opt = |i: usize| Some(get(i)).filter(|s| !s.is_empty());

    let ship_id = get(0);
    if ship_id.is_empty() {
        return Err("SHIP_ID empty".into());
    }
    let ship_type = get(1)
        .parse::<u32>()
        .map_err(|_| "SHIPTYPE not a non-negative integer".to_string())?;
    let speed = real(2)?;
    let lon = real(3)?;
    let lat = real(4)?;
    let course = real(5)?;
    let heading = real(6)?;
    let timestamp = int(7)?;
    if speed < 0.0 {
        return Err("SPEED negative".into());
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err("LON out of range".into());
    }
    if !(-90.0..=90.0).contains(&lat) {
        return Err("LAT out of range".into());
    }
    if !(0.0..360.0).contains(&course) {
        return Err("COURSE out of range".into());
    }
    if !(0.0..360.0).contains(&heading) && heading != HEADING_UNAVAILABLE {
        return Err("HEADING out of range".into());
    }
    if timestamp <= 0 {
        return Err("TIMESTAMP not positive".into());
    }
    let reported_draught = opt(9)
        .map(|_| real(9).map_err(|_| "REPORTED_DRAUGHT not numeric".to_string()))
        .transpose()?;
    let arrival_time = opt(10).map(|_| int(10)).transpose()?;

    Ok(AisRecord {
        ship_id: ship_id.to_string(),
        ship_type,
        speed,
        lon,
        lat,
        course,
        heading,
        timestamp,
        departure_port: get(8).to_string(),
        reported_draught,
        arrival_time,
        arrival_port: opt(11).map(str::to_string),
        trip_id: opt(12).map(str::to_string),
    })
}

fn record_fields(r: &AisRecord) -> [String; 13] {
    let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    [
        r.ship_id.clone(),
        r.ship_type.to_string(),
        r.speed.to_string(),
        r.lon.to_string(),
        r.lat.to_string(),
        r.course.to_string(),
        r.heading.to_string(),
        r.timestamp.to_string(),
        r.departure_port.clone(),
        opt_f(r.reported_draught),
        r.arrival_time.map(|t| t.to_string()).unwrap_or_default(),
        r.arrival_port.clone().unwrap_or_default(),
        r.trip_id.clone().unwrap_or_default(),
    ]
}

/// Writes records in the canonical layout. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(writer: W, records: &[AisRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(AIS_HEADER)?;
    for r in records {
        wtr.write_record(record_fields(r))?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Headerless single data line, as sent to the serve loop.
pub fn format_line(record: &AisRecord) -> String {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    // Writing to a Vec cannot fail.
    wtr.write_record(record_fields(record)).expect("in-memory write");
    let mut bytes = wtr.into_inner().expect("in-memory flush");
    bytes.pop();
    String::from_utf8(bytes).expect("record fields are UTF-8")
}

/// Rounds to two decimals, half away from zero, on the decimal digits of the
/// shortest representation of `value` (so 15.345 rounds to 15.35 even though
/// the nearest double is slightly below it).
pub fn round_2dp(value: f64) -> f64 {
    if !value.is_finite() {
        return value;
    }
    let text = format!("{}", value.abs());
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => return value,
    };
    if frac_part.len() <= 2 {
        return value;
    }
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(frac_part.bytes().take(2))
        .map(|b| b - b'0')
        .collect();
    if frac_part.as_bytes()[2] >= b'5' {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - 2;
    let s: String = digits[..split]
        .iter()
        .map(|d| char::from(b'0' + d))
        .chain(std::iter::once('.'))
        .chain(digits[split..].iter().map(|d| char::from(b'0' + d)))
        .collect();
    let rounded: f64 = s.parse().expect("digit string");
    if value.is_sign_negative() {
        -rounded
    } else {
        rounded
    }
}

/// Counts per cleaning rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub draught_filled: usize,
    pub after_arrival_dropped: usize,
    pub out_of_order_dropped: usize,
}

/// Applies the cleaning rules:
///
/// - missing reported draught is filled with 0;
/// - records stamped after their trip's arrival time are dropped;
/// - within a trip (keyed by trip id, or ship id when absent), a record
///   older than the previously accepted one is dropped;
/// - lon/lat are rounded to two decimals.
///
/// Survivors keep their input order.
pub fn clean(records: Vec<AisRecord>) -> (Vec<AisRecord>, DropReport) {
    let mut report = DropReport::default();
    let mut last_seen: HashMap<String, i64> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for mut rec in records {
        if let Some(arrival) = rec.arrival_time {
            if rec.timestamp > arrival {
                report.after_arrival_dropped += 1;
                continue;
            }
        }
        let key = rec.trip_id.as_deref().unwrap_or(&rec.ship_id);
        if let Some(&prev) = last_seen.get(key) {
            if rec.timestamp < prev {
                report.out_of_order_dropped += 1;
                continue;
            }
        }
        last_seen.insert(key.to_string(), rec.timestamp);
        clean_tuple(&mut rec, &mut report);
        out.push(rec);
    }
    (out, report)
}

/// The cleaning rules that need no trip context: draught fill and rounding.
pub fn clean_single(record: &AisRecord) -> AisRecord {
    let mut rec = record.clone();
    clean_tuple(&mut rec, &mut DropReport::default());
    rec
}

fn clean_tuple(rec: &mut AisRecord, report: &mut DropReport) {
    if rec.reported_draught.is_none() {
        rec.reported_draught = Some(0.0);
        report.draught_filled += 1;
    }
    rec.lon = round_2dp(rec.lon);
    rec.lat = round_2dp(rec.lat);
}

/// One voyage, records ordered by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub trip_id: String,
    pub ship_id: String,
    pub records: Vec<AisRecord>,
    pub arrival_port: String,
    pub arrival_time: i64,
}

impl Trip {
    /// Seconds from the first report to arrival.
    pub fn duration_secs(&self) -> i64 {
        self.arrival_time - self.records[0].timestamp
    }
}

/// Groups labeled records into trips, in order of first appearance. Records
/// inside a trip are stably sorted by timestamp.
pub fn segment_trips(records: Vec<AisRecord>) -> Result<Vec<Trip>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<AisRecord>> = HashMap::new();
    for (i, rec) in records.into_iter().enumerate() {
        let trip_id = rec
            .trip_id
            .clone()
            .ok_or_else(|| Error::InvalidInput(format!("record {i} has no TRIP_ID")))?;
        groups
            .entry(trip_id.clone())
            .or_insert_with(|| {
                order.push(trip_id);
                Vec::new()
            })
            .push(rec);
    }
    order
        .into_iter()
        .map(|trip_id| {
            let mut recs = groups.remove(&trip_id).expect("grouped above");
            recs.sort_by_key(|r| r.timestamp);
            let first = &recs[0];
            let arrival_port = first.arrival_port.clone().ok_or_else(|| {
                Error::InvalidInput(format!("trip {trip_id} has no ARRIVAL_PORT"))
            })?;
            let arrival_time = first.arrival_time.ok_or_else(|| {
                Error::InvalidInput(format!("trip {trip_id} has no ARRIVAL_TIME"))
            })?;
            let ship_id = first.ship_id.clone();
            for r in &recs {
                if r.arrival_port.as_deref() != Some(arrival_port.as_str())
                    || r.arrival_time != Some(arrival_time)
                    || r.ship_id != ship_id
                {
                    return Err(Error::InvalidInput(format!(
                        "trip {trip_id} mixes ships or arrival labels"
                    )));
                }
            }
            Ok(Trip {
                trip_id,
                ship_id,
                records: recs,
                arrival_port,
                arrival_time,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Validation];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "validation" => Ok(Split::Validation),
            other => Err(Error::InvalidInput(format!("unknown split {other:?}"))),
        }
    }
}

/// Disjoint train/test/validation trip-id sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub validation: Vec<String>,
}

impl TripSplit {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
            Split::Validation => &self.validation,
        }
    }

    pub fn assignment(&self) -> BTreeMap<&str, Split> {
        Split::ALL
            .iter()
            .flat_map(|&s| self.ids(s).iter().map(move |id| (id.as_str(), s)))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["TRIP_ID", "SPLIT"])?;
        for split in Split::ALL {
            for id in self.ids(split) {
                wtr.write_record([id.as_str(), split.name()])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<split output>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut split = TripSplit::default();
        for row in rdr.records() {
            let row = row?;
            let id = row.get(0).unwrap_or_default().to_string();
            match row.get(1).unwrap_or_default().parse::<Split>()? {
                Split::Train => split.train.push(id),
                Split::Test => split.test.push(id),
                Split::Validation => split.validation.push(id),
            }
        }
        Ok(split)
    }
}

/// Seeded 70/15/15 split by trip count that never spreads one ship over two
/// sets.
///
/// Ships are shuffled as whole units, then poured into train, test and
/// validation in that order. A ship moves the cursor to the next set when
/// adding it would overshoot the current target by more than stopping short
/// would undershoot it. With one trip per ship this yields exactly
/// `floor(0.70 N)` / `ceil(0.15 N)` / remainder.
pub fn split_by_trip(trips: &[Trip], seed: u64) -> Result<TripSplit> {
    if trips.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 trips to split, got {}",
            trips.len()
        )));
    }
    let mut by_ship: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in trips {
        by_ship.entry(&t.ship_id).or_default().push(&t.trip_id);
    }
    if by_ship.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 distinct ships for a leakage-free split, got {}",
            by_ship.len()
        )));
    }
    let mut ships: Vec<(&str, Vec<&str>)> = by_ship.into_iter().collect();
    ships.shuffle(&mut rng::seeded(seed));

    let n = trips.len();
    let train_target = (n as f64 * 0.70).floor() as usize;
    let test_target = (n as f64 * 0.15).ceil() as usize;
    let targets = [train_target, test_target, n - train_target - test_target];

    let mut sets: [Vec<String>; 3] = Default::default();
    let mut counts = [0usize; 3];
    let mut cursor = 0usize;
    let total_ships = ships.len();
    for (i, (_, trip_ids)) in ships.into_iter().enumerate() {
        let k = trip_ids.len();
        let ships_left = total_ships - i;
        while cursor < 2 {
            let target = targets[cursor];
            let overshoot = (counts[cursor] + k).saturating_sub(target);
            let shortfall = target.saturating_sub(counts[cursor]);
            let must_leave_room = ships_left <= 2 - cursor;
            let nonempty = counts[cursor] > 0;
            if nonempty && (must_leave_room || overshoot > shortfall || shortfall == 0) {
                cursor += 1;
            } else {
                break;
            }
        }
        counts[cursor] += k;
        sets[cursor].extend(trip_ids.into_iter().map(str::to_string));
    }
    let [train, test, validation] = sets;
    Ok(TripSplit {
        train,
        test,
        validation,
    })
}

/// Ships that appear in more than one set. Always empty for
/// [`split_by_trip`] output.
pub fn ship_leakage(trips: &[Trip], split: &TripSplit) -> Vec<String> {
    let assignment = split.assignment();
    let mut seen: HashMap<&str, HashSet<Split>> = HashMap::new();
    for t in trips {
        if let Some(&s) = assignment.get(t.trip_id.as_str()) {
            seen.entry(&t.ship_id).or_default().insert(s);
        }
    }
    let mut leaked: Vec<String> = seen
        .into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(ship, _)| ship.to_string())
        .collect();
    leaked.sort();
    leaked
}
