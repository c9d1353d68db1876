//! Domain types shared by every stage, and the port lookup table.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// AIS heading value meaning "not available".
pub const HEADING_UNAVAILABLE: f64 = 511.0;

/// Code used for ports that are not in the registry.
pub const UNKNOWN_PORT: i64 = -1;

/// One raw AIS tuple.
///
/// `arrival_time`, `arrival_port` and `trip_id` are only present in labeled
/// (training) data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisRecord {
    pub ship_id: String,
    pub ship_type: u32,
    /// Knots.
    pub speed: f64,
    pub lon: f64,
    pub lat: f64,
    /// Degrees in `[0, 360)`.
    pub course: f64,
    /// Degrees in `[0, 360)` or [`HEADING_UNAVAILABLE`].
    pub heading: f64,
    /// UTC epoch seconds.
    pub timestamp: i64,
    pub departure_port: String,
    pub reported_draught: Option<f64>,
    pub arrival_time: Option<i64>,
    pub arrival_port: Option<String>,
    pub trip_id: Option<String>,
}

impl AisRecord {
    /// Copy of the record with the training-only columns cleared.
    pub fn without_labels(&self) -> AisRecord {
        AisRecord {
            arrival_time: None,
            arrival_port: None,
            trip_id: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub lon: f64,
    pub lat: f64,
}

/// Bijective port name <-> dense integer code map.
///
/// Codes are assigned in lexicographic name order, so the same set of ports
/// always yields the same codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Port>", into = "Vec<Port>")]
pub struct PortRegistry {
    ports: Vec<Port>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PortRegistry {
    pub fn new(mut ports: Vec<Port>) -> Result<Self> {
        ports.sort_by(|a, b| a.name.cmp(&b.name));
        let mut index = HashMap::with_capacity(ports.len());
        for (code, port) in ports.iter().enumerate() {
            if port.name.is_empty() {
                return Err(Error::Registry("empty port name".into()));
            }
            if !port.lon.is_finite() || !port.lat.is_finite() {
                return Err(Error::Registry(format!(
                    "non-finite coordinates for {}",
                    port.name
                )));
            }
            if index.insert(port.name.clone(), code).is_some() {
                return Err(Error::Registry(format!("duplicate port {}", port.name)));
            }
        }
        Ok(PortRegistry { ports, index })
    }

    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    /// Code for `name`, or [`UNKNOWN_PORT`] if the name is not registered.
    pub fn encode(&self, name: &str) -> i64 {
        self.index
            .get(name)
            .map_or(UNKNOWN_PORT, |&code| code as i64)
    }

    pub fn decode(&self, code: i64) -> Result<&str> {
        self.port(code).map(|p| p.name.as_str())
    }

    pub fn port(&self, code: i64) -> Result<&Port> {
        usize::try_from(code)
            .ok()
            .and_then(|c| self.ports.get(c))
            .ok_or(Error::UnknownPortCode(code))
    }

    /// Reads the `NAME,LON,LAT` registry file.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["NAME", "LON", "LAT"] {
            return Err(Error::Header(format!(
                "expected NAME,LON,LAT, found {}",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut ports = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let field = |idx: usize, what: &str| -> Result<f64> {
                row.get(idx)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Registry(format!("line {line}: {what} not numeric")))
            };
            ports.push(Port {
                name: row.get(0).unwrap_or_default().to_string(),
                lon: field(1, "LON")?,
                lat: field(2, "LAT")?,
            });
        }
        PortRegistry::new(ports)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["NAME", "LON", "LAT"])?;
        for p in &self.ports {
            wtr.write_record([p.name.as_str(), &p.lon.to_string(), &p.lat.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<registry>", e))?;
        Ok(())
    }
}

impl TryFrom<Vec<Port>> for PortRegistry {
    type Error = Error;

    fn try_from(ports: Vec<Port>) -> Result<Self> {
        PortRegistry::new(ports)
    }
}

impl From<PortRegistry> for Vec<Port> {
    fn from(registry: PortRegistry) -> Self {
        registry.ports
    }
}

/// Code for `name` in `registry`; unknown names map to [`UNKNOWN_PORT`].
pub fn encode_port(name: &str, registry: &PortRegistry) -> i64 {
    registry.encode(name)
}

pub fn decode_port(code: i64, registry: &PortRegistry) -> Result<String> {
    registry.decode(code).map(str::to_owned)
}

pub const CLASS_FEATURE_NAMES: [&str; ClassFeatures::LEN] = [
    "ship_type",
    "speed",
    "lon",
    "lat",
    "course",
    "heading",
    "departure_port_code",
    "reported_draught",
];

pub const REG_FEATURE_NAMES: [&str; RegFeatures::LEN] = [
    "ship_type",
    "speed",
    "lon",
    "lat",
    "course",
    "heading",
    "departure_port_code",
    "reported_draught",
    "dest_port_code",
    "dest_lon",
    "dest_lat",
    "hour_of_day",
    "day_of_week",
    "week_of_year",
];

/// The eight classification inputs, in [`CLASS_FEATURE_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassFeatures(pub [f64; ClassFeatures::LEN]);

impl ClassFeatures {
    pub const LEN: usize = 8;

    /// Absent draught is encoded as 0, the same value cleaning fills in.
    pub fn from_record(record: &AisRecord, registry: &PortRegistry) -> Self {
        ClassFeatures([
            record.ship_type as f64,
            record.speed,
            record.lon,
            record.lat,
            record.course,
            record.heading,
            registry.encode(&record.departure_port) as f64,
            record.reported_draught.unwrap_or(0.0),
        ])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Regression inputs: the classification features, the destination port code
/// and coordinates, then hour of day, day of week and ISO week.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegFeatures(pub [f64; RegFeatures::LEN]);

impl RegFeatures {
    pub const LEN: usize = 14;

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-tuple output of the prediction chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub port_name: String,
    /// Remaining trip time in minutes, never negative.
    pub time_delta: f64,
    /// `timestamp + round(time_delta * 60)`.
    pub eta: i64,
}

impl Prediction {
    pub fn new(port_name: String, time_delta: f64, timestamp: i64) -> Self {
        let time_delta = time_delta.max(0.0);
        Prediction {
            port_name,
            time_delta,
            eta: timestamp + (time_delta * 60.0).round() as i64,
        }
    }

    /// `PORT,ETA_EPOCH_SECONDS,DELTA_MINUTES` with the delta at two decimals.
    pub fn to_protocol_line(&self) -> String {
        format!("{},{},{:.2}", self.port_name, self.eta, self.time_delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry(names: &[&str]) -> PortRegistry {
        PortRegistry::new(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| Port {
                    name: n.to_string(),
                    lon: i as f64,
                    lat: -(i as f64),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn encode_known_and_unknown() {
        let reg = registry(&["PIRAEUS", "ALEXANDRIA", "VALLETTA"]);
        assert_eq!(encode_port("ALEXANDRIA", &reg), 0);
        assert_eq!(encode_port("UNSEEN_PORT", &reg), UNKNOWN_PORT);
    }

    #[test]
    fn decode_in_and_out_of_range() {
        let reg = registry(&["A", "B"]);
        assert_eq!(decode_port(0, &reg).unwrap(), "A");
        assert_eq!(decode_port(1, &reg).unwrap(), "B");
        let err = decode_port(2, &reg).unwrap_err();
        assert!(err.to_string().contains("unknown port code"));
        assert!(decode_port(-1, &reg).is_err());
    }

    #[test]
    fn codes_follow_name_order() {
        let reg = registry(&["C", "A", "B"]);
        let names: Vec<_> = reg.ports().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["A", "B", "C"]);
        for (code, name) in names.iter().enumerate() {
            assert_eq!(reg.encode(name), code as i64);
            assert_eq!(reg.decode(code as i64).unwrap(), *name);
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let ports = vec![
            Port { name: "A".into(), lon: 0.0, lat: 0.0 },
            Port { name: "A".into(), lon: 1.0, lat: 1.0 },
        ];
        assert!(PortRegistry::new(ports).is_err());
    }

    #[test]
    fn registry_csv_round_trip() {
        let reg = registry(&["MARSEILLE", "GENOA", "TUNIS"]);
        let mut buf = Vec::new();
        reg.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"NAME,LON,LAT\n"));
        let back = PortRegistry::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, reg);
    }

    #[test]
    fn registry_csv_bad_header() {
        let err = PortRegistry::read_csv("PORT,X,Y\nA,1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Header(_)));
    }

    #[test]
    fn eta_rounds_minutes_to_seconds() {
        let p = Prediction::new("A".into(), 30.0, 1_000);
        assert_eq!(p.eta, 1_000 + 1800);
        let p = Prediction::new("A".into(), -5.0, 1_000);
        assert_eq!(p.time_delta, 0.0);
        assert_eq!(p.eta, 1_000);
        let p = Prediction::new("A".into(), 90.255, 0);
        assert_eq!(p.to_protocol_line(), "A,5415,90.25");
    }

    proptest::proptest! {
        #[test]
        fn encode_decode_bijection(names in proptest::collection::btree_set("[A-Z_]{1,12}", 1..40)) {
            let ports: Vec<Port> = names
                .iter()
                .map(|n| Port { name: n.clone(), lon: 0.0, lat: 0.0 })
                .collect();
            let reg = PortRegistry::new(ports).unwrap();
            for code in 0..reg.len() as i64 {
                proptest::prop_assert_eq!(reg.encode(reg.decode(code).unwrap()), code);
            }
            for name in &names {
                proptest::prop_assert_eq!(reg.decode(reg.encode(name)).unwrap(), name.as_str());
            }
        }
    }
}
