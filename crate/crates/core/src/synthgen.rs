//! Seeded synthetic AIS corpora with known ground truth.
//!
//! Ports are scattered in a lon/lat box. Each port is linked to its nearest
//! neighbours by shipping lanes, and lanes leaving one port point in clearly
//! different directions, so the destination of a voyage follows from its
//! departure port and course. Voyages are straight lines sampled at a fixed
//! report interval.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{self, Trip};
use crate::model::{AisRecord, Port, PortRegistry};
use crate::rng;

/// Minimum distance between two ports, degrees.
pub const MIN_PORT_SEPARATION: f64 = 0.5;
/// 2015-03-01T00:00:00Z.
pub const START_EPOCH: i64 = 1_425_168_000;
/// Lanes per port before pruning.
pub const LANE_NEIGHBOURS: usize = 2;
/// Lanes from one port closer than this in bearing are pruned (the longer
/// one goes).
pub const LANE_MIN_ANGLE: f64 = 10.0;

const PLACEMENT_ATTEMPTS: usize = 10_000;
const SHIP_TYPES: [u32; 3] = [60, 70, 80];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl Default for GeoBox {
    fn default() -> Self {
        GeoBox {
            lon_min: 12.0,
            lon_max: 18.0,
            lat_min: 34.0,
            lat_max: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub ports: Vec<Port>,
    pub seed: u64,
    /// Outgoing lanes per port index.
    pub lanes: Vec<Vec<usize>>,
}

/// Planar bearing from `a` to `b` in degrees, clockwise from north, `[0, 360)`.
pub fn bearing(a: [f64; 2], b: [f64; 2]) -> f64 {
    let deg = (b[0] - a[0]).atan2(b[1] - a[1]).to_degrees();
    if deg < 0.0 {
        deg + 360.0
    } else {
        deg
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn pos(p: &Port) -> [f64; 2] {
    [p.lon, p.lat]
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

/// Places `n_ports` ports by rejection sampling so every pair is at least
/// [`MIN_PORT_SEPARATION`] apart. Names are `PORT_000`, `PORT_001`, ...
pub fn generate_world(n_ports: usize, geo: GeoBox, seed: u64) -> Result<World> {
    if n_ports < 2 {
        return Err(Error::Config(format!("a world needs at least 2 ports, got {n_ports}")));
    }
    if !(geo.lon_max > geo.lon_min && geo.lat_max > geo.lat_min) {
        return Err(Error::Config("empty box".into()));
    }
    let mut r = rng::seeded(seed);
    let mut placed: Vec<[f64; 2]> = Vec::with_capacity(n_ports);
    let mut attempts = 0;
    while placed.len() < n_ports {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::Config(format!(
                "box too small for {n_ports} ports {MIN_PORT_SEPARATION} degrees apart"
            )));
        }
        let p = [
            round_to(r.random_range(geo.lon_min..geo.lon_max), 2),
            round_to(r.random_range(geo.lat_min..geo.lat_max), 2),
        ];
        if placed.iter().all(|&q| dist(p, q) >= MIN_PORT_SEPARATION) {
            placed.push(p);
        }
    }
    let ports: Vec<Port> = placed
        .iter()
        .enumerate()
        .map(|(i, p)| Port {
            name: format!("PORT_{i:03}"),
            lon: p[0],
            lat: p[1],
        })
        .collect();
    let lanes = build_lanes(&ports);
    Ok(World { ports, seed, lanes })
}

fn build_lanes(ports: &[Port]) -> Vec<Vec<usize>> {
    (0..ports.len())
        .map(|i| {
            let origin = pos(&ports[i]);
            let mut others: Vec<usize> = (0..ports.len()).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                dist(origin, pos(&ports[a]))
                    .total_cmp(&dist(origin, pos(&ports[b])))
                    .then(a.cmp(&b))
            });
            let mut kept: Vec<usize> = Vec::new();
            for j in others.into_iter().take(LANE_NEIGHBOURS) {
                let b = bearing(origin, pos(&ports[j]));
                if kept
                    .iter()
                    .all(|&k| angle_diff(b, bearing(origin, pos(&ports[k]))) >= LANE_MIN_ANGLE)
                {
                    kept.push(j);
                }
            }
            kept
        })
        .collect()
}

impl World {
    pub fn registry(&self) -> Result<PortRegistry> {
        PortRegistry::new(self.ports.clone())
    }

    /// All `(origin, destination)` lanes, ordered by origin then distance.
    pub fn routes(&self) -> Vec<(usize, usize)> {
        self.lanes
            .iter()
            .enumerate()
            .flat_map(|(o, ds)| ds.iter().map(move |&d| (o, d)))
            .collect()
    }

    pub fn port_index(&self, name: &str) -> Option<usize> {
        self.ports.iter().position(|p| p.name == name)
    }
}

/// Cruising speed in knots for a ship type code.
pub fn base_speed(ship_type: u32) -> f64 {
    match ship_type {
        60..=69 => 20.0,
        70..=79 => 15.0,
        80..=89 => 12.0,
        _ => 10.0,
    }
}

/// Destination guess from the departure port and the reported course: the
/// nearest port whose bearing from the departure port is within 5 degrees of
/// the course, else the port with the closest bearing.
pub fn bearing_oracle(world: &World, departure: &str, course: f64) -> Option<String> {
    let o = world.port_index(departure)?;
    let origin = pos(&world.ports[o]);
    let candidates: Vec<(usize, f64, f64)> = (0..world.ports.len())
        .filter(|&j| j != o)
        .map(|j| {
            let p = pos(&world.ports[j]);
            (j, angle_diff(bearing(origin, p), course), dist(origin, p))
        })
        .collect();
    let within = candidates
        .iter()
        .filter(|c| c.1 <= 5.0)
        .min_by(|a, b| a.2.total_cmp(&b.2));
    let best = within.or_else(|| candidates.iter().min_by(|a, b| a.1.total_cmp(&b.1)))?;
    Some(world.ports[best.0].name.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripParams {
    /// Per-report speed is `base * (1 + u)`, `u` uniform in `[-noise, noise]`.
    pub noise: f64,
    /// Maximum position offset per coordinate, degrees.
    pub position_jitter: f64,
    /// Maximum course offset, degrees.
    pub course_jitter: f64,
    /// Seconds between reports.
    pub report_interval: i64,
    /// Probability that a report carries the draught.
    pub draught_rate: f64,
}

impl Default for TripParams {
    fn default() -> Self {
        TripParams {
            noise: 0.1,
            position_jitter: 0.01,
            course_jitter: 2.0,
            report_interval: 300,
            draught_rate: 0.4,
        }
    }
}

/// Identity of one voyage.
#[derive(Debug, Clone, PartialEq)]
pub struct Voyage {
    pub ship_id: String,
    pub ship_type: u32,
    pub trip_id: String,
    pub origin: usize,
    pub dest: usize,
    pub base_speed: f64,
    pub start_time: i64,
    pub draught: f64,
}

/// Samples a straight-line voyage every `report_interval` seconds. The last
/// record sits at the destination and is stamped with the arrival time.
pub fn generate_trip(world: &World, voyage: &Voyage, params: &TripParams, seed: u64) -> Result<Trip> {
    if !(voyage.base_speed > 0.0) {
        return Err(Error::Config("base speed must be positive".into()));
    }
    if voyage.origin == voyage.dest {
        return Err(Error::Config("origin and destination coincide".into()));
    }
    if params.report_interval <= 0 {
        return Err(Error::Config("report interval must be positive".into()));
    }
    let (o, d) = (&world.ports[voyage.origin], &world.ports[voyage.dest]);
    let (from, to) = (pos(o), pos(d));
    let length = dist(from, to);
    let heading = bearing(from, to);
    let dir = [(to[0] - from[0]) / length, (to[1] - from[1]) / length];
    let mut r = rng::seeded(seed);

    let mut points: Vec<(i64, f64, f64)> = Vec::new(); // (timestamp, travelled, speed)
    let mut t = voyage.start_time;
    let mut travelled = 0.0;
    let arrival = loop {
        let u = if params.noise > 0.0 {
            r.random_range(-params.noise..=params.noise)
        } else {
            0.0
        };
        let speed = voyage.base_speed * (1.0 + u);
        points.push((t, travelled, speed));
        // One knot is one arc-minute of latitude per hour.
        let deg_per_sec = speed / 60.0 / 3600.0;
        let step = deg_per_sec * params.report_interval as f64;
        if travelled + step >= length {
            let secs = ((length - travelled) / deg_per_sec).ceil() as i64;
            break t + secs.max(1);
        }
        travelled += step;
        t += params.report_interval;
    };
    let last_speed = points.last().map_or(voyage.base_speed, |p| p.2);
    points.push((arrival, length, last_speed));

    let jitter = |r: &mut rng::Rng, amount: f64| {
        if amount > 0.0 {
            r.random_range(-amount..=amount)
        } else {
            0.0
        }
    };
    let records = points
        .into_iter()
        .map(|(ts, s, speed)| {
            let lon = from[0] + dir[0] * s + jitter(&mut r, params.position_jitter);
            let lat = from[1] + dir[1] * s + jitter(&mut r, params.position_jitter);
            let mut course = round_to((heading + jitter(&mut r, params.course_jitter)).rem_euclid(360.0), 1);
            if course >= 360.0 {
                course -= 360.0;
            }
            let draught = (r.random::<f64>() < params.draught_rate).then_some(voyage.draught);
            AisRecord {
                ship_id: voyage.ship_id.clone(),
                ship_type: voyage.ship_type,
                speed: round_to(speed, 1),
                lon: round_to(lon, 5),
                lat: round_to(lat, 5),
                course,
                heading: course,
                timestamp: ts,
                departure_port: o.name.clone(),
                reported_draught: draught,
                arrival_time: Some(arrival),
                arrival_port: Some(d.name.clone()),
                trip_id: Some(voyage.trip_id.clone()),
            }
        })
        .collect();
    Ok(Trip {
        trip_id: voyage.trip_id.clone(),
        ship_id: voyage.ship_id.clone(),
        records,
        arrival_port: d.name.clone(),
        arrival_time: arrival,
    })
}

/// Optional corruption, applied per trip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultRates {
    /// Probability of appending one report stamped after arrival.
    pub late: f64,
    /// Probability of appending one report older than its predecessor.
    pub stale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub trip: TripParams,
    /// Probability that a trip follows one of the ship's two preferred routes.
    pub preference: f64,
    pub faults: FaultRates,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            trip: TripParams::default(),
            preference: 0.8,
            faults: FaultRates::default(),
        }
    }
}

/// Injected corruption, comparable to the cleaning report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultCounts {
    pub missing_draught: usize,
    pub late: usize,
    pub stale: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// File order: ship by ship, trip by trip, time-ordered apart from
    /// injected faults.
    pub records: Vec<AisRecord>,
    pub n_trips: usize,
    pub faults: FaultCounts,
}

/// `n_ships` ships with `trips_per_ship` consecutive voyages each. Every ship
/// has a type, a draught and two preferred lanes; a trip takes one of those
/// with probability `preference` and a detour lane otherwise.
///
/// Lanes are dealt round-robin from one seeded shuffle: ship `s` prefers
/// lanes `2s` and `2s + 1` and its detours walk on from `2s + 2`, so every
/// lane is sailed by several ships and a held-out ship rarely brings a lane
/// no other ship has used.
pub fn generate_corpus(
    world: &World,
    n_ships: usize,
    trips_per_ship: usize,
    params: &CorpusParams,
    seed: u64,
) -> Result<Corpus> {
    let mut routes = world.routes();
    if routes.is_empty() {
        return Err(Error::Config("world has no lanes".into()));
    }
    routes.shuffle(&mut rng::seeded(seed));
    let lane = |i: usize| routes[i % routes.len()];
    let per_ship: Vec<(Vec<AisRecord>, FaultCounts)> = (0..n_ships)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::seeded(rng::derive(seed, (s as u64) << 20));
            // Ships working the same pair of lanes belong to one fleet and
            // share a vessel type.
            let ship_type = SHIP_TYPES[(2 * s) % routes.len() % SHIP_TYPES.len()];
            let draught = round_to(r.random_range(4.0..14.0), 1);
            let preferred = [lane(2 * s), lane(2 * s + 1)];
            let mut detours = (2 * s + 2..).map(lane);
            let mut start = START_EPOCH + r.random_range(0..7 * 86_400);
            let mut records = Vec::new();
            let mut faults = FaultCounts::default();
            for k in 0..trips_per_ship {
                let (origin, dest) = if r.random::<f64>() < params.preference {
                    preferred[r.random_range(0..2)]
                } else {
                    detours.next().expect("endless")
                };
                let ship_id = format!("SHIP_{s:03}");
                let voyage = Voyage {
                    trip_id: format!("{ship_id}_T{k:02}"),
                    ship_id,
                    ship_type,
                    origin,
                    dest,
                    base_speed: base_speed(ship_type),
                    start_time: start,
                    draught,
                };
                let trip_seed = rng::derive(seed, ((s as u64) << 20) + k as u64 + 1);
                let trip = generate_trip(world, &voyage, &params.trip, trip_seed)?;
                let mut recs = trip.records;
                if r.random::<f64>() < params.faults.late {
                    let mut late = recs.last().expect("non-empty trip").clone();
                    late.timestamp = trip.arrival_time + r.random_range(60..3600);
                    recs.push(late);
                    faults.late += 1;
                }
                if recs.len() >= 2 && r.random::<f64>() < params.faults.stale {
                    let mut stale = recs[recs.len() / 2].clone();
                    stale.timestamp = recs[0].timestamp - r.random_range(60..3600);
                    recs.push(stale);
                    faults.stale += 1;
                }
                faults.missing_draught += recs
                    .iter()
                    .filter(|x| x.reported_draught.is_none())
                    .count();
                start = trip.arrival_time + r.random_range(2 * 3600..12 * 3600);
                records.extend(recs);
            }
            Ok((records, faults))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut faults = FaultCounts::default();
    for (recs, f) in per_ship {
        records.extend(recs);
        faults.missing_draught += f.missing_draught;
        faults.late += f.late;
        faults.stale += f.stale;
    }
    Ok(Corpus {
        records,
        n_trips: n_ships * trips_per_ship,
        faults,
    })
}

pub const AIS_FILE: &str = "ais.csv";
pub const PORTS_FILE: &str = "ports.csv";

/// Writes `ais.csv` and `ports.csv` into `dir`, creating it if needed.
pub fn write_corpus(dir: &Path, world: &World, corpus: &Corpus) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ais = dir.join(AIS_FILE);
    let f = File::create(&ais).map_err(|e| Error::io(&ais, e))?;
    ingest::write_csv(BufWriter::new(f), &corpus.records)?;
    let ports = dir.join(PORTS_FILE);
    let f = File::create(&ports).map_err(|e| Error::io(&ports, e))?;
    world.registry()?.write_csv(BufWriter::new(f))?;
    Ok(())
}
