//! Feature engineering, the per-tuple prediction chain (port, then ETA), and
//! evaluation metrics.

mod bundle;
mod train;

pub use bundle::{ModelBundle, BUNDLE_FILE, BUNDLE_VERSION, VERSION_FILE};
pub use train::{train, TrainOptions, TrainOutcome};

use std::fmt;
use std::io::Write;

use chrono::{DateTime, Datelike, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::clean_single;
use crate::model::{AisRecord, ClassFeatures, PortRegistry, Prediction, RegFeatures};
use crate::neural::predict_duration;

/// Tolerances, in minutes, reported by [`Metrics::eta_within`].
pub const ETA_TOLERANCES: [f64; 4] = [5.0, 10.0, 20.0, 60.0];

/// Minutes from the report to arrival.
pub fn duration_target(record: &AisRecord) -> Result<f64> {
    let arrival = record
        .arrival_time
        .ok_or_else(|| Error::InvalidInput(format!("record of {} has no ARRIVAL_TIME", record.ship_id)))?;
    Ok((arrival - record.timestamp) as f64 / 60.0)
}

/// UTC `(hour_of_day, day_of_week, iso_week)`; Monday is day 0.
pub fn time_features(timestamp: i64) -> (u32, u32, u32) {
    let t = DateTime::from_timestamp(timestamp, 0).unwrap_or_default();
    (t.hour(), t.weekday().num_days_from_monday(), t.iso_week().week())
}

/// Classification features of `record`, then the destination code and
/// coordinates, then the time features.
pub fn build_reg_features(record: &AisRecord, port_code: i64, registry: &PortRegistry) -> Result<RegFeatures> {
    let port = registry.port(port_code)?;
    let class = ClassFeatures::from_record(record, registry);
    let (hour, dow, week) = time_features(record.timestamp);
    let mut out = [0.0; RegFeatures::LEN];
    out[..ClassFeatures::LEN].copy_from_slice(class.as_slice());
    out[8] = port_code as f64;
    out[9] = port.lon;
    out[10] = port.lat;
    out[11] = hour as f64;
    out[12] = dow as f64;
    out[13] = week as f64;
    Ok(RegFeatures(out))
}

/// Predicts the destination with the ensemble, then the remaining minutes
/// with the network fed that predicted destination.
pub fn predict_tuple(bundle: &ModelBundle, record: &AisRecord) -> Result<Prediction> {
    let rec = clean_single(record);
    let class = ClassFeatures::from_record(&rec, &bundle.registry);
    let code = bundle.ensemble.predict(class.as_slice());
    let features = build_reg_features(&rec, code as i64, &bundle.registry)?;
    let delta = predict_duration(&bundle.network, &bundle.scaler, &features)?;
    let name = bundle.registry.decode(code as i64)?.to_string();
    Ok(Prediction::new(name, delta, rec.timestamp))
}

/// [`predict_tuple`] over many records, in parallel, in input order.
pub fn predict_all(bundle: &ModelBundle, records: &[AisRecord]) -> Result<Vec<Prediction>> {
    records.par_iter().map(|r| predict_tuple(bundle, r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub port_correct: usize,
    pub port_accuracy: f64,
    /// Mean absolute ETA error, minutes.
    pub eta_mae: f64,
    /// `(tolerance_minutes, fraction with |error| <= tolerance)`.
    pub eta_within: Vec<(f64, f64)>,
}

impl Metrics {
    /// Scores predictions against the labels of the matching records.
    pub fn from_predictions(predictions: &[Prediction], records: &[AisRecord], tolerances: &[f64]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("nothing to evaluate".into()));
        }
        if predictions.len() != records.len() {
            return Err(Error::DimensionMismatch {
                expected: records.len(),
                actual: predictions.len(),
            });
        }
        let mut port_correct = 0;
        let mut errors = Vec::with_capacity(records.len());
        for (p, r) in predictions.iter().zip(records) {
            let (Some(port), Some(arrival)) = (&r.arrival_port, r.arrival_time) else {
                return Err(Error::InvalidInput(format!(
                    "record of {} at {} is unlabeled",
                    r.ship_id, r.timestamp
                )));
            };
            port_correct += (p.port_name == *port) as usize;
            errors.push((p.eta - arrival).abs() as f64 / 60.0);
        }
        let n = records.len() as f64;
        let eta_within = tolerances
            .iter()
            .map(|&t| (t, errors.iter().filter(|&&e| e <= t).count() as f64 / n))
            .collect();
        Ok(Metrics {
            count: records.len(),
            port_correct,
            port_accuracy: port_correct as f64 / n,
            eta_mae: errors.iter().sum::<f64>() / n,
            eta_within,
        })
    }

    pub fn within(&self, tolerance: f64) -> Option<f64> {
        self.eta_within.iter().find(|(t, _)| *t == tolerance).map(|(_, f)| *f)
    }

    /// `metric,value` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "value"])?;
        w.write_record(["count", &self.count.to_string()])?;
        w.write_record(["port_accuracy", &self.port_accuracy.to_string()])?;
        w.write_record(["eta_mae_minutes", &self.eta_mae.to_string()])?;
        for (t, f) in &self.eta_within {
            w.write_record([format!("eta_within_{t}"), f.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("metrics", e))?;
        Ok(())
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tuples:          {}", self.count)?;
        writeln!(f, "port accuracy:   {:.4} ({}/{})", self.port_accuracy, self.port_correct, self.count)?;
        writeln!(f, "ETA MAE:         {:.2} min", self.eta_mae)?;
        for (t, frac) in &self.eta_within {
            writeln!(f, "ETA within {t:>3} min: {frac:.4}")?;
        }
        Ok(())
    }
}

/// Predicts every record and scores the result.
pub fn evaluate(bundle: &ModelBundle, records: &[AisRecord]) -> Result<Metrics> {
    if records.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }
    let predictions = predict_all(bundle, records)?;
    Metrics::from_predictions(&predictions, records, &ETA_TOLERANCES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Port;

    fn record(ts: i64) -> AisRecord {
        AisRecord {
            ship_id: "S".into(),
            ship_type: 70,
            speed: 12.0,
            lon: 14.0,
            lat: 35.0,
            course: 90.0,
            heading: 90.0,
            timestamp: ts,
            departure_port: "B".into(),
            reported_draught: Some(6.0),
            arrival_time: Some(ts + 5400),
            arrival_port: Some("C".into()),
            trip_id: Some("T".into()),
        }
    }

    fn registry() -> PortRegistry {
        PortRegistry::new(vec![
            Port { name: "A".into(), lon: 10.0, lat: 30.0 },
            Port { name: "B".into(), lon: 12.0, lat: 31.0 },
            Port { name: "C".into(), lon: 14.5, lat: 35.9 },
        ])
        .unwrap()
    }

    #[test]
    fn duration_in_minutes() {
        let mut r = record(1000);
        assert_eq!(duration_target(&r).unwrap(), 90.0);
        r.arrival_time = Some(1000);
        assert_eq!(duration_target(&r).unwrap(), 0.0);
        r.arrival_time = Some(1090);
        assert_eq!(duration_target(&r).unwrap(), 1.5);
        r.arrival_time = None;
        assert!(duration_target(&r).is_err());
    }

    #[test]
    fn calendar_features() {
        assert_eq!(time_features(0), (0, 3, 1));
        assert_eq!(time_features(86_399).0, 23);
        for ts in [0, 1_425_168_000, 1_700_000_123] {
            assert_eq!(time_features(ts).1, time_features(ts + 7 * 86_400).1);
        }
        // 2015-03-01 is a Sunday in ISO week 9.
        assert_eq!(time_features(1_425_168_000), (0, 6, 9));
    }

    #[test]
    fn reg_features_splice() {
        let reg = registry();
        let r = record(1_425_168_000);
        let f = build_reg_features(&r, 2, &reg).unwrap();
        assert_eq!(&f.0[8..11], &[2.0, 14.5, 35.9]);
        let g = build_reg_features(&r, 0, &reg).unwrap();
        for i in 0..RegFeatures::LEN {
            if !(8..11).contains(&i) {
                assert_eq!(f.0[i], g.0[i]);
            }
        }
        assert_eq!(&f.0[..8], ClassFeatures::from_record(&r, &reg).as_slice());
        assert!(build_reg_features(&r, 3, &reg).is_err());
        assert!(build_reg_features(&r, -1, &reg).is_err());
    }

    fn prediction_for(r: &AisRecord, port: &str, bias_secs: i64) -> Prediction {
        let delta = (r.arrival_time.unwrap() + bias_secs - r.timestamp) as f64 / 60.0;
        Prediction::new(port.into(), delta, r.timestamp)
    }

    #[test]
    fn metric_examples() {
        let records: Vec<AisRecord> = (0..4).map(|i| record(1000 + i * 60)).collect();
        let exact: Vec<Prediction> = records.iter().map(|r| prediction_for(r, "C", 0)).collect();
        let m = Metrics::from_predictions(&exact, &records, &ETA_TOLERANCES).unwrap();
        assert_eq!((m.port_accuracy, m.eta_mae), (1.0, 0.0));

        let mut one_wrong = exact.clone();
        one_wrong[2].port_name = "A".into();
        let m = Metrics::from_predictions(&one_wrong, &records, &ETA_TOLERANCES).unwrap();
        assert_eq!(m.port_accuracy, 0.75);

        let biased: Vec<Prediction> = records.iter().map(|r| prediction_for(r, "C", 600)).collect();
        let m = Metrics::from_predictions(&biased, &records, &ETA_TOLERANCES).unwrap();
        assert_eq!(m.eta_mae, 10.0);
        assert_eq!(m.within(5.0), Some(0.0));
        assert_eq!(m.within(10.0), Some(1.0));
        let fracs: Vec<f64> = m.eta_within.iter().map(|w| w.1).collect();
        assert!(fracs.windows(2).all(|w| w[0] <= w[1]));

        assert!(Metrics::from_predictions(&[], &[], &ETA_TOLERANCES).is_err());
        let mut unlabeled = records.clone();
        unlabeled[0].arrival_port = None;
        assert!(Metrics::from_predictions(&exact, &unlabeled, &ETA_TOLERANCES).is_err());
    }

    #[test]
    fn metrics_csv_lists_every_tolerance() {
        let records = vec![record(1000)];
        let m = Metrics::from_predictions(&[prediction_for(&records[0], "C", 0)], &records, &ETA_TOLERANCES).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for t in ["eta_within_5,", "eta_within_10,", "eta_within_20,", "eta_within_60,"] {
            assert!(text.contains(t), "{text}");
        }
    }
}
