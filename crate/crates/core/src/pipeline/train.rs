use std::collections::HashSet;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};

use super::{build_reg_features, duration_target, evaluate, Metrics, ModelBundle};
use crate::ensemble::{fit_voting_ensemble, grid_search, EnsembleConfig, GridScore, ParamGrid};
use crate::error::{Error, Result};
use crate::ingest::{clean, segment_trips, split_by_trip, DropReport, Split, Trip, TripSplit};
use crate::model::{AisRecord, ClassFeatures, PortRegistry, RegFeatures};
use crate::neural::{self, Scaler, TrainConfig, TrainReport};
use crate::trees::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub seed: u64,
    /// `None` skips the search and uses [`EnsembleConfig::default`].
    pub grid: Option<ParamGrid>,
    pub network: TrainConfig,
    pub hidden: Vec<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            seed: 0,
            grid: Some(ParamGrid::default()),
            network: TrainConfig::default(),
            hidden: neural::DEFAULT_HIDDEN.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub split: TripSplit,
    pub drops: DropReport,
    pub ensemble_config: EnsembleConfig,
    pub grid_scores: Vec<GridScore>,
    pub network_report: TrainReport,
    /// Scores on the validation trips, which play no part in fitting or
    /// model selection.
    pub validation: Metrics,
    /// Cleaned records per split, in file order.
    pub records: [Vec<AisRecord>; 3],
    /// Wall time of the grid search plus the ensemble fit.
    pub ensemble_time: Duration,
    /// Wall time of scaling and network training.
    pub network_time: Duration,
}

fn split_records(trips: &[Trip], split: &TripSplit) -> [Vec<AisRecord>; 3] {
    let mut out: [Vec<AisRecord>; 3] = Default::default();
    for (i, s) in Split::ALL.into_iter().enumerate() {
        let ids: HashSet<&str> = split.ids(s).iter().map(String::as_str).collect();
        out[i] = trips
            .iter()
            .filter(|t| ids.contains(t.trip_id.as_str()))
            .flat_map(|t| t.records.iter().cloned())
            .collect();
    }
    out
}

fn label(record: &AisRecord, registry: &PortRegistry) -> Result<u32> {
    let name = record.arrival_port.as_deref().unwrap_or_default();
    let code = registry.encode(name);
    u32::try_from(code).map_err(|_| Error::Registry(format!("arrival port {name:?} is not in the registry")))
}

fn class_set(records: &[AisRecord], registry: &PortRegistry) -> Result<(Matrix, Vec<u32>)> {
    let mut data = Vec::with_capacity(records.len() * ClassFeatures::LEN);
    let mut y = Vec::with_capacity(records.len());
    for r in records {
        data.extend_from_slice(ClassFeatures::from_record(r, registry).as_slice());
        y.push(label(r, registry)?);
    }
    Ok((Matrix::new(data, ClassFeatures::LEN)?, y))
}

/// Regression rows use the true destination; only prediction uses the
/// ensemble's guess.
fn reg_set(records: &[AisRecord], registry: &PortRegistry) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut data = Vec::with_capacity(records.len() * RegFeatures::LEN);
    let mut y = Vec::with_capacity(records.len());
    for r in records {
        let code = label(r, registry)? as i64;
        data.extend_from_slice(build_reg_features(r, code, registry)?.as_slice());
        y.push(duration_target(r)?);
    }
    let x = Array2::from_shape_vec((records.len(), RegFeatures::LEN), data)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((x, Array1::from(y)))
}

/// Clean, segment and split the labeled records; fit the ensemble (after an
/// optional grid search scored on the test trips), the scaler and the
/// network (early-stopped on the test trips); score the validation trips.
pub fn train(records: Vec<AisRecord>, registry: PortRegistry, options: &TrainOptions) -> Result<TrainOutcome> {
    let (cleaned, drops) = clean(records);
    if cleaned.is_empty() {
        return Err(Error::InvalidInput("no records left after cleaning".into()));
    }
    let trips = segment_trips(cleaned)?;
    let split = split_by_trip(&trips, options.seed)?;
    let records = split_records(&trips, &split);
    let [train_recs, test_recs, val_recs] = &records;

    let (x_train, y_train) = class_set(train_recs, &registry)?;
    let (x_test, y_test) = class_set(test_recs, &registry)?;

    let started = Instant::now();
    let (ensemble_config, grid_scores) = match &options.grid {
        Some(grid) => {
            let res = grid_search(grid, (&x_train, &y_train), (&x_test, &y_test), options.seed)?;
            (res.best, res.scores)
        }
        None => (
            EnsembleConfig {
                seed: options.seed,
                ..EnsembleConfig::default()
            },
            Vec::new(),
        ),
    };
    let ensemble = fit_voting_ensemble(&x_train, &y_train, &ensemble_config)?;
    let ensemble_time = started.elapsed();

    let started = Instant::now();

    let (rx_train, ry_train) = reg_set(train_recs, &registry)?;
    let (rx_test, ry_test) = reg_set(test_recs, &registry)?;
    let scaler = Scaler::fit(rx_train.view())?;
    let sx_train = scaler.apply_rows(rx_train.view())?;
    let sx_test = scaler.apply_rows(rx_test.view())?;

    let mut sizes = vec![RegFeatures::LEN];
    sizes.extend(&options.hidden);
    sizes.push(1);
    let net = neural::init_network(&sizes, options.seed)?;
    let net_config = TrainConfig {
        seed: options.seed,
        ..options.network.clone()
    };
    let (network, network_report) = neural::fit(
        net,
        sx_train.view(),
        ry_train.view(),
        sx_test.view(),
        ry_test.view(),
        &net_config,
    )?;

    let network_time = started.elapsed();

    let bundle = ModelBundle::new(registry, ensemble, scaler, network);
    let validation = evaluate(&bundle, val_recs)?;
    Ok(TrainOutcome {
        bundle,
        split,
        drops,
        ensemble_config,
        grid_scores,
        network_report,
        validation,
        records,
        ensemble_time,
        network_time,
    })
}
