//! Phase segmentation and the twelve trust-dynamics features.
//!
//! A drive splits into a trust-building phase (every intersection before the
//! first failure), error-awareness events (the low-reliability
//! intersections) and a trust-repair phase (high-reliability intersections
//! after the first failure).

use nalgebra::DMatrix;
use thiserror::Error;

use crate::data::{Catalog, Dataset, DriveConfig, DriveType, Level, ParticipantRecord};

pub const N_FEATURES: usize = 12;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "initial_trust",
    "build_rate",
    "build_avg_ped",
    "build_avg_noped",
    "build_avg_takeover",
    "build_avg_notakeover",
    "error_rate",
    "repair_rate",
    "repair_avg_ped",
    "repair_avg_noped",
    "repair_avg_takeover",
    "repair_avg_notakeover",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("drive {0} has no low-reliability intersection")]
    NoLowReliability(DriveType),
    #[error("participant {participant_id}: {source}")]
    Participant {
        participant_id: String,
        #[source]
        source: Box<FeatureError>,
    },
    #[error("no participants to extract features from")]
    EmptyResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseSegmentation {
    pub building: Vec<usize>,
    pub error_events: Vec<usize>,
    pub repair: Vec<usize>,
}

impl PhaseSegmentation {
    /// Maximal runs of consecutive repair intersections.
    pub fn repair_runs(&self) -> Vec<Vec<usize>> {
        let mut runs: Vec<Vec<usize>> = Vec::new();
        for &i in &self.repair {
            match runs.last_mut() {
                Some(run) if *run.last().unwrap() + 1 == i => run.push(i),
                _ => runs.push(vec![i]),
            }
        }
        runs
    }
}

pub fn segment_phases(config: &DriveConfig) -> Result<PhaseSegmentation, FeatureError> {
    let error_events = config.low_reliability_indices();
    let first_low = *error_events
        .first()
        .ok_or(FeatureError::NoLowReliability(config.drive_type))?;
    let building = (1..first_low).collect();
    let repair = config
        .intersections
        .iter()
        .filter(|c| c.index > first_low && c.reliability == Level::High)
        .map(|c| c.index)
        .collect();
    Ok(PhaseSegmentation {
        building,
        error_events,
        repair,
    })
}

/// Ordinary least-squares slope of `ys` against `xs`; 0 with fewer than two
/// points.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustFeatureVector(pub [f64; N_FEATURES]);

impl TrustFeatureVector {
    pub fn initial_trust(&self) -> f64 {
        self.0[0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Conditional averages of one phase: pedestrian present/absent and
/// take-over yes/no. An empty condition takes the phase mean.
fn phase_averages(
    indices: &[usize],
    trust: &[f64],
    takeover: &[bool],
    config: &DriveConfig,
    fallback: f64,
) -> [f64; 4] {
    let values = |pred: &dyn Fn(usize) -> bool| -> Vec<f64> {
        indices
            .iter()
            .copied()
            .filter(|&i| pred(i))
            .map(|i| trust[i - 1])
            .collect()
    };
    let all = values(&|_| true);
    let phase_mean = mean(&all).unwrap_or(fallback);
    let ped = |i: usize| config.intersection(i).pedestrian;
    let tko = |i: usize| takeover[i - 1];
    [
        mean(&values(&ped)).unwrap_or(phase_mean),
        mean(&values(&|i| !ped(i))).unwrap_or(phase_mean),
        mean(&values(&tko)).unwrap_or(phase_mean),
        mean(&values(&|i| !tko(i))).unwrap_or(phase_mean),
    ]
}

pub fn extract_features(
    record: &ParticipantRecord,
    config: &DriveConfig,
) -> Result<TrustFeatureVector, FeatureError> {
    let seg = segment_phases(config)?;
    let trust = record.trust();
    let takeover = record.takeovers();
    let at = |i: usize| trust[i - 1];
    // Fallback for a phase with no intersections at all (only possible with
    // overridden drive configurations).
    let overall = mean(&trust).unwrap_or(0.0);

    let initial = at(1);

    let build_x: Vec<f64> = seg.building.iter().map(|&i| i as f64).collect();
    let build_y: Vec<f64> = seg.building.iter().map(|&i| at(i)).collect();
    let build_rate = ols_slope(&build_x, &build_y);

    let drops: Vec<f64> = seg
        .error_events
        .iter()
        .map(|&i| at(i) - at(if i > 1 { i - 1 } else { 1 }))
        .collect();
    let error_rate = mean(&drops).unwrap_or(0.0);

    let mut weighted = 0.0;
    let mut total = 0usize;
    for run in seg.repair_runs() {
        let rate = if run.len() == 1 {
            let i = run[0];
            // a repair run always follows a low-reliability intersection
            at(i) - at(i - 1)
        } else {
            let x: Vec<f64> = run.iter().map(|&i| i as f64).collect();
            let y: Vec<f64> = run.iter().map(|&i| at(i)).collect();
            ols_slope(&x, &y)
        };
        weighted += rate * run.len() as f64;
        total += run.len();
    }
    let repair_rate = if total == 0 { 0.0 } else { weighted / total as f64 };

    let b = phase_averages(&seg.building, &trust, &takeover, config, overall);
    let r = phase_averages(&seg.repair, &trust, &takeover, config, overall);

    Ok(TrustFeatureVector([
        initial,
        build_rate,
        b[0],
        b[1],
        b[2],
        b[3],
        error_rate,
        repair_rate,
        r[0],
        r[1],
        r[2],
        r[3],
    ]))
}

/// Feature rows aligned with the participant order of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub values: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// Rows at the given positions, in that order.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            values: self.values.select_rows(rows),
        }
    }

    /// Comma-separated export: `participant_id` followed by the feature
    /// names.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec!["participant_id"];
        header.extend(FEATURE_NAMES);
        w.write_record(&header).expect("in-memory write");
        for (i, id) in self.ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
    }
}

pub fn feature_matrix(d: &Dataset, catalog: &Catalog) -> Result<FeatureMatrix, FeatureError> {
    if d.is_empty() {
        return Err(FeatureError::EmptyResult);
    }
    let mut values = DMatrix::zeros(d.len(), N_FEATURES);
    for (i, p) in d.participants.iter().enumerate() {
        let f = extract_features(p, catalog.get(p.drive_type)).map_err(|e| {
            FeatureError::Participant {
                participant_id: p.participant_id.clone(),
                source: Box::new(e),
            }
        })?;
        for (j, v) in f.0.iter().enumerate() {
            values[(i, j)] = *v;
        }
    }
    Ok(FeatureMatrix {
        ids: d.ids().into_iter().map(String::from).collect(),
        values,
    })
}
