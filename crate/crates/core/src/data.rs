//! Study structure and participant datasets.
//!
//! The built-in catalog encodes the eight drive types of the online study:
//! drive-level visibility, transparency and overall reliability, plus the
//! per-intersection low-reliability (`X`) and pedestrian (`P`) flags.
//! Datasets are read from and written to two comma-separated files, one
//! row per participant and one row per (participant, intersection) event.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of intersections in every drive.
pub const N_INTERSECTIONS: usize = 10;

/// Inclusive bounds of the trust self-report scale.
pub const TRUST_MIN: f64 = 0.0;
pub const TRUST_MAX: f64 = 100.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file} line {line}: malformed row: {reason}")]
    MalformedRow {
        file: &'static str,
        line: usize,
        reason: String,
    },
    #[error("unknown drive type {0:?}")]
    UnknownDriveType(String),
    #[error("participant {participant_id}: expected {expected} events, found {found}")]
    MissingIntersection {
        participant_id: String,
        expected: usize,
        found: usize,
    },
    #[error("participant {participant_id}: trust {value} at intersection {intersection} outside [0, 100]")]
    OutOfRangeTrust {
        participant_id: String,
        intersection: usize,
        value: f64,
    },
    #[error("duplicate participant id {0:?}")]
    DuplicateParticipant(String),
    #[error("events reference unknown participant {0:?}")]
    UnknownParticipant(String),
    #[error("participant {participant_id}: invalid field {field}: {reason}")]
    InvalidField {
        participant_id: String,
        field: &'static str,
        reason: String,
    },
    #[error("invalid drive configuration for {drive}: {reason}")]
    InvalidDriveConfig { drive: DriveType, reason: String },
    #[error("no participants remain after filtering")]
    EmptyResult,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DriveType {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl DriveType {
    pub const ALL: [DriveType; 8] = [
        DriveType::A,
        DriveType::B,
        DriveType::C,
        DriveType::D,
        DriveType::E,
        DriveType::F,
        DriveType::G,
        DriveType::H,
    ];

    /// Drive types whose participants all meet a failure before the last
    /// intersection of the drive.
    pub const ANALYZABLE: [DriveType; 5] = [
        DriveType::B,
        DriveType::C,
        DriveType::D,
        DriveType::G,
        DriveType::H,
    ];

    pub fn is_analyzable(self) -> bool {
        Self::ANALYZABLE.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DriveType::A => "A",
            DriveType::B => "B",
            DriveType::C => "C",
            DriveType::D => "D",
            DriveType::E => "E",
            DriveType::F => "F",
            DriveType::G => "G",
            DriveType::H => "H",
        }
    }
}

impl fmt::Display for DriveType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DriveType {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DriveType::ALL
            .iter()
            .copied()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DataError::UnknownDriveType(s.to_string()))
    }
}

/// Two-level factor used for visibility, transparency and per-intersection
/// reliability. `High` encodes as 1 in model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    High,
    Low,
}

impl Level {
    pub fn indicator(self) -> f64 {
        match self {
            Level::High => 1.0,
            Level::Low => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntersectionConfig {
    /// 1-based position within the drive.
    pub index: usize,
    pub reliability: Level,
    pub pedestrian: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub drive_type: DriveType,
    pub visibility: Level,
    pub transparency: Level,
    /// Percentage of high-reliability intersections.
    pub overall_reliability: u8,
    pub intersections: Vec<IntersectionConfig>,
}

impl DriveConfig {
    /// Indices (1-based, ascending) of low-reliability intersections.
    pub fn low_reliability_indices(&self) -> Vec<usize> {
        self.intersections
            .iter()
            .filter(|c| c.reliability == Level::Low)
            .map(|c| c.index)
            .collect()
    }

    pub fn pedestrian_indices(&self) -> Vec<usize> {
        self.intersections
            .iter()
            .filter(|c| c.pedestrian)
            .map(|c| c.index)
            .collect()
    }

    /// Configuration of the 1-based intersection `index`.
    pub fn intersection(&self, index: usize) -> &IntersectionConfig {
        &self.intersections[index - 1]
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |reason: String| DataError::InvalidDriveConfig {
            drive: self.drive_type,
            reason,
        };
        if self.intersections.len() != N_INTERSECTIONS {
            return Err(bad(format!(
                "expected {N_INTERSECTIONS} intersections, found {}",
                self.intersections.len()
            )));
        }
        for (pos, c) in self.intersections.iter().enumerate() {
            if c.index != pos + 1 {
                return Err(bad(format!(
                    "intersection at position {} has index {}",
                    pos + 1,
                    c.index
                )));
            }
        }
        if self.overall_reliability > 100 || !self.overall_reliability.is_multiple_of(10) {
            return Err(bad(format!(
                "overall reliability {} is not a multiple of 10 in [0, 100]",
                self.overall_reliability
            )));
        }
        let expected_low = (100 - self.overall_reliability as usize) / 10;
        let low = self.low_reliability_indices().len();
        if low != expected_low {
            return Err(bad(format!(
                "{low} low-reliability intersections but overall reliability {}%",
                self.overall_reliability
            )));
        }
        Ok(())
    }
}

/// One row of the event table: `(low reliability, pedestrian)` per
/// intersection 1..=10.
type EventRow = [(bool, bool); N_INTERSECTIONS];

const O: (bool, bool) = (false, false);
const P: (bool, bool) = (false, true);
const X: (bool, bool) = (true, false);
const XP: (bool, bool) = (true, true);

const EVENT_TABLE: [(DriveType, Level, Level, u8, EventRow); 8] = [
    (DriveType::A, Level::High, Level::High, 100, [O, P, O, O, P, O, P, P, P, O]),
    (DriveType::B, Level::High, Level::High, 80, [O, P, O, P, XP, P, O, X, P, O]),
    (DriveType::C, Level::Low, Level::High, 80, [O, P, O, O, XP, P, P, P, X, O]),
    (DriveType::D, Level::Low, Level::High, 60, [O, O, X, XP, XP, O, P, O, P, XP]),
    (DriveType::E, Level::High, Level::Low, 100, [O, O, O, O, P, O, P, P, P, P]),
    (DriveType::F, Level::High, Level::Low, 80, [P, O, P, P, O, O, P, P, X, X]),
    (DriveType::G, Level::Low, Level::Low, 80, [P, O, O, O, O, XP, P, P, O, XP]),
    (DriveType::H, Level::Low, Level::Low, 60, [P, P, O, X, P, X, P, X, XP, O]),
];

/// The eight drive configurations of the study, keyed by drive type.
pub fn builtin_catalog() -> BTreeMap<DriveType, DriveConfig> {
    EVENT_TABLE
        .iter()
        .map(|&(drive_type, visibility, transparency, overall_reliability, row)| {
            let intersections = row
                .iter()
                .enumerate()
                .map(|(i, &(low, pedestrian))| IntersectionConfig {
                    index: i + 1,
                    reliability: if low { Level::Low } else { Level::High },
                    pedestrian,
                })
                .collect();
            (
                drive_type,
                DriveConfig {
                    drive_type,
                    visibility,
                    transparency,
                    overall_reliability,
                    intersections,
                },
            )
        })
        .collect()
}

/// Drive configurations used for validation and modeling. Starts from the
/// built-in study table; individual drives may be overridden for synthetic
/// regimes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    drives: BTreeMap<DriveType, DriveConfig>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Catalog {
    pub fn builtin() -> Self {
        Catalog {
            drives: builtin_catalog(),
        }
    }

    /// Replaces the configuration of one drive type after validating it.
    pub fn with_override(mut self, config: DriveConfig) -> Result<Self, DataError> {
        config.validate()?;
        self.drives.insert(config.drive_type, config);
        Ok(self)
    }

    pub fn get(&self, drive: DriveType) -> &DriveConfig {
        // Every drive type is present: built-in entries are only replaced.
        &self.drives[&drive]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DriveConfig> {
        self.drives.values()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
    Other,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
            Gender::Other => "Other",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Some(Gender::Male),
            "female" | "f" => Some(Gender::Female),
            "other" | "unknown" | "" => Some(Gender::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DrivingStyle {
    Aggressive,
    Conservative,
}

impl DrivingStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            DrivingStyle::Aggressive => "Aggressive",
            DrivingStyle::Conservative => "Conservative",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aggressive" => Some(DrivingStyle::Aggressive),
            "conservative" => Some(DrivingStyle::Conservative),
            _ => None,
        }
    }
}

/// Trust archetype of a participant: ground truth for synthetic data and
/// the name given to a discovered cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Archetype {
    Confident,
    Skeptical,
}

impl Archetype {
    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Confident => "Confident",
            Archetype::Skeptical => "Skeptical",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "confident" => Some(Archetype::Confident),
            "skeptical" => Some(Archetype::Skeptical),
            _ => None,
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventObservation {
    pub intersection_index: usize,
    /// Self-reported trust on the 0–100 scale.
    pub trust_report: f64,
    pub takeover: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant_id: String,
    pub drive_type: DriveType,
    pub age: u32,
    pub gender: Gender,
    pub driving_style: DrivingStyle,
    /// Prior automation experience, 1..=7.
    pub prior_experience_score: u8,
    /// Ordered by intersection, exactly [`N_INTERSECTIONS`] entries.
    pub events: Vec<EventObservation>,
    pub ground_truth_cluster: Option<Archetype>,
}

impl ParticipantRecord {
    /// Trust reports in intersection order.
    pub fn trust(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.trust_report).collect()
    }

    pub fn takeovers(&self) -> Vec<bool> {
        self.events.iter().map(|e| e.takeover).collect()
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<(), DataError> {
        let id = || self.participant_id.clone();
        let invalid = |field: &'static str, reason: String| DataError::InvalidField {
            participant_id: id(),
            field,
            reason,
        };
        if self.participant_id.trim().is_empty() {
            return Err(invalid("participant_id", "empty".into()));
        }
        if self.age < 18 {
            return Err(invalid("age", format!("{} is below 18", self.age)));
        }
        if !(1..=7).contains(&self.prior_experience_score) {
            return Err(invalid(
                "prior_experience",
                format!("{} outside 1..=7", self.prior_experience_score),
            ));
        }
        let config = catalog.get(self.drive_type);
        if self.events.len() != config.intersections.len() {
            return Err(DataError::MissingIntersection {
                participant_id: id(),
                expected: config.intersections.len(),
                found: self.events.len(),
            });
        }
        for (event, ic) in self.events.iter().zip(&config.intersections) {
            if event.intersection_index != ic.index {
                return Err(invalid(
                    "intersection",
                    format!(
                        "expected intersection {}, found {}",
                        ic.index, event.intersection_index
                    ),
                ));
            }
            if !(TRUST_MIN..=TRUST_MAX).contains(&event.trust_report) {
                return Err(DataError::OutOfRangeTrust {
                    participant_id: id(),
                    intersection: event.intersection_index,
                    value: event.trust_report,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic,
    Ingested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub participants: Vec<ParticipantRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset after validating every record and id uniqueness.
    pub fn new(
        participants: Vec<ParticipantRecord>,
        provenance: Provenance,
        catalog: &Catalog,
    ) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for p in &participants {
            if !seen.insert(p.participant_id.as_str()) {
                return Err(DataError::DuplicateParticipant(p.participant_id.clone()));
            }
            p.validate(catalog)?;
        }
        Ok(Dataset {
            participants,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.participants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.participants
            .iter()
            .map(|p| p.participant_id.as_str())
            .collect()
    }

    /// Subset of participants at the given row positions, in that order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            participants: rows.iter().map(|&i| self.participants[i].clone()).collect(),
            provenance: self.provenance,
        }
    }
}

/// Drops participants of drive types without an early failure (A, E, F).
pub fn filter_analyzable(d: &Dataset) -> Result<Dataset, DataError> {
    let participants: Vec<_> = d
        .participants
        .iter()
        .filter(|p| p.drive_type.is_analyzable())
        .cloned()
        .collect();
    if participants.is_empty() {
        return Err(DataError::EmptyResult);
    }
    Ok(Dataset {
        participants,
        provenance: d.provenance,
    })
}

pub const PARTICIPANTS_HEADER: [&str; 7] = [
    "participant_id",
    "drive_type",
    "age",
    "gender",
    "driving_style",
    "prior_experience",
    "ground_truth_cluster",
];

pub const EVENTS_HEADER: [&str; 4] = ["participant_id", "intersection", "trust", "takeover"];

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_header(
    file: &'static str,
    rdr: &mut csv::Reader<&[u8]>,
    expected: &[&str],
    optional_tail: usize,
) -> Result<(), DataError> {
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    let min = expected.len() - optional_tail;
    let ok = got.len() >= min
        && got.len() <= expected.len()
        && got.iter().zip(expected).all(|(g, e)| g.eq_ignore_ascii_case(e));
    if !ok {
        return Err(DataError::MalformedRow {
            file,
            line: 1,
            reason: format!("header {:?} does not match {:?}", got, expected),
        });
    }
    Ok(())
}

fn parse_field<T: FromStr>(
    file: &'static str,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T, DataError> {
    raw.parse().map_err(|_| DataError::MalformedRow {
        file,
        line,
        reason: format!("cannot parse {name} from {raw:?}"),
    })
}

/// Parses and validates the two dataset tables.
pub fn ingest_dataset(
    participants_csv: &str,
    events_csv: &str,
    catalog: &Catalog,
) -> Result<Dataset, DataError> {
    const PF: &str = "participants";
    const EF: &str = "events";

    let mut rdr = reader(participants_csv);
    check_header(PF, &mut rdr, &PARTICIPANTS_HEADER, 1)?;
    let mut records: Vec<ParticipantRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec?;
        if rec.len() < 6 || rec.len() > 7 {
            return Err(DataError::MalformedRow {
                file: PF,
                line,
                reason: format!("expected 6 or 7 fields, found {}", rec.len()),
            });
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(DataError::MalformedRow {
                file: PF,
                line,
                reason: "empty participant_id".into(),
            });
        }
        let drive_type: DriveType = rec[1].parse()?;
        let age: u32 = parse_field(PF, line, "age", &rec[2])?;
        let gender = Gender::parse(&rec[3]).ok_or_else(|| DataError::MalformedRow {
            file: PF,
            line,
            reason: format!("unknown gender {:?}", &rec[3]),
        })?;
        let driving_style =
            DrivingStyle::parse(&rec[4]).ok_or_else(|| DataError::MalformedRow {
                file: PF,
                line,
                reason: format!("unknown driving style {:?}", &rec[4]),
            })?;
        let prior_experience_score: u8 = parse_field(PF, line, "prior_experience", &rec[5])?;
        let ground_truth_cluster = match rec.get(6).unwrap_or("") {
            "" => None,
            s => Some(Archetype::parse(s).ok_or_else(|| DataError::MalformedRow {
                file: PF,
                line,
                reason: format!("unknown cluster label {s:?}"),
            })?),
        };
        if index.insert(id.clone(), records.len()).is_some() {
            return Err(DataError::DuplicateParticipant(id));
        }
        records.push(ParticipantRecord {
            participant_id: id,
            drive_type,
            age,
            gender,
            driving_style,
            prior_experience_score,
            events: Vec::with_capacity(N_INTERSECTIONS),
            ground_truth_cluster,
        });
    }

    let mut rdr = reader(events_csv);
    check_header(EF, &mut rdr, &EVENTS_HEADER, 0)?;
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec?;
        if rec.len() != 4 {
            return Err(DataError::MalformedRow {
                file: EF,
                line,
                reason: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let pos = *index
            .get(&rec[0])
            .ok_or_else(|| DataError::UnknownParticipant(rec[0].to_string()))?;
        let intersection_index: usize = parse_field(EF, line, "intersection", &rec[1])?;
        let trust_report: f64 = parse_field(EF, line, "trust", &rec[2])?;
        if !trust_report.is_finite() {
            return Err(DataError::MalformedRow {
                file: EF,
                line,
                reason: format!("non-finite trust {:?}", &rec[2]),
            });
        }
        let takeover = match &rec[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(DataError::MalformedRow {
                    file: EF,
                    line,
                    reason: format!("takeover must be 0 or 1, found {other:?}"),
                })
            }
        };
        records[pos].events.push(EventObservation {
            intersection_index,
            trust_report,
            takeover,
        });
    }

    for r in &mut records {
        r.events.sort_by_key(|e| e.intersection_index);
        let distinct: HashSet<usize> = r.events.iter().map(|e| e.intersection_index).collect();
        if distinct.len() != r.events.len() {
            return Err(DataError::InvalidField {
                participant_id: r.participant_id.clone(),
                field: "intersection",
                reason: "duplicate intersection".into(),
            });
        }
    }
    Dataset::new(records, Provenance::Ingested, catalog)
}

/// Reads `participants.csv` and `events.csv` style files from disk.
pub fn ingest_files(
    participants_path: &Path,
    events_path: &Path,
    catalog: &Catalog,
) -> Result<Dataset, DataError> {
    let p = std::fs::read_to_string(participants_path)?;
    let e = std::fs::read_to_string(events_path)?;
    ingest_dataset(&p, &e, catalog)
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer cannot fail");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// Serializes the participant table.
pub fn participants_to_csv(d: &Dataset) -> String {
    let mut w = writer();
    w.write_record(PARTICIPANTS_HEADER).expect("in-memory write");
    for p in &d.participants {
        w.write_record([
            p.participant_id.as_str(),
            p.drive_type.as_str(),
            &p.age.to_string(),
            p.gender.as_str(),
            p.driving_style.as_str(),
            &p.prior_experience_score.to_string(),
            p.ground_truth_cluster.map(Archetype::as_str).unwrap_or(""),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Serializes the event table. Trust values use the shortest representation
/// that parses back to the identical `f64`.
pub fn events_to_csv(d: &Dataset) -> String {
    let mut w = writer();
    w.write_record(EVENTS_HEADER).expect("in-memory write");
    for p in &d.participants {
        for e in &p.events {
            w.write_record([
                p.participant_id.as_str(),
                &e.intersection_index.to_string(),
                &e.trust_report.to_string(),
                if e.takeover { "1" } else { "0" },
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lows(d: DriveType) -> Vec<usize> {
        builtin_catalog()[&d].low_reliability_indices()
    }

    fn peds(d: DriveType) -> Vec<usize> {
        builtin_catalog()[&d].pedestrian_indices()
    }

    #[test]
    fn catalog_low_reliability_positions() {
        assert_eq!(lows(DriveType::A), Vec::<usize>::new());
        assert_eq!(lows(DriveType::B), vec![5, 8]);
        assert_eq!(lows(DriveType::C), vec![5, 9]);
        assert_eq!(lows(DriveType::D), vec![3, 4, 5, 10]);
        assert_eq!(lows(DriveType::E), Vec::<usize>::new());
        assert_eq!(lows(DriveType::F), vec![9, 10]);
        assert_eq!(lows(DriveType::G), vec![6, 10]);
        assert_eq!(lows(DriveType::H), vec![4, 6, 8, 9]);
    }

    #[test]
    fn catalog_pedestrian_positions() {
        assert_eq!(peds(DriveType::A), vec![2, 5, 7, 8, 9]);
        assert_eq!(peds(DriveType::B), vec![2, 4, 5, 6, 9]);
        assert_eq!(peds(DriveType::C), vec![2, 5, 6, 7, 8]);
        assert_eq!(peds(DriveType::D), vec![4, 5, 7, 9, 10]);
        assert_eq!(peds(DriveType::E), vec![5, 7, 8, 9, 10]);
        assert_eq!(peds(DriveType::F), vec![1, 3, 4, 7, 8]);
        assert_eq!(peds(DriveType::G), vec![1, 6, 7, 8, 10]);
        assert_eq!(peds(DriveType::H), vec![1, 2, 5, 7, 9]);
    }

    #[test]
    fn catalog_drive_factors() {
        use Level::*;
        let cat = builtin_catalog();
        assert_eq!(cat.len(), 8);
        let expect = [
            (DriveType::A, 100, High, High),
            (DriveType::B, 80, High, High),
            (DriveType::C, 80, Low, High),
            (DriveType::D, 60, Low, High),
            (DriveType::E, 100, High, Low),
            (DriveType::F, 80, High, Low),
            (DriveType::G, 80, Low, Low),
            (DriveType::H, 60, Low, Low),
        ];
        for (d, rel, vis, tra) in expect {
            let c = &cat[&d];
            assert_eq!(c.overall_reliability, rel, "{d}");
            assert_eq!(c.visibility, vis, "{d}");
            assert_eq!(c.transparency, tra, "{d}");
            c.validate().unwrap();
        }
        assert_eq!(cat[&DriveType::D].low_reliability_indices().len(), 4);
    }

    #[test]
    fn override_rejects_inconsistent_reliability() {
        let mut g = builtin_catalog()[&DriveType::G].clone();
        g.overall_reliability = 60;
        assert!(matches!(
            Catalog::builtin().with_override(g),
            Err(DataError::InvalidDriveConfig { .. })
        ));
    }

    fn one_participant(trust: &[f64]) -> (String, String) {
        let p = "participant_id,drive_type,age,gender,driving_style,prior_experience,ground_truth_cluster\n\
                 p1,G,30,Female,Conservative,4,\n"
            .to_string();
        let mut e = "participant_id,intersection,trust,takeover\n".to_string();
        for (i, t) in trust.iter().enumerate() {
            e.push_str(&format!("p1,{},{},{}\n", i + 1, t, i % 2));
        }
        (p, e)
    }

    #[test]
    fn ingest_minimal_dataset() {
        let (p, e) = one_participant(&[50.0; 10]);
        let d = ingest_dataset(&p, &e, &Catalog::builtin()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.provenance, Provenance::Ingested);
        let r = &d.participants[0];
        assert_eq!(r.drive_type, DriveType::G);
        assert_eq!(r.gender, Gender::Female);
        assert_eq!(r.ground_truth_cluster, None);
        assert_eq!(r.events.len(), 10);
        assert!(r.events[1].takeover);
    }

    #[test]
    fn ingest_rejects_missing_intersection() {
        let (p, e) = one_participant(&[50.0; 9]);
        assert!(matches!(
            ingest_dataset(&p, &e, &Catalog::builtin()),
            Err(DataError::MissingIntersection { found: 9, .. })
        ));
    }

    #[test]
    fn ingest_rejects_out_of_range_trust() {
        let mut t = [50.0; 10];
        t[4] = 101.0;
        let (p, e) = one_participant(&t);
        assert!(matches!(
            ingest_dataset(&p, &e, &Catalog::builtin()),
            Err(DataError::OutOfRangeTrust { intersection: 5, .. })
        ));
    }

    #[test]
    fn ingest_rejects_bad_rows() {
        let (p, e) = one_participant(&[50.0; 10]);
        let bad_drive = p.replace("p1,G", "p1,Q");
        assert!(matches!(
            ingest_dataset(&bad_drive, &e, &Catalog::builtin()),
            Err(DataError::UnknownDriveType(_))
        ));
        let bad_age = p.replace(",30,", ",thirty,");
        assert!(matches!(
            ingest_dataset(&bad_age, &e, &Catalog::builtin()),
            Err(DataError::MalformedRow { line: 2, .. })
        ));
        let bad_takeover = e.replace(",1\n", ",yes\n");
        assert!(matches!(
            ingest_dataset(&p, &bad_takeover, &Catalog::builtin()),
            Err(DataError::MalformedRow { .. })
        ));
        let short_row = e.replacen("p1,1,50,0", "p1,1,50", 1);
        assert!(matches!(
            ingest_dataset(&p, &short_row, &Catalog::builtin()),
            Err(DataError::MalformedRow { .. })
        ));
        let orphan = format!("{e}p9,1,50,0\n");
        assert!(matches!(
            ingest_dataset(&p, &orphan, &Catalog::builtin()),
            Err(DataError::UnknownParticipant(_))
        ));
    }

    #[test]
    fn filter_keeps_only_analyzable_drives() {
        let (p, e) = one_participant(&[50.0; 10]);
        let g = ingest_dataset(&p, &e, &Catalog::builtin()).unwrap();
        let mut a = g.participants[0].clone();
        a.participant_id = "pa".into();
        a.drive_type = DriveType::A;
        let mixed = Dataset {
            participants: vec![a.clone(), g.participants[0].clone()],
            provenance: Provenance::Ingested,
        };
        let f = filter_analyzable(&mixed).unwrap();
        assert_eq!(f.ids(), vec!["p1"]);
        assert_eq!(filter_analyzable(&f).unwrap(), f);

        a.drive_type = DriveType::E;
        let only_e = Dataset {
            participants: vec![a],
            provenance: Provenance::Ingested,
        };
        assert!(matches!(filter_analyzable(&only_e), Err(DataError::EmptyResult)));
    }
}
