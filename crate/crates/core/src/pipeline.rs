//! End-to-end runs over a dataset directory: features, clustering
//! diagnostics, cross-validated evaluation and plot data, written to an
//! output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{
    adjusted_rand_index, kmeans, DemographicCriterion, KMeansOptions, TrustClusterer,
};
use crate::data::{
    filter_analyzable, ingest_files, Archetype, Catalog, Dataset, DriveType, ParticipantRecord,
};
use crate::evaluation::{
    boxstats_to_csv, curves_to_csv, demographic_grouping, emit_feature_boxstats,
    emit_trust_curves, Criterion, EvalError, EvalOptions, EvalReport, Grouping,
};
use crate::features::{feature_matrix, FeatureMatrix};
use crate::models::{fit_lr, fit_ss, LrModel, ModelError, SsModel};
use crate::Error;

pub const PARTICIPANTS_FILE: &str = "participants.csv";
pub const EVENTS_FILE: &str = "events.csv";

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Loads `participants.csv` and `events.csv` from `dir`.
pub fn load_dataset(dir: &Path, catalog: &Catalog) -> Result<Dataset, Error> {
    for f in [PARTICIPANTS_FILE, EVENTS_FILE] {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(Error::Io {
                path: p,
                source: std::io::ErrorKind::NotFound.into(),
            });
        }
    }
    Ok(ingest_files(&dir.join(PARTICIPANTS_FILE), &dir.join(EVENTS_FILE), catalog)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    pub n_participants: usize,
    /// Mean silhouette for every k tried.
    pub silhouettes: BTreeMap<usize, f64>,
    pub selected_k: usize,
    pub explained_variance_ratios: Vec<f64>,
    /// Sizes of the two named clusters.
    pub cluster_sizes: BTreeMap<String, usize>,
    pub two_cluster_silhouette: f64,
    /// Agreement with ground-truth archetypes when every record has one.
    pub adjusted_rand_index: Option<f64>,
}

pub struct Clustering {
    pub features: FeatureMatrix,
    pub clusterer: TrustClusterer,
    pub diagnostics: ClusterDiagnostics,
}

impl Clustering {
    pub fn grouping(&self) -> Grouping {
        Grouping {
            names: self.names(),
            labels: self.clusterer.model.labels.iter().map(|&l| Some(l)).collect(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.clusterer
            .model
            .names
            .as_ref()
            .expect("two-cluster model is named")
            .iter()
            .map(|a| a.to_string())
            .collect()
    }

    /// `participant_id,drive_type,cluster,pc1,..` rows.
    pub fn assignments_csv(&self, d: &Dataset) -> String {
        let scores = self.clusterer.scores(&self.features);
        let names = self.names();
        let mut out = String::from("participant_id,drive_type,cluster");
        for j in 0..scores.ncols() {
            let _ = write!(out, ",pc{}", j + 1);
        }
        out.push('\n');
        for (i, p) in d.participants.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{}",
                p.participant_id, p.drive_type, names[self.clusterer.model.labels[i]]
            );
            for j in 0..scores.ncols() {
                let _ = write!(out, ",{}", scores[(i, j)]);
            }
            out.push('\n');
        }
        out
    }
}

/// Features, silhouette-based k selection over `ks`, and the named
/// two-cluster model used for reporting.
pub fn cluster_dataset(
    d: &Dataset,
    catalog: &Catalog,
    ks: &[usize],
    seed: u64,
) -> Result<Clustering, Error> {
    let features = feature_matrix(d, catalog)?;
    let opts = KMeansOptions::with_seed(seed);
    let selected = TrustClusterer::fit_select(&features, ks, &opts)?;
    let scores = selected.scores(&features);
    let mut silhouettes = BTreeMap::new();
    for &k in ks {
        let m = kmeans(&scores, k, &opts)?;
        silhouettes.insert(k, m.silhouette.unwrap_or(0.0));
    }
    let clusterer = TrustClusterer::fit(&features, 2, &opts)?;
    let names: Vec<Archetype> = clusterer.model.names.clone().expect("k = 2 is named");
    let mut cluster_sizes = BTreeMap::new();
    for (c, size) in clusterer.model.sizes().into_iter().enumerate() {
        cluster_sizes.insert(names[c].to_string(), size);
    }
    let truth: Option<Vec<usize>> = d
        .participants
        .iter()
        .map(|p| p.ground_truth_cluster.map(|a| a as usize))
        .collect();
    let adjusted_rand_index = truth.map(|t| adjusted_rand_index(&t, &clusterer.model.labels));
    let diagnostics = ClusterDiagnostics {
        n_participants: d.len(),
        silhouettes,
        selected_k: selected.model.k,
        explained_variance_ratios: clusterer.pca.explained_variance_ratios.clone(),
        cluster_sizes,
        two_cluster_silhouette: clusterer.model.silhouette.unwrap_or(0.0),
        adjusted_rand_index,
    };
    Ok(Clustering {
        features,
        clusterer,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub eval: EvalOptions,
    pub criteria: Vec<Criterion>,
    pub k_range: Vec<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            eval: EvalOptions::default(),
            criteria: Criterion::ALL.to_vec(),
            k_range: (2..=6).collect(),
        }
    }
}

pub struct PipelineOutput {
    pub report: EvalReport,
    pub diagnostics: ClusterDiagnostics,
    pub files: Vec<PathBuf>,
}

impl ClusterDiagnostics {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} analyzable participants; silhouette selects k = {}",
            self.n_participants, self.selected_k
        );
        let sizes: Vec<String> = self.cluster_sizes.iter().map(|(n, s)| format!("{n} {s}")).collect();
        let _ = writeln!(
            out,
            "two clusters: {} (silhouette {:.3})",
            sizes.join(", "),
            self.two_cluster_silhouette
        );
        if let Some(ari) = self.adjusted_rand_index {
            let _ = writeln!(out, "adjusted Rand index vs ground truth: {ari:.3}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("diagnostics are serializable");
        s.push('\n');
        s
    }
}

impl PipelineOutput {
    pub fn summary(&self) -> String {
        let mut out = self.diagnostics.summary();
        out.push('\n');
        out.push_str(&self.report.to_text());
        out
    }
}

/// Runs the whole analysis on the dataset in `data_dir` and writes
/// `features.csv`, `clusters.csv`, `clustering.json`, `report.txt`,
/// `report.json`, `trust_curves.csv` and `feature_boxstats.csv` to
/// `out_dir`.
pub fn run_pipeline(
    data_dir: &Path,
    out_dir: &Path,
    catalog: &Catalog,
    opts: &PipelineOptions,
) -> Result<PipelineOutput, Error> {
    let all = load_dataset(data_dir, catalog)?;
    let d = filter_analyzable(&all)?;
    if d.len() < all.len() {
        log::info!("{} participants on non-analyzable drives dropped", all.len() - d.len());
    }
    let clustering = cluster_dataset(&d, catalog, &opts.k_range, opts.eval.seed)?;
    let report = EvalReport::build(&d, catalog, &opts.criteria, &opts.eval)?;

    let grouping = clustering.grouping();
    let mut curves = Vec::new();
    for drive in DriveType::ANALYZABLE {
        match emit_trust_curves(&d, catalog, drive, Some(&grouping)) {
            Ok(rows) => curves.extend(rows),
            Err(EvalError::TooFewParticipants { .. }) => {
                log::warn!("drive {drive}: a cluster has fewer than 2 participants, no curve");
            }
            Err(e) => return Err(e.into()),
        }
    }
    let boxstats = emit_feature_boxstats(
        &clustering.features,
        &clustering.clusterer.model.labels,
        &clustering.names(),
    )?;

    create_dir(out_dir)?;
    let outputs: Vec<(&str, String)> = vec![
        ("features.csv", clustering.features.to_csv()),
        ("clusters.csv", clustering.assignments_csv(&d)),
        ("clustering.json", clustering.diagnostics.to_json()),
        ("report.txt", report.to_text()),
        ("report.json", report.to_json()),
        ("trust_curves.csv", curves_to_csv(&curves)),
        ("feature_boxstats.csv", boxstats_to_csv(&boxstats)),
    ];
    let mut files = Vec::new();
    for (name, contents) in outputs {
        let path = out_dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        files.push(path);
    }
    Ok(PipelineOutput {
        report,
        diagnostics: clustering.diagnostics,
        files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupModels {
    pub n_participants: usize,
    pub lr: Option<LrModel>,
    pub ss: Option<SsModel>,
}

/// Fitted models keyed by `criterion/group`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelSet {
    pub groups: BTreeMap<String, GroupModels>,
}

impl ModelSet {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model set is serializable")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }
}

/// Fits models on the full dataset: one pair per group of every criterion
/// (`general` has the single group `All`).
pub fn fit_models(
    d: &Dataset,
    catalog: &Catalog,
    criteria: &[Criterion],
    opts: &EvalOptions,
) -> Result<ModelSet, Error> {
    let fit = |members: Vec<&ParticipantRecord>| -> Result<GroupModels, Error> {
        Ok(GroupModels {
            n_participants: members.len(),
            lr: opts.models.lr.then(|| fit_lr(&members, catalog)).transpose()?,
            ss: opts.models.ss.then(|| fit_ss(&members, catalog, &opts.ss)).transpose()?,
        })
    };
    let mut set = ModelSet::default();
    for &c in criteria {
        let grouping = match c {
            Criterion::General => Grouping {
                names: vec!["All".into()],
                labels: vec![Some(0); d.len()],
            },
            Criterion::TrustDynamics => {
                let features = feature_matrix(d, catalog)?;
                let tc = TrustClusterer::fit(&features, opts.trust_clusters, &KMeansOptions::with_seed(opts.seed))?;
                Grouping {
                    names: (0..tc.model.k)
                        .map(|g| tc.model.name_of(g).map_or_else(|| format!("Cluster {}", g + 1), |a| a.to_string()))
                        .collect(),
                    labels: tc.model.labels.iter().map(|&l| Some(l)).collect(),
                }
            }
            Criterion::AgeAtMean => demographic_grouping(d, DemographicCriterion::AgeAtMean)?,
            Criterion::Gender => demographic_grouping(d, DemographicCriterion::Gender)?,
            Criterion::DrivingStyle => demographic_grouping(d, DemographicCriterion::DrivingStyle)?,
        };
        for (g, name) in grouping.names.iter().enumerate() {
            let members: Vec<&ParticipantRecord> = d
                .participants
                .iter()
                .zip(&grouping.labels)
                .filter(|(_, l)| **l == Some(g))
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                log::warn!("{c}: group `{name}` is empty, no model");
                continue;
            }
            set.groups.insert(format!("{c}/{name}"), fit(members)?);
        }
    }
    Ok(set)
}
