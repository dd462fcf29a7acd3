//! Drive-type-stratified cross-validation of general and customized trust
//! models, plus report and plot-data tables.
//!
//! Metrics are pooled across folds: validation predictions of all folds are
//! concatenated before MSE and F1 are computed. Trust errors are measured in
//! the z-units of each fold's general training scaler, so general and
//! customized models are scored on the same scale.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    demographic_partition, five_number, t_critical, welch_ttest, ClusterError, DemographicCriterion,
    FiveNumber, KMeansOptions, TrustClusterer,
};
use crate::data::{Catalog, Dataset, DriveType, Level, ParticipantRecord, N_INTERSECTIONS};
use crate::features::{feature_matrix, FeatureError, FeatureMatrix, FEATURE_NAMES};
use crate::models::{
    ekf_run_record, fit_lr, fit_ss, predict_lr, ModelError, SsFitOptions, TrustScaler,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{n} participants cannot fill {k} folds")]
    TooFewParticipants { n: usize, k: usize },
    #[error("length mismatch: {0} predictions, {1} targets")]
    LengthMismatch(usize, usize),
    #[error("empty metric input")]
    Empty,
    #[error("general metric is zero; relative improvement undefined")]
    ZeroGeneral,
    #[error("no cluster metrics to weight")]
    NoClusters,
    #[error("unknown criterion `{0}`")]
    UnknownCriterion(String),
    #[error("unknown model family `{0}`")]
    UnknownModel(String),
    #[error("participant {participant_id}: {source}")]
    Participant {
        participant_id: String,
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Participant id to fold index.
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, participant_id: &str) -> Option<usize> {
        self.assignments.get(participant_id).copied()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in self.assignments.values() {
            s[f] += 1;
        }
        s
    }
}

/// Shuffles each drive type's participants and deals them to folds
/// round-robin, continuing the deal across drive types.
pub fn make_folds(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k == 0 || d.len() < k {
        return Err(EvalError::TooFewParticipants { n: d.len(), k });
    }
    let mut by_type: BTreeMap<DriveType, Vec<&str>> = BTreeMap::new();
    for p in &d.participants {
        by_type.entry(p.drive_type).or_default().push(&p.participant_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    let mut next = 0;
    for (drive, mut ids) in by_type {
        if ids.len() < k {
            log::warn!("drive {drive}: {} participants for {k} folds", ids.len());
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids {
            assignments.insert(id.to_string(), next % k);
            next += 1;
        }
    }
    Ok(FoldPlan { k, seed, assignments })
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// F1 of the positive class; 0 when precision + recall is 0.
pub fn f1(pred: &[bool], truth: &[bool]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

/// Percentage gain of the size-weighted cluster metric over the general one.
pub fn weighted_improvement(
    general: f64,
    clusters: &[(usize, f64)],
    direction: Direction,
) -> Result<f64, EvalError> {
    if general == 0.0 {
        return Err(EvalError::ZeroGeneral);
    }
    let n: usize = clusters.iter().map(|c| c.0).sum();
    if n == 0 {
        return Err(EvalError::NoClusters);
    }
    let w = clusters.iter().map(|&(n, v)| n as f64 * v).sum::<f64>() / n as f64;
    Ok(match direction {
        Direction::LowerBetter => 100.0 * (general - w) / general,
        Direction::HigherBetter => 100.0 * (w - general) / general,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    General,
    TrustDynamics,
    AgeAtMean,
    Gender,
    DrivingStyle,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::General,
        Criterion::TrustDynamics,
        Criterion::AgeAtMean,
        Criterion::Gender,
        Criterion::DrivingStyle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::General => "general",
            Criterion::TrustDynamics => "trust-dynamics",
            Criterion::AgeAtMean => "age",
            Criterion::Gender => "gender",
            Criterion::DrivingStyle => "driving-style",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Criterion::General => "General",
            Criterion::TrustDynamics => "Trust dynamics",
            Criterion::AgeAtMean => "Age",
            Criterion::Gender => "Gender",
            Criterion::DrivingStyle => "Driving style",
        }
    }

    fn demographic(self) -> Option<DemographicCriterion> {
        match self {
            Criterion::AgeAtMean => Some(DemographicCriterion::AgeAtMean),
            Criterion::Gender => Some(DemographicCriterion::Gender),
            Criterion::DrivingStyle => Some(DemographicCriterion::DrivingStyle),
            _ => None,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| EvalError::UnknownCriterion(s.to_string()))
    }
}

/// Which model families to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFamilies {
    pub lr: bool,
    pub ss: bool,
}

impl Default for ModelFamilies {
    fn default() -> Self {
        ModelFamilies { lr: true, ss: true }
    }
}

impl FromStr for ModelFamilies {
    type Err = EvalError;

    /// Comma-separated list of `lr` and `ss`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut m = ModelFamilies { lr: false, ss: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "lr" => m.lr = true,
                "ss" => m.ss = true,
                other => return Err(EvalError::UnknownModel(other.to_string())),
            }
        }
        if !(m.lr || m.ss) {
            return Err(EvalError::UnknownModel(s.to_string()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub seed: u64,
    pub folds: usize,
    pub models: ModelFamilies,
    /// Cluster count for the trust-dynamics criterion.
    pub trust_clusters: usize,
    pub ss: SsFitOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            seed: 0,
            folds: 5,
            models: ModelFamilies::default(),
            trust_clusters: 2,
            ss: SsFitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub cluster: String,
    pub n_participants: usize,
    pub lr_mse: Option<f64>,
    pub ss_mse: Option<f64>,
    pub ss_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: Criterion,
    pub rows: Vec<ReportRow>,
}

/// Named groups over a dataset's participants (dataset order). `None`
/// leaves a participant out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub names: Vec<String>,
    pub labels: Vec<Option<usize>>,
}

fn cluster_names(c: &TrustClusterer) -> Vec<String> {
    match &c.model.names {
        Some(n) => n.iter().map(|a| a.to_string()).collect(),
        None => (1..=c.model.k).map(|i| format!("Cluster {i}")).collect(),
    }
}

#[derive(Default)]
struct Pool {
    participants: usize,
    lr_pred: Vec<f64>,
    lr_truth: Vec<f64>,
    ss_pred: Vec<f64>,
    ss_truth: Vec<f64>,
    to_pred: Vec<bool>,
    to_truth: Vec<bool>,
}

fn tag(id: &str) -> impl Fn(ModelError) -> EvalError + '_ {
    move |source| EvalError::Participant {
        participant_id: id.to_string(),
        source,
    }
}

/// Fits one group's models on `train` and appends the scores of `val`.
fn score_group(
    train: &[&ParticipantRecord],
    val: &[&ParticipantRecord],
    catalog: &Catalog,
    scale: &TrustScaler,
    opts: &EvalOptions,
    pool: &mut Pool,
) -> Result<(), EvalError> {
    let lr = if opts.models.lr { Some(fit_lr(train, catalog)?) } else { None };
    let ss = if opts.models.ss { Some(fit_ss(train, catalog, &opts.ss)?) } else { None };
    for r in val {
        let drive = catalog.get(r.drive_type);
        let truth: Vec<f64> = r.trust().iter().map(|&t| scale.standardize(t)).collect();
        if let Some(m) = &lr {
            let p = predict_lr(m, r, drive);
            for (k, raw) in p.intersections.iter().zip(&p.raw) {
                pool.lr_pred.push(scale.standardize(*raw));
                pool.lr_truth.push(truth[k - 1]);
            }
        }
        if let Some(m) = &ss {
            let steps = ekf_run_record(&m.params, r, drive).map_err(tag(&r.participant_id))?;
            for (s, (t, b)) in steps.iter().zip(truth.iter().zip(r.takeovers())) {
                pool.ss_pred.push(scale.standardize(m.scaler.destandardize(s.trust_posterior)));
                pool.ss_truth.push(*t);
                pool.to_pred.push(s.takeover_pred);
                pool.to_truth.push(b);
            }
        }
        pool.participants += 1;
    }
    Ok(())
}

/// Group labels for one fold: `train` and `val` are dataset row positions.
fn fold_labels(
    d: &Dataset,
    catalog: &Catalog,
    criterion: Criterion,
    fixed: Option<&Grouping>,
    train: &[usize],
    val: &[usize],
    opts: &EvalOptions,
) -> Result<(Vec<String>, Vec<Option<usize>>, Vec<Option<usize>>), EvalError> {
    match criterion {
        Criterion::General => Ok((
            vec!["All".into()],
            vec![Some(0); train.len()],
            vec![Some(0); val.len()],
        )),
        Criterion::TrustDynamics => {
            let tf = feature_matrix(&d.select(train), catalog)?;
            let vf = feature_matrix(&d.select(val), catalog)?;
            let c = TrustClusterer::fit(&tf, opts.trust_clusters, &KMeansOptions::with_seed(opts.seed))?;
            Ok((
                cluster_names(&c),
                c.model.labels.iter().map(|&l| Some(l)).collect(),
                c.assign(&vf).into_iter().map(Some).collect(),
            ))
        }
        _ => {
            let g = fixed.expect("demographic grouping computed up front");
            Ok((
                g.names.clone(),
                train.iter().map(|&i| g.labels[i]).collect(),
                val.iter().map(|&i| g.labels[i]).collect(),
            ))
        }
    }
}

pub fn demographic_grouping(d: &Dataset, c: DemographicCriterion) -> Result<Grouping, EvalError> {
    let p = demographic_partition(d, c)?;
    if p.degenerate {
        log::warn!("{c:?} partition has an empty group");
    }
    Ok(Grouping {
        names: p.group_names,
        labels: p.labels,
    })
}

/// Cross-validates general or customized models under one criterion.
/// Groups without training participants in a fold are skipped for that
/// fold; groups never scored produce no row.
pub fn evaluate_criterion(
    d: &Dataset,
    catalog: &Catalog,
    criterion: Criterion,
    opts: &EvalOptions,
) -> Result<CriterionResult, EvalError> {
    let plan = make_folds(d, opts.folds, opts.seed)?;
    let fixed = criterion
        .demographic()
        .map(|c| demographic_grouping(d, c))
        .transpose()?;
    let mut pools: BTreeMap<String, Pool> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for fold in 0..plan.k {
        let (val, train): (Vec<usize>, Vec<usize>) = (0..d.len())
            .partition(|&i| plan.fold_of(&d.participants[i].participant_id) == Some(fold));
        let train_recs: Vec<&ParticipantRecord> = train.iter().map(|&i| &d.participants[i]).collect();
        let scale = TrustScaler::fit(train_recs.iter().copied());
        let (names, tl, vl) = fold_labels(d, catalog, criterion, fixed.as_ref(), &train, &val, opts)?;
        for name in &names {
            if !order.contains(name) {
                order.push(name.clone());
            }
        }
        for (g, name) in names.iter().enumerate() {
            let gt: Vec<&ParticipantRecord> = train
                .iter()
                .zip(&tl)
                .filter(|(_, l)| **l == Some(g))
                .map(|(&i, _)| &d.participants[i])
                .collect();
            let gv: Vec<&ParticipantRecord> = val
                .iter()
                .zip(&vl)
                .filter(|(_, l)| **l == Some(g))
                .map(|(&i, _)| &d.participants[i])
                .collect();
            if gv.is_empty() {
                continue;
            }
            if gt.is_empty() {
                log::warn!("{criterion}: fold {fold} has no training participants in `{name}`");
                continue;
            }
            let pool = pools.entry(name.clone()).or_default();
            match score_group(&gt, &gv, catalog, &scale, opts, pool) {
                Err(EvalError::Model(ModelError::InsufficientData(msg))) => {
                    log::warn!("{criterion}: fold {fold}, `{name}` skipped: {msg}");
                }
                other => other?,
            }
        }
    }
    if criterion == Criterion::TrustDynamics {
        order.sort();
    }
    let mut rows = Vec::new();
    for name in order {
        let Some(p) = pools.get(&name).filter(|p| p.participants > 0) else {
            log::warn!("{criterion}: `{name}` has no scored validation participants");
            continue;
        };
        rows.push(ReportRow {
            cluster: name,
            n_participants: p.participants,
            lr_mse: opts.models.lr.then(|| mse(&p.lr_pred, &p.lr_truth)).transpose()?,
            ss_mse: opts.models.ss.then(|| mse(&p.ss_pred, &p.ss_truth)).transpose()?,
            ss_f1: opts.models.ss.then(|| f1(&p.to_pred, &p.to_truth)).transpose()?,
        });
    }
    Ok(CriterionResult { criterion, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub criterion: Criterion,
    pub lr_mse_gain_pct: Option<f64>,
    pub ss_mse_gain_pct: Option<f64>,
    pub ss_f1_gain_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub folds: usize,
    pub n_participants: usize,
    pub general: ReportRow,
    pub criteria: Vec<CriterionResult>,
    pub improvements: Vec<Improvement>,
}

fn gain(
    general: Option<f64>,
    rows: &[ReportRow],
    metric: impl Fn(&ReportRow) -> Option<f64>,
    direction: Direction,
) -> Option<f64> {
    let g = general?;
    let clusters: Option<Vec<(usize, f64)>> = rows
        .iter()
        .map(|r| metric(r).map(|v| (r.n_participants, v)))
        .collect();
    match weighted_improvement(g, &clusters?, direction) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("improvement undefined: {e}");
            None
        }
    }
}

impl EvalReport {
    /// Runs the general model and every requested customization criterion.
    pub fn build(
        d: &Dataset,
        catalog: &Catalog,
        criteria: &[Criterion],
        opts: &EvalOptions,
    ) -> Result<Self, EvalError> {
        let general = evaluate_criterion(d, catalog, Criterion::General, opts)?;
        let general_row = general.rows.into_iter().next().ok_or(EvalError::Empty)?;
        let mut wanted: Vec<Criterion> = criteria
            .iter()
            .copied()
            .filter(|c| *c != Criterion::General)
            .collect();
        wanted.sort_unstable();
        wanted.dedup();
        let mut results = Vec::new();
        let mut improvements = Vec::new();
        for c in wanted {
            let r = evaluate_criterion(d, catalog, c, opts)?;
            improvements.push(Improvement {
                criterion: c,
                lr_mse_gain_pct: gain(general_row.lr_mse, &r.rows, |r| r.lr_mse, Direction::LowerBetter),
                ss_mse_gain_pct: gain(general_row.ss_mse, &r.rows, |r| r.ss_mse, Direction::LowerBetter),
                ss_f1_gain_pct: gain(general_row.ss_f1, &r.rows, |r| r.ss_f1, Direction::HigherBetter),
            });
            results.push(r);
        }
        Ok(EvalReport {
            seed: opts.seed,
            folds: opts.folds,
            n_participants: d.len(),
            general: general_row,
            criteria: results,
            improvements,
        })
    }

    pub fn improvement(&self, c: Criterion) -> Option<&Improvement> {
        self.improvements.iter().find(|i| i.criterion == c)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    /// Aligned-text metrics table followed by the improvement table.
    pub fn to_text(&self) -> String {
        let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}%"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Validation metrics ({} participants, {}-fold CV, seed {})",
            self.n_participants, self.folds, self.seed
        );
        let _ = writeln!(
            out,
            "{:<16} {:<18} {:>5} {:>8} {:>8} {:>8}",
            "Criterion", "Cluster", "n", "LR MSE", "SS MSE", "SS F1"
        );
        let mut line = |c: &str, r: &ReportRow| {
            let _ = writeln!(
                out,
                "{:<16} {:<18} {:>5} {:>8} {:>8} {:>8}",
                c,
                r.cluster,
                r.n_participants,
                num(r.lr_mse),
                num(r.ss_mse),
                num(r.ss_f1)
            );
        };
        line(Criterion::General.title(), &self.general);
        for c in &self.criteria {
            for r in &c.rows {
                line(c.criterion.title(), r);
            }
        }
        if !self.improvements.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "Improvement over the general model (size-weighted)");
            let _ = writeln!(out, "{:<16} {:>8} {:>8} {:>8}", "Criterion", "LR MSE", "SS MSE", "SS F1");
            for i in &self.improvements {
                let _ = writeln!(
                    out,
                    "{:<16} {:>8} {:>8} {:>8}",
                    i.criterion.title(),
                    pct(i.lr_mse_gain_pct),
                    pct(i.ss_mse_gain_pct),
                    pct(i.ss_f1_gain_pct)
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub drive_type: DriveType,
    pub intersection: usize,
    pub group: String,
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reliability_flag: Level,
}

/// Mean trust per intersection with a t-based 95% interval, per group, for
/// participants of `drive`.
pub fn emit_trust_curves(
    d: &Dataset,
    catalog: &Catalog,
    drive: DriveType,
    grouping: Option<&Grouping>,
) -> Result<Vec<CurveRow>, EvalError> {
    let config = catalog.get(drive);
    let all = Grouping {
        names: vec!["All".into()],
        labels: vec![Some(0); d.len()],
    };
    let g = grouping.unwrap_or(&all);
    let mut rows = Vec::new();
    for (gi, name) in g.names.iter().enumerate() {
        let members: Vec<&ParticipantRecord> = d
            .participants
            .iter()
            .zip(&g.labels)
            .filter(|(p, l)| p.drive_type == drive && **l == Some(gi))
            .map(|(p, _)| p)
            .collect();
        if members.len() < 2 {
            return Err(EvalError::TooFewParticipants { n: members.len(), k: 2 });
        }
        let n = members.len() as f64;
        let t = t_critical(0.95, n - 1.0);
        for k in 1..=N_INTERSECTIONS {
            let v: Vec<f64> = members.iter().map(|p| p.events[k - 1].trust_report).collect();
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
            let half = t * sd / n.sqrt();
            rows.push(CurveRow {
                drive_type: drive,
                intersection: k,
                group: name.clone(),
                n: members.len(),
                mean,
                ci_low: mean - half,
                ci_high: mean + half,
                reliability_flag: config.intersection(k).reliability,
            });
        }
    }
    Ok(rows)
}

pub fn curves_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("drive_type,intersection,group,n,mean,ci_low,ci_high,reliability_flag\n");
    for r in rows {
        let flag = match r.reliability_flag {
            Level::High => "High",
            Level::Low => "Low",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.drive_type, r.intersection, r.group, r.n, r.mean, r.ci_low, r.ci_high, flag
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStatRow {
    pub feature: String,
    pub groups: Vec<(String, FiveNumber)>,
    /// Absent when a group is too small or constant.
    pub p_value: Option<f64>,
}

/// Five-number summaries per cluster and a Welch p-value for every feature.
/// `labels` index into `names`, which must hold exactly two groups.
pub fn emit_feature_boxstats(
    features: &FeatureMatrix,
    labels: &[usize],
    names: &[String],
) -> Result<Vec<BoxStatRow>, EvalError> {
    if names.len() != 2 {
        return Err(ClusterError::NotBinary(names.len()).into());
    }
    if labels.len() != features.nrows() {
        return Err(EvalError::LengthMismatch(labels.len(), features.nrows()));
    }
    let mut rows = Vec::new();
    for (j, fname) in FEATURE_NAMES.iter().enumerate() {
        let col = features.column(j);
        let split: Vec<Vec<f64>> = (0..2)
            .map(|g| {
                col.iter()
                    .zip(labels)
                    .filter(|(_, &l)| l == g)
                    .map(|(v, _)| *v)
                    .collect()
            })
            .collect();
        if split.iter().any(|s| s.is_empty()) {
            return Err(ClusterError::SingleCluster.into());
        }
        let p_value = match welch_ttest(&split[0], &split[1]) {
            Ok(t) => Some(t.p_value),
            Err(ClusterError::DegenerateSample(msg)) => {
                log::warn!("feature {fname}: {msg}");
                None
            }
            Err(e) => return Err(e.into()),
        };
        rows.push(BoxStatRow {
            feature: fname.to_string(),
            groups: names.iter().cloned().zip(split.iter().map(|s| five_number(s))).collect(),
            p_value,
        });
    }
    Ok(rows)
}

pub fn boxstats_to_csv(rows: &[BoxStatRow]) -> String {
    let mut out = String::from("feature,group,min,q1,median,q3,max,p_value\n");
    for r in rows {
        let p = r.p_value.map_or_else(String::new, |p| p.to_string());
        for (g, s) in &r.groups {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.feature, g, s.min, s.q1, s.median, s.q3, s.max, p
            );
        }
    }
    out
}
