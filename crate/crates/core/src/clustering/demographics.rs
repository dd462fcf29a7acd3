//! Demographic baseline partitions: age split at the sample mean, gender,
//! and self-reported driving style.

use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::data::{Dataset, DrivingStyle, Gender};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DemographicCriterion {
    AgeAtMean,
    Gender,
    DrivingStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicPartition {
    pub criterion: DemographicCriterion,
    pub group_names: Vec<String>,
    /// Group per participant (dataset order); `None` when excluded.
    pub labels: Vec<Option<usize>>,
    pub excluded: usize,
    /// True when at least one group is empty.
    pub degenerate: bool,
}

impl DemographicPartition {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.group_names.len()];
        for l in self.labels.iter().flatten() {
            s[*l] += 1;
        }
        s
    }
}

fn format_threshold(mean: f64) -> String {
    if (mean - mean.round()).abs() < 1e-9 {
        format!("{}", mean.round() as i64)
    } else {
        format!("{mean:.1}")
    }
}

pub fn demographic_partition(
    d: &Dataset,
    criterion: DemographicCriterion,
) -> Result<DemographicPartition, ClusterError> {
    if d.is_empty() {
        return Err(ClusterError::MissingDemographic("empty dataset".into()));
    }
    let (group_names, labels): (Vec<String>, Vec<Option<usize>>) = match criterion {
        DemographicCriterion::AgeAtMean => {
            let mean = d.participants.iter().map(|p| p.age as f64).sum::<f64>() / d.len() as f64;
            let t = format_threshold(mean);
            (
                vec![format!("At least {t}"), format!("Less than {t}")],
                d.participants
                    .iter()
                    .map(|p| Some(if p.age as f64 >= mean { 0 } else { 1 }))
                    .collect(),
            )
        }
        DemographicCriterion::Gender => (
            vec!["Male".into(), "Female".into()],
            d.participants
                .iter()
                .map(|p| match p.gender {
                    Gender::Male => Some(0),
                    Gender::Female => Some(1),
                    Gender::Other => None,
                })
                .collect(),
        ),
        DemographicCriterion::DrivingStyle => (
            vec!["Aggressive".into(), "Conservative".into()],
            d.participants
                .iter()
                .map(|p| match p.driving_style {
                    DrivingStyle::Aggressive => Some(0),
                    DrivingStyle::Conservative => Some(1),
                })
                .collect(),
        ),
    };
    let excluded = labels.iter().filter(|l| l.is_none()).count();
    if excluded == labels.len() {
        return Err(ClusterError::MissingDemographic(format!(
            "no participant has a usable value for {criterion:?}"
        )));
    }
    if excluded > 0 {
        log::info!("{criterion:?}: {excluded} participants excluded (value unknown)");
    }
    let mut part = DemographicPartition {
        criterion,
        group_names,
        labels,
        excluded,
        degenerate: false,
    };
    part.degenerate = part.sizes().contains(&0);
    if part.degenerate {
        log::warn!("{criterion:?}: degenerate partition, group sizes {:?}", part.sizes());
    }
    Ok(part)
}
