//! Synthetic participant populations with known trust archetypes.
//!
//! Each participant follows a three-phase trust trajectory: steady gains
//! while the automation behaves well, a drop at every low-reliability
//! intersection and a slower recovery afterwards. Two archetypes,
//! `Confident` and `Skeptical`, differ in where they start and how hard
//! failures hit them.
//!
//! A second generator simulates the linear state-space trust model with a
//! logistic take-over output directly, for parameter-recovery experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    Archetype, Catalog, DataError, Dataset, DriveType, DrivingStyle, EventObservation, Gender,
    Level, ParticipantRecord, Provenance, TRUST_MAX, TRUST_MIN,
};
use crate::models::{sigmoid, SsParams, SS_INPUTS};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot parse population spec: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeParams {
    pub initial_trust_mean: f64,
    pub initial_trust_sd: f64,
    /// Per-intersection gain before the first failure.
    pub build_slope: f64,
    /// Change applied at a low-reliability intersection (negative).
    pub error_drop: f64,
    /// Per-intersection gain at high-reliability intersections after the
    /// first failure.
    pub repair_slope: f64,
    pub pedestrian_penalty: f64,
    pub takeover_gain: f64,
    pub takeover_offset: f64,
    pub noise_sd: f64,
}

impl ArchetypeParams {
    /// Probability of a take-over when trust is `trust` (0–100 scale).
    pub fn takeover_probability(&self, trust: f64) -> f64 {
        sigmoid(self.takeover_offset - self.takeover_gain * trust / 100.0)
    }

    fn validate(&self, name: &str) -> Result<(), SynthError> {
        let all = [
            self.initial_trust_mean,
            self.initial_trust_sd,
            self.build_slope,
            self.error_drop,
            self.repair_slope,
            self.pedestrian_penalty,
            self.takeover_gain,
            self.takeover_offset,
            self.noise_sd,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::InvalidSpec(format!("{name}: non-finite parameter")));
        }
        if !(TRUST_MIN..=TRUST_MAX).contains(&self.initial_trust_mean) {
            return Err(SynthError::InvalidSpec(format!(
                "{name}: initial_trust_mean {} outside [0, 100]",
                self.initial_trust_mean
            )));
        }
        if self.initial_trust_sd < 0.0 || self.noise_sd < 0.0 || self.pedestrian_penalty < 0.0 {
            return Err(SynthError::InvalidSpec(format!(
                "{name}: standard deviations and pedestrian_penalty must be >= 0"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Archetypes {
    pub confident: ArchetypeParams,
    pub skeptical: ArchetypeParams,
}

impl Archetypes {
    pub fn get(&self, a: Archetype) -> &ArchetypeParams {
        match a {
            Archetype::Confident => &self.confident,
            Archetype::Skeptical => &self.skeptical,
        }
    }
}

impl Default for Archetypes {
    fn default() -> Self {
        default_archetypes()
    }
}

/// Gain/offset of the take-over link `Sig(offset - gain * T / 100)` that
/// yields probability `p` at trust `t`.
fn takeover_offset_for(gain: f64, t: f64, p: f64) -> f64 {
    (p / (1.0 - p)).ln() + gain * t / 100.0
}

/// Default archetypes. Confident participants start higher, lose less at a
/// failure and recover faster; take-over is rare for them (about 5% at
/// trust 80) and common for skeptical ones (about 40% at trust 40).
pub fn default_archetypes() -> Archetypes {
    const CONFIDENT_GAIN: f64 = 6.0;
    const SKEPTICAL_GAIN: f64 = 8.0;
    Archetypes {
        confident: ArchetypeParams {
            initial_trust_mean: 80.0,
            initial_trust_sd: 6.0,
            build_slope: 2.0,
            error_drop: -10.0,
            repair_slope: 1.5,
            pedestrian_penalty: 3.0,
            takeover_gain: CONFIDENT_GAIN,
            takeover_offset: takeover_offset_for(CONFIDENT_GAIN, 80.0, 0.05),
            noise_sd: 3.0,
        },
        skeptical: ArchetypeParams {
            initial_trust_mean: 55.0,
            initial_trust_sd: 8.0,
            build_slope: 1.5,
            error_drop: -25.0,
            repair_slope: 1.0,
            pedestrian_penalty: 5.0,
            takeover_gain: SKEPTICAL_GAIN,
            takeover_offset: takeover_offset_for(SKEPTICAL_GAIN, 40.0, 0.40),
            noise_sd: 3.0,
        },
    }
}

fn default_n() -> usize {
    200
}

fn default_fraction() -> f64 {
    0.74
}

fn default_drives() -> Vec<DriveType> {
    DriveType::ANALYZABLE.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    #[serde(default = "default_n")]
    pub n_participants: usize,
    #[serde(default = "default_fraction")]
    pub confident_fraction: f64,
    #[serde(default)]
    pub archetypes: Archetypes,
    #[serde(default = "default_drives")]
    pub drive_types: Vec<DriveType>,
    #[serde(default)]
    pub seed: u64,
    /// Probability that a participant's age band and driving style follow
    /// their archetype instead of being drawn independently. 0 by default.
    #[serde(default)]
    pub demographic_correlation: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            n_participants: default_n(),
            confident_fraction: default_fraction(),
            archetypes: default_archetypes(),
            drive_types: default_drives(),
            seed: 0,
            demographic_correlation: 0.0,
        }
    }
}

impl PopulationSpec {
    /// Parses a key/value (TOML) spec; omitted keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let spec: PopulationSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("population spec serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_participants < 2 {
            return Err(SynthError::InvalidSpec(format!(
                "n_participants {} < 2",
                self.n_participants
            )));
        }
        if !(self.confident_fraction > 0.0 && self.confident_fraction < 1.0) {
            return Err(SynthError::InvalidSpec(format!(
                "confident_fraction {} outside (0, 1)",
                self.confident_fraction
            )));
        }
        if self.drive_types.is_empty() {
            return Err(SynthError::InvalidSpec("drive_types is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.demographic_correlation) {
            return Err(SynthError::InvalidSpec(format!(
                "demographic_correlation {} outside [0, 1]",
                self.demographic_correlation
            )));
        }
        self.archetypes.confident.validate("confident")?;
        self.archetypes.skeptical.validate("skeptical")?;
        Ok(())
    }
}

/// Deterministic noise-free part of a trajectory step plus the supplied
/// noise, clipped to the trust scale. Returns the reported trust.
fn step_trust(
    trust: f64,
    params: &ArchetypeParams,
    low: bool,
    after_first_low: bool,
    pedestrian: bool,
    noise: f64,
) -> f64 {
    let mut t = trust;
    t += if low {
        params.error_drop
    } else if after_first_low {
        params.repair_slope
    } else {
        params.build_slope
    };
    if pedestrian {
        t -= params.pedestrian_penalty;
    }
    t += noise;
    t.clamp(TRUST_MIN, TRUST_MAX)
}

/// Trust reports for one drive given the pre-drive trust and per-step
/// noise draws (`noise.len()` must equal the number of intersections).
pub fn trust_trajectory(
    initial_trust: f64,
    params: &ArchetypeParams,
    drive: &crate::data::DriveConfig,
    noise: &[f64],
) -> Vec<f64> {
    let mut t = initial_trust;
    let mut seen_low = false;
    drive
        .intersections
        .iter()
        .zip(noise)
        .map(|(ic, &n)| {
            let low = ic.reliability == Level::Low;
            t = step_trust(t, params, low, seen_low, ic.pedestrian, n);
            seen_low |= low;
            t
        })
        .collect()
}

fn participant_id(i: usize) -> String {
    format!("P{:04}", i + 1)
}

struct Demographics {
    age: u32,
    gender: Gender,
    driving_style: DrivingStyle,
    prior_experience_score: u8,
}

fn sample_demographics(rng: &mut ChaCha8Rng, archetype: Archetype, correlation: f64) -> Demographics {
    let tie = rng.random::<f64>() < correlation;
    let independent_age = rng.random_range(19..=77u32);
    let gender = if rng.random_bool(0.5) {
        Gender::Male
    } else {
        Gender::Female
    };
    let independent_style = if rng.random_bool(0.5) {
        DrivingStyle::Aggressive
    } else {
        DrivingStyle::Conservative
    };
    let prior_experience_score = rng.random_range(1..=7u8);
    let (age, driving_style) = if tie {
        match archetype {
            Archetype::Confident => (19 + independent_age % 21, DrivingStyle::Aggressive),
            Archetype::Skeptical => (40 + independent_age % 38, DrivingStyle::Conservative),
        }
    } else {
        (independent_age, independent_style)
    };
    Demographics {
        age,
        gender,
        driving_style,
        prior_experience_score,
    }
}

/// Archetype labels: exactly `round(n * fraction)` confident participants,
/// shuffled.
fn archetype_labels(rng: &mut ChaCha8Rng, n: usize, fraction: f64) -> Vec<Archetype> {
    let n_conf = ((n as f64) * fraction).round() as usize;
    let mut labels: Vec<Archetype> = (0..n)
        .map(|i| {
            if i < n_conf {
                Archetype::Confident
            } else {
                Archetype::Skeptical
            }
        })
        .collect();
    labels.shuffle(rng);
    labels
}

pub fn generate_population(spec: &PopulationSpec) -> Result<Dataset, SynthError> {
    generate_population_with(spec, &Catalog::builtin())
}

/// Generates a population against a possibly overridden catalog.
///
/// Drive types are assigned round-robin over `spec.drive_types`; archetypes
/// are shuffled independently, so every drive sees both archetypes.
pub fn generate_population_with(
    spec: &PopulationSpec,
    catalog: &Catalog,
) -> Result<Dataset, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels = archetype_labels(&mut rng, spec.n_participants, spec.confident_fraction);
    let mut participants = Vec::with_capacity(spec.n_participants);
    for (i, &archetype) in labels.iter().enumerate() {
        let drive_type = spec.drive_types[i % spec.drive_types.len()];
        let drive = catalog.get(drive_type);
        let params = spec.archetypes.get(archetype);
        let demo = sample_demographics(&mut rng, archetype, spec.demographic_correlation);

        let z: f64 = StandardNormal.sample(&mut rng);
        let initial = params.initial_trust_mean + params.initial_trust_sd * z;
        let noise: Vec<f64> = (0..drive.intersections.len())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                params.noise_sd * z
            })
            .collect();
        let trust = trust_trajectory(initial, params, drive, &noise);
        let events = trust
            .iter()
            .enumerate()
            .map(|(k, &t)| EventObservation {
                intersection_index: k + 1,
                trust_report: t,
                takeover: rng.random::<f64>() < params.takeover_probability(t),
            })
            .collect();
        participants.push(ParticipantRecord {
            participant_id: participant_id(i),
            drive_type,
            age: demo.age,
            gender: demo.gender,
            driving_style: demo.driving_style,
            prior_experience_score: demo.prior_experience_score,
            events,
            ground_truth_cluster: Some(archetype),
        });
    }
    Ok(Dataset::new(participants, Provenance::Synthetic, catalog)?)
}

/// Population drawn from the state-space trust model itself.
///
/// `params` are in raw trust units (0–100 scale). The first report is drawn
/// as `T_1 ~ N(x0_mean, x0_var)`; later reports follow
/// `T_k = A T_{k-1} + B [v, t, p, f, 1]_k + w_k` with `w_k ~ N(0, Q)`.
/// The take-over at k is `Bernoulli(Sig(C T_k + C_b))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceSpec {
    pub n_participants: usize,
    pub params: SsParams,
    pub drive_types: Vec<DriveType>,
    pub seed: u64,
}

impl StateSpaceSpec {
    /// A configuration whose trajectories stay well inside the trust scale.
    pub fn reference(n_participants: usize, seed: u64) -> Self {
        StateSpaceSpec {
            n_participants,
            params: SsParams {
                a: 0.7,
                b: [2.0, 3.0, -4.0, 15.0, 6.0],
                c: -0.1,
                c_b: 5.0,
                q: 4.0,
                x0_mean: 70.0,
                x0_var: 64.0,
            },
            drive_types: DriveType::ANALYZABLE.to_vec(),
            seed,
        }
    }
}

/// Simulates [`StateSpaceSpec`]. Fails with `InvalidSpec` if any trajectory
/// leaves [0, 100], since clipping would break the linear model.
pub fn generate_state_space_population(spec: &StateSpaceSpec) -> Result<Dataset, SynthError> {
    if spec.n_participants < 2 || spec.drive_types.is_empty() {
        return Err(SynthError::InvalidSpec(
            "need at least 2 participants and one drive type".into(),
        ));
    }
    if spec.params.q < 0.0 || spec.params.x0_var < 0.0 {
        return Err(SynthError::InvalidSpec("variances must be >= 0".into()));
    }
    let catalog = Catalog::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = &spec.params;
    let mut participants = Vec::with_capacity(spec.n_participants);
    for i in 0..spec.n_participants {
        let drive_type = spec.drive_types[i % spec.drive_types.len()];
        let drive = catalog.get(drive_type);
        let demo = sample_demographics(&mut rng, Archetype::Confident, 0.0);
        let mut trust = 0.0;
        let mut events = Vec::with_capacity(drive.intersections.len());
        for ic in &drive.intersections {
            let z: f64 = StandardNormal.sample(&mut rng);
            trust = if ic.index == 1 {
                p.x0_mean + p.x0_var.sqrt() * z
            } else {
                let u = crate::models::ss_inputs(drive, ic.index);
                p.a * trust + dot(&p.b, &u) + p.q.sqrt() * z
            };
            if !(TRUST_MIN..=TRUST_MAX).contains(&trust) {
                return Err(SynthError::InvalidSpec(format!(
                    "participant {} leaves the trust scale ({trust:.2}) at intersection {}",
                    participant_id(i),
                    ic.index
                )));
            }
            let takeover = rng.random::<f64>() < sigmoid(p.c * trust + p.c_b);
            events.push(EventObservation {
                intersection_index: ic.index,
                trust_report: trust,
                takeover,
            });
        }
        participants.push(ParticipantRecord {
            participant_id: participant_id(i),
            drive_type,
            age: demo.age,
            gender: demo.gender,
            driving_style: demo.driving_style,
            prior_experience_score: demo.prior_experience_score,
            events,
            ground_truth_cluster: None,
        });
    }
    Ok(Dataset::new(participants, Provenance::Synthetic, &catalog)?)
}

fn dot(a: &[f64; SS_INPUTS], b: &[f64; SS_INPUTS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{events_to_csv, participants_to_csv};

    fn noiseless(initial: f64, build: f64) -> ArchetypeParams {
        ArchetypeParams {
            initial_trust_mean: initial,
            initial_trust_sd: 0.0,
            build_slope: build,
            error_drop: -10.0,
            repair_slope: 1.5,
            pedestrian_penalty: 0.0,
            takeover_gain: 6.0,
            takeover_offset: 0.0,
            noise_sd: 0.0,
        }
    }

    fn drive_g_spec(params: ArchetypeParams) -> PopulationSpec {
        PopulationSpec {
            n_participants: 4,
            confident_fraction: 0.5,
            archetypes: Archetypes {
                confident: params,
                skeptical: params,
            },
            drive_types: vec![DriveType::G],
            seed: 1,
            demographic_correlation: 0.0,
        }
    }

    #[test]
    fn noiseless_drive_g_recurrence() {
        let d = generate_population(&drive_g_spec(noiseless(80.0, 2.0))).unwrap();
        let expected = [82.0, 84.0, 86.0, 88.0, 90.0, 80.0, 81.5, 83.0, 84.5, 74.5];
        for p in &d.participants {
            assert_eq!(p.trust(), expected);
        }
    }

    #[test]
    fn trajectory_clips_at_scale_top() {
        let d = generate_population(&drive_g_spec(noiseless(100.0, 5.0))).unwrap();
        let t = d.participants[0].trust();
        assert_eq!(&t[..5], &[100.0; 5]);
        assert_eq!(t[5], 90.0);
    }

    #[test]
    fn pedestrian_penalty_follows_slope_update() {
        let mut params = noiseless(50.0, 2.0);
        params.pedestrian_penalty = 4.0;
        let g = Catalog::builtin().get(DriveType::G).clone();
        let t = trust_trajectory(50.0, &params, &g, &[0.0; 10]);
        // intersection 1 has a pedestrian, 6 is low with a pedestrian
        assert_eq!(t[0], 48.0);
        assert_eq!(t[4], 56.0);
        assert_eq!(t[5], 56.0 - 10.0 - 4.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = PopulationSpec {
            seed: 7,
            ..Default::default()
        };
        let a = generate_population(&spec).unwrap();
        let b = generate_population(&spec).unwrap();
        assert_eq!(participants_to_csv(&a), participants_to_csv(&b));
        assert_eq!(events_to_csv(&a), events_to_csv(&b));
        let c = generate_population(&PopulationSpec {
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(events_to_csv(&a), events_to_csv(&c));
    }

    #[test]
    fn default_archetype_ordering() {
        let a = default_archetypes();
        assert!(a.confident.initial_trust_mean > a.skeptical.initial_trust_mean);
        assert!(a.confident.error_drop.abs() < a.skeptical.error_drop.abs());
        assert!(a.confident.repair_slope > a.skeptical.repair_slope);
        assert!(a.skeptical.initial_trust_mean < 77.0 && 77.0 < a.confident.initial_trust_mean);
        assert!((a.confident.takeover_probability(80.0) - 0.05).abs() < 1e-12);
        assert!((a.skeptical.takeover_probability(40.0) - 0.40).abs() < 1e-12);
    }

    #[test]
    fn default_population_shape() {
        let d = generate_population(&PopulationSpec::default()).unwrap();
        assert_eq!(d.len(), 200);
        let n_conf = d
            .participants
            .iter()
            .filter(|p| p.ground_truth_cluster == Some(Archetype::Confident))
            .count();
        assert_eq!(n_conf, 148);
        assert!(d
            .participants
            .iter()
            .all(|p| p.age >= 19 && p.age <= 77 && p.drive_type.is_analyzable()));
    }

    #[test]
    fn initial_trust_law_of_large_numbers() {
        let arch = default_archetypes();
        let mut conf = arch.confident;
        conf.build_slope = 0.0;
        conf.pedestrian_penalty = 0.0;
        conf.noise_sd = 0.0;
        // intersection 1 of drive D is high reliability without pedestrians,
        // so its report is the initial draw itself
        let spec = PopulationSpec {
            n_participants: 10_000,
            confident_fraction: 0.9999,
            archetypes: Archetypes {
                confident: conf,
                skeptical: conf,
            },
            drive_types: vec![DriveType::D],
            seed: 3,
            demographic_correlation: 0.0,
        };
        let d = generate_population(&spec).unwrap();
        let mean = d.participants.iter().map(|p| p.events[0].trust_report).sum::<f64>()
            / d.len() as f64;
        assert!((mean - conf.initial_trust_mean).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = [
            PopulationSpec {
                n_participants: 1,
                ..Default::default()
            },
            PopulationSpec {
                confident_fraction: 1.0,
                ..Default::default()
            },
            PopulationSpec {
                drive_types: vec![],
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(matches!(
                generate_population(&spec),
                Err(SynthError::InvalidSpec(_))
            ));
        }
    }

    #[test]
    fn spec_parses_partial_toml() {
        let spec = PopulationSpec::from_toml_str("n_participants = 50\nseed = 9\n").unwrap();
        assert_eq!(spec.n_participants, 50);
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.archetypes, default_archetypes());
        let round = PopulationSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        assert_eq!(round, spec);
        assert!(PopulationSpec::from_toml_str("bogus = 1\n").is_err());
    }

    #[test]
    fn state_space_population_stays_on_scale() {
        let d = generate_state_space_population(&StateSpaceSpec::reference(300, 1)).unwrap();
        assert_eq!(d.len(), 300);
        let takeovers = d
            .participants
            .iter()
            .flat_map(|p| p.takeovers())
            .filter(|&b| b)
            .count();
        assert!(takeovers > 100 && takeovers < 2900);
    }
}
