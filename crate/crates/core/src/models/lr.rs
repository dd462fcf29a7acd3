use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{lag_inputs, ModelError, TrustScaler};
use crate::data::{Catalog, DriveConfig, ParticipantRecord};

/// Ridge added to non-intercept coefficients when the normal matrix is
/// singular.
pub const LR_RIDGE: f64 = 1e-6;

/// Relative eigenvalue below which the normal matrix counts as singular.
const SINGULAR_RCOND: f64 = 1e-12;

/// Coefficient names, intercept first. Lag 1 is the previous intersection.
pub const LR_REGRESSORS: [&str; 13] = [
    "intercept",
    "visibility_lag1",
    "transparency_lag1",
    "pedestrian_lag1",
    "reliability_lag1",
    "trust_lag1",
    "takeover_lag1",
    "visibility_lag2",
    "transparency_lag2",
    "pedestrian_lag2",
    "reliability_lag2",
    "trust_lag2",
    "takeover_lag2",
];

/// First intersection (1-based) with two predecessors.
const FIRST_TARGET: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: DVector<f64>,
    pub ridge_applied: bool,
}

/// Least squares on `design` (first column is the intercept). When
/// `ridge_if_singular` is set and XᵀX is numerically singular, [`LR_RIDGE`]
/// is added to every diagonal entry except the intercept's.
pub fn least_squares(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    ridge_if_singular: bool,
) -> Result<LeastSquares, ModelError> {
    if design.nrows() != target.len() {
        return Err(ModelError::LengthMismatch(format!(
            "{} design rows, {} targets",
            design.nrows(),
            target.len()
        )));
    }
    solve_normal(
        design.transpose() * design,
        design.transpose() * target,
        ridge_if_singular,
    )
}

/// Solves the normal equations `XᵀX b = Xᵀy` with the same singularity
/// handling as [`least_squares`].
pub fn solve_normal(
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    ridge_if_singular: bool,
) -> Result<LeastSquares, ModelError> {
    let eig = SymmetricEigen::new(xtx.clone());
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    let singular = !(max > 0.0) || min <= SINGULAR_RCOND * max;
    let mut normal = xtx;
    if singular {
        if !ridge_if_singular {
            return Err(ModelError::Singular(format!(
                "normal matrix eigenvalues span [{min:e}, {max:e}]"
            )));
        }
        for j in 1..normal.ncols() {
            normal[(j, j)] += LR_RIDGE;
        }
    }
    let coefficients = match normal.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => normal
            .lu()
            .solve(&xty)
            .ok_or_else(|| ModelError::Singular("normal equations".into()))?,
    };
    Ok(LeastSquares {
        coefficients,
        ridge_applied: singular,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    /// 13 entries in [`LR_REGRESSORS`] order.
    pub coefficients: Vec<f64>,
    pub scaler: TrustScaler,
    pub ridge_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrPrediction {
    /// Intersections 3..=10.
    pub intersections: Vec<usize>,
    pub z: Vec<f64>,
    pub raw: Vec<f64>,
}

/// Design rows and standardized targets for intersections 3..=10 of one
/// record.
pub fn lr_design(
    record: &ParticipantRecord,
    drive: &DriveConfig,
    scaler: &TrustScaler,
) -> (Vec<[f64; 13]>, Vec<f64>) {
    let inputs = lag_inputs(record, drive, scaler);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for k in FIRST_TARGET..=inputs.len() {
        let mut row = [0.0; 13];
        row[0] = 1.0;
        row[1..7].copy_from_slice(&inputs[k - 2].as_array());
        row[7..13].copy_from_slice(&inputs[k - 3].as_array());
        rows.push(row);
        targets.push(inputs[k - 1].trust_std);
    }
    (rows, targets)
}

pub fn fit_lr(records: &[&ParticipantRecord], catalog: &Catalog) -> Result<LrModel, ModelError> {
    let scaler = TrustScaler::fit(records.iter().copied());
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for r in records {
        let (x, y) = lr_design(r, catalog.get(r.drive_type), &scaler);
        rows.extend(x);
        targets.extend(y);
    }
    if rows.len() < 14 {
        return Err(ModelError::InsufficientData(format!(
            "{} regression samples, need at least 14",
            rows.len()
        )));
    }
    let design = DMatrix::from_fn(rows.len(), 13, |i, j| rows[i][j]);
    let fit = least_squares(&design, &DVector::from_vec(targets), true)?;
    if fit.ridge_applied {
        log::debug!("LR: singular design, ridge {LR_RIDGE} applied");
    }
    Ok(LrModel {
        coefficients: fit.coefficients.iter().copied().collect(),
        scaler,
        ridge_applied: fit.ridge_applied,
    })
}

/// One-step-ahead predictions for intersections 3..=10 using the observed
/// trust and take-overs of the two previous intersections.
pub fn predict_lr(model: &LrModel, record: &ParticipantRecord, drive: &DriveConfig) -> LrPrediction {
    let (rows, _) = lr_design(record, drive, &model.scaler);
    let z: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().zip(&model.coefficients).map(|(x, b)| x * b).sum())
        .collect();
    LrPrediction {
        intersections: (FIRST_TARGET..FIRST_TARGET + z.len()).collect(),
        raw: z.iter().map(|&v| model.scaler.destandardize(v)).collect(),
        z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DriveType, DrivingStyle, EventObservation, Gender};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(id: &str, drive: DriveType, trust: &[f64], takeover: &[bool]) -> ParticipantRecord {
        ParticipantRecord {
            participant_id: id.into(),
            drive_type: drive,
            age: 30,
            gender: Gender::Male,
            driving_style: DrivingStyle::Aggressive,
            prior_experience_score: 4,
            events: (0..10)
                .map(|i| EventObservation {
                    intersection_index: i + 1,
                    trust_report: trust[i],
                    takeover: takeover[i],
                })
                .collect(),
            ground_truth_cluster: None,
        }
    }

    #[test]
    fn exact_linear_rule_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = DVector::from_fn(13, |j, _| (j as f64 - 6.0) * 0.3);
        let x = DMatrix::from_fn(200, 13, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
        let y = &x * &truth;
        let fit = least_squares(&x, &y, true).unwrap();
        assert!(!fit.ridge_applied);
        assert!((fit.coefficients - truth).amax() < 1e-6);
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(80, 6, |_, j| if j == 0 { 1.0 } else { rng.random_range(-3.0..3.0) });
        let y = DVector::from_fn(80, |_, _| rng.random_range(-5.0..5.0));
        let fit = least_squares(&x, &y, false).unwrap();
        let resid = &y - &x * &fit.coefficients;
        for col in x.column_iter() {
            let rel = resid.dot(&col) / (resid.norm() * col.norm());
            assert!(rel.abs() < 1e-6);
        }
    }

    #[test]
    fn singular_without_ridge_is_an_error() {
        let x = DMatrix::from_fn(10, 3, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(10, |i, _| i as f64);
        assert!(matches!(least_squares(&x, &y, false), Err(ModelError::Singular(_))));
        let fit = least_squares(&x, &y, true).unwrap();
        assert!(fit.ridge_applied);
        // the duplicated column shares the slope
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-4);
        assert!((fit.coefficients[2] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn constant_trust_gives_zero_model() {
        let cat = Catalog::builtin();
        let rs: Vec<ParticipantRecord> = (0..4)
            .map(|i| {
                let tk: Vec<bool> = (0..10).map(|k| (k + i) % 3 == 0).collect();
                record(&format!("p{i}"), DriveType::ANALYZABLE[i], &[60.0; 10], &tk)
            })
            .collect();
        let refs: Vec<&ParticipantRecord> = rs.iter().collect();
        let m = fit_lr(&refs, &cat).unwrap();
        assert!(m.ridge_applied);
        assert_eq!(m.scaler.sd, 1.0);
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-12));
        let p = predict_lr(&m, &rs[0], cat.get(rs[0].drive_type));
        assert!(p.raw.iter().all(|&v| (v - 60.0).abs() < 1e-9));
    }

    #[test]
    fn constructed_models_predict_as_expected() {
        let cat = Catalog::builtin();
        let trust: Vec<f64> = (0..10).map(|i| 40.0 + 3.0 * i as f64).collect();
        let r = record("p", DriveType::G, &trust, &[false; 10]);
        let scaler = TrustScaler { mean: 50.0, sd: 10.0 };
        let mut coefficients = vec![0.0; 13];
        coefficients[5] = 1.0;
        let lag1 = LrModel {
            coefficients,
            scaler,
            ridge_applied: false,
        };
        let p = predict_lr(&lag1, &r, cat.get(DriveType::G));
        assert_eq!(p.z.len(), 8);
        assert_eq!(p.intersections, (3..=10).collect::<Vec<_>>());
        for (k, raw) in p.intersections.iter().zip(&p.raw) {
            assert!((raw - trust[k - 2]).abs() < 1e-12);
        }
        let zero = LrModel {
            coefficients: vec![0.0; 13],
            scaler,
            ridge_applied: false,
        };
        let p = predict_lr(&zero, &r, cat.get(DriveType::G));
        assert!(p.z.iter().all(|&z| z == 0.0));
        assert!(p.raw.iter().all(|&v| v == 50.0));
    }

    #[test]
    fn too_little_data() {
        let r = record("p", DriveType::G, &[50.0; 10], &[false; 10]);
        assert!(matches!(
            fit_lr(&[&r], &Catalog::builtin()),
            Err(ModelError::InsufficientData(_))
        ));
    }
}
