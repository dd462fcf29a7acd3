//! Two-sample Welch t-test and order statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

use super::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Unequal-variance two-sample t-test with Welch–Satterthwaite degrees of
/// freedom.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult, ClusterError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(ClusterError::DegenerateSample(format!(
            "sample sizes {} and {} (need >= 2 each)",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let sa = va / a.len() as f64;
    let sb = vb / b.len() as f64;
    let se2 = sa + sb;
    if !(se2 > 0.0) {
        return Err(ClusterError::DegenerateSample("zero variance in both samples".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    // P(|T| > |t|) = I_{df / (df + t^2)}(df / 2, 1 / 2)
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
    })
}

/// Two-sided critical value of Student's t for confidence `level`.
pub fn t_critical(level: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0)
}

/// Quantile with linear interpolation between order statistics
/// (position `q * (n - 1)` in the sorted sample).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn five_number(sample: &[f64]) -> FiveNumber {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    FiveNumber {
        min: s[0],
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
        max: s[s.len() - 1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-sided tail of Student's t by Simpson integration of the density,
    /// independent of the incomplete-beta route.
    fn t_tail_by_quadrature(t: f64, df: f64) -> f64 {
        let ln_norm = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
            - statrs::function::gamma::ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |x: f64| (ln_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let n = 20_000;
        let h = t.abs() / n as f64;
        let mut s = pdf(0.0) + pdf(t.abs());
        for i in 1..n {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let central = s * h / 3.0;
        1.0 - 2.0 * central
    }

    #[test]
    fn identical_samples() {
        let r = welch_ttest(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn shifted_five_point_samples() {
        let r = welch_ttest(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((r.t_statistic + 1.0).abs() < 1e-12);
        assert!((r.degrees_of_freedom - 8.0).abs() < 1e-12);
        let oracle = t_tail_by_quadrature(1.0, 8.0);
        assert!((oracle - 0.346593).abs() < 1e-5, "oracle {oracle}");
        assert!((r.p_value - oracle).abs() < 1e-8);
    }

    #[test]
    fn unequal_variance_dof() {
        let a = [10.0, 12.0, 9.0, 11.0];
        let b = [20.0, 35.0, 5.0, 28.0, 14.0, 40.0];
        let r = welch_ttest(&a, &b).unwrap();
        let oracle = t_tail_by_quadrature(r.t_statistic, r.degrees_of_freedom);
        assert!((r.p_value - oracle).abs() < 1e-7);
        assert!(r.degrees_of_freedom < (a.len() + b.len() - 2) as f64);
    }

    #[test]
    fn degenerate_samples() {
        assert!(matches!(
            welch_ttest(&[0.0; 4], &[0.0; 4]),
            Err(ClusterError::DegenerateSample(_))
        ));
        assert!(matches!(
            welch_ttest(&[1.0], &[0.0, 2.0]),
            Err(ClusterError::DegenerateSample(_))
        ));
    }

    #[test]
    fn quantiles_of_one_to_five() {
        let f = five_number(&[5.0, 3.0, 1.0, 4.0, 2.0]);
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }

    #[test]
    fn critical_values() {
        assert!((t_critical(0.95, 8.0) - 2.306004).abs() < 1e-5);
        assert!((t_critical(0.95, 1.0) - 12.7062).abs() < 1e-3);
    }
}
