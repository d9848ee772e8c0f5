//! Epsilon schedules and growth classification of sampled seminorms.
//!
//! Membership in the moderate, negligible and log-scale net spaces is an
//! asymptotic statement as epsilon goes to 0. Here it is estimated from a
//! finite, decreasing schedule: a least-squares slope of `log(value)` against
//! `log(1/eps)` over the smallest epsilons, plus an affine fit in `ln(1/eps)`.
//! A classification is "verified up to order m_max" on that schedule, never a proof.
//!
//! Values at or below a per-epsilon noise floor are treated as exact zeros.
//! A sequence whose tail is zero is classified negligible at the maximal order.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::genfunc::{self, RepNet};
use crate::quadrature::{AxisBox, Rule};

/// Finite, strictly decreasing sample of epsilon in (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EpsilonSchedule {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for EpsilonSchedule {
    type Error = crate::error::Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        EpsilonSchedule::new(v)
    }
}

impl From<EpsilonSchedule> for Vec<f64> {
    fn from(s: EpsilonSchedule) -> Vec<f64> {
        s.values
    }
}

impl Default for EpsilonSchedule {
    /// `2^-4 .. 2^-14`.
    fn default() -> Self {
        make_schedule(4, 14, 2.0).expect("default schedule")
    }
}

impl EpsilonSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 4 {
            return arg(format!("schedule needs at least 4 values, got {}", values.len()));
        }
        if values.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return arg("schedule values must lie in (0, 1]");
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return arg("schedule must be strictly decreasing");
        }
        Ok(EpsilonSchedule { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn smallest(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn largest(&self) -> f64 {
        self.values[0]
    }
}

/// `{base^-k : k = k_min..=k_max}`.
pub fn make_schedule(k_min: i32, k_max: i32, base: f64) -> Result<EpsilonSchedule> {
    if k_min < 0 || k_min >= k_max {
        return arg(format!("invalid exponent range {k_min}..{k_max}"));
    }
    if !(base > 1.0) {
        return arg(format!("base must exceed 1, got {base}"));
    }
    EpsilonSchedule::new((k_min..=k_max).map(|k| base.powi(-k)).collect())
}

/// Knobs shared by every classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub schedule: EpsilonSchedule,
    pub m_max: u32,
    pub slope_tol: f64,
    /// Number of smallest-epsilon samples used by the slope fit.
    pub window: usize,
    /// Relative roundoff floor applied to seminorms of computed nets.
    pub noise_rel: f64,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            schedule: EpsilonSchedule::default(),
            m_max: 4,
            slope_tol: 0.25,
            window: 6,
            noise_rel: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    /// Per-epsilon absolute noise floor; values at or below it count as zero.
    pub floors: Vec<f64>,
    /// Slope of `ln(value)` against `ln(1/eps)`; `-inf` when the tail is zero.
    pub fitted_slope: f64,
    pub fit_r2: f64,
    /// Slope of `value` against `ln(1/eps)` (affine fit).
    pub log_fit_coeff: f64,
    pub log_fit_intercept: f64,
    /// RMS residual of the affine log fit relative to the mean value.
    pub log_fit_rel_residual: f64,
    pub positive_count: usize,
    /// The smallest epsilons all sit at or below the noise floor.
    pub vanishes: bool,
    pub indeterminate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case")]
pub enum GrowthClass {
    Moderate { n: u32 },
    Negligible { verified_order: u32 },
    LogScale { k: f64 },
    Indeterminate,
}

impl GrowthClass {
    pub fn is_negligible_to(&self, m: u32) -> bool {
        matches!(self, GrowthClass::Negligible { verified_order } if *verified_order >= m)
    }

    pub fn label(&self) -> String {
        match self {
            GrowthClass::Moderate { n } => format!("moderate({n})"),
            GrowthClass::Negligible { verified_order } => format!("negligible({verified_order})"),
            GrowthClass::LogScale { k } => format!("log-scale({k:.4})"),
            GrowthClass::Indeterminate => "indeterminate".to_string(),
        }
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r2 = if syy <= 1e-24 * n * my.abs().max(1.0).powi(2) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

/// Fits with exact-zero floors and the default window.
pub fn fit_growth(values: &[f64], schedule: &EpsilonSchedule) -> Result<SeminormReport> {
    fit_growth_with(values, &vec![0.0; values.len()], schedule, Policy::default().window)
}

pub fn fit_growth_with(
    values: &[f64],
    floors: &[f64],
    schedule: &EpsilonSchedule,
    window: usize,
) -> Result<SeminormReport> {
    if values.len() != schedule.len() || floors.len() != values.len() {
        return arg(format!(
            "{} values for a schedule of {}",
            values.len(),
            schedule.len()
        ));
    }
    if values.iter().any(|v| v.is_nan() || *v < 0.0) {
        return arg("seminorm values must be non-negative numbers");
    }
    let eps = schedule.values();
    let is_pos: Vec<bool> = values.iter().zip(floors).map(|(v, f)| *v > *f).collect();
    let positives: Vec<usize> = (0..values.len()).filter(|&i| is_pos[i]).collect();
    let trailing_zero = is_pos.iter().rev().take_while(|p| !**p).count();
    let vanishes = positives.is_empty() || trailing_zero >= 2;

    let (fitted_slope, fit_r2) = if positives.is_empty() {
        (f64::NEG_INFINITY, 1.0)
    } else if positives.len() >= 2 {
        let take = &positives[positives.len().saturating_sub(window.max(2))..];
        let xs: Vec<f64> = take.iter().map(|&i| (1.0 / eps[i]).ln()).collect();
        let ys: Vec<f64> = take.iter().map(|&i| values[i].ln()).collect();
        let (s, _, r2) = linear_fit(&xs, &ys);
        (s, r2)
    } else if vanishes {
        (f64::NEG_INFINITY, 1.0)
    } else {
        (f64::NAN, 0.0)
    };

    let start = values.len().saturating_sub(window.max(2));
    let xs: Vec<f64> = eps[start..].iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = (start..values.len())
        .map(|i| if is_pos[i] { values[i] } else { 0.0 })
        .collect();
    let (k, c, _) = linear_fit(&xs, &ys);
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - c - k * x).powi(2))
        .sum::<f64>()
        / ys.len() as f64)
        .sqrt();
    let rel = if mean > 0.0 { rms / mean } else { 0.0 };

    Ok(SeminormReport {
        epsilons: eps.to_vec(),
        values: values.to_vec(),
        floors: floors.to_vec(),
        fitted_slope,
        fit_r2,
        log_fit_coeff: k,
        log_fit_intercept: c,
        log_fit_rel_residual: rel,
        positive_count: positives.len(),
        vanishes,
        indeterminate: positives.len() < 4 && !vanishes,
    })
}

/// Minimum r^2 for a power-law fit to support a moderate classification.
const MODERATE_MIN_R2: f64 = 0.5;

pub fn classify(report: &SeminormReport, m_max: u32, slope_tol: f64) -> GrowthClass {
    if report.vanishes {
        return GrowthClass::Negligible { verified_order: m_max };
    }
    if report.indeterminate || report.fitted_slope.is_nan() {
        return GrowthClass::Indeterminate;
    }
    let s = report.fitted_slope;
    if s <= -1.0 + slope_tol {
        let m = (1..=m_max).rev().find(|&m| s <= -(m as f64) + slope_tol).unwrap_or(1);
        return GrowthClass::Negligible { verified_order: m };
    }
    let window_len = report.values.len().min(6);
    let tail = &report.values[report.values.len() - window_len..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let l_max = (1.0 / report.epsilons.last().copied().unwrap_or(1.0)).ln();
    let k = report.log_fit_coeff;
    if report.log_fit_rel_residual < slope_tol
        && s < slope_tol
        && k > 0.0
        && mean > 0.0
        && k * l_max / mean > slope_tol
    {
        return GrowthClass::LogScale { k };
    }
    if report.fit_r2 >= MODERATE_MIN_R2 || s <= 0.0 {
        let n = (s - slope_tol).max(0.0).ceil() as u32;
        return GrowthClass::Moderate { n };
    }
    GrowthClass::Indeterminate
}

/// Which seminorm a difference check measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SeminormSelector {
    /// `p_{K,l}`: sup over grid nodes of all derivatives of order <= l.
    Sup { l: usize, rule: Rule },
    /// Sobolev-type `sum_{|alpha|<=m} ||d^alpha u||_2`.
    Sobolev { m: usize, rule: Rule },
}

pub(crate) fn seminorm_on(
    u: &RepNet,
    sel: SeminormSelector,
    bbox: &AxisBox,
    policy: &Policy,
) -> Result<SeminormReport> {
    match sel {
        SeminormSelector::Sup { l, rule } => {
            let grid = crate::quadrature::grid_unchecked(bbox, rule);
            genfunc::seminorm_pkl(u, bbox, l, &grid, policy)
        }
        SeminormSelector::Sobolev { m, rule } => {
            let grid = crate::quadrature::grid_unchecked(bbox, rule);
            genfunc::seminorm_hm(u, m, &grid, policy)
        }
    }
}

/// Equality in the quotient: is `a - b` negligible up to order `m_max` on `bbox`?
pub fn is_null_difference(
    a: &RepNet,
    b: &RepNet,
    sel: SeminormSelector,
    bbox: &AxisBox,
    m_max: u32,
    policy: &Policy,
) -> Result<(bool, SeminormReport)> {
    let diff = genfunc::sub(a, b)?;
    let report = seminorm_on(&diff, sel, bbox, policy)?;
    let class = classify(&report, m_max, policy.slope_tol);
    Ok((class.is_negligible_to(m_max), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn powers(s: &EpsilonSchedule, p: f64) -> Vec<f64> {
        s.iter().map(|e| e.powf(p)).collect()
    }

    #[test]
    fn schedules() {
        let s = make_schedule(4, 12, 2.0).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s.values()[0], 2f64.powi(-4));
        assert_eq!(s.smallest(), 2f64.powi(-12));
        let s = make_schedule(0, 3, 10.0).unwrap();
        let expected = [1.0, 0.1, 0.01, 0.001];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-18);
        }
        assert!(make_schedule(5, 5, 2.0).is_err());
        assert!(make_schedule(0, 2, 2.0).is_err());
        assert!(make_schedule(0, 5, 1.0).is_err());
    }

    #[test]
    fn power_law_slopes() {
        let s = EpsilonSchedule::default();
        let r = fit_growth(&powers(&s, -2.0), &s).unwrap();
        assert!((r.fitted_slope - 2.0).abs() < 1e-12 && (r.fit_r2 - 1.0).abs() < 1e-12);
        let r = fit_growth(&powers(&s, 3.0), &s).unwrap();
        assert!((r.fitted_slope + 3.0).abs() < 1e-12);
        let logs: Vec<f64> = s.iter().map(|e| 5.0 * (1.0 / e).ln()).collect();
        let r = fit_growth(&logs, &s).unwrap();
        assert!((r.log_fit_coeff - 5.0).abs() < 1e-12);
    }

    #[test]
    fn classification_examples() {
        let s = EpsilonSchedule::default();
        let r = fit_growth(&powers(&s, -1.5), &s).unwrap();
        assert_eq!(classify(&r, 4, 0.25), GrowthClass::Moderate { n: 2 });
        let r = fit_growth(&powers(&s, 4.0), &s).unwrap();
        assert_eq!(classify(&r, 3, 0.25), GrowthClass::Negligible { verified_order: 3 });
        let logs: Vec<f64> = s.iter().map(|e| 2.0 * e.ln().abs()).collect();
        let r = fit_growth(&logs, &s).unwrap();
        match classify(&r, 4, 0.25) {
            GrowthClass::LogScale { k } => assert!((k - 2.0).abs() < 1e-10),
            other => panic!("expected log-scale, got {other:?}"),
        }
        // the exact log samples leave no residual
        assert!(r.log_fit_rel_residual < 1e-12);
    }

    #[test]
    fn integer_powers_classify_exactly() {
        let s = EpsilonSchedule::default();
        for n in 0..=6 {
            let r = fit_growth(&powers(&s, -(n as f64)), &s).unwrap();
            assert_eq!(classify(&r, 4, 0.25), GrowthClass::Moderate { n }, "n = {n}");
        }
    }

    #[test]
    fn zeros_and_short_reports() {
        let s = EpsilonSchedule::default();
        let r = fit_growth(&vec![0.0; s.len()], &s).unwrap();
        assert_eq!(classify(&r, 4, 0.25), GrowthClass::Negligible { verified_order: 4 });
        assert_eq!(r.fitted_slope, f64::NEG_INFINITY);
        // three positive values followed by a non-zero tail is indeterminate
        let mut v = vec![0.0; s.len()];
        v[s.len() - 1] = 1.0;
        v[s.len() - 3] = 1.0;
        v[s.len() - 5] = 1.0;
        let r = fit_growth(&v, &s).unwrap();
        assert!(r.indeterminate);
        assert_eq!(classify(&r, 4, 0.25), GrowthClass::Indeterminate);
        assert!(fit_growth(&[1.0; 3], &s).is_err());
    }

    #[test]
    fn floors_zero_out_noise() {
        let s = EpsilonSchedule::default();
        let mut v = powers(&s, 6.0);
        let floors = vec![1e-13; s.len()];
        for (x, f) in v.iter_mut().zip(&floors) {
            if *x < *f {
                *x = 0.5 * f;
            }
        }
        let r = fit_growth_with(&v, &floors, &s, 6).unwrap();
        assert!(r.vanishes);
        assert!(r.fitted_slope < -5.9 && r.fitted_slope > -6.1);
        assert!(classify(&r, 4, 0.25).is_negligible_to(4));
    }

    proptest! {
        #[test]
        fn scaling_preserves_class(n in 0u32..6, c in 1e-3f64..1e3) {
            let s = EpsilonSchedule::default();
            let base = powers(&s, -(n as f64));
            let scaled: Vec<f64> = base.iter().map(|v| v * c).collect();
            let a = classify(&fit_growth(&base, &s).unwrap(), 4, 0.25);
            let b = classify(&fit_growth(&scaled, &s).unwrap(), 4, 0.25);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn scaling_log_law_scales_k(k in 0.5f64..5.0, c in 0.1f64..10.0) {
            let s = EpsilonSchedule::default();
            let v: Vec<f64> = s.iter().map(|e| k * e.ln().abs()).collect();
            let w: Vec<f64> = v.iter().map(|x| x * c).collect();
            let a = classify(&fit_growth(&v, &s).unwrap(), 4, 0.25);
            let b = classify(&fit_growth(&w, &s).unwrap(), 4, 0.25);
            match (a, b) {
                (GrowthClass::LogScale { k: ka }, GrowthClass::LogScale { k: kb }) => {
                    prop_assert!((kb - c * ka).abs() < 1e-8 * kb.abs().max(1.0));
                }
                other => prop_assert!(false, "{:?}", other),
            }
        }

        #[test]
        fn negligible_order_is_scale_free(m in 1u32..4, c in 1e-3f64..1e3) {
            let s = EpsilonSchedule::default();
            let v: Vec<f64> = powers(&s, m as f64).iter().map(|x| x * c).collect();
            let cls = classify(&fit_growth(&v, &s).unwrap(), 4, 0.25);
            prop_assert_eq!(cls, GrowthClass::Negligible { verified_order: m });
        }
    }
}
