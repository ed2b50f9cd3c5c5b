//! Numerical audit of the time-origin coherence inequalities.
//!
//! For a subject whose covariates other than age are held at a reference
//! profile, write `m(a)` for the median time to event of someone first
//! observed at age `a`. Two demands pin down how `m` may depend on `a` when
//! the first observation changes nothing about the subject:
//!
//! * upper: the older person's MTE cannot be longer, `m(a) <= m(0)`;
//! * lower: having survived event-free to `a`, the older person's *age at*
//!   the MTE cannot be smaller, `m(a) + a >= m(0)`.
//!
//! [`claim_scan`] demonstrates numerically that a time-since-observation
//! model with an age coefficient `beta` cannot satisfy both unless
//! `beta = 0` — one inequality fails outright on one side of zero, and a
//! time-unit rescaling (which moves only the intercept, see
//! [`rescale_time`]) always exposes a failure of the other on the other
//! side. [`WilsonModel`] reproduces the published cardiovascular risk
//! equation that motivates the audit: event-free survival from 50 to 55
//! *raises* its predicted risk of an event by age 75.

use crate::dist::{self, DistError, DistributionFamily, ParamSet};
use crate::paradigms::{self, AgeTransform, ParadigmError, Subject, TrainedModel};
use crate::survreg::ModelForm;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separates true violations from quantile-inversion noise (years).
pub const MTE_TOLERANCE_YEARS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoherenceError {
    #[error("calibration failed: {0}")]
    CalibrationFailure(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("baseline median (age 0) is unevaluable: {0}")]
    BaselineUnevaluable(String),
    #[error(transparent)]
    Model(#[from] ParadigmError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

// ---------------------------------------------------------------------------
// Wilson risk equation
// ---------------------------------------------------------------------------

/// Published coefficients of the Weibull log-scale risk equation
/// (heart attack / stroke outcome), transcribed digit for digit.
pub mod wilson_coefficients {
    pub const INTERCEPT: f64 = 14.9756;
    pub const BMI: f64 = -0.0159;
    pub const AGE_PER_YEAR: f64 = -0.0571;
    pub const SMOKER: f64 = -0.4959;
    pub const SBP: f64 = -0.0070;
    pub const TC_HDL_RATIO: f64 = -0.1432;
    pub const DIABETIC: f64 = -0.3421;
    pub const MALE: f64 = 0.5139;
}

/// Risk-factor profile fed to the Wilson equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilsonProfile {
    pub bmi: f64,
    pub age: f64,
    pub smoker: bool,
    pub sbp: f64,
    pub tc_hdl_ratio: f64,
    pub diabetic: bool,
    pub male: bool,
}

impl WilsonProfile {
    /// The "reasonably healthy" reference: BMI 20, non-smoker, SBP 120,
    /// TC:HDL 3.5, non-diabetic, male.
    pub fn reference(age: f64) -> Self {
        WilsonProfile {
            bmi: 20.0,
            age,
            smoker: false,
            sbp: 120.0,
            tc_hdl_ratio: 3.5,
            diabetic: false,
            male: true,
        }
    }

    /// Log of the Weibull scale in the model's (calibrated) time units.
    pub fn linear_predictor(&self) -> f64 {
        use wilson_coefficients as w;
        w::INTERCEPT
            + w::BMI * self.bmi
            + w::AGE_PER_YEAR * self.age
            + w::SMOKER * f64::from(self.smoker)
            + w::SBP * self.sbp
            + w::TC_HDL_RATIO * self.tc_hdl_ratio
            + w::DIABETIC * f64::from(self.diabetic)
            + w::MALE * f64::from(self.male)
    }
}

/// The Wilson equation with its two unpublished quantities — the Weibull
/// shape and the time unit — treated as calibrated parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilsonModel {
    pub shape: f64,
    /// Model time units per year (calibrated; the published equation does
    /// not state its unit).
    pub time_units_per_year: f64,
}

/// Outcome of [`calibrate_wilson_shape`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilsonCalibration {
    pub shape: f64,
    pub time_units_per_year: f64,
    pub p_event_50_to_75: f64,
    pub p_event_55_to_75: f64,
    /// Sum of absolute misfits against the two published probabilities.
    pub residual: f64,
    pub iterations: usize,
}

/// Published probabilities being matched.
pub const WILSON_P_50_TO_75: f64 = 0.147;
pub const WILSON_P_55_TO_75: f64 = 0.159;

impl WilsonModel {
    /// Starting point for the calibration: shape 1 with time in days.
    /// With those values the reference 50-year-old's 25-year risk already
    /// lands near 0.145, close to the published 0.147.
    pub fn days_anchor() -> Self {
        WilsonModel { shape: 1.0, time_units_per_year: 365.25 }
    }

    /// `P(event by target_age)` for a profile observed at `profile.age`.
    pub fn event_prob_by_age(&self, profile: &WilsonProfile, target_age: f64) -> f64 {
        let horizon_years = (target_age - profile.age).max(0.0);
        let scale = profile.linear_predictor().exp();
        let params = ParamSet::new(scale, self.shape).expect("calibrated parameters are valid");
        dist::cdf(
            horizon_years * self.time_units_per_year,
            DistributionFamily::Weibull,
            params,
        )
    }

    /// Median time to event in years for the given profile.
    pub fn median_years(&self, profile: &WilsonProfile) -> f64 {
        let scale = profile.linear_predictor().exp();
        scale * std::f64::consts::LN_2.powf(1.0 / self.shape) / self.time_units_per_year
    }
}

/// Solves for (shape, time unit) so that the Wilson model reproduces both
/// published probabilities: 0.147 for ages 50 to 75 and 0.159 for 55 to 75.
/// Two-dimensional Newton iteration on the log-linearised system, started
/// from the days anchor.
pub fn calibrate_wilson_shape() -> Result<(WilsonModel, WilsonCalibration), CoherenceError> {
    let lp50 = WilsonProfile::reference(50.0).linear_predictor();
    let lp55 = WilsonProfile::reference(55.0).linear_predictor();
    // (25u / exp(lp50))^k = -ln(1 - p1)  =>  k (ln 25 + A - lp50) = b1,
    // with A = ln u; same for the second probability.
    let b1 = (-(1.0 - WILSON_P_50_TO_75).ln()).ln();
    let b2 = (-(1.0 - WILSON_P_55_TO_75).ln()).ln();
    let c1 = lp50 - 25.0f64.ln();
    let c2 = lp55 - 20.0f64.ln();

    let anchor = WilsonModel::days_anchor();
    let mut shape = anchor.shape;
    let mut log_u = anchor.time_units_per_year.ln();
    let mut iterations = 0;
    for _ in 0..100 {
        iterations += 1;
        let g1 = shape * (log_u - c1) - b1;
        let g2 = shape * (log_u - c2) - b2;
        if g1.abs().max(g2.abs()) < 1e-13 {
            break;
        }
        // Jacobian [[A - c1, k], [A - c2, k]].
        let (j11, j12, j21, j22) = (log_u - c1, shape, log_u - c2, shape);
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-14 {
            return Err(CoherenceError::CalibrationFailure(
                "singular Jacobian in the two-point system".to_string(),
            ));
        }
        shape -= (g1 * j22 - g2 * j12) / det;
        log_u -= (j11 * g2 - j21 * g1) / det;
        if !shape.is_finite() || !log_u.is_finite() {
            return Err(CoherenceError::CalibrationFailure(
                "iteration diverged".to_string(),
            ));
        }
    }

    if !(0.1..=10.0).contains(&shape) || !log_u.is_finite() {
        return Err(CoherenceError::CalibrationFailure(format!(
            "no solution with shape in [0.1, 10]: shape {shape}, ln(unit) {log_u}"
        )));
    }
    let model = WilsonModel { shape, time_units_per_year: log_u.exp() };
    let p1 = model.event_prob_by_age(&WilsonProfile::reference(50.0), 75.0);
    let p2 = model.event_prob_by_age(&WilsonProfile::reference(55.0), 75.0);
    let calibration = WilsonCalibration {
        shape,
        time_units_per_year: model.time_units_per_year,
        p_event_50_to_75: p1,
        p_event_55_to_75: p2,
        residual: (p1 - WILSON_P_50_TO_75).abs() + (p2 - WILSON_P_55_TO_75).abs(),
        iterations,
    };
    Ok((model, calibration))
}

// ---------------------------------------------------------------------------
// Inequality checks
// ---------------------------------------------------------------------------

/// Anything that yields a median time to event as a function of the age at
/// first observation, other covariates held at a reference profile.
pub trait MteModel {
    fn median_years_at_age(&self, age: f64) -> Result<f64, CoherenceError>;
}

impl MteModel for WilsonModel {
    fn median_years_at_age(&self, age: f64) -> Result<f64, CoherenceError> {
        Ok(self.median_years(&WilsonProfile::reference(age)))
    }
}

/// A trained paradigm evaluated along an age grid at a fixed covariate
/// reference profile (zero by default: mean fixed covariates, on-trend
/// varying covariates for residual paradigms).
pub struct TrainedModelProfile<'a> {
    pub model: &'a TrainedModel,
    pub fixed: Vec<f64>,
    pub varying: Vec<f64>,
}

impl<'a> TrainedModelProfile<'a> {
    pub fn zero_reference(model: &'a TrainedModel) -> Self {
        TrainedModelProfile {
            model,
            fixed: vec![0.0; model.n_fixed],
            varying: vec![0.0; model.n_varying],
        }
    }
}

impl MteModel for TrainedModelProfile<'_> {
    fn median_years_at_age(&self, age: f64) -> Result<f64, CoherenceError> {
        let mut varying = self.varying.clone();
        if let Some(stage1) = &self.model.stage1 {
            // Hold Stage-1 residuals fixed across the grid: feed the subject
            // the on-trend covariate value plus the reference residual.
            for ((v, trend), base) in
                varying.iter_mut().zip(&stage1.trends).zip(&self.varying)
            {
                *v = trend.predict(age) + base;
            }
        }
        let subject = Subject {
            id: "reference".to_string(),
            entry_age: age,
            fixed_covariates: self.fixed.clone(),
            varying_covariates: varying,
            followup_time: 1.0,
            event: false,
        };
        Ok(paradigms::median_time_to_event(self.model, &subject)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inequality {
    /// `m(a) <= m(0)`: the older person has a shorter MTE.
    Upper,
    /// `m(a) + a >= m(0)`: event-free survival postpones the age at the MTE.
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub age: f64,
    pub inequality: Inequality,
    pub magnitude_years: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeCheck {
    pub age: f64,
    /// Median time to event at this age; absent when unevaluable.
    pub mte: Option<f64>,
    pub upper_ok: Option<bool>,
    pub lower_ok: Option<bool>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// `m(0)`, the reference median from age zero.
    pub baseline_mte: f64,
    pub entries: Vec<AgeCheck>,
    pub worst_violation: Option<Violation>,
    pub tolerance_years: f64,
}

impl CoherenceReport {
    pub fn all_ok(&self) -> bool {
        self.worst_violation.is_none()
            && self
                .entries
                .iter()
                .all(|e| e.upper_ok == Some(true) && e.lower_ok == Some(true))
    }

    pub fn has_violation(&self, inequality: Inequality) -> bool {
        self.entries.iter().any(|e| {
            let flag = match inequality {
                Inequality::Upper => e.upper_ok,
                Inequality::Lower => e.lower_ok,
            };
            flag == Some(false)
        })
    }
}

/// Evaluates both inequalities at every grid age against the age-0 baseline.
/// Unevaluable grid points are marked, not fatal.
pub fn check_inequalities(
    model: &impl MteModel,
    ages: &[f64],
) -> Result<CoherenceReport, CoherenceError> {
    if ages.is_empty() {
        return Err(CoherenceError::Domain("age grid is empty".to_string()));
    }
    let baseline = model
        .median_years_at_age(0.0)
        .map_err(|e| CoherenceError::BaselineUnevaluable(e.to_string()))?;

    let mut entries = Vec::with_capacity(ages.len());
    let mut worst: Option<Violation> = None;
    let consider = |cand: Violation, worst: &mut Option<Violation>| {
        if worst.as_ref().is_none_or(|w| cand.magnitude_years > w.magnitude_years) {
            *worst = Some(cand);
        }
    };
    for &age in ages {
        match model.median_years_at_age(age) {
            Err(e) => entries.push(AgeCheck {
                age,
                mte: None,
                upper_ok: None,
                lower_ok: None,
                note: Some(e.to_string()),
            }),
            Ok(mte) => {
                let upper_ok = mte <= baseline + MTE_TOLERANCE_YEARS;
                let lower_ok = mte + age >= baseline - MTE_TOLERANCE_YEARS;
                if !upper_ok {
                    consider(
                        Violation {
                            age,
                            inequality: Inequality::Upper,
                            magnitude_years: mte - baseline,
                        },
                        &mut worst,
                    );
                }
                if !lower_ok {
                    consider(
                        Violation {
                            age,
                            inequality: Inequality::Lower,
                            magnitude_years: baseline - (mte + age),
                        },
                        &mut worst,
                    );
                }
                entries.push(AgeCheck {
                    age,
                    mte: Some(mte),
                    upper_ok: Some(upper_ok),
                    lower_ok: Some(lower_ok),
                    note: None,
                });
            }
        }
    }
    Ok(CoherenceReport {
        baseline_mte: baseline,
        entries,
        worst_violation: worst,
        tolerance_years: MTE_TOLERANCE_YEARS,
    })
}

// ---------------------------------------------------------------------------
// Claim scan
// ---------------------------------------------------------------------------

/// Grid scan of the age-coefficient claims for time-since-observation
/// models.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimScanConfig {
    pub form: ModelForm,
    pub age_transform: AgeTransform,
    pub betas: Vec<f64>,
    pub ages: Vec<f64>,
    pub family: DistributionFamily,
    pub baseline: ParamSet,
    /// Time-unit rescalings explored per beta (the lower inequality is not
    /// scale invariant, so violations may only appear after rescaling).
    pub rescales: Vec<f64>,
}

impl ClaimScanConfig {
    pub fn standard(
        form: ModelForm,
        age_transform: AgeTransform,
        family: DistributionFamily,
        baseline: ParamSet,
    ) -> Self {
        ClaimScanConfig {
            form,
            age_transform,
            betas: vec![-0.2, -0.05, 0.0, 0.05, 0.2],
            ages: (1..=80).map(f64::from).collect(),
            family,
            baseline,
            rescales: vec![1e-3, 1.0, 1e3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanViolation {
    pub age: f64,
    pub rescale: f64,
    pub magnitude_years: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaScan {
    pub beta: f64,
    pub upper_violation: Option<ScanViolation>,
    pub lower_violation: Option<ScanViolation>,
}

impl BetaScan {
    pub fn violation_free(&self) -> bool {
        self.upper_violation.is_none() && self.lower_violation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimScanReport {
    pub results: Vec<BetaScan>,
}

/// Median time to event at age `a` (time units of the baseline) for the
/// analytic age-as-covariate model.
fn scan_median(
    form: ModelForm,
    family: DistributionFamily,
    baseline: ParamSet,
    beta: f64,
    f_age: f64,
) -> Result<f64, CoherenceError> {
    match form {
        // m(a) = m0 * exp(beta f(a)): covariates multiply time.
        ModelForm::Aft => {
            let m0 = dist::quantile(0.5, family, baseline)?;
            Ok(m0 * (beta * f_age).exp())
        }
        // S0(m)^{exp(beta f(a))} = 1/2  =>  ln S0(m) = exp(-beta f(a)) ln(1/2).
        ModelForm::Ph => {
            let target = -std::f64::consts::LN_2 * (-beta * f_age).exp();
            Ok(dist::survival_inverse_log(target, family, baseline)?)
        }
    }
}

/// Scans every (beta, age, rescale) combination and records the worst
/// violation of each inequality per beta. `beta = 0` must come out clean;
/// any other beta must violate at least one inequality somewhere in the
/// scanned set.
pub fn claim_scan(config: &ClaimScanConfig) -> Result<ClaimScanReport, CoherenceError> {
    if config.ages.is_empty() || config.betas.is_empty() || config.rescales.is_empty() {
        return Err(CoherenceError::Domain(
            "betas, ages and rescales must all be non-empty".to_string(),
        ));
    }
    for k in &config.rescales {
        if !(k.is_finite() && *k > 0.0) {
            return Err(CoherenceError::Domain(format!("rescale factor {k} must be > 0")));
        }
    }

    let mut results = Vec::with_capacity(config.betas.len());
    for &beta in &config.betas {
        let m0_unit = scan_median(config.form, config.family, config.baseline, beta, 0.0)?;
        let mut upper: Option<ScanViolation> = None;
        let mut lower: Option<ScanViolation> = None;
        for &age in &config.ages {
            let f_age = config.age_transform.apply(age);
            let m_unit = scan_median(config.form, config.family, config.baseline, beta, f_age)?;
            for &k in &config.rescales {
                let m_a = k * m_unit;
                let m_0 = k * m0_unit;
                let upper_excess = m_a - m_0;
                if upper_excess > MTE_TOLERANCE_YEARS
                    && upper.as_ref().is_none_or(|v| upper_excess > v.magnitude_years)
                {
                    upper = Some(ScanViolation {
                        age,
                        rescale: k,
                        magnitude_years: upper_excess,
                    });
                }
                let lower_deficit = m_0 - (m_a + age);
                if lower_deficit > MTE_TOLERANCE_YEARS
                    && lower.as_ref().is_none_or(|v| lower_deficit > v.magnitude_years)
                {
                    lower = Some(ScanViolation {
                        age,
                        rescale: k,
                        magnitude_years: lower_deficit,
                    });
                }
            }
        }
        results.push(BetaScan { beta, upper_violation: upper, lower_violation: lower });
    }
    Ok(ClaimScanReport { results })
}

// ---------------------------------------------------------------------------
// Time rescaling
// ---------------------------------------------------------------------------

/// Re-expresses a trained model in a time unit multiplied by `k`: only the
/// intercept moves (by `ln k`); covariate coefficients and the shape are
/// untouched, and every median scales by exactly `k`.
pub fn rescale_time(model: &TrainedModel, k: f64) -> Result<TrainedModel, CoherenceError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(CoherenceError::Domain(format!(
            "rescale factor must be finite and > 0, got {k}"
        )));
    }
    let mut rescaled = model.clone();
    rescaled.fit.coefficients[0] += k.ln();
    Ok(rescaled)
}
