//! The four model paradigms and their prediction rules.
//!
//! A cohort of [`Subject`]s is turned into [`SurvivalSample`]s as follows:
//!
//! * `AFT-AC`: time-in-study scale; `entry = 0`, `exit = followup_time`,
//!   covariates `(x, z, f(entry_age))`;
//! * `AFT-NA`: age scale; `entry = entry_age`, `exit = entry_age +
//!   followup_time`, covariates `(x, z)`;
//! * `RAFT` / `RPH`: age scale as above, covariates `(x, e)` where `e` are
//!   the Stage-1 residuals of the age-varying covariates; RPH fits the
//!   Weibull proportional hazards form instead of AFT.
//!
//! Age-scale models implicitly condition on survival to the entry age, both
//! in the likelihood (left truncation) and in every prediction:
//! `P(event within j years | alive at a) = 1 - S(a + j) / S(a)`.

use crate::dist::{self, DistError, DistributionFamily, ParamSet};
use crate::residualize::{self, ResidualModel, ResidualizeError};
use crate::survreg::{self, FitOptions, FitResult, ModelForm, SurvRegError, SurvivalSample};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParadigmError {
    #[error("invalid cohort: {0}")]
    InvalidCohort(String),
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),
    #[error("stage-1 regression failed: {0}")]
    Stage1(#[from] ResidualizeError),
    #[error("fit failed: {0}")]
    Fit(SurvRegError),
    #[error("design is unidentifiable (rank {rank} of {ncols}); degenerate columns: {columns:?}")]
    Unidentifiable {
        columns: Vec<String>,
        rank: usize,
        ncols: usize,
    },
    #[error(
        "subject has {got_fixed} fixed and {got_varying} varying covariates, model expects {expected_fixed} and {expected_varying}"
    )]
    LayoutMismatch {
        expected_fixed: usize,
        expected_varying: usize,
        got_fixed: usize,
        got_varying: usize,
    },
    #[error("conditioning is degenerate: survival at entry age {entry_age} is numerically zero")]
    DegenerateConditioning { entry_age: f64 },
    #[error("median time to event overflows the numerical support: {0}")]
    MedianOverflow(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

impl From<SurvRegError> for ParadigmError {
    fn from(e: SurvRegError) -> Self {
        match e {
            SurvRegError::UnsupportedConfiguration(msg) => {
                ParadigmError::UnsupportedConfiguration(msg)
            }
            other => ParadigmError::Fit(other),
        }
    }
}

/// One cohort member. `varying_covariates` are the values measured at
/// `entry_age`; `followup_time` runs from entry to event or censoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub entry_age: f64,
    pub fixed_covariates: Vec<f64>,
    pub varying_covariates: Vec<f64>,
    pub followup_time: f64,
    pub event: bool,
}

impl Subject {
    pub fn exit_age(&self) -> f64 {
        self.entry_age + self.followup_time
    }

    fn validate(&self, index: usize) -> Result<(), ParadigmError> {
        let fail = |reason: String| {
            ParadigmError::InvalidCohort(format!("subject {} (index {index}): {reason}", self.id))
        };
        if !(self.entry_age.is_finite() && self.entry_age > 0.0) {
            return Err(fail(format!("entry_age must be > 0, got {}", self.entry_age)));
        }
        if !(self.followup_time.is_finite() && self.followup_time > 0.0) {
            return Err(fail(format!(
                "followup_time must be > 0, got {}",
                self.followup_time
            )));
        }
        if self
            .fixed_covariates
            .iter()
            .chain(&self.varying_covariates)
            .any(|v| !v.is_finite())
        {
            return Err(fail("covariates contain a non-finite value".to_string()));
        }
        Ok(())
    }
}

/// Time-scale paradigm tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Paradigm {
    #[serde(rename = "aft-ac")]
    AftAc,
    #[serde(rename = "aft-na")]
    AftNa,
    #[serde(rename = "raft")]
    Raft,
    #[serde(rename = "rph")]
    Rph,
}

impl Paradigm {
    pub const ALL: [Paradigm; 4] = [Paradigm::AftAc, Paradigm::AftNa, Paradigm::Raft, Paradigm::Rph];

    pub fn name(&self) -> &'static str {
        match self {
            Paradigm::AftAc => "aft-ac",
            Paradigm::AftNa => "aft-na",
            Paradigm::Raft => "raft",
            Paradigm::Rph => "rph",
        }
    }

    /// Age is the time scale (models condition on survival to entry).
    pub fn age_is_time_scale(&self) -> bool {
        !matches!(self, Paradigm::AftAc)
    }

    pub fn uses_residuals(&self) -> bool {
        matches!(self, Paradigm::Raft | Paradigm::Rph)
    }

    pub fn model_form(&self) -> ModelForm {
        match self {
            Paradigm::Rph => ModelForm::Ph,
            _ => ModelForm::Aft,
        }
    }
}

impl std::fmt::Display for Paradigm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Paradigm {
    type Err = ParadigmError;

    fn from_str(s: &str) -> Result<Self, ParadigmError> {
        match s.to_ascii_lowercase().as_str() {
            "aft-ac" | "aft_ac" | "aftac" => Ok(Paradigm::AftAc),
            "aft-na" | "aft_na" | "aftna" => Ok(Paradigm::AftNa),
            "raft" => Ok(Paradigm::Raft),
            "rph" => Ok(Paradigm::Rph),
            other => Err(ParadigmError::Domain(format!(
                "unknown paradigm '{other}' (expected aft-ac, aft-na, raft or rph)"
            ))),
        }
    }
}

/// Transform applied to entry age when it enters the AFT-AC design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeTransform {
    #[default]
    Identity,
    Log1p,
}

impl AgeTransform {
    pub fn apply(&self, age: f64) -> f64 {
        match self {
            AgeTransform::Identity => age,
            AgeTransform::Log1p => age.ln_1p(),
        }
    }

    pub fn column_name(&self) -> &'static str {
        match self {
            AgeTransform::Identity => "age",
            AgeTransform::Log1p => "log1p_age",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOptions {
    pub fit: FitOptions,
    pub age_transform: AgeTransform,
}

/// A fitted paradigm: Stage-1 trends (when applicable), the Stage-2
/// coefficients, and the layout naming each design column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub paradigm: Paradigm,
    pub family: DistributionFamily,
    pub stage1: Option<ResidualModel>,
    pub fit: FitResult,
    /// Names of the design columns, in coefficient order after the intercept.
    pub covariate_layout: Vec<String>,
    pub age_transform: AgeTransform,
    pub n_fixed: usize,
    pub n_varying: usize,
}

fn cohort_dims(cohort: &[Subject]) -> Result<(usize, usize), ParadigmError> {
    let first = cohort
        .first()
        .ok_or_else(|| ParadigmError::InvalidCohort("empty cohort".to_string()))?;
    let dims = (first.fixed_covariates.len(), first.varying_covariates.len());
    for (i, s) in cohort.iter().enumerate() {
        s.validate(i)?;
        if (s.fixed_covariates.len(), s.varying_covariates.len()) != dims {
            return Err(ParadigmError::InvalidCohort(format!(
                "subject {} (index {i}) has inconsistent covariate dimensions",
                s.id
            )));
        }
    }
    if !cohort.iter().any(|s| s.event) {
        return Err(ParadigmError::InvalidCohort(
            "cohort contains no events".to_string(),
        ));
    }
    Ok(dims)
}

fn layout(
    paradigm: Paradigm,
    n_fixed: usize,
    n_varying: usize,
    age_transform: AgeTransform,
) -> Vec<String> {
    let mut names: Vec<String> = (1..=n_fixed).map(|j| format!("x{j}")).collect();
    let varying_prefix = if paradigm.uses_residuals() { 'e' } else { 'z' };
    names.extend((1..=n_varying).map(|j| format!("{varying_prefix}{j}")));
    if paradigm == Paradigm::AftAc {
        names.push(age_transform.column_name().to_string());
    }
    names
}

/// Fits the requested paradigm to a cohort. For RAFT and RPH this refits
/// Stage 1 on the given cohort before the survival regression.
pub fn train(
    cohort: &[Subject],
    paradigm: Paradigm,
    family: DistributionFamily,
    options: &TrainOptions,
) -> Result<TrainedModel, ParadigmError> {
    let (n_fixed, n_varying) = cohort_dims(cohort)?;
    if paradigm == Paradigm::Rph && family != DistributionFamily::Weibull {
        return Err(ParadigmError::UnsupportedConfiguration(format!(
            "RPH requires the Weibull family, got {family}"
        )));
    }

    let stage1 = if paradigm.uses_residuals() {
        let table = residualize::CovariateTable::new(
            cohort.iter().map(|s| s.entry_age).collect(),
            cohort.iter().map(|s| s.varying_covariates.clone()).collect(),
        )?;
        Some(residualize::fit_stage1(&table)?)
    } else {
        None
    };

    let samples: Vec<SurvivalSample> = cohort
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut covs = s.fixed_covariates.clone();
            match (&stage1, paradigm) {
                (Some((_, residuals)), _) => covs.extend(&residuals[i]),
                (None, _) => covs.extend(&s.varying_covariates),
            }
            if paradigm == Paradigm::AftAc {
                covs.push(options.age_transform.apply(s.entry_age));
            }
            let (entry, exit) = if paradigm.age_is_time_scale() {
                (s.entry_age, s.exit_age())
            } else {
                (0.0, s.followup_time)
            };
            SurvivalSample { entry, exit, event: s.event, covariates: covs }
        })
        .collect();

    let names = layout(paradigm, n_fixed, n_varying, options.age_transform);
    let fit = survreg::fit(&samples, family, paradigm.model_form(), &options.fit).map_err(
        |e| match e {
            SurvRegError::RankDeficient { rank, ncols, suspect_columns } => {
                ParadigmError::Unidentifiable {
                    columns: suspect_columns
                        .iter()
                        .filter_map(|j| names.get(*j).cloned())
                        .collect(),
                    rank,
                    ncols,
                }
            }
            other => other.into(),
        },
    )?;

    Ok(TrainedModel {
        paradigm,
        family,
        stage1: stage1.map(|(model, _)| model),
        fit,
        covariate_layout: names,
        age_transform: options.age_transform,
        n_fixed,
        n_varying,
    })
}

/// Subject-specific scale parameters implied by the fitted coefficients.
/// For the PH form this is the equivalent AFT scale
/// `exp(c0 - psi / shape)`, which reproduces the PH survival function.
fn subject_params(model: &TrainedModel, subject: &Subject) -> Result<ParamSet, ParadigmError> {
    if subject.fixed_covariates.len() != model.n_fixed
        || subject.varying_covariates.len() != model.n_varying
    {
        return Err(ParadigmError::LayoutMismatch {
            expected_fixed: model.n_fixed,
            expected_varying: model.n_varying,
            got_fixed: subject.fixed_covariates.len(),
            got_varying: subject.varying_covariates.len(),
        });
    }

    let mut row = subject.fixed_covariates.clone();
    if let Some(stage1) = &model.stage1 {
        row.extend(residualize::apply_stage1(
            stage1,
            subject.entry_age,
            &subject.varying_covariates,
        )?);
    } else {
        row.extend(&subject.varying_covariates);
    }
    if model.paradigm == Paradigm::AftAc {
        row.push(model.age_transform.apply(subject.entry_age));
    }

    let coefs = &model.fit.coefficients;
    debug_assert_eq!(coefs.len(), row.len() + 1);
    let linear: f64 = coefs[1..].iter().zip(&row).map(|(c, x)| c * x).sum();
    let log_scale = match model.paradigm.model_form() {
        ModelForm::Aft => coefs[0] + linear,
        ModelForm::Ph => coefs[0] - linear / model.fit.shape(),
    };
    ParamSet::new(log_scale.exp(), model.fit.shape()).map_err(ParadigmError::from)
}

/// `P(event within `horizon` years of entry | covariates, alive at entry)`.
pub fn predict_event_prob(
    model: &TrainedModel,
    subject: &Subject,
    horizon: f64,
) -> Result<f64, ParadigmError> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(ParadigmError::Domain(format!(
            "horizon must be finite and >= 0, got {horizon}"
        )));
    }
    let params = subject_params(model, subject)?;
    if model.paradigm.age_is_time_scale() {
        let a = subject.entry_age;
        let ls_entry = dist::log_survival(a, model.family, params);
        if !ls_entry.is_finite() {
            return Err(ParadigmError::DegenerateConditioning { entry_age: a });
        }
        let ls_exit = dist::log_survival(a + horizon, model.family, params);
        Ok((-(ls_exit - ls_entry).exp_m1()).max(0.0))
    } else {
        Ok(dist::cdf(horizon, model.family, params))
    }
}

/// Median time to event in years from entry: the horizon at which
/// [`predict_event_prob`] crosses one half.
pub fn median_time_to_event(
    model: &TrainedModel,
    subject: &Subject,
) -> Result<f64, ParadigmError> {
    let params = subject_params(model, subject)?;
    let median = if model.paradigm.age_is_time_scale() {
        let a = subject.entry_age;
        let ls_entry = dist::log_survival(a, model.family, params);
        if !ls_entry.is_finite() {
            return Err(ParadigmError::DegenerateConditioning { entry_age: a });
        }
        let target = ls_entry - std::f64::consts::LN_2;
        let exit_age = dist::survival_inverse_log(target, model.family, params)?;
        exit_age - a
    } else {
        dist::quantile(0.5, model.family, params)?
    };
    if !median.is_finite() {
        return Err(ParadigmError::MedianOverflow(format!(
            "median is {median} for scale {} shape {}",
            params.scale(),
            params.shape()
        )));
    }
    Ok(median.max(0.0))
}
