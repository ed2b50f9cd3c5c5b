//! Stage 1 of the residual-adjusted paradigms: per-covariate ordinary least
//! squares of each age-varying covariate on entry age, keeping the residuals.
//!
//! Each covariate gets its own marginal linear trend; the fitted trends are
//! frozen into a [`ResidualModel`] so that out-of-sample subjects can be
//! residualised the same way at prediction time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResidualizeError {
    #[error("need at least 3 rows to fit a linear trend, got {n}")]
    InsufficientData { n: usize },
    #[error("entry ages are all identical; linear trend for covariate {covariate} is unidentifiable")]
    DegenerateAges { covariate: usize },
    #[error("covariate table is inconsistent: {0}")]
    Inconsistent(String),
    #[error("covariate vector has length {got}, model expects {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

/// Intercept and per-year slope of one covariate's age trend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearTrend {
    pub intercept: f64,
    pub slope: f64,
}

impl LinearTrend {
    pub fn predict(&self, age: f64) -> f64 {
        self.intercept + self.slope * age
    }
}

/// Entry ages with the age-varying covariate values observed at those ages.
/// Rows are subjects, columns are covariates.
#[derive(Debug, Clone)]
pub struct CovariateTable {
    ages: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl CovariateTable {
    pub fn new(ages: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, ResidualizeError> {
        if ages.len() != values.len() {
            return Err(ResidualizeError::Inconsistent(format!(
                "{} ages but {} covariate rows",
                ages.len(),
                values.len()
            )));
        }
        let width = values.first().map_or(0, Vec::len);
        for (i, row) in values.iter().enumerate() {
            if row.len() != width {
                return Err(ResidualizeError::Inconsistent(format!(
                    "row {i} has {} covariates, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ResidualizeError::Inconsistent(format!(
                    "row {i} contains a non-finite covariate value"
                )));
            }
        }
        if ages.iter().any(|a| !a.is_finite()) {
            return Err(ResidualizeError::Inconsistent(
                "non-finite entry age".to_string(),
            ));
        }
        Ok(CovariateTable { ages, values })
    }

    pub fn n_rows(&self) -> usize {
        self.ages.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn ages(&self) -> &[f64] {
        &self.ages
    }
}

/// Frozen Stage-1 output: one linear age trend per covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub trends: Vec<LinearTrend>,
}

impl ResidualModel {
    pub fn n_covariates(&self) -> usize {
        self.trends.len()
    }
}

/// Fits the marginal trends and returns them with the training residuals
/// `e[i][j] = z[i][j] - trend_j(age_i)`.
pub fn fit_stage1(
    table: &CovariateTable,
) -> Result<(ResidualModel, Vec<Vec<f64>>), ResidualizeError> {
    let n = table.n_rows();
    if n < 3 {
        return Err(ResidualizeError::InsufficientData { n });
    }
    let p = table.n_covariates();

    let mean_age = table.ages.iter().sum::<f64>() / n as f64;
    let sxx: f64 = table
        .ages
        .iter()
        .map(|a| (a - mean_age) * (a - mean_age))
        .sum();
    let max_abs = table.ages.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let degenerate = sxx <= n as f64 * (1e-12 * max_abs.max(1.0)).powi(2);

    let mut trends = Vec::with_capacity(p);
    for j in 0..p {
        if degenerate {
            return Err(ResidualizeError::DegenerateAges { covariate: j });
        }
        let mean_z = table.values.iter().map(|row| row[j]).sum::<f64>() / n as f64;
        let sxy: f64 = table
            .ages
            .iter()
            .zip(&table.values)
            .map(|(a, row)| (a - mean_age) * (row[j] - mean_z))
            .sum();
        let slope = sxy / sxx;
        let intercept = mean_z - slope * mean_age;
        if !intercept.is_finite() || !slope.is_finite() {
            return Err(ResidualizeError::Inconsistent(format!(
                "trend for covariate {j} is non-finite"
            )));
        }
        trends.push(LinearTrend { intercept, slope });
    }

    let model = ResidualModel { trends };
    let residuals = table
        .ages
        .iter()
        .zip(&table.values)
        .map(|(a, row)| {
            row.iter()
                .zip(&model.trends)
                .map(|(z, trend)| z - trend.predict(*a))
                .collect()
        })
        .collect();
    Ok((model, residuals))
}

/// Residualises one covariate vector observed at `age`. Applying the model to
/// a training row reproduces that row's fitted residual exactly.
pub fn apply_stage1(
    model: &ResidualModel,
    age: f64,
    covariates: &[f64],
) -> Result<Vec<f64>, ResidualizeError> {
    if covariates.len() != model.trends.len() {
        return Err(ResidualizeError::LengthMismatch {
            got: covariates.len(),
            expected: model.trends.len(),
        });
    }
    Ok(covariates
        .iter()
        .zip(&model.trends)
        .map(|(z, trend)| z - trend.predict(age))
        .collect())
}
