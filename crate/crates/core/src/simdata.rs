//! Synthetic-cohort generation with known ground truth, plus cohort file I/O.
//!
//! The generator draws exactly the data-generating process the residual
//! paradigms assume: entry ages uniform on a range, age-varying covariates as
//! a linear age trend plus independent noise, fixed covariates standard
//! normal, and event ages from the chosen baseline family conditional on
//! surviving past entry (inverse-cdf sampling of the left-truncated
//! distribution). That makes a generated cohort a clean oracle for parameter
//! recovery: the fitted model class contains the truth.
//!
//! Cohort files are UTF-8 CSV with a mandatory header
//! `id,entry_age,x_1..x_q,z_1..z_p,followup_time,event`; numeric fields are
//! written in shortest round-trip decimal form so write-then-read is the
//! identity.

use crate::dist::{self, DistributionFamily, ParamSet};
use crate::paradigms::Subject;
use crate::residualize::LinearTrend;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid generator config: field '{field}': {reason}")]
    Config { field: String, reason: String },
    #[error("conditional sampling exhausted the redraw budget ({redraws} redraws for n = {n}); entry ages sit beyond the distribution's support mass")]
    RedrawBudget { redraws: usize, n: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: column '{column}': {reason}")]
    Malformed {
        line: usize,
        column: String,
        reason: String,
    },
    #[error("bad cohort file schema: {0}")]
    Schema(String),
}

/// Ground-truth regression coefficients of the generating mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueBetas {
    pub intercept: f64,
    pub fixed: Vec<f64>,
    pub varying: Vec<f64>,
}

/// Full description of the synthetic data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub entry_age_range: (f64, f64),
    /// True age trend of each varying covariate.
    pub trends: Vec<LinearTrend>,
    /// Residual standard deviation of each varying covariate.
    pub noise_sd: Vec<f64>,
    pub betas: TrueBetas,
    pub family: DistributionFamily,
    pub shape: f64,
    /// Administrative censoring age; must exceed every possible entry age.
    pub censor_age: f64,
    pub seed: u64,
}

/// Bookkeeping from a generation run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub redraws: usize,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |field: &str, reason: String| SimError::Config {
            field: field.to_string(),
            reason,
        };
        if self.n < 1 {
            return Err(err("n", "must be >= 1".to_string()));
        }
        let (lo, hi) = self.entry_age_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(err(
                "entry_age_range",
                format!("must satisfy 0 < min < max, got ({lo}, {hi})"),
            ));
        }
        let p = self.trends.len();
        if self.noise_sd.len() != p {
            return Err(err(
                "noise_sd",
                format!("{} entries for {p} trends", self.noise_sd.len()),
            ));
        }
        if self.betas.varying.len() != p {
            return Err(err(
                "beta_z",
                format!("{} entries for {p} varying covariates", self.betas.varying.len()),
            ));
        }
        for (j, sd) in self.noise_sd.iter().enumerate() {
            if !(sd.is_finite() && *sd > 0.0) {
                return Err(err("noise_sd", format!("entry {j} must be > 0, got {sd}")));
            }
        }
        if !(self.shape.is_finite() && self.shape > 0.0) {
            return Err(err("shape", format!("must be > 0, got {}", self.shape)));
        }
        if !self.censor_age.is_finite() || self.censor_age <= hi {
            return Err(err(
                "censor_age",
                format!(
                    "must exceed the maximum entry age {hi} (every subject needs positive follow-up), got {}",
                    self.censor_age
                ),
            ));
        }
        let all_finite = self.betas.intercept.is_finite()
            && self.betas.fixed.iter().all(|b| b.is_finite())
            && self.betas.varying.iter().all(|b| b.is_finite())
            && self.trends.iter().all(|t| t.intercept.is_finite() && t.slope.is_finite());
        if !all_finite {
            return Err(err("betas", "non-finite coefficient".to_string()));
        }
        Ok(())
    }
}

/// Draws a cohort; deterministic for a fixed config (seed included).
pub fn generate_cohort(config: &GeneratorConfig) -> Result<Vec<Subject>, SimError> {
    generate_cohort_with_stats(config).map(|(cohort, _)| cohort)
}

/// As [`generate_cohort`], also reporting redraw counts.
pub fn generate_cohort_with_stats(
    config: &GeneratorConfig,
) -> Result<(Vec<Subject>, GenerationStats), SimError> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.entry_age_range;
    let q = config.betas.fixed.len();
    let p = config.trends.len();
    let noise: Vec<Normal<f64>> = config
        .noise_sd
        .iter()
        .map(|sd| Normal::new(0.0, *sd).expect("validated sd"))
        .collect();

    let mut cohort = Vec::with_capacity(config.n);
    let mut redraws = 0usize;
    let budget = 10 * config.n;

    for i in 0..config.n {
        let subject = loop {
            let entry_age = lo + (hi - lo) * rng.random::<f64>();
            let residuals: Vec<f64> = noise.iter().map(|d| d.sample(&mut rng)).collect();
            let varying: Vec<f64> = config
                .trends
                .iter()
                .zip(&residuals)
                .map(|(trend, e)| trend.predict(entry_age) + e)
                .collect();
            let fixed: Vec<f64> = (0..q).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();

            let log_scale = config.betas.intercept
                + config.betas.fixed.iter().zip(&fixed).map(|(b, x)| b * x).sum::<f64>()
                + config.betas.varying.iter().zip(&residuals).map(|(b, e)| b * e).sum::<f64>();
            let params = ParamSet::new(log_scale.exp(), config.shape).map_err(|e| {
                SimError::Config { field: "betas".to_string(), reason: e.to_string() }
            })?;

            let ls_entry = dist::log_survival(entry_age, config.family, params);
            if ls_entry < (1e-12f64).ln() || !ls_entry.is_finite() {
                redraws += 1;
                if redraws > budget {
                    return Err(SimError::RedrawBudget { redraws, n: config.n });
                }
                continue;
            }

            // Inverse-cdf draw of the event age conditional on exceeding the
            // entry age: S(T) = S(entry) * w with w uniform on (0, 1).
            let mut w: f64 = 1.0 - rng.random::<f64>();
            while w >= 1.0 || w <= 0.0 {
                w = 1.0 - rng.random::<f64>();
            }
            let event_age =
                dist::survival_inverse_log(ls_entry + w.ln(), config.family, params)
                    .expect("target is a valid log-survival");
            if !(event_age > entry_age) {
                // w so close to 1 that the conditional time rounds to zero.
                redraws += 1;
                if redraws > budget {
                    return Err(SimError::RedrawBudget { redraws, n: config.n });
                }
                continue;
            }

            let (followup_time, event) = if event_age <= config.censor_age {
                (event_age - entry_age, true)
            } else {
                (config.censor_age - entry_age, false)
            };
            break Subject {
                id: format!("s{:06}", i + 1),
                entry_age,
                fixed_covariates: fixed,
                varying_covariates: varying,
                followup_time,
                event,
            };
        };
        cohort.push(subject);
    }
    let _ = p;
    Ok((cohort, GenerationStats { redraws }))
}

// ---------------------------------------------------------------------------
// Cohort file I/O
// ---------------------------------------------------------------------------

fn header_for(q: usize, p: usize) -> String {
    let mut cols = vec!["id".to_string(), "entry_age".to_string()];
    cols.extend((1..=q).map(|j| format!("x_{j}")));
    cols.extend((1..=p).map(|j| format!("z_{j}")));
    cols.push("followup_time".to_string());
    cols.push("event".to_string());
    cols.join(",")
}

/// Writes a cohort as CSV. Floats use shortest round-trip decimals, so
/// [`read_cohort`] recovers every field bit-exactly.
pub fn write_cohort(cohort: &[Subject], path: &Path) -> Result<(), SimError> {
    let io_err = |source| SimError::Io { path: path.display().to_string(), source };
    let q = cohort.first().map_or(0, |s| s.fixed_covariates.len());
    let p = cohort.first().map_or(0, |s| s.varying_covariates.len());
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    writeln!(out, "{}", header_for(q, p)).map_err(io_err)?;
    for s in cohort {
        let mut fields = vec![s.id.clone(), format!("{}", s.entry_age)];
        fields.extend(s.fixed_covariates.iter().map(|v| format!("{v}")));
        fields.extend(s.varying_covariates.iter().map(|v| format!("{v}")));
        fields.push(format!("{}", s.followup_time));
        fields.push(if s.event { "1" } else { "0" }.to_string());
        writeln!(out, "{}", fields.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

struct HeaderLayout {
    q: usize,
    p: usize,
}

fn parse_header(line: &str) -> Result<HeaderLayout, SimError> {
    let cols: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if cols.len() < 4 || cols[0] != "id" || cols[1] != "entry_age" {
        return Err(SimError::Schema(format!(
            "header must start with 'id,entry_age' and end with 'followup_time,event', got '{line}'"
        )));
    }
    if cols[cols.len() - 2] != "followup_time" || cols[cols.len() - 1] != "event" {
        return Err(SimError::Schema(format!(
            "header must end with 'followup_time,event', got '{line}'"
        )));
    }
    let middle = &cols[2..cols.len() - 2];
    let q = middle.iter().take_while(|c| c.starts_with("x_")).count();
    let p = middle.len() - q;
    for (k, col) in middle.iter().enumerate() {
        let expected = if k < q { format!("x_{}", k + 1) } else { format!("z_{}", k - q + 1) };
        if *col != expected {
            return Err(SimError::Schema(format!(
                "unexpected covariate column '{col}' (expected '{expected}')"
            )));
        }
    }
    Ok(HeaderLayout { q, p })
}

/// Reads a cohort CSV written by [`write_cohort`] (or by hand, same schema).
/// Malformed rows are rejected with their line number and column name.
pub fn read_cohort(path: &Path) -> Result<Vec<Subject>, SimError> {
    let io_err = |source| SimError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(io_err)?,
        None => return Err(SimError::Schema("empty file (missing header)".to_string())),
    };
    let layout = parse_header(&header)?;

    let parse_f64 = |line: usize, column: &str, raw: &str| -> Result<f64, SimError> {
        raw.parse::<f64>().map_err(|_| SimError::Malformed {
            line,
            column: column.to_string(),
            reason: format!("'{raw}' is not a number"),
        })
    };

    let mut cohort = Vec::new();
    for (ix, line) in lines.enumerate() {
        let line_no = ix + 2; // 1-based, after the header
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = 4 + layout.q + layout.p;
        if fields.len() != expected {
            return Err(SimError::Malformed {
                line: line_no,
                column: "<row>".to_string(),
                reason: format!("{} fields, expected {expected}", fields.len()),
            });
        }
        let id = fields[0].to_string();
        if id.is_empty() {
            return Err(SimError::Malformed {
                line: line_no,
                column: "id".to_string(),
                reason: "empty id".to_string(),
            });
        }
        let entry_age = parse_f64(line_no, "entry_age", fields[1])?;
        let mut fixed = Vec::with_capacity(layout.q);
        for j in 0..layout.q {
            fixed.push(parse_f64(line_no, &format!("x_{}", j + 1), fields[2 + j])?);
        }
        let mut varying = Vec::with_capacity(layout.p);
        for j in 0..layout.p {
            varying.push(parse_f64(line_no, &format!("z_{}", j + 1), fields[2 + layout.q + j])?);
        }
        let followup_time =
            parse_f64(line_no, "followup_time", fields[fields.len() - 2])?;
        let event = match fields[fields.len() - 1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(SimError::Malformed {
                    line: line_no,
                    column: "event".to_string(),
                    reason: format!("'{other}' is not 0 or 1"),
                })
            }
        };
        cohort.push(Subject {
            id,
            entry_age,
            fixed_covariates: fixed,
            varying_covariates: varying,
            followup_time,
            event,
        });
    }
    Ok(cohort)
}

// ---------------------------------------------------------------------------
// Generator config as a key = value text file
// ---------------------------------------------------------------------------

/// Parses the key-value generator config format consumed by the CLI:
/// one `key = value` pair per line, `#` comments, lists comma-separated.
///
/// Keys: `n`, `seed`, `entry_age_min`, `entry_age_max`, `censor_age`,
/// `family`, `shape`, `beta0`, `beta_x`, `beta_z`, `trend_intercept`,
/// `trend_slope`, `noise_sd`. List keys must agree in length; `beta_x`
/// may be omitted for a cohort without fixed covariates.
pub fn parse_generator_config(text: &str) -> Result<GeneratorConfig, SimError> {
    use std::collections::HashMap;
    let mut kv: HashMap<String, String> = HashMap::new();
    for (ix, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(SimError::Malformed {
                line: ix + 1,
                column: "<line>".to_string(),
                reason: format!("expected 'key = value', got '{raw}'"),
            });
        };
        kv.insert(key.trim().to_string(), value.trim().to_string());
    }

    let missing = |field: &str| SimError::Config {
        field: field.to_string(),
        reason: "missing".to_string(),
    };
    let bad = |field: &str, value: &str| SimError::Config {
        field: field.to_string(),
        reason: format!("cannot parse '{value}'"),
    };

    let get = |key: &str| kv.get(key).cloned();
    let req = |key: &str| get(key).ok_or_else(|| missing(key));
    let parse_num = |key: &str, value: String| {
        value.parse::<f64>().map_err(|_| bad(key, &value))
    };
    let parse_list = |key: &str| -> Result<Vec<f64>, SimError> {
        match get(key) {
            None => Ok(Vec::new()),
            Some(v) if v.is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|piece| piece.trim().parse::<f64>().map_err(|_| bad(key, piece)))
                .collect(),
        }
    };

    let n = {
        let v = req("n")?;
        v.parse::<usize>().map_err(|_| bad("n", &v))?
    };
    let seed = {
        let v = req("seed")?;
        v.parse::<u64>().map_err(|_| bad("seed", &v))?
    };
    let family: DistributionFamily = {
        let v = req("family")?;
        v.parse().map_err(|_| bad("family", &v))?
    };
    let trend_intercepts = parse_list("trend_intercept")?;
    let trend_slopes = parse_list("trend_slope")?;
    if trend_intercepts.len() != trend_slopes.len() {
        return Err(SimError::Config {
            field: "trend_slope".to_string(),
            reason: format!(
                "{} entries but trend_intercept has {}",
                trend_slopes.len(),
                trend_intercepts.len()
            ),
        });
    }
    let config = GeneratorConfig {
        n,
        seed,
        entry_age_range: (
            parse_num("entry_age_min", req("entry_age_min")?)?,
            parse_num("entry_age_max", req("entry_age_max")?)?,
        ),
        trends: trend_intercepts
            .iter()
            .zip(&trend_slopes)
            .map(|(i, s)| LinearTrend { intercept: *i, slope: *s })
            .collect(),
        noise_sd: parse_list("noise_sd")?,
        betas: TrueBetas {
            intercept: parse_num("beta0", req("beta0")?)?,
            fixed: parse_list("beta_x")?,
            varying: parse_list("beta_z")?,
        },
        family,
        shape: parse_num("shape", req("shape")?)?,
        censor_age: parse_num("censor_age", req("censor_age")?)?,
    };
    config.validate()?;
    Ok(config)
}
