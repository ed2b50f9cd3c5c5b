//! Predictive-ability harness: year-discretised Brier scores over repeated
//! random train/validation splits.
//!
//! Scoring conventions (per model time scale):
//!
//! * time is discretised into integer years `j`;
//! * time-in-study models score `j = 1 ..= t_i`; age-scale models score
//!   `j = floor(entry_age) ..= t_i`;
//! * `t_i = min(c_i, M)` with `c_i` the (floored) censoring year, infinite
//!   for subjects whose event was observed, and `M` the floored maximum
//!   follow-up time (study scale) or attained age (age scale) over the
//!   validation set;
//! * `o_ij = 1` iff the event has occurred by year `j`; `g_ij` is the model's
//!   conditional event probability at that year;
//! * the score is the mean of `(g_ij - o_ij)^2` over all scored
//!   subject-years.
//!
//! Splits are seeded and performed on id-sorted subjects, so reports are
//! reproducible bit-for-bit and invariant to cohort row order. Reps run in
//! parallel and are merged by rep index.

use crate::dist::DistributionFamily;
use crate::paradigms::{self, Paradigm, ParadigmError, Subject, TrainOptions, TrainedModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluateError {
    #[error("scoring grid is empty (no subject-years to score)")]
    EmptyGrid,
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("cohort cannot be evaluated: {0}")]
    DegenerateCohort(String),
    #[error("duplicate subject id '{0}'; ids must be unique for id-based splitting")]
    DuplicateIds(String),
    #[error(transparent)]
    Prediction(#[from] ParadigmError),
}

/// Configuration of one evaluation run.
#[derive(Debug, Clone)]
pub struct BrierConfig {
    pub n_reps: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub paradigms: Vec<Paradigm>,
    pub families: Vec<DistributionFamily>,
    pub train_options: TrainOptions,
}

impl Default for BrierConfig {
    fn default() -> Self {
        BrierConfig {
            n_reps: 100,
            split_fraction: 0.5,
            seed: 0,
            paradigms: vec![Paradigm::AftAc, Paradigm::AftNa, Paradigm::Raft],
            families: DistributionFamily::ALL.to_vec(),
            train_options: TrainOptions::default(),
        }
    }
}

/// Outcome of one (family, paradigm) cell within one rep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Scored { score: f64 },
    NotConverged,
    Unsupported,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub family: DistributionFamily,
    pub paradigm: Paradigm,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub resamples: usize,
    pub n_train: usize,
    pub n_validation: usize,
    /// Floored maximum follow-up time over the validation half (study scale).
    pub max_year_study: i64,
    /// Floored maximum attained age over the validation half (age scale).
    pub max_year_age: i64,
    pub cells: Vec<CellResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub family: DistributionFamily,
    pub paradigm: Paradigm,
    /// Mean Brier score over successful reps; absent when every rep failed.
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n_successful_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub n_reps: usize,
    pub split_fraction: f64,
    pub cohort_size: usize,
    pub n_events: usize,
}

/// The Table-1-shaped evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrierReport {
    pub summary: Vec<CellSummary>,
    pub reps: Vec<RepRecord>,
    pub metadata: ReportMetadata,
}

impl BrierReport {
    pub fn mean(&self, family: DistributionFamily, paradigm: Paradigm) -> Option<f64> {
        self.summary
            .iter()
            .find(|c| c.family == family && c.paradigm == paradigm)
            .and_then(|c| c.mean)
    }

    /// Flat CSV: one row per (family, paradigm) cell; missing cells marked NA.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,paradigm,mean,sd,n_successful_reps\n");
        for cell in &self.summary {
            let mean = cell.mean.map_or("NA".to_string(), |m| format!("{m}"));
            let sd = cell.sd.map_or("NA".to_string(), |s| format!("{s}"));
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                cell.family, cell.paradigm, mean, sd, cell.n_successful_reps
            ));
        }
        out
    }

    pub fn to_json_pretty(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// One subject's year grid: predictions and observed event indicators,
/// aligned by year. The scoring core for hand-specified grids.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub predicted: Vec<f64>,
    pub observed: Vec<bool>,
}

/// Mean squared prediction error over all subject-years of the given rows.
pub fn brier_from_rows(rows: &[GridRow]) -> Result<f64, EvaluateError> {
    let mut sum = 0.0;
    let mut n_terms = 0usize;
    for (i, row) in rows.iter().enumerate() {
        if row.predicted.len() != row.observed.len() {
            return Err(EvaluateError::InvalidConfig(format!(
                "grid row {i}: {} predictions vs {} outcomes",
                row.predicted.len(),
                row.observed.len()
            )));
        }
        for (g, o) in row.predicted.iter().zip(&row.observed) {
            let o = if *o { 1.0 } else { 0.0 };
            sum += (g - o) * (g - o);
            n_terms += 1;
        }
    }
    if n_terms == 0 {
        return Err(EvaluateError::EmptyGrid);
    }
    Ok(sum / n_terms as f64)
}

/// Builds the year grid for one validation set under the model's time scale
/// and returns the Brier score.
pub fn brier_score(model: &TrainedModel, validation: &[Subject]) -> Result<f64, EvaluateError> {
    if validation.is_empty() {
        return Err(EvaluateError::DegenerateCohort("empty validation set".to_string()));
    }
    let age_scale = model.paradigm.age_is_time_scale();
    let horizon_quantity =
        |s: &Subject| if age_scale { s.exit_age() } else { s.followup_time };
    let m_cap = validation
        .iter()
        .map(|s| horizon_quantity(s))
        .fold(f64::NEG_INFINITY, f64::max)
        .floor() as i64;

    let mut sum = 0.0;
    let mut n_terms = 0u64;
    for s in validation {
        let time_q = horizon_quantity(s);
        let start = if age_scale { s.entry_age.floor() as i64 } else { 1 };
        let end = if s.event { m_cap } else { (time_q.floor() as i64).min(m_cap) };
        for j in start..=end {
            let o = if s.event && time_q <= j as f64 { 1.0 } else { 0.0 };
            let horizon = if age_scale { (j as f64 - s.entry_age).max(0.0) } else { j as f64 };
            let g = paradigms::predict_event_prob(model, s, horizon)?;
            sum += (g - o) * (g - o);
            n_terms += 1;
        }
    }
    if n_terms == 0 {
        return Err(EvaluateError::EmptyGrid);
    }
    Ok(sum / n_terms as f64)
}

fn splitmix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn rep_seed(seed: u64, rep: usize) -> u64 {
    splitmix64(seed ^ (rep as u64).wrapping_mul(0x9E3779B97F4A7C15))
}

fn validate_config(config: &BrierConfig, n: usize) -> Result<(), EvaluateError> {
    if config.n_reps < 1 {
        return Err(EvaluateError::InvalidConfig("n_reps must be >= 1".to_string()));
    }
    if !(config.split_fraction > 0.0 && config.split_fraction < 1.0) {
        return Err(EvaluateError::InvalidConfig(format!(
            "split_fraction must lie in (0, 1), got {}",
            config.split_fraction
        )));
    }
    if config.paradigms.is_empty() || config.families.is_empty() {
        return Err(EvaluateError::InvalidConfig(
            "paradigms and families must both be non-empty".to_string(),
        ));
    }
    let n_train = (n as f64 * config.split_fraction).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(EvaluateError::InvalidConfig(format!(
            "split leaves {n_train} training subjects out of {n}"
        )));
    }
    Ok(())
}

/// Runs the repeated-split evaluation. For each rep the cohort is split by a
/// seeded shuffle of id-sorted subjects (training gets the ceiling on odd
/// sizes, resampled until both halves hold an event); every requested
/// (family, paradigm) cell is trained on the training half (Stage 1 refit per
/// rep) and scored on the validation half. Non-converged or failed fits are
/// recorded and excluded from that cell's mean.
pub fn run_evaluation(
    cohort: &[Subject],
    config: &BrierConfig,
) -> Result<BrierReport, EvaluateError> {
    validate_config(config, cohort.len())?;
    let n_events = cohort.iter().filter(|s| s.event).count();
    if cohort.len() < 2 || n_events < 2 {
        return Err(EvaluateError::DegenerateCohort(format!(
            "need at least 2 subjects and 2 events to split, got {} subjects with {} events",
            cohort.len(),
            n_events
        )));
    }

    // Id-sorted index base makes splitting independent of row order.
    let mut order: Vec<usize> = (0..cohort.len()).collect();
    order.sort_by(|a, b| cohort[*a].id.cmp(&cohort[*b].id));
    for w in order.windows(2) {
        if cohort[w[0]].id == cohort[w[1]].id {
            return Err(EvaluateError::DuplicateIds(cohort[w[0]].id.clone()));
        }
    }
    let n_train = (cohort.len() as f64 * config.split_fraction).ceil() as usize;

    let reps: Vec<RepRecord> = (0..config.n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(rep_seed(config.seed, rep));
            let mut indices = order.clone();
            let mut resamples = 0usize;
            let (train_ix, valid_ix) = loop {
                indices.shuffle(&mut rng);
                let (tr, va) = indices.split_at(n_train);
                let ok = tr.iter().any(|i| cohort[*i].event)
                    && va.iter().any(|i| cohort[*i].event);
                if ok {
                    break (tr.to_vec(), va.to_vec());
                }
                resamples += 1;
                if resamples > 10_000 {
                    break (Vec::new(), Vec::new());
                }
            };

            if train_ix.is_empty() {
                let cells = cell_grid(config, |_, _| CellOutcome::Failed {
                    reason: "no event-balanced split found".to_string(),
                });
                return RepRecord {
                    rep,
                    resamples,
                    n_train: 0,
                    n_validation: 0,
                    max_year_study: 0,
                    max_year_age: 0,
                    cells,
                };
            }

            let train: Vec<Subject> = train_ix.iter().map(|i| cohort[*i].clone()).collect();
            let valid: Vec<Subject> = valid_ix.iter().map(|i| cohort[*i].clone()).collect();
            let max_year_study =
                valid.iter().map(|s| s.followup_time).fold(f64::NEG_INFINITY, f64::max).floor()
                    as i64;
            let max_year_age =
                valid.iter().map(|s| s.exit_age()).fold(f64::NEG_INFINITY, f64::max).floor()
                    as i64;

            let cells = cell_grid(config, |family, paradigm| {
                if paradigm == Paradigm::Rph && family != DistributionFamily::Weibull {
                    return CellOutcome::Unsupported;
                }
                match paradigms::train(&train, paradigm, family, &config.train_options) {
                    Err(e) => CellOutcome::Failed { reason: e.to_string() },
                    Ok(model) if !model.fit.converged => CellOutcome::NotConverged,
                    Ok(model) => match brier_score(&model, &valid) {
                        Ok(score) => CellOutcome::Scored { score },
                        Err(e) => CellOutcome::Failed { reason: e.to_string() },
                    },
                }
            });

            RepRecord {
                rep,
                resamples,
                n_train: train.len(),
                n_validation: valid.len(),
                max_year_study,
                max_year_age,
                cells,
            }
        })
        .collect();

    let mut summary = Vec::new();
    for family in &config.families {
        for paradigm in &config.paradigms {
            let scores: Vec<f64> = reps
                .iter()
                .flat_map(|r| &r.cells)
                .filter(|c| c.family == *family && c.paradigm == *paradigm)
                .filter_map(|c| match &c.outcome {
                    CellOutcome::Scored { score } => Some(*score),
                    _ => None,
                })
                .collect();
            let n = scores.len();
            let mean = (n > 0).then(|| scores.iter().sum::<f64>() / n as f64);
            let sd = (n > 1).then(|| {
                let m = mean.unwrap();
                (scores.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (n - 1) as f64).sqrt()
            });
            summary.push(CellSummary {
                family: *family,
                paradigm: *paradigm,
                mean,
                sd,
                n_successful_reps: n,
            });
        }
    }

    Ok(BrierReport {
        summary,
        reps,
        metadata: ReportMetadata {
            seed: config.seed,
            n_reps: config.n_reps,
            split_fraction: config.split_fraction,
            cohort_size: cohort.len(),
            n_events,
        },
    })
}

fn cell_grid(
    config: &BrierConfig,
    mut run: impl FnMut(DistributionFamily, Paradigm) -> CellOutcome,
) -> Vec<CellResult> {
    let mut cells = Vec::with_capacity(config.families.len() * config.paradigms.len());
    for family in &config.families {
        for paradigm in &config.paradigms {
            cells.push(CellResult {
                family: *family,
                paradigm: *paradigm,
                outcome: run(*family, *paradigm),
            });
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residualize::LinearTrend;
    use crate::simdata::{self, GeneratorConfig, TrueBetas};
    use approx::assert_abs_diff_eq;

    fn strong_trend_config(n: usize, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n,
            entry_age_range: (40.0, 70.0),
            trends: vec![LinearTrend { intercept: 90.0, slope: 0.8 }],
            noise_sd: vec![8.0],
            betas: TrueBetas { intercept: 4.45, fixed: vec![0.10], varying: vec![-0.02] },
            family: DistributionFamily::Weibull,
            shape: 2.0,
            censor_age: 90.0,
            seed,
        }
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let rows = vec![
            GridRow { predicted: vec![0.0, 1.0, 1.0], observed: vec![false, true, true] },
            GridRow { predicted: vec![0.0, 0.0], observed: vec![false, false] },
        ];
        assert_eq!(brier_from_rows(&rows).unwrap(), 0.0);
    }

    #[test]
    fn constant_half_scores_quarter() {
        let rows = vec![
            GridRow { predicted: vec![0.5; 4], observed: vec![false, true, false, true] },
            GridRow { predicted: vec![0.5; 3], observed: vec![true, true, true] },
        ];
        assert_eq!(brier_from_rows(&rows).unwrap(), 0.25);
    }

    #[test]
    fn hand_summed_two_subject_grid() {
        // Subject A: years 1..=3, event at year 2 -> o = [0, 1, 1].
        // Subject B: years 1..=2, censored -> o = [0, 0].
        // Dummy model: exponential with scale 10 -> g_j = 1 - exp(-j/10).
        let g = |j: f64| -(-j / 10.0f64).exp_m1();
        let rows = vec![
            GridRow {
                predicted: vec![g(1.0), g(2.0), g(3.0)],
                observed: vec![false, true, true],
            },
            GridRow { predicted: vec![g(1.0), g(2.0)], observed: vec![false, false] },
        ];
        // Independent hand summation, in row order.
        let hand = (g(1.0) - 0.0) * (g(1.0) - 0.0)
            + (g(2.0) - 1.0) * (g(2.0) - 1.0)
            + (g(3.0) - 1.0) * (g(3.0) - 1.0)
            + (g(1.0) - 0.0) * (g(1.0) - 0.0)
            + (g(2.0) - 0.0) * (g(2.0) - 0.0);
        let b = brier_from_rows(&rows).unwrap();
        assert_eq!(b, hand / 5.0);
    }

    #[test]
    fn moving_a_prediction_toward_its_outcome_improves_the_score() {
        let base = vec![GridRow {
            predicted: vec![0.3, 0.6, 0.9],
            observed: vec![false, true, true],
        }];
        let b0 = brier_from_rows(&base).unwrap();
        for (ix, better) in [(0, 0.2), (1, 0.7), (2, 0.95)] {
            let mut rows = base.clone();
            rows[0].predicted[ix] = better;
            assert!(brier_from_rows(&rows).unwrap() < b0);
        }
    }

    #[test]
    fn empty_grid_is_an_error() {
        assert!(matches!(brier_from_rows(&[]), Err(EvaluateError::EmptyGrid)));
        let rows = vec![GridRow { predicted: vec![], observed: vec![] }];
        assert!(matches!(brier_from_rows(&rows), Err(EvaluateError::EmptyGrid)));
    }

    #[test]
    fn brier_score_is_bounded() {
        let cohort = simdata::generate_cohort(&strong_trend_config(300, 5)).unwrap();
        let (train, valid) = cohort.split_at(150);
        for paradigm in [Paradigm::AftAc, Paradigm::AftNa, Paradigm::Raft] {
            let model = paradigms::train(
                train,
                paradigm,
                DistributionFamily::Weibull,
                &TrainOptions::default(),
            )
            .unwrap();
            let b = brier_score(&model, valid).unwrap();
            assert!((0.0..=1.0).contains(&b), "{paradigm}: {b}");
        }
    }

    #[test]
    fn report_is_deterministic_and_order_invariant() {
        let cohort = simdata::generate_cohort(&strong_trend_config(120, 11)).unwrap();
        let config = BrierConfig {
            n_reps: 2,
            seed: 77,
            families: vec![DistributionFamily::Weibull],
            paradigms: vec![Paradigm::AftAc, Paradigm::Raft],
            ..BrierConfig::default()
        };
        let a = run_evaluation(&cohort, &config).unwrap();
        let b = run_evaluation(&cohort, &config).unwrap();
        assert_eq!(a, b);

        let mut reversed = cohort.clone();
        reversed.reverse();
        let c = run_evaluation(&reversed, &config).unwrap();
        assert_eq!(a, c);

        let json1 = a.to_json_pretty().unwrap();
        let json2 = c.to_json_pretty().unwrap();
        assert_eq!(json1, json2);
    }

    #[test]
    fn summary_means_match_per_rep_scores() {
        let cohort = simdata::generate_cohort(&strong_trend_config(150, 13)).unwrap();
        let config = BrierConfig {
            n_reps: 4,
            seed: 3,
            families: vec![DistributionFamily::Weibull],
            paradigms: vec![Paradigm::Raft],
            ..BrierConfig::default()
        };
        let report = run_evaluation(&cohort, &config).unwrap();
        let scores: Vec<f64> = report
            .reps
            .iter()
            .flat_map(|r| &r.cells)
            .filter_map(|c| match &c.outcome {
                CellOutcome::Scored { score } => Some(*score),
                _ => None,
            })
            .collect();
        assert_eq!(scores.len(), 4);
        let mean = scores.iter().sum::<f64>() / 4.0;
        let reported = report.mean(DistributionFamily::Weibull, Paradigm::Raft).unwrap();
        assert_abs_diff_eq!(mean, reported, epsilon = 1e-12);
        for s in &scores {
            assert!((0.0..=1.0).contains(s));
        }
    }

    #[test]
    fn odd_cohort_training_half_gets_ceiling() {
        let cohort = simdata::generate_cohort(&strong_trend_config(151, 17)).unwrap();
        let config = BrierConfig {
            n_reps: 1,
            seed: 5,
            families: vec![DistributionFamily::Weibull],
            paradigms: vec![Paradigm::AftNa],
            ..BrierConfig::default()
        };
        let report = run_evaluation(&cohort, &config).unwrap();
        assert_eq!(report.reps[0].n_train, 76);
        assert_eq!(report.reps[0].n_validation, 75);
    }

    #[test]
    fn rph_non_weibull_cells_marked_unsupported() {
        let cohort = simdata::generate_cohort(&strong_trend_config(120, 19)).unwrap();
        let config = BrierConfig {
            n_reps: 1,
            seed: 5,
            families: vec![DistributionFamily::LogNormal],
            paradigms: vec![Paradigm::Rph],
            ..BrierConfig::default()
        };
        let report = run_evaluation(&cohort, &config).unwrap();
        assert_eq!(report.reps[0].cells[0].outcome, CellOutcome::Unsupported);
        assert_eq!(report.summary[0].mean, None);
        assert_eq!(report.summary[0].n_successful_reps, 0);
        assert!(report.to_csv().contains("NA"));
    }

    #[test]
    fn residual_adjustment_beats_unadjusted_age_scale() {
        // Strong age trend in z: using raw z on the age scale is badly
        // mis-specified, so RAFT must score better on average.
        let cohort = simdata::generate_cohort(&strong_trend_config(800, 23)).unwrap();
        let config = BrierConfig {
            n_reps: 10,
            seed: 29,
            families: vec![DistributionFamily::Weibull],
            paradigms: vec![Paradigm::AftNa, Paradigm::Raft],
            ..BrierConfig::default()
        };
        let report = run_evaluation(&cohort, &config).unwrap();
        let raft = report.mean(DistributionFamily::Weibull, Paradigm::Raft).unwrap();
        let aftna = report.mean(DistributionFamily::Weibull, Paradigm::AftNa).unwrap();
        assert!(raft < aftna, "raft {raft} vs aft-na {aftna}");
    }

    #[test]
    fn single_event_cohort_rejected() {
        let mut cohort = simdata::generate_cohort(&strong_trend_config(40, 31)).unwrap();
        for s in cohort.iter_mut().skip(1) {
            s.event = false;
        }
        cohort[0].event = true;
        let config = BrierConfig { n_reps: 1, ..BrierConfig::default() };
        assert!(matches!(
            run_evaluation(&cohort, &config),
            Err(EvaluateError::DegenerateCohort(_))
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut cohort = simdata::generate_cohort(&strong_trend_config(10, 37)).unwrap();
        let id = cohort[0].id.clone();
        cohort[1].id = id;
        let config = BrierConfig { n_reps: 1, ..BrierConfig::default() };
        assert!(matches!(
            run_evaluation(&cohort, &config),
            Err(EvaluateError::DuplicateIds(_))
        ));
    }
}
