//! Implementations of the five subcommands.

use crate::manifest::RunManifest;
use crate::model_file;
use crate::AppError;
use std::path::Path;
use survscale::coherence::{self, CoherenceReport, TrainedModelProfile, WilsonCalibration};
use survscale::evaluate::{self, BrierConfig, BrierReport, CellOutcome};
use survscale::paradigms::{self, Paradigm, Subject, TrainOptions, TrainedModel};
use survscale::simdata::{self, SimError};
use survscale::survreg::{FitOptions, ShapeMode};
use survscale::{AgeTransform, DistributionFamily};

fn sim_error(e: SimError) -> AppError {
    match e {
        SimError::Io { .. } => AppError::Io(e.to_string()),
        other => AppError::Config(other.to_string()),
    }
}

fn read_cohort(path: &Path) -> Result<Vec<Subject>, AppError> {
    simdata::read_cohort(path).map_err(sim_error)
}

fn parse_paradigm(s: &str) -> Result<Paradigm, AppError> {
    s.parse().map_err(|e: paradigms::ParadigmError| AppError::Config(e.to_string()))
}

fn parse_family(s: &str) -> Result<DistributionFamily, AppError> {
    s.parse()
        .map_err(|e: survscale::dist::DistError| AppError::Config(e.to_string()))
}

fn parse_age_transform(s: &str) -> Result<AgeTransform, AppError> {
    match s.to_ascii_lowercase().as_str() {
        "identity" => Ok(AgeTransform::Identity),
        "log1p" => Ok(AgeTransform::Log1p),
        other => Err(AppError::Config(format!(
            "unknown age transform '{other}' (expected identity or log1p)"
        ))),
    }
}

/// Parses an inclusive `start:end:step` age grid.
fn parse_age_grid(spec: &str) -> Result<Vec<f64>, AppError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(AppError::Config(format!(
            "age grid must be start:end:step, got '{spec}'"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| AppError::Config(format!("cannot parse '{p}' in age grid '{spec}'")))
        })
        .collect::<Result<_, _>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0 && step.is_finite()) {
        return Err(AppError::Config(format!("age grid step must be > 0, got {step}")));
    }
    let mut ages = Vec::new();
    let mut a = start;
    while a <= end + 1e-9 {
        ages.push(a);
        a += step;
    }
    if ages.is_empty() {
        return Err(AppError::Config(format!("age grid '{spec}' is empty")));
    }
    Ok(ages)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(config_path: &Path, out: &Path) -> Result<(), AppError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| AppError::Io(format!("reading {}: {e}", config_path.display())))?;
    let config = simdata::parse_generator_config(&text).map_err(sim_error)?;
    let (cohort, stats) = simdata::generate_cohort_with_stats(&config).map_err(sim_error)?;
    simdata::write_cohort(&cohort, out).map_err(sim_error)?;

    RunManifest::new("simulate")
        .input("config", config_path)
        .param("generator", &config)
        .param("redraws", stats.redraws)
        .param("seed", config.seed)
        .output(out)
        .write_beside(out)?;

    let events = cohort.iter().filter(|s| s.event).count();
    println!(
        "wrote {} subjects ({} events, {} redraws) to {}",
        cohort.len(),
        events,
        stats.redraws,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn fit(
    cohort_path: &Path,
    paradigm: &str,
    family: &str,
    out: &Path,
    age_transform: &str,
    fix_shape: Option<f64>,
    max_iter: usize,
    grad_tol: f64,
) -> Result<(), AppError> {
    let cohort = read_cohort(cohort_path)?;
    let paradigm = parse_paradigm(paradigm)?;
    let family = parse_family(family)?;
    let options = TrainOptions {
        age_transform: parse_age_transform(age_transform)?,
        fit: FitOptions {
            max_iter,
            grad_tol,
            init: None,
            shape: match fix_shape {
                Some(s) => ShapeMode::Fixed(s),
                None => ShapeMode::Estimate,
            },
        },
    };

    let model = paradigms::train(&cohort, paradigm, family, &options)
        .map_err(|e| AppError::Config(e.to_string()))?;

    model_file::write_model(&model, out)?;
    RunManifest::new("fit")
        .input("cohort", cohort_path)
        .param("paradigm", paradigm.name())
        .param("family", family.name())
        .param("age_transform", format!("{:?}", options.age_transform))
        .param("fix_shape", fix_shape)
        .param("max_iter", max_iter)
        .param("grad_tol", grad_tol)
        .output(out)
        .write_beside(out)?;

    print_fit_summary(&model, &cohort, out);
    if !model.fit.converged {
        return Err(AppError::NonConvergence(format!(
            "fit did not converge within {max_iter} iterations (model written to {} with converged=false)",
            out.display()
        )));
    }
    Ok(())
}

fn print_fit_summary(model: &TrainedModel, cohort: &[Subject], out: &Path) {
    let events = cohort.iter().filter(|s| s.event).count();
    println!(
        "fitted {} / {} on {} subjects ({} events)",
        model.paradigm,
        model.family,
        cohort.len(),
        events
    );
    println!(
        "converged: {} ({} iterations)   log-likelihood: {:.6}",
        model.fit.converged, model.fit.iterations, model.fit.max_loglik
    );
    match (model.fit.shape_fixed, model.fit.log_shape_std_error) {
        (true, _) => println!("shape: {:.6} (fixed)", model.fit.shape()),
        (false, Some(se)) => {
            println!("shape: {:.6} (log-shape SE {:.4})", model.fit.shape(), se)
        }
        (false, None) => println!("shape: {:.6}", model.fit.shape()),
    }
    println!("  {:<14} {:>12} {:>12}", "column", "estimate", "std.error");
    let names = std::iter::once("(intercept)".to_string())
        .chain(model.covariate_layout.iter().cloned());
    for (j, name) in names.enumerate() {
        let se = model
            .fit
            .std_errors
            .as_ref()
            .map_or("-".to_string(), |ses| format!("{:.6}", ses[j]));
        println!("  {:<14} {:>12.6} {:>12}", name, model.fit.coefficients[j], se);
    }
    if let Some(stage1) = &model.stage1 {
        for (j, trend) in stage1.trends.iter().enumerate() {
            println!(
                "stage 1: z{} ~ {:.6} + {:.6} * age",
                j + 1,
                trend.intercept,
                trend.slope
            );
        }
    }
    println!("model written to {}", out.display());
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

pub fn predict(
    model_path: &Path,
    cohort_path: &Path,
    horizon: f64,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let model = model_file::read_model(model_path)?;
    let cohort = read_cohort(cohort_path)?;
    let mut body = String::from("id,event_probability,median_years_from_entry\n");
    for subject in &cohort {
        let g = paradigms::predict_event_prob(&model, subject, horizon)
            .map_err(|e| AppError::Config(format!("subject {}: {e}", subject.id)))?;
        let median = match paradigms::median_time_to_event(&model, subject) {
            Ok(m) => format!("{m}"),
            Err(_) => "NA".to_string(),
        };
        body.push_str(&format!("{},{},{}\n", subject.id, g, median));
    }
    match out {
        None => print!("{body}"),
        Some(path) => {
            std::fs::write(path, &body)
                .map_err(|e| AppError::Io(format!("writing {}: {e}", path.display())))?;
            RunManifest::new("predict")
                .input("model", model_path)
                .input("cohort", cohort_path)
                .param("horizon", horizon)
                .output(path)
                .write_beside(path)?;
            println!("wrote {} predictions to {}", cohort.len(), path.display());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub fn evaluate(
    cohort_path: &Path,
    out: &Path,
    reps: usize,
    seed: u64,
    split_fraction: f64,
    paradigms_raw: &[String],
    families_raw: &[String],
) -> Result<(), AppError> {
    let cohort = read_cohort(cohort_path)?;
    let paradigms = if paradigms_raw.is_empty() {
        vec![Paradigm::AftAc, Paradigm::AftNa, Paradigm::Raft]
    } else {
        paradigms_raw.iter().map(|p| parse_paradigm(p)).collect::<Result<_, _>>()?
    };
    let families = if families_raw.is_empty() {
        DistributionFamily::ALL.to_vec()
    } else {
        families_raw.iter().map(|f| parse_family(f)).collect::<Result<_, _>>()?
    };
    let config = BrierConfig {
        n_reps: reps,
        split_fraction,
        seed,
        paradigms: paradigms.clone(),
        families: families.clone(),
        train_options: TrainOptions::default(),
    };

    let report = evaluate::run_evaluation(&cohort, &config)
        .map_err(|e| AppError::Config(e.to_string()))?;

    let csv_path = out.with_extension("csv");
    let json_path = out.with_extension("json");
    std::fs::write(&csv_path, report.to_csv())
        .map_err(|e| AppError::Io(format!("writing {}: {e}", csv_path.display())))?;
    std::fs::write(
        &json_path,
        report
            .to_json_pretty()
            .map_err(|e| AppError::Io(format!("serialising report: {e}")))?,
    )
    .map_err(|e| AppError::Io(format!("writing {}: {e}", json_path.display())))?;

    let manifest = RunManifest::new("evaluate")
        .input("cohort", cohort_path)
        .param("reps", reps)
        .param("seed", seed)
        .param("split_fraction", split_fraction)
        .param("paradigms", paradigms.iter().map(|p| p.name()).collect::<Vec<_>>())
        .param("families", families.iter().map(|f| f.name()).collect::<Vec<_>>())
        .output(&csv_path)
        .output(&json_path);
    manifest.write_beside(&csv_path)?;

    print_evaluation_summary(&report, &families, &paradigms);

    let n_scored: usize = report.summary.iter().map(|c| c.n_successful_reps).sum();
    if n_scored == 0 {
        return Err(AppError::NonConvergence(
            "no (family, paradigm) cell produced a score".to_string(),
        ));
    }
    println!("reports written to {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn print_evaluation_summary(
    report: &BrierReport,
    families: &[DistributionFamily],
    paradigms: &[Paradigm],
) {
    println!(
        "mean Brier scores ({} reps, seed {}, {} subjects, {} events)",
        report.metadata.n_reps,
        report.metadata.seed,
        report.metadata.cohort_size,
        report.metadata.n_events
    );
    print!("{:<14}", "family");
    for p in paradigms {
        print!("{:>12}", p.name());
    }
    println!();
    for family in families {
        print!("{:<14}", family.name());
        for paradigm in paradigms {
            match report.mean(*family, *paradigm) {
                Some(mean) => print!("{mean:>12.6}"),
                None => print!("{:>12}", "NA"),
            }
        }
        println!();
    }
    let excluded: usize = report
        .reps
        .iter()
        .flat_map(|r| &r.cells)
        .filter(|c| {
            matches!(c.outcome, CellOutcome::NotConverged | CellOutcome::Failed { .. })
        })
        .count();
    if excluded > 0 {
        eprintln!("warning: {excluded} cell fits were excluded (non-converged or failed); see the JSON report for detail");
    }
}

// ---------------------------------------------------------------------------
// coherence
// ---------------------------------------------------------------------------

pub fn coherence(
    model_path: Option<&Path>,
    wilson: bool,
    ages_spec: &str,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let ages = parse_age_grid(ages_spec)?;
    let (report, calibration, source) = if wilson {
        let (model, calibration) =
            coherence::calibrate_wilson_shape().map_err(|e| AppError::Config(e.to_string()))?;
        println!(
            "calibrated published risk equation: shape {:.6}, {:.3} time units per year (residual {:.2e})",
            calibration.shape, calibration.time_units_per_year, calibration.residual
        );
        println!(
            "P(event by age 75 | healthy reference, entry 50) = {:.4}",
            calibration.p_event_50_to_75
        );
        println!(
            "P(event by age 75 | healthy reference, entry 55) = {:.4}",
            calibration.p_event_55_to_75
        );
        if calibration.p_event_55_to_75 > calibration.p_event_50_to_75 {
            println!(
                "note: five event-free years RAISE the predicted risk by age 75 — the lower-inequality incoherence this audit flags"
            );
        }
        let report = coherence::check_inequalities(&model, &ages)
            .map_err(|e| AppError::Config(e.to_string()))?;
        (report, Some(calibration), "wilson".to_string())
    } else {
        let path = model_path.ok_or_else(|| {
            AppError::Config("exactly one of --model <path> or --wilson is required".to_string())
        })?;
        let model = model_file::read_model(path)?;
        let profile = TrainedModelProfile::zero_reference(&model);
        let report = coherence::check_inequalities(&profile, &ages)
            .map_err(|e| AppError::Config(e.to_string()))?;
        (report, None, path.display().to_string())
    };

    let table = render_coherence_table(&report);
    print!("{table}");

    if let Some(base) = out {
        let json_path = base.with_extension("json");
        let txt_path = base.with_extension("txt");
        #[derive(serde::Serialize)]
        struct CoherenceDocument<'a> {
            source: &'a str,
            calibration: &'a Option<WilsonCalibration>,
            report: &'a CoherenceReport,
        }
        let doc = CoherenceDocument { source: &source, calibration: &calibration, report: &report };
        std::fs::write(
            &json_path,
            serde_json::to_string_pretty(&doc)
                .map_err(|e| AppError::Io(format!("serialising report: {e}")))?,
        )
        .map_err(|e| AppError::Io(format!("writing {}: {e}", json_path.display())))?;
        std::fs::write(&txt_path, &table)
            .map_err(|e| AppError::Io(format!("writing {}: {e}", txt_path.display())))?;
        RunManifest::new("coherence")
            .param("source", &source)
            .param("ages", ages_spec)
            .output(&json_path)
            .output(&txt_path)
            .write_beside(&json_path)?;
        println!("reports written to {} and {}", json_path.display(), txt_path.display());
    }
    // Violations are findings, not errors: exit 0 either way.
    Ok(())
}

fn render_coherence_table(report: &CoherenceReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "median time to event from age 0 (reference profile): {:.4} years\n",
        report.baseline_mte
    ));
    out.push_str(&format!(
        "{:>8} {:>14} {:>10} {:>10}  note\n",
        "age", "mte_years", "upper_ok", "lower_ok"
    ));
    for entry in &report.entries {
        let fmt_flag = |flag: Option<bool>| match flag {
            Some(true) => "ok",
            Some(false) => "VIOLATED",
            None => "-",
        };
        let mte = entry.mte.map_or("-".to_string(), |m| format!("{m:.4}"));
        out.push_str(&format!(
            "{:>8.1} {:>14} {:>10} {:>10}  {}\n",
            entry.age,
            mte,
            fmt_flag(entry.upper_ok),
            fmt_flag(entry.lower_ok),
            entry.note.as_deref().unwrap_or("")
        ));
    }
    match &report.worst_violation {
        Some(v) => out.push_str(&format!(
            "worst violation: {:?} inequality at age {:.1}, {:.4} years\n",
            v.inequality, v.age, v.magnitude_years
        )),
        None => out.push_str("no violations on the scanned grid\n"),
    }
    out
}
