//! Acceptance suite: one test per release criterion. Each prints a
//! `ACCEPTANCE <name>: PASS/FAIL` line (visible under `--nocapture`) and
//! asserts, so `cargo test` is the gate.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use survscale::coherence::{
    self, calibrate_wilson_shape, ClaimScanConfig, Inequality, WILSON_P_50_TO_75,
    WILSON_P_55_TO_75,
};
use survscale::dist::{self, DistributionFamily, ParamSet};
use survscale::evaluate::{self, BrierConfig, GridRow};
use survscale::paradigms::{self, Paradigm, Subject, TrainOptions, TrainedModel};
use survscale::residualize::{self, CovariateTable, LinearTrend};
use survscale::simdata::{self, GeneratorConfig, TrueBetas};
use survscale::survreg::{self, FitOptions, FitResult, ModelForm, ShapeMode, SurvivalSample};

fn verdict(name: &str, ok: bool, detail: &str) {
    println!("ACCEPTANCE {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "ACCEPTANCE {name} FAILED: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Wilson paradox reproduction
// ---------------------------------------------------------------------------

#[test]
fn wilson_paradox_reproduction() {
    let t0 = Instant::now();
    let (model, cal) = calibrate_wilson_shape().expect("calibration solves");
    let p1_ok = (cal.p_event_50_to_75 - WILSON_P_50_TO_75).abs() <= 0.002;
    let p2_ok = (cal.p_event_55_to_75 - WILSON_P_55_TO_75).abs() <= 0.002;
    let report = coherence::check_inequalities(&model, &[50.0, 55.0]).unwrap();
    let lower_flagged = report.has_violation(Inequality::Lower);

    let out = Command::new(env!("CARGO_BIN_EXE_survscale"))
        .args(["coherence", "--wilson", "--ages", "50:55:5"])
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let cli_ok = out.status.success() && text.contains("VIOLATED");
    let elapsed = t0.elapsed();

    verdict(
        "wilson-paradox",
        p1_ok && p2_ok && lower_flagged && cli_ok && elapsed < Duration::from_secs(1),
        &format!(
            "P(50->75) = {:.4}, P(55->75) = {:.4}, lower violation flagged = {}, cli flags = {}, {:?}",
            cal.p_event_50_to_75, cal.p_event_55_to_75, lower_flagged, cli_ok, elapsed
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Claim suite
// ---------------------------------------------------------------------------

#[test]
fn claim_suite() {
    let t0 = Instant::now();
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for form in [ModelForm::Aft, ModelForm::Ph] {
        for transform in [
            survscale::AgeTransform::Identity,
            survscale::AgeTransform::Log1p,
        ] {
            for family in DistributionFamily::ALL {
                let config = ClaimScanConfig::standard(
                    form,
                    transform,
                    family,
                    ParamSet::new(1.0, 1.0).unwrap(),
                );
                assert_eq!(config.betas, vec![-0.2, -0.05, 0.0, 0.05, 0.2]);
                assert_eq!(config.ages.len(), 80);
                assert_eq!(config.rescales, vec![1e-3, 1.0, 1e3]);
                let report = coherence::claim_scan(&config).unwrap();
                for scan in &report.results {
                    checked += 1;
                    let ok = if scan.beta == 0.0 {
                        scan.violation_free()
                    } else {
                        !scan.violation_free()
                    };
                    if !ok {
                        failures.push(format!(
                            "{form:?}/{transform:?}/{family}: beta {} wrong",
                            scan.beta
                        ));
                    }
                }
            }
        }
    }
    let elapsed = t0.elapsed();
    verdict(
        "claim-suite",
        failures.is_empty() && elapsed < Duration::from_secs(10),
        &format!("{checked} (form, transform, family, beta) scans, {failures:?}, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------------
// 3. Table-1 qualitative pattern
// ---------------------------------------------------------------------------

fn table1_generator(seed: u64, n: usize) -> GeneratorConfig {
    GeneratorConfig {
        n,
        entry_age_range: (40.0, 70.0),
        trends: vec![
            LinearTrend { intercept: 60.0, slope: 2.0 },
            LinearTrend { intercept: 140.0, slope: -1.5 },
        ],
        noise_sd: vec![5.0, 4.0],
        betas: TrueBetas { intercept: 4.45, fixed: vec![0.10], varying: vec![-0.08, 0.05] },
        family: DistributionFamily::Weibull,
        shape: 2.0,
        censor_age: 88.0,
        seed,
    }
}

#[test]
fn table1_qualitative_pattern() {
    let t0 = Instant::now();
    let cohort = simdata::generate_cohort(&table1_generator(1234, 4000)).unwrap();
    let config = BrierConfig {
        n_reps: 100,
        seed: 99,
        paradigms: vec![Paradigm::AftAc, Paradigm::AftNa, Paradigm::Raft],
        families: DistributionFamily::ALL.to_vec(),
        ..BrierConfig::default()
    };
    let report = evaluate::run_evaluation(&cohort, &config).unwrap();

    let mut ordering_ok = true;
    let mut detail = String::new();
    let mut raft_means = Vec::new();
    for family in DistributionFamily::ALL {
        let ac = report.mean(family, Paradigm::AftAc).unwrap();
        let na = report.mean(family, Paradigm::AftNa).unwrap();
        let raft = report.mean(family, Paradigm::Raft).unwrap();
        raft_means.push(raft);
        if !(raft < ac && ac < na) {
            ordering_ok = false;
        }
        detail.push_str(&format!("{family}: raft {raft:.4} aft-ac {ac:.4} aft-na {na:.4}; "));
    }
    let raft_mean = raft_means.iter().sum::<f64>() / raft_means.len() as f64;
    let raft_spread = raft_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - raft_means.iter().cloned().fold(f64::INFINITY, f64::min);
    let stability_ok = raft_spread < 0.25 * raft_mean;
    let elapsed = t0.elapsed();
    detail.push_str(&format!(
        "raft spread/mean {:.3}; {:?}",
        raft_spread / raft_mean,
        elapsed
    ));
    verdict(
        "table1-pattern",
        ordering_ok && stability_ok && elapsed < Duration::from_secs(600),
        &detail,
    );
}

// ---------------------------------------------------------------------------
// 4. Oracle equivalences
// ---------------------------------------------------------------------------

#[test]
fn oracle_equivalences() {
    // (a) closed-form exponential MLE: lambda-hat = sum(t) / n_events.
    let mut rng = ChaCha12Rng::seed_from_u64(12);
    let mut exp_ok = true;
    for case in 0..20 {
        let data: Vec<SurvivalSample> = (0..40)
            .map(|_| {
                let t = 0.05 + 3.0 * rng.random::<f64>();
                SurvivalSample::new(0.0, t, rng.random::<f64>() < 0.7, vec![]).unwrap()
            })
            .collect();
        if !data.iter().any(|s| s.event) {
            continue;
        }
        let closed_form = data.iter().map(|s| s.exit).sum::<f64>()
            / data.iter().filter(|s| s.event).count() as f64;
        let fit = survreg::fit(
            &data,
            DistributionFamily::Weibull,
            ModelForm::Aft,
            &FitOptions { shape: ShapeMode::Fixed(1.0), ..FitOptions::default() },
        )
        .unwrap();
        let rel = (fit.coefficients[0].exp() - closed_form).abs() / closed_form;
        if !(fit.converged && rel <= 1e-8) {
            exp_ok = false;
            println!("  exponential case {case}: rel {rel:.3e}");
        }
    }
    // The two hand cases.
    let all_events: Vec<SurvivalSample> = [1.0, 2.0, 3.0]
        .iter()
        .map(|t| SurvivalSample::new(0.0, *t, true, vec![]).unwrap())
        .collect();
    let fit_a = survreg::fit(
        &all_events,
        DistributionFamily::Weibull,
        ModelForm::Aft,
        &FitOptions { shape: ShapeMode::Fixed(1.0), ..FitOptions::default() },
    )
    .unwrap();
    exp_ok &= (fit_a.coefficients[0].exp() - 2.0).abs() / 2.0 <= 1e-8;
    let censored: Vec<SurvivalSample> = [(1.0, true), (2.0, true), (3.0, false)]
        .iter()
        .map(|(t, e)| SurvivalSample::new(0.0, *t, *e, vec![]).unwrap())
        .collect();
    let fit_c = survreg::fit(
        &censored,
        DistributionFamily::Weibull,
        ModelForm::Aft,
        &FitOptions { shape: ShapeMode::Fixed(1.0), ..FitOptions::default() },
    )
    .unwrap();
    exp_ok &= (fit_c.coefficients[0].exp() - 3.0).abs() / 3.0 <= 1e-8;

    // (b) Stage-1 OLS against hand values.
    let table = CovariateTable::new(
        vec![1.0, 2.0, 3.0],
        vec![vec![1.0], vec![2.0], vec![4.0]],
    )
    .unwrap();
    let (s1, resid) = residualize::fit_stage1(&table).unwrap();
    let ols_ok = (s1.trends[0].slope - 1.5).abs() <= 1e-10
        && (s1.trends[0].intercept + 2.0 / 3.0).abs() <= 1e-10
        && (resid[0][0] - 1.0 / 6.0).abs() <= 1e-10
        && (resid[1][0] + 1.0 / 3.0).abs() <= 1e-10
        && (resid[2][0] - 1.0 / 6.0).abs() <= 1e-10;

    // (c) Weibull AFT <-> PH equivalence on a shared cohort.
    let cohort = simdata::generate_cohort(&table1_generator(5150, 800)).unwrap();
    let tight = TrainOptions {
        fit: FitOptions { grad_tol: 1e-10, ..FitOptions::default() },
        ..TrainOptions::default()
    };
    let raft =
        paradigms::train(&cohort, Paradigm::Raft, DistributionFamily::Weibull, &tight).unwrap();
    let rph =
        paradigms::train(&cohort, Paradigm::Rph, DistributionFamily::Weibull, &tight).unwrap();
    let ll_ok = (raft.fit.max_loglik - rph.fit.max_loglik).abs() <= 1e-6;
    let mut map_ok = (raft.fit.coefficients[0] - rph.fit.coefficients[0]).abs() <= 1e-4;
    for j in 1..raft.fit.coefficients.len() {
        map_ok &= (rph.fit.coefficients[j] + raft.fit.shape() * raft.fit.coefficients[j]).abs()
            <= 1e-4;
    }

    // (d) time rescaling moves only the intercept, by ln k.
    let mut rescale_ok = true;
    let base_samples: Vec<SurvivalSample> = cohort
        .iter()
        .take(400)
        .map(|s| {
            SurvivalSample::new(
                s.entry_age,
                s.exit_age(),
                s.event,
                vec![s.fixed_covariates[0], s.varying_covariates[0]],
            )
            .unwrap()
        })
        .collect();
    let k = 12.0f64;
    let scaled: Vec<SurvivalSample> = base_samples
        .iter()
        .map(|s| {
            SurvivalSample::new(s.entry * k, s.exit * k, s.event, s.covariates.clone()).unwrap()
        })
        .collect();
    for family in DistributionFamily::ALL {
        let opts = FitOptions { grad_tol: 1e-10, ..FitOptions::default() };
        let base = survreg::fit(&base_samples, family, ModelForm::Aft, &opts).unwrap();
        let resc = survreg::fit(&scaled, family, ModelForm::Aft, &opts).unwrap();
        rescale_ok &= base.converged && resc.converged;
        rescale_ok &= (resc.coefficients[0] - base.coefficients[0] - k.ln()).abs() <= 1e-6;
        for j in 1..base.coefficients.len() {
            rescale_ok &= (resc.coefficients[j] - base.coefficients[j]).abs() <= 1e-6;
        }
        rescale_ok &= (resc.log_shape - base.log_shape).abs() <= 1e-6;
    }

    verdict(
        "oracle-equivalences",
        exp_ok && ols_ok && ll_ok && map_ok && rescale_ok,
        &format!(
            "exponential MLE {exp_ok}, stage-1 OLS {ols_ok}, AFT/PH loglik {ll_ok} map {map_ok}, rescale {rescale_ok}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Numerical hygiene
// ---------------------------------------------------------------------------

#[test]
fn numerical_hygiene() {
    // Gradient versus central finite differences, 50 random points per
    // (family, form).
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    let data: Vec<SurvivalSample> = (0..50)
        .map(|_| {
            let entry = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.5 * rng.random::<f64>() };
            let exit = entry + 0.1 + 2.5 * rng.random::<f64>();
            SurvivalSample::new(
                entry,
                exit,
                rng.random::<f64>() < 0.7,
                vec![rng.random::<f64>() - 0.5, 2.0 * rng.random::<f64>() - 1.0],
            )
            .unwrap()
        })
        .collect();
    let combos = [
        (DistributionFamily::Weibull, ModelForm::Aft),
        (DistributionFamily::LogNormal, ModelForm::Aft),
        (DistributionFamily::LogLogistic, ModelForm::Aft),
        (DistributionFamily::Weibull, ModelForm::Ph),
    ];
    let mut grad_ok = true;
    let mut worst_rel = 0.0f64;
    for (family, form) in combos {
        for _ in 0..50 {
            let coefs = [
                1.2 * rng.random::<f64>(),
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ];
            let log_shape = 0.8 * rng.random::<f64>() - 0.4;
            let grad = survreg::grad_loglik(&coefs, log_shape, &data, family, form).unwrap();
            for j in 0..=coefs.len() {
                let x = if j < coefs.len() { coefs[j] } else { log_shape };
                let h = 1e-6 * (1.0 + x.abs());
                let eval = |delta: f64| {
                    let mut c = coefs.to_vec();
                    let mut ls = log_shape;
                    if j < c.len() {
                        c[j] += delta;
                    } else {
                        ls += delta;
                    }
                    survreg::loglik(&c, ls, &data, family, form).unwrap()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1.0);
                worst_rel = worst_rel.max(rel);
                if rel >= 1e-5 {
                    grad_ok = false;
                }
            }
        }
    }

    // Quantile / cdf round trip.
    let mut rt_ok = true;
    let mut worst_rt = 0.0f64;
    for family in DistributionFamily::ALL {
        for &(scale, shape) in &[(1.0, 1.0), (80.0, 2.0), (3.0, 0.5), (0.4, 4.0)] {
            let p = ParamSet::new(scale, shape).unwrap();
            let mut q = 1e-4;
            while q < 1.0 - 1e-4 {
                let t = dist::quantile(q, family, p).unwrap();
                let rel = (dist::cdf(t, family, p) - q).abs() / q;
                worst_rt = worst_rt.max(rel);
                if rel >= 1e-8 {
                    rt_ok = false;
                }
                q += 0.0097;
            }
        }
    }

    // Parameter recovery: every coefficient within 3 SE of truth in at least
    // 95 of 100 seeded replicates at n = 2000.
    let truth = [4.45, 0.10, -0.08, 0.05];
    let mut passes = 0;
    for seed in 0..100u64 {
        let cohort = simdata::generate_cohort(&table1_generator(9000 + seed, 2000)).unwrap();
        let model = paradigms::train(
            &cohort,
            Paradigm::Raft,
            DistributionFamily::Weibull,
            &TrainOptions::default(),
        )
        .unwrap();
        if !model.fit.converged {
            continue;
        }
        let Some(ses) = &model.fit.std_errors else { continue };
        let ok = truth
            .iter()
            .enumerate()
            .all(|(j, beta)| (model.fit.coefficients[j] - beta).abs() <= 3.0 * ses[j]);
        if ok {
            passes += 1;
        }
    }
    let recovery_ok = passes >= 95;

    verdict(
        "numerical-hygiene",
        grad_ok && rt_ok && recovery_ok,
        &format!(
            "worst gradient rel err {worst_rel:.2e}, worst round-trip rel err {worst_rt:.2e}, recovery {passes}/100"
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Brier hand oracle
// ---------------------------------------------------------------------------

#[test]
fn brier_hand_oracle() {
    // Grid form of the worked example: subject A scored over years 1..=3
    // with the event in year 2, subject B over years 1..=2 censored, dummy
    // exponential model with scale 10.
    let g = |j: f64| -(-j / 10.0f64).exp_m1();
    let rows = vec![
        GridRow { predicted: vec![g(1.0), g(2.0), g(3.0)], observed: vec![false, true, true] },
        GridRow { predicted: vec![g(1.0), g(2.0)], observed: vec![false, false] },
    ];
    let hand_sum = (g(1.0) - 0.0) * (g(1.0) - 0.0)
        + (g(2.0) - 1.0) * (g(2.0) - 1.0)
        + (g(3.0) - 1.0) * (g(3.0) - 1.0)
        + (g(1.0) - 0.0) * (g(1.0) - 0.0)
        + (g(2.0) - 0.0) * (g(2.0) - 0.0);
    let grid_exact = evaluate::brier_from_rows(&rows).unwrap() == hand_sum / 5.0;

    // End-to-end through brier_score with a dummy unit-exponential model
    // (log-scale 0, so the stored and hand-computed scale agree exactly):
    // A has the event at year 2.0, B is censored at 2.5, so the grid cap is
    // floor(2.5) = 2 and both subjects score years 1..=2.
    let ge = |j: f64| -(-j).exp_m1();
    let dummy = TrainedModel {
        paradigm: Paradigm::AftAc,
        family: DistributionFamily::Weibull,
        stage1: None,
        fit: FitResult {
            coefficients: vec![0.0, 0.0],
            log_shape: 0.0,
            shape_fixed: true,
            max_loglik: 0.0,
            converged: true,
            iterations: 0,
            std_errors: None,
            log_shape_std_error: None,
        },
        covariate_layout: vec!["age".to_string()],
        age_transform: survscale::AgeTransform::Identity,
        n_fixed: 0,
        n_varying: 0,
    };
    let subject = |id: &str, age: f64, followup: f64, event: bool| Subject {
        id: id.to_string(),
        entry_age: age,
        fixed_covariates: vec![],
        varying_covariates: vec![],
        followup_time: followup,
        event,
    };
    let validation = vec![subject("a", 50.0, 2.0, true), subject("b", 60.0, 2.5, false)];
    let b = evaluate::brier_score(&dummy, &validation).unwrap();
    let hand_e2e = ((ge(1.0) - 0.0) * (ge(1.0) - 0.0)
        + (ge(2.0) - 1.0) * (ge(2.0) - 1.0)
        + (ge(1.0) - 0.0) * (ge(1.0) - 0.0)
        + (ge(2.0) - 0.0) * (ge(2.0) - 0.0))
        / 4.0;
    let e2e_exact = b == hand_e2e;

    verdict(
        "brier-hand-oracle",
        grid_exact && e2e_exact,
        &format!("grid form exact: {grid_exact}, end-to-end exact: {e2e_exact}"),
    );
}
