//! Shared fixtures for the criterion benches.

use survscale::residualize::LinearTrend;
use survscale::simdata::{generate_cohort, GeneratorConfig, TrueBetas};
use survscale::{DistributionFamily, Subject};

/// Age-scale Weibull cohort with a strong covariate trend; the standard
/// workload for fitting and scoring benches.
pub fn bench_cohort(n: usize, seed: u64) -> Vec<Subject> {
    let config = GeneratorConfig {
        n,
        entry_age_range: (40.0, 70.0),
        trends: vec![LinearTrend { intercept: 60.0, slope: 2.0 }],
        noise_sd: vec![5.0],
        betas: TrueBetas { intercept: 4.45, fixed: vec![0.10], varying: vec![-0.08] },
        family: DistributionFamily::Weibull,
        shape: 2.0,
        censor_age: 88.0,
        seed,
    };
    generate_cohort(&config).expect("valid config")
}
