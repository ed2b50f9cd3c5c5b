//! Parametric baseline distributions (Weibull, log-normal, log-logistic).
//!
//! All three families are parameterised by a positive `scale` (same units as
//! the time axis) and a positive dimensionless `shape`, and all reduce to a
//! common internal coordinate `v = shape * ln(t / scale)`:
//!
//! * Weibull:       `F(t) = 1 - exp(-(t/scale)^shape)`
//! * log-logistic:  `F(t) = 1 / (1 + (t/scale)^-shape)`
//! * log-normal:    `ln T ~ Normal(ln scale, sigma = 1/shape)`
//!
//! With these conventions the scale is the median for the log-normal and
//! log-logistic families, and a larger shape always means less dispersion.
//! Log-space survival values are computed without premature underflow so that
//! likelihood code can condition on survival deep into the tail.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const LN_SQRT_2PI: f64 = 0.918938533204672741780329736406;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Baseline distribution family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionFamily {
    Weibull,
    LogNormal,
    LogLogistic,
}

impl DistributionFamily {
    pub const ALL: [DistributionFamily; 3] = [
        DistributionFamily::Weibull,
        DistributionFamily::LogNormal,
        DistributionFamily::LogLogistic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DistributionFamily::Weibull => "weibull",
            DistributionFamily::LogNormal => "lognormal",
            DistributionFamily::LogLogistic => "loglogistic",
        }
    }
}

impl std::fmt::Display for DistributionFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DistributionFamily {
    type Err = DistError;

    fn from_str(s: &str) -> Result<Self, DistError> {
        match s.to_ascii_lowercase().as_str() {
            "weibull" => Ok(DistributionFamily::Weibull),
            "lognormal" | "log-normal" => Ok(DistributionFamily::LogNormal),
            "loglogistic" | "log-logistic" => Ok(DistributionFamily::LogLogistic),
            other => Err(DistError::InvalidParams(format!(
                "unknown distribution family '{other}' (expected weibull, lognormal or loglogistic)"
            ))),
        }
    }
}

/// Scale-shape pair, validated at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSet {
    scale: f64,
    shape: f64,
}

impl ParamSet {
    pub fn new(scale: f64, shape: f64) -> Result<Self, DistError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(DistError::InvalidParams(format!(
                "scale must be finite and > 0, got {scale}"
            )));
        }
        if !(shape.is_finite() && shape > 0.0) {
            return Err(DistError::InvalidParams(format!(
                "shape must be finite and > 0, got {shape}"
            )));
        }
        Ok(ParamSet { scale, shape })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Same distribution expressed in a time unit multiplied by `k`.
    pub fn rescaled(&self, k: f64) -> Result<Self, DistError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(DistError::Domain(format!(
                "rescale factor must be finite and > 0, got {k}"
            )));
        }
        ParamSet::new(self.scale * k, self.shape)
    }
}

/// `shape * ln(t / scale)`; `-inf` at `t = 0`.
#[inline]
fn v_coord(t: f64, p: ParamSet) -> f64 {
    p.shape * (t.ln() - p.scale.ln())
}

/// `ln(1 + e^v)` without overflow.
#[inline]
pub(crate) fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// `1 / (1 + e^-v)` without overflow.
#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Standard normal helpers used by the log-normal family.
pub(crate) mod normal {
    use super::LN_SQRT_2PI;
    use std::f64::consts::SQRT_2;

    /// Complementary error function, accurate to a few ulp over the whole
    /// range. Power series (no cancellation) below 1.5, Lentz continued
    /// fraction for the upper incomplete gamma `Q(1/2, x^2)` above.
    pub fn erfc(x: f64) -> f64 {
        if x < 0.0 {
            return 2.0 - erfc(-x);
        }
        if x < 1.5 {
            return 1.0 - erf_series(x);
        }
        let u = x * x;
        let a = 0.5;
        let tiny = 1e-300;
        let mut b = u + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=400 {
            let an = -f64::from(i) * (f64::from(i) - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() <= 1e-16 {
                break;
            }
        }
        // Q(1/2, x^2) = exp(-x^2) * x / sqrt(pi) * h
        (-u).exp() * x / std::f64::consts::PI.sqrt() * h
    }

    /// `erf` by its cancellation-free series `(2x/sqrt(pi)) e^{-x^2}
    /// sum (2x^2)^n / (2n+1)!!`; used for |x| < 1.5.
    fn erf_series(x: f64) -> f64 {
        let u = 2.0 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut denom = 1.0;
        for _ in 0..200 {
            denom += 2.0;
            term *= u / denom;
            sum += term;
            if term <= 1e-17 * sum {
                break;
            }
        }
        2.0 / std::f64::consts::PI.sqrt() * x * (-x * x).exp() * sum
    }

    #[inline]
    pub fn log_pdf(z: f64) -> f64 {
        -0.5 * z * z - LN_SQRT_2PI
    }

    /// Lower-tail probability via erfc; accurate in both tails.
    #[inline]
    pub fn cdf(z: f64) -> f64 {
        0.5 * erfc(-z / SQRT_2)
    }

    /// Upper-tail probability.
    #[inline]
    pub fn sf(z: f64) -> f64 {
        0.5 * erfc(z / SQRT_2)
    }

    /// Log of the upper-tail probability. Uses erfc up to 8 standard
    /// deviations and the Mills-ratio asymptotic series beyond, so the result
    /// stays finite far past the point where `sf` underflows.
    pub fn log_sf(z: f64) -> f64 {
        if z <= 0.0 {
            (-cdf(z)).ln_1p()
        } else if z <= 8.0 {
            sf(z).ln()
        } else {
            // ln Q(z) = -z^2/2 - ln z - ln sqrt(2 pi) + ln sum,
            // sum = 1 - 1/z^2 + 3/z^4 - 15/z^6 + ... truncated at its
            // smallest term.
            let z2 = z * z;
            let mut sum = 1.0;
            let mut term = 1.0;
            let mut n = 0u32;
            loop {
                let next = -term * (2.0 * f64::from(n) + 1.0) / z2;
                if next.abs() >= term.abs() && n > 0 {
                    break;
                }
                n += 1;
                term = next;
                sum += term;
                if term.abs() < 1e-17 * sum.abs() || n > 200 {
                    break;
                }
            }
            -0.5 * z2 - z.ln() - LN_SQRT_2PI + sum.ln()
        }
    }

    /// Inverse of `cdf`. Acklam's rational approximation refined by one
    /// Halley step; absolute error well below 1e-9 over (0, 1).
    pub fn inv_cdf(p: f64) -> f64 {
        debug_assert!(p > 0.0 && p < 1.0);

        const A: [f64; 6] = [
            -3.969683028665376e+01,
            2.209460984245205e+02,
            -2.759285104469687e+02,
            1.383577518672690e+02,
            -3.066479806614716e+01,
            2.506628277459239e+00,
        ];
        const B: [f64; 5] = [
            -5.447609879822406e+01,
            1.615858368580409e+02,
            -1.556989798598866e+02,
            6.680131188771972e+01,
            -1.328068155288572e+01,
        ];
        const C: [f64; 6] = [
            -7.784894002430293e-03,
            -3.223964580411365e-01,
            -2.400758277161838e+00,
            -2.549732539343734e+00,
            4.374664141464968e+00,
            2.938163982698783e+00,
        ];
        const D: [f64; 4] = [
            7.784695709041462e-03,
            3.224671290700398e-01,
            2.445134137142996e+00,
            3.754408661907416e+00,
        ];
        const P_LOW: f64 = 0.02425;

        let x = if p < P_LOW {
            let q = (-2.0 * p.ln()).sqrt();
            (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
        } else if p <= 1.0 - P_LOW {
            let q = p - 0.5;
            let r = q * q;
            (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
                / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
        } else {
            let q = (-2.0 * (-p).ln_1p()).sqrt();
            -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
        };

        // One Halley refinement using the full-precision erfc-based cdf.
        let err = cdf(x) - p;
        let u = err * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
        x - u / (1.0 + 0.5 * x * u)
    }

    /// Inverse of `log_sf`: the z with `ln Q(z) = log_q`.
    pub fn inv_log_sf(log_q: f64) -> f64 {
        debug_assert!(log_q <= 0.0);
        if log_q > -700.0 {
            // exp(log_q) does not underflow; use the quantile directly.
            // Q(z) = Phi(-z), so z = -Phi^{-1}(q) with q evaluated in the
            // accurate lower-tail branch.
            let q = log_q.exp();
            if q >= 1.0 {
                return f64::NEG_INFINITY;
            }
            -inv_cdf(q)
        } else {
            // Deep tail: invert the asymptotic expansion by Newton steps on
            // log_sf, whose slope is -hazard(z) ~ -(z + 1/z).
            let mut z = (-2.0 * log_q).sqrt();
            for _ in 0..60 {
                let f = log_sf(z) - log_q;
                let slope = -(z + 1.0 / z);
                let step = f / slope;
                z -= step;
                if step.abs() < 1e-13 * z.abs() {
                    break;
                }
            }
            z
        }
    }
}

/// `F(t)`: probability of an event by time `t`. Zero for `t <= 0`.
pub fn cdf(t: f64, family: DistributionFamily, p: ParamSet) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match family {
        DistributionFamily::Weibull => -(-(t / p.scale).powf(p.shape)).exp_m1(),
        DistributionFamily::LogNormal => normal::cdf(v_coord(t, p)),
        DistributionFamily::LogLogistic => sigmoid(v_coord(t, p)),
    }
}

/// `S(t) = 1 - F(t)`.
pub fn survival(t: f64, family: DistributionFamily, p: ParamSet) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    match family {
        DistributionFamily::Weibull => (-(t / p.scale).powf(p.shape)).exp(),
        DistributionFamily::LogNormal => normal::sf(v_coord(t, p)),
        DistributionFamily::LogLogistic => sigmoid(-v_coord(t, p)),
    }
}

/// `ln S(t)`, computed in log space so large `t` does not underflow to `-inf`
/// before the distribution truly has no mass left.
pub fn log_survival(t: f64, family: DistributionFamily, p: ParamSet) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match family {
        DistributionFamily::Weibull => -(t / p.scale).powf(p.shape),
        DistributionFamily::LogNormal => normal::log_sf(v_coord(t, p)),
        DistributionFamily::LogLogistic => -softplus(v_coord(t, p)),
    }
}

/// `ln f(t)`; `-inf` for `t <= 0`.
pub fn log_density(t: f64, family: DistributionFamily, p: ParamSet) -> f64 {
    if t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let v = v_coord(t, p);
    let base = p.shape.ln() - t.ln();
    match family {
        DistributionFamily::Weibull => base + v - (t / p.scale).powf(p.shape),
        DistributionFamily::LogNormal => base + normal::log_pdf(v),
        DistributionFamily::LogLogistic => base + v - 2.0 * softplus(v),
    }
}

/// `f(t)`.
pub fn density(t: f64, family: DistributionFamily, p: ParamSet) -> f64 {
    log_density(t, family, p).exp()
}

/// `h(t) = f(t) / S(t)`.
pub fn hazard(t: f64, family: DistributionFamily, p: ParamSet) -> f64 {
    (log_density(t, family, p) - log_survival(t, family, p)).exp()
}

/// `F^{-1}(q)` for `q` strictly inside (0, 1).
pub fn quantile(q: f64, family: DistributionFamily, p: ParamSet) -> Result<f64, DistError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(DistError::Domain(format!(
            "quantile probability must lie in (0, 1), got {q}"
        )));
    }
    let t = match family {
        DistributionFamily::Weibull => p.scale * (-(-q).ln_1p()).powf(1.0 / p.shape),
        DistributionFamily::LogNormal => p.scale * (normal::inv_cdf(q) / p.shape).exp(),
        DistributionFamily::LogLogistic => p.scale * ((q.ln() - (-q).ln_1p()) / p.shape).exp(),
    };
    Ok(t)
}

/// Inverse of [`log_survival`]: the time `t` with `ln S(t) = log_s`.
///
/// Stable where the plain quantile is not: conditioning deep in the tail only
/// needs log-survival differences, never the underflowing probabilities.
pub fn survival_inverse_log(
    log_s: f64,
    family: DistributionFamily,
    p: ParamSet,
) -> Result<f64, DistError> {
    if !(log_s <= 0.0) {
        return Err(DistError::Domain(format!(
            "log-survival target must be <= 0, got {log_s}"
        )));
    }
    if log_s == 0.0 {
        return Ok(0.0);
    }
    let t = match family {
        DistributionFamily::Weibull => p.scale * (-log_s).powf(1.0 / p.shape),
        DistributionFamily::LogNormal => {
            p.scale * (normal::inv_log_sf(log_s) / p.shape).exp()
        }
        DistributionFamily::LogLogistic => p.scale * (-log_s).exp_m1().powf(1.0 / p.shape),
    };
    Ok(t)
}
