//! d-prime from AUC: `d′ = √2 · Φ⁻¹(AUC)`.

use crate::error::{Error, Result};

/// AUCs are clamped into `[AUC_CLAMP, 1 − AUC_CLAMP]` under [`ClampPolicy::Clamp`].
pub const AUC_CLAMP: f64 = 1e-7;

/// Standard normal CDF via `erfc`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Acklam's rational approximation, relative error < 1.15e-9.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.38357751867269e+02,
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

fn acklam(p: f64) -> f64 {
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Standard normal quantile for `p ∈ (0, 1)`: the rational approximation
/// refined by one Newton step against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let x = acklam(p);
    // upper half: work with the complement so the residual keeps precision
    let residual = if p > 0.5 {
        (1.0 - p) - normal_cdf(-x)
    } else {
        normal_cdf(x) - p
    };
    x - residual / normal_pdf(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClampPolicy {
    /// Clamp into `[1e-7, 1 − 1e-7]` and flag it.
    Clamp,
    /// Reject AUCs outside the open unit interval.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DPrime {
    pub value: f64,
    /// The input AUC was clamped before conversion.
    pub clamped: bool,
}

pub fn auc_to_dprime(auc: f64, policy: ClampPolicy) -> Result<DPrime> {
    if auc.is_nan() {
        return Err(Error::AucOutOfRange(auc));
    }
    let (p, clamped) = match policy {
        ClampPolicy::Clamp => {
            let p = auc.clamp(AUC_CLAMP, 1.0 - AUC_CLAMP);
            (p, p != auc)
        }
        ClampPolicy::Strict => {
            if auc <= 0.0 || auc >= 1.0 {
                return Err(Error::AucOutOfRange(auc));
            }
            (auc, false)
        }
    };
    Ok(DPrime {
        value: std::f64::consts::SQRT_2 * normal_quantile(p),
        clamped,
    })
}
