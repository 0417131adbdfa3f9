//! Ranking metrics for multi-label scores: AP, AUC and d-prime.

mod dprime;
mod ranking;
mod report;

pub use dprime::{auc_to_dprime, normal_cdf, normal_quantile, ClampPolicy, DPrime, AUC_CLAMP};
pub use ranking::{auc, average_precision};
pub use report::{evaluate, ClassMetrics, EvalReport};
