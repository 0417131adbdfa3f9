use std::fmt::Write as _;

use serde::Serialize;

use super::dprime::{auc_to_dprime, ClampPolicy};
use super::ranking::{auc, average_precision};
use crate::error::{Error, Result};
use crate::nn::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub ap: f64,
    pub auc: f64,
    pub dprime: f64,
    pub n_pos: usize,
}

/// Per-class and aggregate metrics. Classes without positives or without
/// negatives are listed in `excluded` and left out of every aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classes: Vec<ClassMetrics>,
    pub excluded: Vec<usize>,
    /// Mean of per-class AP.
    pub map: f64,
    /// Mean of per-class AUC.
    pub mean_auc: f64,
    /// d-prime of `mean_auc`.
    pub dprime: f64,
    /// Mean of per-class d-prime.
    pub mean_class_dprime: f64,
    /// Some AUC (per class or aggregate) hit the d-prime clamp.
    pub dprime_clamped: bool,
}

/// Scores every class of an `N × K` score matrix against `N × K` binary
/// targets.
pub fn evaluate(scores: &Tensor2, targets: &Tensor2) -> Result<EvalReport> {
    if scores.shape() != targets.shape() {
        return Err(Error::shape(
            "evaluate targets",
            format!("{:?}", scores.shape()),
            format!("{:?}", targets.shape()),
        ));
    }
    if scores.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !scores.is_finite() {
        return Err(Error::InvalidConfig(
            "scores contain NaN or infinity".into(),
        ));
    }

    let mut classes = Vec::new();
    let mut excluded = Vec::new();
    let mut clamped = false;
    for k in 0..scores.cols() {
        let column: Vec<f64> = (0..scores.rows()).map(|n| scores[(n, k)]).collect();
        let labels: Vec<bool> = (0..targets.rows()).map(|n| targets[(n, k)] > 0.5).collect();
        let area = match auc(&column, &labels) {
            Ok(a) => a,
            Err(Error::NoPositives | Error::NoNegatives) => {
                excluded.push(k);
                continue;
            }
            Err(e) => return Err(e),
        };
        let d = auc_to_dprime(area, ClampPolicy::Clamp)?;
        clamped |= d.clamped;
        classes.push(ClassMetrics {
            class: k,
            ap: average_precision(&column, &labels)?,
            auc: area,
            dprime: d.value,
            n_pos: labels.iter().filter(|&&l| l).count(),
        });
    }
    if classes.is_empty() {
        return Err(Error::NoPositives);
    }

    let n = classes.len() as f64;
    let map = classes.iter().map(|c| c.ap).sum::<f64>() / n;
    let mean_auc = classes.iter().map(|c| c.auc).sum::<f64>() / n;
    let mean_class_dprime = classes.iter().map(|c| c.dprime).sum::<f64>() / n;
    let aggregate = auc_to_dprime(mean_auc, ClampPolicy::Clamp)?;
    Ok(EvalReport {
        classes,
        excluded,
        map,
        mean_auc,
        dprime: aggregate.value,
        mean_class_dprime,
        dprime_clamped: clamped || aggregate.clamped,
    })
}

impl EvalReport {
    /// Tab-separated records `class AP AUC dprime n_pos`, one per evaluated
    /// class, then a `mean` line with the aggregates and the number of
    /// evaluated classes in the last column.
    pub fn to_records(&self) -> String {
        let mut out = String::from("class\tAP\tAUC\tdprime\tn_pos\n");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{}",
                c.class, c.ap, c.auc, c.dprime, c.n_pos
            );
        }
        let _ = writeln!(
            out,
            "mean\t{:.6}\t{:.6}\t{:.6}\t{}",
            self.map,
            self.mean_auc,
            self.dprime,
            self.classes.len()
        );
        out
    }

    /// Fixed-width table for terminals, with an AP bar per class.
    pub fn to_table(&self) -> String {
        const BAR: usize = 20;
        let mut out = format!(
            "{:>5}  {:>8}  {:>8}  {:>8}  {:>6}  AP\n",
            "class", "AP", "AUC", "d'", "n_pos"
        );
        for c in &self.classes {
            let filled = (c.ap * BAR as f64).round() as usize;
            let _ = writeln!(
                out,
                "{:>5}  {:>8.4}  {:>8.4}  {:>8.4}  {:>6}  {}{}",
                c.class,
                c.ap,
                c.auc,
                c.dprime,
                c.n_pos,
                "#".repeat(filled.min(BAR)),
                ".".repeat(BAR - filled.min(BAR))
            );
        }
        let _ = writeln!(
            out,
            "{:>5}  {:>8.4}  {:>8.4}  {:>8.4}",
            "mean", self.map, self.mean_auc, self.dprime
        );
        if !self.excluded.is_empty() {
            let list: Vec<String> = self.excluded.iter().map(|k| k.to_string()).collect();
            let _ = writeln!(
                out,
                "excluded (no positives or no negatives): {}",
                list.join(", ")
            );
        }
        if self.dprime_clamped {
            out.push_str("warning: AUC clamped before d' conversion\n");
        }
        out
    }
}
