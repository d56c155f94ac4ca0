//! Evaluation: noise/coverage of a selection, NC-curves and their area
//! (AUNC), reference curves, NC-ratio, and micro/macro F1.
//!
//! The reference curves satisfy their closed forms exactly:
//!
//! ```
//! use lops::eval::{aunc, optimal_reference, random_reference, OptimalForm};
//!
//! let clean = 0.7;
//! let noise = 1.0 - clean;
//!
//! let opt = optimal_reference(clean, OptimalForm::Unnormalized, 1000).unwrap();
//! assert!((aunc(&opt).unwrap() - noise * noise / 2.0).abs() < 1e-9);
//!
//! let rand = random_reference(clean, 1000).unwrap();
//! assert!((aunc(&rand).unwrap() - noise).abs() < 1e-9);
//! ```
//!
//! ```
//! use std::collections::BTreeMap;
//! use lops::corpus::LabelSpace;
//! use lops::eval::{f1_scores, Averaging};
//!
//! let labels = LabelSpace::new(vec!["a".into(), "b".into()]).unwrap();
//! let gold = BTreeMap::from([("d0".into(), 0), ("d1".into(), 1), ("d2".into(), 1)]);
//! let preds = BTreeMap::from([("d0".into(), 0), ("d1".into(), 1), ("d2".into(), 0)]);
//!
//! let micro = f1_scores(&preds, &gold, &labels, Averaging::Micro).unwrap();
//! assert!((micro - 2.0 / 3.0).abs() < 1e-12);
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceScores;
use crate::corpus::{Document, LabelSpace, PseudoLabelSet};
use crate::error::{LopsError, Result};
use crate::selection::SelectionReport;

/// One sweep point: threshold, coverage, and noise among the selected.
/// `noise` is None when the selection at this threshold is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NCPoint {
    pub gamma: f64,
    pub coverage: f64,
    pub noise: Option<f64>,
}

/// Noise-coverage curve: points ordered by strictly increasing gamma,
/// coverage non-increasing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NCCurve {
    pub function: String,
    pub points: Vec<NCPoint>,
    /// Clean fraction c = |D_correct| / |D| of the underlying set.
    pub clean_fraction: f64,
}

impl NCCurve {
    /// Write CSV with the header `gamma,coverage,noise,nc_ratio`.
    /// Zero-coverage points are skipped (noise undefined there).
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "gamma,coverage,noise,nc_ratio").map_err(|e| LopsError::io("<writer>", e))?;
        for p in &self.points {
            if let (Some(noise), true) = (p.noise, p.coverage > 0.0) {
                let r = noise / p.coverage;
                writeln!(out, "{},{},{},{}", p.gamma, p.coverage, noise, r)
                    .map_err(|e| LopsError::io("<writer>", e))?;
            }
        }
        Ok(())
    }
}

fn gold_map(docs: &[Document]) -> BTreeMap<&str, Option<usize>> {
    docs.iter().map(|d| (d.id.as_str(), d.gold_label)).collect()
}

/// Noise and coverage of a selection against the full pseudo-label set.
pub fn noise_and_coverage(
    selection: &SelectionReport,
    pseudo: &PseudoLabelSet,
    docs: &[Document],
) -> Result<(f64, f64)> {
    if selection.selected.is_empty() {
        return Err(LopsError::Validation(
            "noise undefined for an empty selection (coverage is 0)".into(),
        ));
    }
    let gold = gold_map(docs);
    let mut wrong = 0usize;
    for (id, label) in selection.selected.iter() {
        match gold.get(id) {
            Some(Some(g)) => {
                if *g != label {
                    wrong += 1;
                }
            }
            _ => {
                return Err(LopsError::Validation(format!(
                    "doc {id:?} has no gold label"
                )))
            }
        }
    }
    let eps = wrong as f64 / selection.selected.len() as f64;
    let phi = selection.selected.len() as f64 / pseudo.len() as f64;
    Ok((eps, phi))
}

/// Sweep gamma over all distinct score values (plus an endpoint below
/// the minimum, which selects everything) and record (coverage, noise)
/// for each strict-threshold selection.
pub fn nc_curve(
    scores: &ConfidenceScores,
    pseudo: &PseudoLabelSet,
    docs: &[Document],
) -> Result<NCCurve> {
    if pseudo.is_empty() {
        return Err(LopsError::Validation("nc_curve on empty pseudo-label set".into()));
    }
    let gold = gold_map(docs);
    // (score, wrong) per doc, sorted by score
    let mut items: Vec<(f64, bool)> = Vec::with_capacity(pseudo.len());
    for (id, label) in pseudo.iter() {
        let s = scores
            .get(id)
            .ok_or_else(|| LopsError::Validation(format!("no score for doc {id:?}")))?;
        let wrong = match gold.get(id) {
            Some(Some(g)) => *g != label,
            _ => {
                return Err(LopsError::Validation(format!(
                    "doc {id:?} has no gold label"
                )))
            }
        };
        items.push((s, wrong));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = items.len() as f64;
    let total_wrong = items.iter().filter(|(_, w)| *w).count() as f64;
    let clean_fraction = 1.0 - total_wrong / n;

    let mut thresholds: Vec<f64> = items.iter().map(|(s, _)| *s).collect();
    thresholds.dedup();
    let below_min = thresholds[0] - 1e-6;

    let mut points = Vec::with_capacity(thresholds.len() + 1);
    // suffix counts: docs with score > gamma
    for gamma in std::iter::once(below_min).chain(thresholds) {
        let selected: Vec<&(f64, bool)> = items.iter().filter(|(s, _)| *s > gamma).collect();
        let coverage = selected.len() as f64 / n;
        let noise = if selected.is_empty() {
            None
        } else {
            Some(selected.iter().filter(|(_, w)| *w).count() as f64 / selected.len() as f64)
        };
        points.push(NCPoint {
            gamma,
            coverage,
            noise,
        });
    }
    Ok(NCCurve {
        function: scores.function.clone(),
        points,
        clean_fraction,
    })
}

/// Area under the NC-curve: trapezoidal integral of noise over coverage
/// in [0, 1]. The noise value at the lowest achieved coverage is
/// extended left to coverage 0 so all curves integrate over the same
/// interval. Lower is better.
pub fn aunc(curve: &NCCurve) -> Result<f64> {
    // (coverage, noise) for nonempty points, ascending coverage
    let mut pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter_map(|p| p.noise.map(|e| (p.coverage, e)))
        .collect();
    if pts.is_empty() {
        return Err(LopsError::Validation("aunc needs at least one nonempty point".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    let mut area = pts[0].0 * pts[0].1; // extend-left rectangle
    for w in pts.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    // extend the last value to coverage 1 if the sweep stopped short
    let last = pts.last().unwrap();
    if last.0 < 1.0 {
        area += (1.0 - last.0) * last.1;
    }
    Ok(area)
}

/// Which reading of the optimal reference curve to emit.
///
/// The noise-among-selected form divides the overflow by the selected
/// count; the unnormalized form reports the overflow as a fraction of
/// the whole set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimalForm {
    NoiseAmongSelected,
    Unnormalized,
}

/// Optimal rectifier curve for clean fraction `c` on a uniform
/// coverage grid of `grid + 1` points.
pub fn optimal_reference(c: f64, form: OptimalForm, grid: usize) -> Result<NCCurve> {
    if !(0.0..=1.0).contains(&c) {
        return Err(LopsError::Validation(format!("clean fraction {c} outside [0,1]")));
    }
    let mut points = Vec::with_capacity(grid + 1);
    for k in 0..=grid {
        // gamma ascending, coverage descending
        let gamma = k as f64 / grid as f64;
        let phi = 1.0 - gamma;
        let overflow = (phi - c).max(0.0);
        let noise = if phi > 0.0 {
            Some(match form {
                OptimalForm::Unnormalized => overflow,
                OptimalForm::NoiseAmongSelected => overflow / phi,
            })
        } else {
            None
        };
        points.push(NCPoint {
            gamma,
            coverage: phi,
            noise,
        });
    }
    let name = match form {
        OptimalForm::Unnormalized => "optimal-unnormalized",
        OptimalForm::NoiseAmongSelected => "optimal",
    };
    Ok(NCCurve {
        function: name.into(),
        points,
        clean_fraction: c,
    })
}

/// Random reference: constant noise 1 - c at every coverage.
pub fn random_reference(c: f64, grid: usize) -> Result<NCCurve> {
    if !(0.0..=1.0).contains(&c) {
        return Err(LopsError::Validation(format!("clean fraction {c} outside [0,1]")));
    }
    let points = (0..=grid)
        .map(|k| {
            let gamma = k as f64 / grid as f64;
            let phi = 1.0 - gamma;
            NCPoint {
                gamma,
                coverage: phi,
                noise: (phi > 0.0).then_some(1.0 - c),
            }
        })
        .collect();
    Ok(NCCurve {
        function: "random-reference".into(),
        points,
        clean_fraction: c,
    })
}

/// Both reference curves (optimal in noise-among-selected form, random).
pub fn reference_curves(c: f64, grid: usize) -> Result<(NCCurve, NCCurve)> {
    Ok((
        optimal_reference(c, OptimalForm::NoiseAmongSelected, grid)?,
        random_reference(c, grid)?,
    ))
}

/// r = noise / coverage at one sweep point.
pub fn nc_ratio(point: &NCPoint) -> Result<f64> {
    if point.coverage <= 0.0 {
        return Err(LopsError::Validation("nc_ratio undefined at zero coverage".into()));
    }
    let noise = point
        .noise
        .ok_or_else(|| LopsError::Validation("nc_ratio needs a defined noise".into()))?;
    Ok(noise / point.coverage)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    Micro,
    Macro,
}

/// F1 over predicted vs gold class indices for the same documents.
pub fn f1_scores(
    predictions: &BTreeMap<String, usize>,
    gold: &BTreeMap<String, usize>,
    labels: &LabelSpace,
    averaging: Averaging,
) -> Result<f64> {
    if predictions.is_empty() {
        return Err(LopsError::Validation("f1 on empty prediction set".into()));
    }
    let m = labels.len();
    let mut tp = vec![0usize; m];
    let mut fp = vec![0usize; m];
    let mut fn_ = vec![0usize; m];
    for (id, &pred) in predictions {
        let &g = gold
            .get(id)
            .ok_or_else(|| LopsError::Validation(format!("no gold label for doc {id:?}")))?;
        if pred >= m || g >= m {
            return Err(LopsError::Validation(format!("label out of range for doc {id:?}")));
        }
        if pred == g {
            tp[pred] += 1;
        } else {
            fp[pred] += 1;
            fn_[g] += 1;
        }
    }
    match averaging {
        Averaging::Micro => {
            let tp_sum: usize = tp.iter().sum();
            let fp_sum: usize = fp.iter().sum();
            let fn_sum: usize = fn_.iter().sum();
            let denom = 2 * tp_sum + fp_sum + fn_sum;
            if denom == 0 {
                return Ok(0.0);
            }
            Ok(2.0 * tp_sum as f64 / denom as f64)
        }
        Averaging::Macro => {
            let mut sum = 0.0;
            for j in 0..m {
                let denom = 2 * tp[j] + fp[j] + fn_[j];
                if denom > 0 {
                    sum += 2.0 * tp[j] as f64 / denom as f64;
                }
            }
            Ok(sum / m as f64)
        }
    }
}
