//! Evaluation metrics and report aggregation.
//!
//! Score ties are broken by variable index everywhere, so every metric is a
//! deterministic function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard added to gap denominators.
pub const GAP_EPS: f64 = 1e-10;

/// Gaps above this are shown as this value in reports.
pub const GAP_DISPLAY_CAP: f64 = 1e6;

/// Indices sorted by `key` descending, ties by index.
fn ranked(key: impl Fn(usize) -> f64, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    idx
}

/// Sum over cut-offs `k` of precision at `k` times the change in recall.
///
/// ```
/// let ap = solpred::metrics::average_precision(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap();
/// assert!((ap - 5.0 / 6.0).abs() < 1e-12);
/// ```
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), found: scores.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::Metric("average precision needs at least one positive label".into()));
    }
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &i) in ranked(|i| scores[i], scores.len()).iter().enumerate() {
        if labels[i] {
            hits += 1;
            ap += (hits as f64 / (k + 1) as f64) / positives as f64;
        }
    }
    Ok(ap)
}

/// Relative distance to the best known objective, in percent.
pub fn primal_gap(obj: f64, best_obj: f64) -> f64 {
    (obj - best_obj).abs() / (obj.abs().max(best_obj.abs()) + GAP_EPS) * 100.0
}

/// Relative distance between an objective and a proven bound, in percent.
pub fn optimality_gap(obj: f64, lb: f64) -> f64 {
    (obj - lb).abs() / (obj.abs() + GAP_EPS) * 100.0
}

/// Clamps a gap for display. Infinite and NaN gaps map to the cap.
pub fn display_gap(gap: f64) -> f64 {
    if gap.is_nan() {
        GAP_DISPLAY_CAP
    } else {
        gap.min(GAP_DISPLAY_CAP)
    }
}

/// Number of variables covered by fraction `f` of `n`.
///
/// A tiny slack keeps products like `0.3 * 10` from rounding up to 4.
pub fn fraction_count(f: f64, n: usize) -> usize {
    ((f * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Accuracy of the rounded prediction on the `ceil(f n)` most predictable
/// variables, for each fraction `f` in `(0, 1]`.
pub fn accuracy_at_fraction(z: &[f64], labels: &[bool], fractions: &[f64]) -> Result<Vec<(f64, f64)>> {
    if z.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), found: z.len() });
    }
    if z.is_empty() {
        return Err(Error::Metric("accuracy curve needs at least one labeled variable".into()));
    }
    if z.iter().any(|v| v.is_nan()) {
        return Err(Error::Metric("NaN prediction".into()));
    }
    let order = ranked(|i| z[i].max(1.0 - z[i]), z.len());
    let correct: Vec<bool> = order.iter().map(|&i| (z[i] >= 0.5) == labels[i]).collect();
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Metric(format!("fraction {f} is outside (0, 1]")));
            }
            let k = fraction_count(f, z.len()).max(1);
            let hits = correct[..k].iter().filter(|&&c| c).count();
            Ok((f, hits as f64 / k as f64))
        })
        .collect()
}

/// Constant score equal to the positive fraction.
pub fn prevalence_baseline(labels: &[bool]) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::Metric("prevalence needs at least one label".into()));
    }
    let p = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
    Ok(vec![p; labels.len()])
}

pub const DEFAULT_FRACTIONS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// One solver run scored against the best known objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEval {
    pub mode: String,
    pub status: String,
    pub objective: Option<f64>,
    pub primal_gap: Option<f64>,
    pub optimality_gap: Option<f64>,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    pub instance: String,
    pub stable_vars: usize,
    pub ap: Option<f64>,
    pub ap_baseline: Option<f64>,
    pub best_objective: Option<f64>,
    pub runs: Vec<RunEval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: String,
    pub runs: usize,
    pub solved: usize,
    pub mean_primal_gap: Option<f64>,
    pub mean_optimality_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instances: Vec<InstanceEval>,
    pub mean_ap: Option<f64>,
    pub mean_ap_baseline: Option<f64>,
    /// Instances where the model's AP beats the baseline's.
    pub ap_wins: usize,
    pub modes: Vec<ModeSummary>,
    /// `(fraction, accuracy)` over all stable variables pooled.
    pub accuracy_curve: Vec<(f64, f64)>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl EvalReport {
    /// Aggregates per-instance results. Modes are listed in first-seen
    /// order; a run without an incumbent counts toward `runs` only.
    pub fn new(instances: Vec<InstanceEval>, accuracy_curve: Vec<(f64, f64)>) -> Self {
        let mut names: Vec<String> = Vec::new();
        for r in instances.iter().flat_map(|i| &i.runs) {
            if !names.contains(&r.mode) {
                names.push(r.mode.clone());
            }
        }
        let modes = names
            .into_iter()
            .map(|mode| {
                let runs: Vec<&RunEval> = instances.iter().flat_map(|i| &i.runs).filter(|r| r.mode == mode).collect();
                ModeSummary {
                    runs: runs.len(),
                    solved: runs.iter().filter(|r| r.objective.is_some()).count(),
                    mean_primal_gap: mean(runs.iter().filter_map(|r| r.primal_gap)),
                    mean_optimality_gap: mean(runs.iter().filter_map(|r| r.optimality_gap)),
                    mode,
                }
            })
            .collect();
        EvalReport {
            mean_ap: mean(instances.iter().filter_map(|i| i.ap)),
            mean_ap_baseline: mean(instances.iter().filter_map(|i| i.ap_baseline)),
            ap_wins: instances.iter().filter(|i| matches!((i.ap, i.ap_baseline), (Some(a), Some(b)) if a > b)).count(),
            instances,
            modes,
            accuracy_curve,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_spot_values() {
        assert_eq!(average_precision(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        // ties by index: the positive at index 1 ranks second
        let ap = average_precision(&[0.5, 0.5], &[false, true]).unwrap();
        assert!((ap - 0.5).abs() < 1e-15);
        assert!(average_precision(&[0.5], &[false]).is_err());
        assert!(average_precision(&[0.5], &[true, false]).is_err());
    }

    #[test]
    fn gap_spot_values() {
        assert_eq!(primal_gap(5.0, 5.0), 0.0);
        assert!((primal_gap(110.0, 100.0) - 10.0 / 110.0 * 100.0).abs() < 1e-9);
        assert_eq!(primal_gap(0.0, 0.0), 0.0);
        assert!((optimality_gap(100.0, 90.0) - 10.0).abs() < 1e-9);
        assert_eq!(optimality_gap(3.0, 3.0), 0.0);
        assert_eq!(display_gap(optimality_gap(0.0, -1.0)), GAP_DISPLAY_CAP);
        assert_eq!(display_gap(f64::INFINITY), GAP_DISPLAY_CAP);
    }

    #[test]
    fn accuracy_curve_examples() {
        let z = [0.9, 0.6, 0.1, 0.45];
        let y = [true, false, false, true];
        let c = accuracy_at_fraction(&z, &y, &[0.5, 1.0]).unwrap();
        assert_eq!(c[0], (0.5, 1.0));
        assert_eq!(c[1], (1.0, 0.5));
        assert_eq!(fraction_count(0.3, 10), 3);
        assert!(accuracy_at_fraction(&z, &y, &[0.0]).is_err());
        assert!(accuracy_at_fraction(&[], &[], &[1.0]).is_err());
    }

    #[test]
    fn baseline_scores() {
        assert_eq!(prevalence_baseline(&[true, false, false, true]).unwrap(), vec![0.5; 4]);
        assert_eq!(prevalence_baseline(&[true; 3]).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn report_aggregates() {
        let run = |mode: &str, gap: Option<f64>| RunEval {
            mode: mode.into(),
            status: "optimal".into(),
            objective: gap.map(|_| 1.0),
            primal_gap: gap,
            optimality_gap: gap,
            nodes: 1,
        };
        let inst = |ap, runs| InstanceEval {
            instance: "i".into(),
            stable_vars: 3,
            ap: Some(ap),
            ap_baseline: Some(0.5),
            best_objective: Some(1.0),
            runs,
        };
        let r = EvalReport::new(
            vec![inst(0.9, vec![run("approx", Some(2.0)), run("baseline", None)]), inst(0.4, vec![run("approx", Some(0.0))])],
            vec![],
        );
        assert_eq!(r.ap_wins, 1);
        assert!((r.mean_ap.unwrap() - 0.65).abs() < 1e-12);
        assert_eq!(r.modes[0].mode, "approx");
        assert_eq!(r.modes[0].mean_primal_gap, Some(1.0));
        assert_eq!((r.modes[1].runs, r.modes[1].solved), (1, 0));
    }
}
