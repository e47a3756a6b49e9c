//! Thresholding, overlap metrics and the exhaustive optimal-threshold sweep.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{FeatureVolume, Mask, MetricsReport};

/// Number of grid steps between 0 and 1.
pub const GRID_STEPS: usize = 50;

/// The 51 thresholds `0, 0.02, ..., 1`.
pub fn threshold_grid() -> Vec<f64> {
    (0..=GRID_STEPS).map(|k| k as f64 / GRID_STEPS as f64).collect()
}

/// Voxels strictly above `tau`.
pub fn apply_threshold(f: &FeatureVolume, tau: f64) -> Result<Mask> {
    if !f.is_normalized() {
        return Err(Error::NotNormalized);
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("threshold {tau} outside [0, 1]")));
    }
    let values = f.values().iter().map(|&v| v as f64 > tau).collect();
    Mask::new(f.meta().clone(), values)
}

/// Exact voxel counts behind the ratio metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub intersection: u64,
    pub predicted: u64,
    pub truth: u64,
}

impl OverlapCounts {
    pub fn of(pred: &[bool], gt: &[bool]) -> Self {
        let mut c = OverlapCounts::default();
        for (&p, &g) in pred.iter().zip(gt) {
            c.predicted += p as u64;
            c.truth += g as u64;
            c.intersection += (p && g) as u64;
        }
        c
    }

    pub fn union(&self) -> u64 {
        self.predicted + self.truth - self.intersection
    }

    /// Ratios with `0/0 = 1`.
    pub fn metrics(&self, threshold: Option<f64>) -> MetricsReport {
        let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        MetricsReport {
            iou: ratio(self.intersection, self.union()),
            dice: ratio(2 * self.intersection, self.predicted + self.truth),
            recall: ratio(self.intersection, self.truth),
            precision: ratio(self.intersection, self.predicted),
            threshold,
        }
    }
}

/// IoU, Dice, recall and precision of `pred` against `gt`.
pub fn evaluate(pred: &Mask, gt: &Mask) -> Result<MetricsReport> {
    pred.meta().ensure_same_grid(gt.meta(), "evaluate")?;
    Ok(OverlapCounts::of(pred.values(), gt.values()).metrics(None))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub counts: OverlapCounts,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweepResult {
    pub best_threshold: f64,
    pub best_metrics: MetricsReport,
    pub curve: Vec<SweepPoint>,
}

impl ThresholdSweepResult {
    /// `(tau, iou)` pairs over the grid.
    pub fn iou_curve(&self) -> Vec<(f64, f64)> {
        self.curve.iter().map(|p| (p.tau, p.metrics.iou)).collect()
    }

    /// Writes `tau,iou,dice,recall,precision` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "tau,iou,dice,recall,precision")?;
        for p in &self.curve {
            let m = &p.metrics;
            writeln!(out, "{:.2},{},{},{},{}", p.tau, m.iou, m.dice, m.recall, m.precision)?;
        }
        Ok(())
    }
}

/// Thresholds `f` at every grid point and keeps the best IoU (smallest tau on ties).
pub fn sweep_optimal_threshold(f: &FeatureVolume, gt: &Mask) -> Result<ThresholdSweepResult> {
    if !f.is_normalized() {
        return Err(Error::NotNormalized);
    }
    f.meta().ensure_same_grid(gt.meta(), "sweep")?;
    let values = f.values();
    let truth = gt.values();
    let curve: Vec<SweepPoint> = threshold_grid()
        .into_par_iter()
        .map(|tau| {
            let mut c = OverlapCounts::default();
            for (&v, &g) in values.iter().zip(truth) {
                let p = v as f64 > tau;
                c.predicted += p as u64;
                c.truth += g as u64;
                c.intersection += (p && g) as u64;
            }
            SweepPoint { tau, counts: c, metrics: c.metrics(Some(tau)) }
        })
        .collect();
    let mut best = 0;
    for (i, p) in curve.iter().enumerate() {
        if p.metrics.iou > curve[best].metrics.iou {
            best = i;
        }
    }
    Ok(ThresholdSweepResult {
        best_threshold: curve[best].tau,
        best_metrics: curve[best].metrics,
        curve,
    })
}

/// Arithmetic mean of several reports; the threshold is the mean threshold
/// when every report carries one.
pub fn mean_metrics(reports: &[MetricsReport]) -> Option<MetricsReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let avg = |g: fn(&MetricsReport) -> f64| reports.iter().map(g).sum::<f64>() / n;
    let threshold = reports
        .iter()
        .map(|r| r.threshold)
        .collect::<Option<Vec<f64>>>()
        .map(|ts| ts.iter().sum::<f64>() / n);
    Some(MetricsReport {
        iou: avg(|r| r.iou),
        dice: avg(|r| r.dice),
        recall: avg(|r| r.recall),
        precision: avg(|r| r.precision),
        threshold,
    })
}
