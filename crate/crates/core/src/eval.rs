//! Scoring estimates against the true differential graph, and power/FDR
//! curves averaged over replicates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{DifferentialEstimate, Method};
use crate::graph::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    /// |E^diff|.
    pub truth_size: usize,
}

/// True and false positives of `estimate` over unordered off-diagonal pairs.
pub fn confusion(estimate: &DifferentialEstimate, truth: &Graph) -> Result<Confusion> {
    confusion_edges(&estimate.edges, truth)
}

pub fn confusion_edges(estimated: &Graph, truth: &Graph) -> Result<Confusion> {
    if estimated.p() != truth.p() {
        return Err(Error::arg(format!(
            "estimate has {} vertices, truth has {}",
            estimated.p(),
            truth.p()
        )));
    }
    let tp = estimated.edges().filter(|&(i, j)| truth.has_edge(i, j)).count();
    Ok(Confusion {
        tp,
        fp: estimated.edge_count() - tp,
        truth_size: truth.edge_count(),
    })
}

/// `(TP / |E^diff|, FP / max(1, FP + TP))`.
pub fn power_fdr(c: Confusion) -> Result<(f64, f64)> {
    if c.truth_size == 0 {
        return Err(Error::UndefinedPower);
    }
    if c.tp > c.truth_size {
        return Err(Error::arg(format!(
            "{} true positives exceed the {} true edges",
            c.tp, c.truth_size
        )));
    }
    let power = c.tp as f64 / c.truth_size as f64;
    let fdr = c.fp as f64 / (c.fp + c.tp).max(1) as f64;
    Ok((power, fdr))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// λ, λ₂ or α.
    pub param: f64,
    pub power: f64,
    pub fdr: f64,
}

/// Pointwise mean over replicates. Every replicate must list the same
/// parameter values in the same order.
pub fn average_curves(per_replicate: &[Vec<CurvePoint>]) -> Result<Vec<CurvePoint>> {
    let first = per_replicate
        .first()
        .ok_or_else(|| Error::arg("no replicates to average"))?;
    for (r, pts) in per_replicate.iter().enumerate() {
        let same = pts.len() == first.len() && pts.iter().zip(first).all(|(a, b)| a.param == b.param);
        if !same {
            return Err(Error::arg(format!("replicate {r} has a different parameter grid")));
        }
    }
    // Running means, so constant inputs come back unchanged.
    Ok((0..first.len())
        .map(|i| {
            let (mut power, mut fdr) = (0.0, 0.0);
            for (r, pts) in per_replicate.iter().enumerate() {
                let w = 1.0 / (r + 1) as f64;
                power += (pts[i].power - power) * w;
                fdr += (pts[i].fdr - fdr) * w;
            }
            CurvePoint {
                param: first[i].param,
                power,
                fdr,
            }
        })
        .collect())
}

/// Area under power-versus-FDR. Points are sorted by FDR (powers at equal FDR
/// are averaged), the curve is extended flat to FDR 0 and FDR 1, and the area
/// is integrated by trapezoids.
pub fn curve_auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::arg(format!("need at least 2 points, got {}", points.len())));
    }
    for &(fdr, power) in points {
        if !(0.0..=1.0).contains(&fdr) || !(0.0..=1.0).contains(&power) {
            return Err(Error::arg(format!("point ({fdr}, {power}) outside the unit square")));
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len() + 2);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let mut sum = 0.0;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            sum += sorted[j].1;
            j += 1;
        }
        merged.push((sorted[i].0, sum / (j - i) as f64));
        i = j;
    }
    let head = (0.0, merged[0].1);
    let tail = (1.0, merged[merged.len() - 1].1);
    merged.insert(0, head);
    merged.push(tail);
    let area: f64 = merged
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum();
    Ok(area.clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfCurve {
    pub method: Method,
    pub scenario: String,
    pub n: usize,
    pub points: Vec<CurvePoint>,
    pub auc: f64,
}

impl PerfCurve {
    pub fn new(method: Method, scenario: impl Into<String>, n: usize, points: Vec<CurvePoint>) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.fdr, p.power)).collect();
        let auc = curve_auc(&pairs)?;
        Ok(PerfCurve {
            method,
            scenario: scenario.into(),
            n,
            points,
            auc,
        })
    }
}
