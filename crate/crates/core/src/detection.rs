//! Detection maps and their evaluation against ground truth.

use crate::error::{Error, Result};
use crate::tensor::Cube;

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionMap {
    pub height: usize,
    pub width: usize,
    /// Row-major, `height * width` nonnegative scores.
    pub scores: Vec<f64>,
}

impl DetectionMap {
    pub fn new(height: usize, width: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != height * width {
            return Err(Error::InvalidShape(format!(
                "{height}x{width} map needs {} scores, got {}",
                height * width,
                scores.len()
            )));
        }
        if let Some(offset) = scores.iter().position(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::param("scores", format!("score at {offset} is negative or non-finite")));
        }
        Ok(DetectionMap { height, width, scores })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.width + j]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthMask {
    pub height: usize,
    pub width: usize,
    /// Row-major; `true` marks an anomaly pixel.
    pub labels: Vec<bool>,
}

impl GroundTruthMask {
    pub fn new(height: usize, width: usize, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::InvalidShape(format!(
                "{height}x{width} mask needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(GroundTruthMask { height, width, labels })
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn background_count(&self) -> usize {
        self.labels.len() - self.anomaly_count()
    }

    pub fn inverted(&self) -> Self {
        GroundTruthMask { height: self.height, width: self.width, labels: self.labels.iter().map(|l| !l).collect() }
    }

    fn check_against(&self, map: &DetectionMap) -> Result<()> {
        if (self.height, self.width) != (map.height, map.width) {
            return Err(Error::InvalidShape(format!(
                "map is {}x{} but ground truth is {}x{}",
                map.height, map.width, self.height, self.width
            )));
        }
        if self.anomaly_count() == 0 || self.background_count() == 0 {
            return Err(Error::Degenerate("ground truth needs both anomaly and background pixels".into()));
        }
        Ok(())
    }
}

/// Euclidean norm of each pixel's tube in the anomaly component.
pub fn detection_map(anomaly: &Cube) -> DetectionMap {
    let s = anomaly.shape();
    let scores = anomaly.tubes().map(|t| t.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    DetectionMap { height: s.height, width: s.width, scores }
}

/// Min-max scaling to `[0, 1]`; a constant map becomes all zeros.
pub fn normalize_map(map: &DetectionMap) -> DetectionMap {
    let lo = map.scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scores = if hi > lo {
        let span = hi - lo;
        map.scores.iter().map(|s| (s - lo) / span).collect()
    } else {
        vec![0.0; map.scores.len()]
    };
    DetectionMap { height: map.height, width: map.width, scores }
}

/// Tube norms of `V` minus its per-band median: a detector with no
/// denoising, used as a reference point.
pub fn median_residual_map(observed: &Cube) -> DetectionMap {
    let s = observed.shape();
    let medians: Vec<f64> = (0..s.bands)
        .map(|k| {
            let mut band: Vec<f64> = observed.tubes().map(|t| t[k]).collect();
            band.sort_by(f64::total_cmp);
            let n = band.len();
            if n % 2 == 1 {
                band[n / 2]
            } else {
                0.5 * (band[n / 2 - 1] + band[n / 2])
            }
        })
        .collect();
    let scores =
        observed.tubes().map(|t| t.iter().zip(&medians).map(|(v, m)| (v - m) * (v - m)).sum::<f64>().sqrt()).collect();
    DetectionMap { height: s.height, width: s.width, scores }
}

/// ROC curve as `(P_FA, P_D)` pairs. Thresholds run over the distinct scores
/// in descending order after a `+∞` sentinel; a pixel counts as detected when
/// its score is at least the threshold. The curve starts at `(0, 0)` and ends
/// at `(1, 1)`.
pub fn roc_points(map: &DetectionMap, gt: &GroundTruthMask) -> Result<Vec<(f64, f64)>> {
    gt.check_against(map)?;
    let n_a = gt.anomaly_count() as f64;
    let n_b = gt.background_count() as f64;
    let mut order: Vec<usize> = (0..map.scores.len()).collect();
    order.sort_by(|&x, &y| map.scores[y].total_cmp(&map.scores[x]));
    let mut points = vec![(0.0, 0.0)];
    let (mut hits, mut false_alarms) = (0usize, 0usize);
    let mut idx = 0;
    while idx < order.len() {
        let threshold = map.scores[order[idx]];
        while idx < order.len() && map.scores[order[idx]] == threshold {
            if gt.labels[order[idx]] {
                hits += 1;
            } else {
                false_alarms += 1;
            }
            idx += 1;
        }
        points.push((false_alarms as f64 / n_b, hits as f64 / n_a));
    }
    Ok(points)
}

/// Trapezoidal area under [`roc_points`]; ties contribute one half, matching
/// the Mann–Whitney statistic.
pub fn auc(map: &DetectionMap, gt: &GroundTruthMask) -> Result<f64> {
    let pts = roc_points(map, gt)?;
    Ok(pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5).sum())
}

/// Squared error ratio (×100) between a `[0, 1]`-normalized map and the
/// binary ground truth.
pub fn ser(map: &DetectionMap, gt: &GroundTruthMask) -> Result<f64> {
    gt.check_against(map)?;
    const SLACK: f64 = 1e-12;
    if let Some(p) = map.scores.iter().find(|&&p| !(-SLACK..=1.0 + SLACK).contains(&p)) {
        return Err(Error::param("map", format!("score {p} outside [0, 1]; normalize first")));
    }
    let sum: f64 = map
        .scores
        .iter()
        .zip(&gt.labels)
        .map(|(&p, &anomalous)| if anomalous { (p - 1.0) * (p - 1.0) } else { p * p })
        .sum();
    Ok(sum / map.scores.len() as f64 * 100.0)
}
