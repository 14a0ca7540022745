//! Gated appearance + overlap association between predicted tracks and detections.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::bbox::iou;
use super::hungarian::hungarian;
use super::kalman::{KalmanParams, CHI2_95_4DOF};
use super::track::Track;
use super::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationParams {
    /// Weight of the overlap term; `1 − lambda` weighs appearance.
    pub lambda: f64,
    /// Maximum appearance distance for an admissible pair.
    pub tau_app: f64,
    /// Matches costing more than this are dropped.
    pub c_max: f64,
    /// Squared-Mahalanobis gate on the box measurement.
    pub gate: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            tau_app: 0.4,
            c_max: 0.7,
            gate: CHI2_95_4DOF,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Associations {
    /// `(track index, detection index)`.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `1 − max cosine similarity` between the embedding and any gallery entry.
pub fn appearance_distance<'a>(gallery: impl IntoIterator<Item = &'a Vec<f64>>, embedding: &[f64]) -> f64 {
    let best = gallery
        .into_iter()
        .map(|g| cosine_similarity(g, embedding))
        .fold(f64::NEG_INFINITY, f64::max);
    if best.is_finite() {
        1.0 - best
    } else {
        1.0
    }
}

/// Pair cost, or `None` when the pair is gated out.
pub fn pair_cost(track: &Track, det: &Detection, kalman: &KalmanParams, params: &AssociationParams) -> Option<f64> {
    let d_app = appearance_distance(track.gallery(), &det.embedding);
    if d_app > params.tau_app {
        return None;
    }
    let maha = kalman.gating_distance(&track.filter, &det.bbox.to_measurement()).ok()?;
    if maha > params.gate {
        return None;
    }
    let overlap = iou(&track.bbox(), &det.bbox);
    Some(params.lambda * (1.0 - overlap) + (1.0 - params.lambda) * d_app)
}

/// Single-pass gated assignment. Tracks are expected to be predicted to the
/// detections' frame already.
pub fn associate(tracks: &[Track], detections: &[Detection], kalman: &KalmanParams, params: &AssociationParams) -> Associations {
    let (n, m) = (tracks.len(), detections.len());
    let mut cost = DMatrix::from_element(n, m, f64::INFINITY);
    let mut any = false;
    for (i, t) in tracks.iter().enumerate() {
        for (j, d) in detections.iter().enumerate() {
            if let Some(c) = pair_cost(t, d, kalman, params) {
                cost[(i, j)] = c;
                any = true;
            }
        }
    }

    let mut matches = Vec::new();
    if any {
        // Forbidden pairs become a finite penalty so a partial matching is
        // still optimal; they are filtered out below.
        let penalty = params.c_max.max(1.0) * 4.0 * (n.min(m) as f64 + 1.0);
        let padded = cost.map(|c| if c.is_finite() { c } else { penalty });
        let assignment = hungarian(&padded).expect("padded cost matrix is finite");
        for (i, j) in assignment.pairs {
            let c = cost[(i, j)];
            if c.is_finite() && c <= params.c_max {
                matches.push((i, j));
            }
        }
    }
    let unmatched_tracks = (0..n).filter(|i| !matches.iter().any(|&(t, _)| t == *i)).collect();
    let unmatched_detections = (0..m).filter(|j| !matches.iter().any(|&(_, d)| d == *j)).collect();
    Associations {
        matches,
        unmatched_tracks,
        unmatched_detections,
    }
}
