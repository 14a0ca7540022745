//! Scripted detector emitting analytic boxes and embeddings with known
//! identities, for ground-truth tracking scenarios.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::bbox::BBox;
use super::{Detection, DetectionBatch};

/// Unit vector along axis `k`.
pub fn basis_embedding(dim: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[k % dim] = 1.0;
    v
}

pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

pub fn random_embedding(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    normalize((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Adds isotropic Gaussian noise of standard deviation `sigma` and renormalizes.
pub fn perturb(embedding: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    normalize(
        embedding
            .iter()
            .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

/// A scripted person moving at constant pixel velocity.
#[derive(Debug, Clone)]
pub struct Actor {
    pub id: usize,
    pub start: (f64, f64),
    /// Pixels per frame.
    pub velocity: (f64, f64),
    pub size: (f64, f64),
    pub embedding: Vec<f64>,
    /// Frame ranges during which the actor is detected.
    pub visible: Vec<Range<u64>>,
}

impl Actor {
    pub fn bbox_at(&self, frame: u64) -> BBox {
        let t = frame as f64;
        BBox::new(
            self.start.0 + self.velocity.0 * t,
            self.start.1 + self.velocity.1 * t,
            self.size.0,
            self.size.1,
        )
    }

    pub fn is_visible(&self, frame: u64) -> bool {
        self.visible.iter().any(|r| r.contains(&frame))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    pub actors: Vec<Actor>,
    /// Standard deviation of embedding noise (0 keeps embeddings exact).
    pub embedding_noise: f64,
    pub seed: u64,
}

impl SyntheticDetector {
    pub fn new(actors: Vec<Actor>) -> Self {
        Self {
            actors,
            embedding_noise: 0.0,
            seed: 0,
        }
    }

    /// Detections for one frame with the ground-truth actor id of each.
    pub fn frame(&self, frame_id: u64) -> Vec<(usize, Detection)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ frame_id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.actors
            .iter()
            .filter(|a| a.is_visible(frame_id))
            .map(|a| {
                let embedding = if self.embedding_noise > 0.0 {
                    perturb(&a.embedding, self.embedding_noise, &mut rng)
                } else {
                    a.embedding.clone()
                };
                (
                    a.id,
                    Detection {
                        bbox: a.bbox_at(frame_id),
                        confidence: 0.9,
                        embedding,
                    },
                )
            })
            .collect()
    }

    pub fn batch(&self, frame_id: u64) -> DetectionBatch {
        DetectionBatch {
            frame_id,
            detections: self.frame(frame_id).into_iter().map(|(_, d)| d).collect(),
        }
    }

    /// Two people walking toward each other along the same row, crossing
    /// mid-sequence, with orthogonal embeddings.
    pub fn crossing(frames: u64, dim: usize) -> Self {
        let span = 400.0;
        let speed = span / frames as f64;
        Self::new(vec![
            Actor {
                id: 0,
                start: (100.0, 240.0),
                velocity: (speed, 0.0),
                size: (60.0, 150.0),
                embedding: basis_embedding(dim, 0),
                visible: vec![0..frames],
            },
            Actor {
                id: 1,
                start: (100.0 + span, 250.0),
                velocity: (-speed, 0.0),
                size: (60.0, 150.0),
                embedding: basis_embedding(dim, 1),
                visible: vec![0..frames],
            },
        ])
    }

    /// One person visible, gone for longer than the track lifetime, then back.
    pub fn leave_and_return(dim: usize, away: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut d = Self::new(vec![
            Actor {
                id: 0,
                start: (200.0, 240.0),
                velocity: (0.5, 0.0),
                size: (60.0, 150.0),
                embedding: random_embedding(dim, &mut rng),
                visible: vec![0..20, 20 + away..40 + away],
            },
            Actor {
                id: 1,
                start: (500.0, 240.0),
                velocity: (0.0, 0.0),
                size: (50.0, 140.0),
                embedding: random_embedding(dim, &mut rng),
                visible: vec![10..25],
            },
        ]);
        d.embedding_noise = 0.02;
        d.seed = 11;
        d
    }
}
