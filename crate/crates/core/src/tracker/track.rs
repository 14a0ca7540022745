use std::collections::VecDeque;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use super::kalman::{Gaussian, KalmanError, KalmanParams};
use super::Detection;

pub type TrackId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

/// A filtered identity over time.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: TrackId,
    pub filter: Gaussian,
    pub status: TrackStatus,
    pub hits: u32,
    pub misses: u32,
    /// Frames since creation.
    pub age: u32,
    gallery: VecDeque<Vec<f64>>,
    gallery_capacity: usize,
}

impl Track {
    pub fn new(id: TrackId, det: &Detection, kalman: &KalmanParams, gallery_capacity: usize) -> Self {
        let mut gallery = VecDeque::with_capacity(gallery_capacity.max(1));
        gallery.push_back(det.embedding.clone());
        Self {
            id,
            filter: kalman.initiate(&det.bbox.to_measurement()),
            status: TrackStatus::Tentative,
            hits: 1,
            misses: 0,
            age: 1,
            gallery,
            gallery_capacity: gallery_capacity.max(1),
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_measurement(&Vector4::new(
            self.filter.mean[0],
            self.filter.mean[1],
            self.filter.mean[2],
            self.filter.mean[3],
        ))
    }

    pub fn gallery(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.gallery.iter()
    }

    pub fn gallery_vec(&self) -> Vec<Vec<f64>> {
        self.gallery.iter().cloned().collect()
    }

    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    pub fn is_deleted(&self) -> bool {
        self.status == TrackStatus::Deleted
    }

    pub fn predict(&mut self, kalman: &KalmanParams, dt: f64) {
        self.filter = kalman.predict(&self.filter, dt);
        self.age += 1;
    }

    /// Kalman correction with the detection; resets misses and stores the embedding.
    pub fn update(&mut self, kalman: &KalmanParams, det: &Detection) -> Result<(), KalmanError> {
        debug_assert!(!self.is_deleted());
        self.filter = kalman.update(&self.filter, &det.bbox.to_measurement())?;
        self.hits += 1;
        self.misses = 0;
        if self.gallery.len() == self.gallery_capacity {
            self.gallery.pop_front();
        }
        self.gallery.push_back(det.embedding.clone());
        Ok(())
    }

    /// Tentative tracks die on their first miss; confirmed ones after `max_age`.
    pub fn mark_missed(&mut self, max_age: u32) {
        self.misses += 1;
        if self.status == TrackStatus::Tentative || self.misses > max_age {
            self.status = TrackStatus::Deleted;
        }
    }
}
