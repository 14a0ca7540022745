//! DeepSORT-style person tracking: Kalman prediction, gated Hungarian
//! association, track lifecycle and a re-identifying person registry.
//!
//! Association is a single gated pass over all live tracks rather than
//! DeepSORT's age-ordered matching cascade.

pub mod association;
pub mod bbox;
pub mod hungarian;
pub mod kalman;
pub mod registry;
pub mod synthetic;
pub mod track;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use association::{associate, AssociationParams, Associations};
pub use bbox::{iou, BBox};
pub use hungarian::{hungarian, Assignment, AssignmentError};
pub use kalman::{KalmanError, KalmanParams};
pub use registry::{PersonId, PersonRecord, PersonRegistry, RegistryError};
pub use track::{Track, TrackId, TrackStatus};

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("frame {got} does not follow frame {last}")]
    NonMonotonicFrame { last: u64, got: u64 },
    #[error("detection {index}: {reason}")]
    InvalidDetection { index: usize, reason: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// One per-frame observation from the external detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
    pub embedding: Vec<f64>,
}

/// Ingestion payload: `{frame_id, detections: [{bbox, confidence, embedding}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBatch {
    pub frame_id: u64,
    pub detections: Vec<Detection>,
}

impl Detection {
    pub fn validate(&self, dim: usize) -> Result<(), String> {
        if !self.bbox.is_valid() {
            return Err("bbox needs finite center and positive extents".into());
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if self.embedding.len() != dim {
            return Err(format!("embedding has {} dims, expected {dim}", self.embedding.len()));
        }
        let norm = self.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(format!("embedding norm {norm} is not 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    pub kalman: KalmanParams,
    pub association: AssociationParams,
    pub n_init: u32,
    pub max_age: u32,
    pub gallery_size: usize,
    pub tau_reid: f64,
    pub embedding_dim: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            kalman: KalmanParams::default(),
            association: AssociationParams::default(),
            n_init: 3,
            max_age: 30,
            gallery_size: 50,
            tau_reid: 0.8,
            embedding_dim: 128,
        }
    }
}

/// Confirmed track as exposed to the wizard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackView {
    pub track_id: TrackId,
    pub person_id: Option<PersonId>,
    pub label: String,
    pub group: Option<String>,
    pub bbox: BBox,
    pub misses: u32,
    /// Index of the detection that updated this track in the current frame.
    pub detection: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TrackerEvent {
    Confirmed {
        track_id: TrackId,
        person_id: PersonId,
        reidentified: bool,
    },
    Deleted {
        track_id: TrackId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerSnapshot {
    pub frame_id: u64,
    pub tracks: Vec<TrackView>,
    pub events: Vec<TrackerEvent>,
}

/// Tracker state plus the person registry; the single mutator of both.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    tracks: Vec<Track>,
    next_track_id: TrackId,
    last_frame: Option<u64>,
    registry: PersonRegistry,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Self::with_registry(params, PersonRegistry::default())
    }

    pub fn with_registry(params: TrackerParams, registry: PersonRegistry) -> Self {
        Self {
            params,
            tracks: Vec::new(),
            next_track_id: 1,
            last_frame: None,
            registry,
        }
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    /// Live (not deleted) tracks, including tentative ones.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn registry(&self) -> &PersonRegistry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut PersonRegistry {
        &mut self.registry
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    /// Predict, associate, update and run lifecycle rules for one frame.
    pub fn step(&mut self, frame_id: u64, detections: &[Detection]) -> Result<TrackerSnapshot, TrackerError> {
        if let Some(last) = self.last_frame {
            if frame_id <= last {
                return Err(TrackerError::NonMonotonicFrame { last, got: frame_id });
            }
        }
        for (index, d) in detections.iter().enumerate() {
            d.validate(self.params.embedding_dim)
                .map_err(|reason| TrackerError::InvalidDetection { index, reason })?;
        }
        let dt = self.last_frame.map_or(1, |last| frame_id - last) as f64;
        self.last_frame = Some(frame_id);

        let kalman = self.params.kalman;
        for t in &mut self.tracks {
            t.predict(&kalman, dt);
        }
        let assoc = associate(&self.tracks, detections, &kalman, &self.params.association);

        let mut used_detection = vec![None; self.tracks.len()];
        let mut unmatched_tracks = assoc.unmatched_tracks.clone();
        let mut unmatched_detections = assoc.unmatched_detections.clone();
        for &(ti, di) in &assoc.matches {
            let track = &mut self.tracks[ti];
            match track.update(&kalman, &detections[di]) {
                Ok(()) => {
                    used_detection[ti] = Some(di);
                    if let Some(p) = self.registry.person_for_track(track.id) {
                        self.registry.extend_gallery(p, [detections[di].embedding.clone()]);
                    }
                }
                Err(KalmanError::SingularInnovation) => {
                    // corrupt filter: retire the track, let the detection start afresh
                    track.status = TrackStatus::Deleted;
                    unmatched_detections.push(di);
                }
            }
        }
        for &ti in &unmatched_tracks {
            self.tracks[ti].mark_missed(self.params.max_age);
        }
        unmatched_tracks.clear();

        let mut events = Vec::new();
        for t in &mut self.tracks {
            if t.status == TrackStatus::Tentative && t.hits >= self.params.n_init {
                t.status = TrackStatus::Confirmed;
            }
        }
        // Link newly confirmed tracks; people already on screen cannot reappear.
        let newly: Vec<usize> = self
            .tracks
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_confirmed() && self.registry.person_for_track(t.id).is_none())
            .map(|(i, _)| i)
            .collect();
        for i in newly {
            let visible: BTreeSet<PersonId> = self
                .tracks
                .iter()
                .filter(|t| !t.is_deleted())
                .filter_map(|t| self.registry.person_for_track(t.id))
                .collect();
            let t = &self.tracks[i];
            let (person_id, reidentified) = self.registry.link_track(t.id, &t.gallery_vec(), self.params.tau_reid, &visible);
            events.push(TrackerEvent::Confirmed {
                track_id: t.id,
                person_id,
                reidentified,
            });
        }

        unmatched_detections.sort_unstable();
        for di in unmatched_detections {
            let mut t = Track::new(self.next_track_id, &detections[di], &kalman, self.params.gallery_size);
            self.next_track_id += 1;
            if self.params.n_init <= 1 {
                t.status = TrackStatus::Confirmed;
                let visible: BTreeSet<PersonId> = self
                    .tracks
                    .iter()
                    .filter(|t| !t.is_deleted())
                    .filter_map(|t| self.registry.person_for_track(t.id))
                    .collect();
                let (person_id, reidentified) = self.registry.link_track(t.id, &t.gallery_vec(), self.params.tau_reid, &visible);
                events.push(TrackerEvent::Confirmed {
                    track_id: t.id,
                    person_id,
                    reidentified,
                });
            }
            self.tracks.push(t);
            used_detection.push(Some(di));
        }

        let mut kept_detection = Vec::with_capacity(self.tracks.len());
        let mut kept = Vec::with_capacity(self.tracks.len());
        for (t, d) in self.tracks.drain(..).zip(used_detection) {
            if t.is_deleted() {
                events.push(TrackerEvent::Deleted { track_id: t.id });
            } else {
                kept.push(t);
                kept_detection.push(d);
            }
        }
        self.tracks = kept;

        let tracks = self
            .tracks
            .iter()
            .zip(kept_detection)
            .filter(|(t, _)| t.is_confirmed())
            .map(|(t, detection)| self.view(t, detection))
            .collect();
        Ok(TrackerSnapshot {
            frame_id,
            tracks,
            events,
        })
    }

    fn view(&self, t: &Track, detection: Option<usize>) -> TrackView {
        let person = self.registry.person_for_track(t.id).and_then(|p| self.registry.get(p));
        TrackView {
            track_id: t.id,
            person_id: person.map(|p| p.person_id),
            label: person.map_or_else(|| format!("track-{}", t.id), |p| p.label.clone()),
            group: person.and_then(|p| p.group.clone()),
            bbox: t.bbox(),
            misses: t.misses,
            detection,
        }
    }

    /// Current confirmed tracks with up-to-date registry labels.
    pub fn snapshot(&self) -> Vec<TrackView> {
        self.tracks
            .iter()
            .filter(|t| t.is_confirmed())
            .map(|t| self.view(t, None))
            .collect()
    }

    pub fn label_person(&mut self, id: PersonId, label: &str) -> Result<(), RegistryError> {
        self.registry.rename(id, label)
    }

    pub fn group_persons(&mut self, ids: &[PersonId], group: Option<&str>) -> Result<(), RegistryError> {
        self.registry.group(ids, group)
    }

    pub fn person_history(&self, id: PersonId) -> Result<&[u64], RegistryError> {
        self.registry.history(id)
    }
}
