//! Named, groupable people linked to tracks, with appearance galleries for
//! re-identification and per-person interaction history.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::association::cosine_similarity;
use super::track::TrackId;

pub type PersonId = u64;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown person {0}")]
    UnknownPerson(PersonId),
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("registry file: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub person_id: PersonId,
    pub label: String,
    pub group: Option<String>,
    pub linked_tracks: BTreeSet<TrackId>,
    pub gallery: Vec<Vec<f64>>,
    /// Sequence numbers of session events attributed to this person.
    pub history: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRegistry {
    persons: BTreeMap<PersonId, PersonRecord>,
    track_links: BTreeMap<TrackId, PersonId>,
    next_id: PersonId,
    gallery_capacity: usize,
}

impl Default for PersonRegistry {
    fn default() -> Self {
        Self::new(100)
    }
}

impl PersonRegistry {
    pub fn new(gallery_capacity: usize) -> Self {
        Self {
            persons: BTreeMap::new(),
            track_links: BTreeMap::new(),
            next_id: 1,
            gallery_capacity: gallery_capacity.max(1),
        }
    }

    pub fn get(&self, id: PersonId) -> Option<&PersonRecord> {
        self.persons.get(&id)
    }

    pub fn persons(&self) -> impl Iterator<Item = &PersonRecord> {
        self.persons.values()
    }

    pub fn len(&self) -> usize {
        self.persons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.persons.is_empty()
    }

    pub fn person_for_track(&self, track: TrackId) -> Option<PersonId> {
        self.track_links.get(&track).copied()
    }

    pub fn create(&mut self, gallery: Vec<Vec<f64>>) -> PersonId {
        let id = self.next_id;
        self.next_id += 1;
        let mut record = PersonRecord {
            person_id: id,
            label: format!("person-{id}"),
            group: None,
            linked_tracks: BTreeSet::new(),
            gallery: Vec::new(),
            history: Vec::new(),
        };
        push_capped(&mut record.gallery, gallery, self.gallery_capacity);
        self.persons.insert(id, record);
        id
    }

    pub fn rename(&mut self, id: PersonId, label: &str) -> Result<(), RegistryError> {
        let label = label.trim();
        if label.is_empty() {
            return Err(RegistryError::EmptyLabel);
        }
        let p = self.persons.get_mut(&id).ok_or(RegistryError::UnknownPerson(id))?;
        p.label = label.to_string();
        Ok(())
    }

    /// Assigns (or with `None` clears) the group of every listed person.
    /// Nothing changes unless all ids exist.
    pub fn group(&mut self, ids: &[PersonId], group: Option<&str>) -> Result<(), RegistryError> {
        if let Some(missing) = ids.iter().find(|id| !self.persons.contains_key(id)) {
            return Err(RegistryError::UnknownPerson(*missing));
        }
        let group = group.map(str::trim).filter(|g| !g.is_empty()).map(str::to_string);
        for id in ids {
            self.persons.get_mut(id).expect("checked above").group = group.clone();
        }
        Ok(())
    }

    /// Best-matching person by maximum cosine similarity between any pair of
    /// gallery embeddings, if it reaches `tau_reid`. Persons in `exclude`
    /// (e.g. already visible on another track) are skipped.
    pub fn reidentify(&self, gallery: &[Vec<f64>], tau_reid: f64, exclude: &BTreeSet<PersonId>) -> Option<(PersonId, f64)> {
        let mut best: Option<(PersonId, f64)> = None;
        for p in self.persons.values().filter(|p| !exclude.contains(&p.person_id)) {
            let sim = p
                .gallery
                .iter()
                .flat_map(|a| gallery.iter().map(move |b| cosine_similarity(a, b)))
                .fold(f64::NEG_INFINITY, f64::max);
            if sim >= tau_reid && best.is_none_or(|(_, s)| sim > s) {
                best = Some((p.person_id, sim));
            }
        }
        best
    }

    /// Links a newly confirmed track to a re-identified person or a fresh
    /// record. Returns the person and whether it was re-identified.
    pub fn link_track(&mut self, track: TrackId, gallery: &[Vec<f64>], tau_reid: f64, exclude: &BTreeSet<PersonId>) -> (PersonId, bool) {
        if let Some(p) = self.track_links.get(&track) {
            return (*p, true);
        }
        let (id, reused) = match self.reidentify(gallery, tau_reid, exclude) {
            Some((id, _)) => {
                self.extend_gallery(id, gallery.iter().cloned());
                (id, true)
            }
            None => (self.create(gallery.to_vec()), false),
        };
        self.track_links.insert(track, id);
        self.persons.get_mut(&id).expect("just resolved").linked_tracks.insert(track);
        (id, reused)
    }

    pub fn extend_gallery(&mut self, id: PersonId, embeddings: impl IntoIterator<Item = Vec<f64>>) {
        let cap = self.gallery_capacity;
        if let Some(p) = self.persons.get_mut(&id) {
            push_capped(&mut p.gallery, embeddings, cap);
        }
    }

    pub fn record_event(&mut self, id: PersonId, seq: u64) -> Result<(), RegistryError> {
        let p = self.persons.get_mut(&id).ok_or(RegistryError::UnknownPerson(id))?;
        p.history.push(seq);
        Ok(())
    }

    pub fn history(&self, id: PersonId) -> Result<&[u64], RegistryError> {
        self.persons
            .get(&id)
            .map(|p| p.history.as_slice())
            .ok_or(RegistryError::UnknownPerson(id))
    }

    pub fn save(&self, path: &Path) -> Result<(), RegistryError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

fn push_capped(gallery: &mut Vec<Vec<f64>>, items: impl IntoIterator<Item = Vec<f64>>, cap: usize) {
    gallery.extend(items);
    if gallery.len() > cap {
        let excess = gallery.len() - cap;
        gallery.drain(..excess);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        v
    }

    #[test]
    fn rename_and_group() {
        let mut r = PersonRegistry::default();
        let a = r.create(vec![unit(4, 0)]);
        let b = r.create(vec![unit(4, 1)]);
        assert_eq!(r.get(a).unwrap().label, "person-1");
        r.rename(a, "Alice").unwrap();
        assert_eq!(r.get(a).unwrap().label, "Alice");
        assert!(matches!(r.rename(a, "  "), Err(RegistryError::EmptyLabel)));
        assert!(matches!(r.rename(9, "x"), Err(RegistryError::UnknownPerson(9))));
        r.group(&[a, b], Some("visitors")).unwrap();
        assert_eq!(r.get(b).unwrap().group.as_deref(), Some("visitors"));
        assert!(r.group(&[a, 42], Some("x")).is_err());
        assert_eq!(r.get(a).unwrap().group.as_deref(), Some("visitors"));
    }

    #[test]
    fn reidentify_threshold() {
        let mut r = PersonRegistry::default();
        let a = r.create(vec![unit(3, 0)]);
        let probe = vec![0.95, (1.0f64 - 0.95 * 0.95).sqrt(), 0.0];
        assert_eq!(r.reidentify(&[probe.clone()], 0.8, &BTreeSet::new()).map(|x| x.0), Some(a));
        let far = vec![0.2, (1.0f64 - 0.04).sqrt(), 0.0];
        assert_eq!(r.reidentify(&[far.clone()], 0.8, &BTreeSet::new()), None);
        let (id, reused) = r.link_track(7, &[far], 0.8, &BTreeSet::new());
        assert!(!reused);
        assert_ne!(id, a);
        let (id2, reused) = r.link_track(8, &[probe], 0.8, &BTreeSet::new());
        assert!(reused);
        assert_eq!(id2, a);
        assert_eq!(r.person_for_track(8), Some(a));
    }

    #[test]
    fn history_and_persistence() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = PersonRegistry::default();
        let a = r.create(vec![unit(2, 0)]);
        assert!(r.history(a).unwrap().is_empty());
        r.record_event(a, 4).unwrap();
        assert_eq!(r.history(a).unwrap(), &[4]);
        assert!(r.history(5).is_err());
        let path = dir.path().join("persons.json");
        r.save(&path).unwrap();
        assert_eq!(PersonRegistry::load(&path).unwrap(), r);
    }
}
