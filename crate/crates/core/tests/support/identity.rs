//! Identity bookkeeping over scripted detector runs.

use std::collections::BTreeMap;

use caris_core::tracker::synthetic::SyntheticDetector;
use caris_core::tracker::{PersonId, Tracker, TrackerEvent, TrackerParams};

pub struct IdentityRun {
    /// Person ids seen for each ground-truth actor, in frame order.
    pub persons: BTreeMap<usize, Vec<PersonId>>,
    pub switches: usize,
    pub reidentified: usize,
}

/// Runs `frames` frames through a fresh tracker and counts identity switches:
/// an actor's person id changing between frames, or two actors sharing one.
pub fn run(detector: &SyntheticDetector, frames: std::ops::Range<u64>) -> IdentityRun {
    let params = TrackerParams::default();
    let mut tracker = Tracker::new(params);
    let mut persons: BTreeMap<usize, Vec<PersonId>> = BTreeMap::new();
    let mut switches = 0;
    let mut reidentified = 0;
    for f in frames {
        let frame = detector.frame(f);
        let dets: Vec<_> = frame.iter().map(|(_, d)| d.clone()).collect();
        let snap = tracker.step(f, &dets).expect("synthetic frames are valid");
        reidentified += snap
            .events
            .iter()
            .filter(|e| matches!(e, TrackerEvent::Confirmed { reidentified: true, .. }))
            .count();
        let mut owner: BTreeMap<PersonId, usize> = BTreeMap::new();
        for view in &snap.tracks {
            let (Some(det), Some(pid)) = (view.detection, view.person_id) else { continue };
            let actor = frame[det].0;
            if let Some(prev) = owner.insert(pid, actor) {
                if prev != actor {
                    switches += 1;
                }
            }
            let seen = persons.entry(actor).or_default();
            if seen.last().is_some_and(|&last| last != pid) {
                switches += 1;
            }
            seen.push(pid);
        }
    }
    IdentityRun {
        persons,
        switches,
        reidentified,
    }
}
