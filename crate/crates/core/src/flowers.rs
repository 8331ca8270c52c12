//! Per-arm flower belief store.
//!
//! Tracks live in the robot base frame. Association is greedy over
//! detection-track pairs sorted by distance, which keeps the result
//! independent of detection input order.

use serde::{Deserialize, Serialize};

use crate::kinematics::workspace_contains;
use crate::model::{Params, Pose3D, RailSide, TrackId, Vec3};
use crate::perception::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowerTrack {
    pub id: TrackId,
    pub pose: Pose3D,
    pub last_seen: f64,
    pub expires_at: f64,
    pub pollinated: bool,
    pub center_visible: bool,
    /// Number of detections associated so far (including the one that
    /// created the track).
    pub hits: u32,
}

impl FlowerTrack {
    pub fn position(&self) -> Vec3 {
        self.pose.position()
    }
}

/// What changed during one [`FlowerStore::associate`] call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssocReport {
    /// `(track, index into the detection slice)`
    pub matched: Vec<(TrackId, usize)>,
    pub created: Vec<TrackId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowerStore {
    tracks: Vec<FlowerTrack>,
    next_id: u64,
}

impl FlowerStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tracks(&self) -> &[FlowerTrack] {
        &self.tracks
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn get(&self, id: TrackId) -> Option<&FlowerTrack> {
        self.tracks
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.tracks[i])
    }

    fn get_mut(&mut self, id: TrackId) -> Option<&mut FlowerTrack> {
        self.tracks
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(move |i| &mut self.tracks[i])
    }

    fn push(&mut self, pose: Pose3D, now: f64, center_visible: bool, pollinated: bool, params: &Params) -> TrackId {
        let id = TrackId(self.next_id);
        self.next_id += 1;
        self.tracks.push(FlowerTrack {
            id,
            pose,
            last_seen: now,
            expires_at: now + params.track_expiration,
            pollinated,
            center_visible,
            hits: 1,
        });
        id
    }

    /// Greedy nearest-pair association.
    pub fn associate(&mut self, detections: &[Detection], now: f64, params: &Params) -> AssocReport {
        let mut pairs = Vec::new();
        for (di, d) in detections.iter().enumerate() {
            let dp = d.position();
            for (ti, t) in self.tracks.iter().enumerate() {
                let dist = (t.position() - dp).norm();
                if dist <= params.assoc_threshold {
                    pairs.push((dist, ti, di));
                }
            }
        }
        // Distance, then lower TrackId, then detection content so that
        // permuting the input never changes the outcome.
        pairs.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(self.tracks[a.1].id.cmp(&self.tracks[b.1].id))
                .then_with(|| cmp_detection(&detections[a.2], &detections[b.2]))
        });

        let mut track_used = vec![false; self.tracks.len()];
        let mut det_used = vec![false; detections.len()];
        let mut report = AssocReport::default();
        for (_, ti, di) in pairs {
            if track_used[ti] || det_used[di] {
                continue;
            }
            track_used[ti] = true;
            det_used[di] = true;
            let d = &detections[di];
            let t = &mut self.tracks[ti];
            t.pose = d.pose;
            t.last_seen = now;
            t.expires_at = t.expires_at.max(now + params.track_expiration);
            t.center_visible = d.center_visible;
            t.hits += 1;
            report.matched.push((t.id, di));
        }

        let mut fresh: Vec<usize> = (0..detections.len()).filter(|&i| !det_used[i]).collect();
        fresh.sort_by(|&a, &b| cmp_detection(&detections[a], &detections[b]));
        for di in fresh {
            let d = &detections[di];
            let id = self.push(d.pose, now, d.center_visible, false, params);
            report.created.push(id);
        }
        self.absorb_duplicates(params);
        report
    }

    /// Unpollinated tracks sitting on a pollinated one are the same flower.
    fn absorb_duplicates(&mut self, params: &Params) {
        let done: Vec<Vec3> = self.tracks.iter().filter(|t| t.pollinated).map(|t| t.position()).collect();
        for t in self.tracks.iter_mut().filter(|t| !t.pollinated) {
            if done.iter().any(|p| (t.position() - p).norm() <= params.assoc_threshold) {
                t.pollinated = true;
            }
        }
    }

    /// Drops unpollinated tracks past their expiry. Pollinated tracks are
    /// kept for the whole trial.
    pub fn expire(&mut self, now: f64) -> Vec<TrackId> {
        let mut gone = Vec::new();
        self.tracks.retain(|t| {
            let keep = t.pollinated || t.expires_at >= now;
            if !keep {
                gone.push(t.id);
            }
            keep
        });
        gone
    }

    /// Applies pollinated-flower positions broadcast by peers. Returns the
    /// tracks created for positions that matched nothing.
    pub fn merge_pollinated(&mut self, broadcast: &[Vec3], now: f64, params: &Params) -> Vec<TrackId> {
        let mut created = Vec::new();
        for p in broadcast {
            let mut matched = false;
            for t in &mut self.tracks {
                if (t.position() - p).norm() <= params.assoc_threshold {
                    t.pollinated = true;
                    matched = true;
                }
            }
            if !matched {
                created.push(self.push(Pose3D::at(*p), now, false, true, params));
            }
        }
        self.absorb_duplicates(params);
        created
    }

    pub fn mark_pollinated(&mut self, id: TrackId) -> bool {
        match self.get_mut(id) {
            Some(t) => {
                t.pollinated = true;
                true
            }
            None => false,
        }
    }

    /// Nearest eligible target: unpollinated, center visible, confirmed by
    /// at least `min_hits` detections and inside the rail's workspace.
    pub fn nearest_unpollinated(
        &self,
        from: Vec3,
        side: RailSide,
        params: &Params,
        exclude: impl Fn(TrackId) -> bool,
    ) -> Option<TrackId> {
        let mut best: Option<(f64, TrackId)> = None;
        for t in &self.tracks {
            if t.pollinated
                || !t.center_visible
                || t.hits < params.min_hits
                || !workspace_contains(&t.pose, side, params)
                || exclude(t.id)
            {
                continue;
            }
            let d = (t.position() - from).norm();
            // tracks are id-sorted, so strict < keeps the lower id on ties
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, t.id));
            }
        }
        best.map(|(_, id)| id)
    }
}

fn cmp_detection(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    let ka = [a.pose.x, a.pose.y, a.pose.z, a.pose.pitch, a.pose.yaw];
    let kb = [b.pose.x, b.pose.y, b.pose.z, b.pose.pitch, b.pose.yaw];
    ka.iter()
        .zip(&kb)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.center_visible.cmp(&b.center_visible))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, z: f64) -> Detection {
        Detection {
            pose: Pose3D::new(x, y, z, 0.0, std::f64::consts::PI),
            center_visible: true,
            confidence: 1.0,
        }
    }

    fn p() -> Params {
        Params::default()
    }

    #[test]
    fn reidentification_updates_and_extends() {
        let params = p();
        let mut s = FlowerStore::new();
        s.associate(&[det(0.3, 0.0, 1.0)], 0.0, &params);
        let id = s.tracks()[0].id;
        let r = s.associate(&[det(0.32, 0.0, 1.0)], 2.0, &params);
        assert_eq!(r.matched, vec![(id, 0)]);
        assert!(r.created.is_empty());
        let t = s.get(id).unwrap();
        assert!((t.pose.x - 0.32).abs() < 1e-12);
        assert_eq!(t.expires_at, 12.0);
        assert_eq!(t.hits, 2);
    }

    #[test]
    fn far_detection_spawns_track() {
        let params = p();
        let mut s = FlowerStore::new();
        s.associate(&[det(0.3, 0.0, 1.0)], 0.0, &params);
        let r = s.associate(&[det(0.4, 0.0, 1.0)], 0.1, &params);
        assert_eq!(r.created.len(), 1);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn equidistant_detections_match_once() {
        let params = p();
        let mut s = FlowerStore::new();
        s.associate(&[det(0.3, 0.0, 1.0)], 0.0, &params);
        let dets = [det(0.3, 0.02, 1.0), det(0.3, -0.02, 1.0)];
        let r = s.associate(&dets, 0.1, &params);
        assert_eq!(r.matched.len(), 1);
        assert_eq!(r.created.len(), 1);
        // the lexicographically smaller detection (y = -0.02) wins the tie
        assert_eq!(r.matched[0].1, 1);
    }

    #[test]
    fn duplicates_of_pollinated_flowers_are_not_targets() {
        let params = p();
        let mut s = FlowerStore::new();
        s.associate(&[det(0.3, 0.0, 1.0)], 0.0, &params);
        s.mark_pollinated(s.tracks()[0].id);
        let r = s.associate(&[det(0.3, 0.01, 1.0), det(0.3, -0.03, 1.0)], 0.1, &params);
        assert_eq!(r.created.len(), 1);
        assert!(s.get(r.created[0]).unwrap().pollinated);
        s.associate(&[det(0.3, 0.01, 1.0), det(0.3, -0.03, 1.0)], 0.2, &params);
        let from = Vec3::new(0.1, 0.0, 1.0);
        assert_eq!(s.nearest_unpollinated(from, RailSide::Left, &params, |_| false), None);
    }

    #[test]
    fn expiry_spares_pollinated() {
        let params = p();
        let mut s = FlowerStore::new();
        s.associate(&[det(0.3, 0.0, 1.0), det(0.4, 0.2, 1.0)], 0.0, &params);
        let keep = s.tracks()[1].id;
        s.mark_pollinated(keep);
        let gone = s.expire(10.1);
        assert_eq!(gone.len(), 1);
        assert_eq!(s.len(), 1);
        assert_eq!(s.tracks()[0].id, keep);
        assert!(s.expire(1e6).is_empty());

        let mut empty = FlowerStore::new();
        assert!(empty.expire(5.0).is_empty());
        assert!(empty.is_empty());
    }

    #[test]
    fn broadcast_merges() {
        let params = p();
        let mut s = FlowerStore::new();
        s.associate(&[det(0.3, 0.0, 1.0)], 0.0, &params);
        let id = s.tracks()[0].id;
        assert!(s.merge_pollinated(&[], 0.0, &params).is_empty());
        assert!(!s.get(id).unwrap().pollinated);
        let created = s.merge_pollinated(&[Vec3::new(0.32, 0.0, 1.0)], 0.1, &params);
        assert!(created.is_empty());
        assert!(s.get(id).unwrap().pollinated);

        let created = s.merge_pollinated(&[Vec3::new(0.2, -0.2, 1.2)], 0.2, &params);
        assert_eq!(created.len(), 1);
        assert!(s.get(created[0]).unwrap().pollinated);
        // the new track is never a target
        assert_eq!(s.nearest_unpollinated(Vec3::new(0.2, -0.2, 1.2), RailSide::Left, &params, |_| false), None);
    }

    #[test]
    fn greedy_selection() {
        let params = p();
        let mut s = FlowerStore::new();
        for _ in 0..2 {
            s.associate(&[det(0.3, 0.0, 1.0), det(0.2, 0.0, 1.0)], 0.0, &params);
        }
        let from = Vec3::new(0.1, 0.0, 1.0);
        let near = s.nearest_unpollinated(from, RailSide::Left, &params, |_| false).unwrap();
        assert!((s.get(near).unwrap().pose.x - 0.2).abs() < 1e-12);
        s.mark_pollinated(near);
        let next = s.nearest_unpollinated(from, RailSide::Left, &params, |_| false).unwrap();
        assert!((s.get(next).unwrap().pose.x - 0.3).abs() < 1e-12);
        s.mark_pollinated(next);
        assert_eq!(s.nearest_unpollinated(from, RailSide::Left, &params, |_| false), None);
    }

    #[test]
    fn equal_distance_prefers_lower_id() {
        let params = p();
        let mut s = FlowerStore::new();
        for _ in 0..2 {
            s.associate(&[det(0.3, 0.1, 1.0), det(0.3, -0.1, 1.0)], 0.0, &params);
        }
        let from = Vec3::new(0.3, 0.0, 1.0);
        let pick = s.nearest_unpollinated(from, RailSide::Left, &params, |_| false).unwrap();
        assert_eq!(pick, s.tracks()[0].id);
    }

    #[test]
    fn unconfirmed_and_out_of_fan_are_skipped() {
        let params = p();
        let mut s = FlowerStore::new();
        s.associate(&[det(0.3, 0.0, 1.0)], 0.0, &params);
        let from = Vec3::new(0.1, 0.0, 1.0);
        assert_eq!(s.nearest_unpollinated(from, RailSide::Left, &params, |_| false), None);
        let mut s = FlowerStore::new();
        for _ in 0..2 {
            s.associate(&[det(0.0, 0.3, 1.0)], 0.0, &params);
        }
        assert_eq!(s.nearest_unpollinated(from, RailSide::Left, &params, |_| false), None);
        assert!(s.nearest_unpollinated(from, RailSide::Right, &params, |_| false).is_some());
    }
}
