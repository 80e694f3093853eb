use crate::data::Dataset;
use crate::geometry::Pose2;

/// Ground-truth future ego poses `frame_index+1 ..= frame_index+k`,
/// expressed in the ego frame at `frame_index`. Returns `None` (skip the
/// sample) when the scene ends too early or the index is out of range.
pub fn ego_targets(ds: &Dataset, frame_index: usize, k: usize) -> Option<Vec<Pose2>> {
    let scene = ds.scene_of_frame(frame_index)?;
    if frame_index + k >= scene.frame_end_index {
        return None;
    }
    let now = ds.frames[frame_index].ego_pose;
    Some(
        (1..=k)
            .map(|j| now.relative(&ds.frames[frame_index + j].ego_pose))
            .collect(),
    )
}
