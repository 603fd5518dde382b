//! Keyframe poses, one per line: `frame_id tx ty tz qx qy qz qw`.
//!
//! Translation in mm; the quaternion maps camera to world. Blank lines and
//! lines starting with `#` are ignored.

use airmap::geometry::{Pose, Vec3};
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEntry {
    pub frame_id: u64,
    pub pose: Pose,
}

pub fn encode(entries: &[PoseEntry]) -> String {
    let mut out = String::from("# frame_id tx ty tz qx qy qz qw (mm, camera-to-world)\n");
    for e in entries {
        let t = e.pose.translation;
        let q = e.pose.rotation.quaternion();
        writeln!(
            out,
            "{} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
            e.frame_id, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        )
        .expect("writing to a String");
    }
    out
}

/// Errors carry the 1-based line number.
pub fn decode(text: &str) -> Result<Vec<PoseEntry>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| format!("line {}: {msg}", n + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", fields.len())));
        }
        let frame_id: u64 = fields[0]
            .parse()
            .map_err(|e| err(format!("bad frame id '{}': {e}", fields[0])))?;
        let mut v = [0.0; 7];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse()
                .map_err(|e| err(format!("bad number '{f}': {e}")))?;
        }
        let pose = Pose::from_wxyz([v[6], v[3], v[4], v[5]], Vec3::new(v[0], v[1], v[2]))
            .map_err(|e| err(e.to_string()))?;
        out.push(PoseEntry { frame_id, pose });
    }
    Ok(out)
}
