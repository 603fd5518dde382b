//! Dataset directory layout:
//!
//! ```text
//! <root>/intrinsics.toml       camera, see formats::intrinsics
//! <root>/poses.txt             one line per keyframe
//! <root>/depth/<id>.pfm        inverse depth, 1/mm
//! <root>/masks/<id>.pgm|.png   obstruction mask, 0/255
//! <root>/ct_ground_truth.ply   optional CT surface cloud
//! ```
//!
//! `<id>` is the decimal frame id; synthetic datasets zero-pad it to six
//! digits. Ids in the pose file and both directories must agree exactly.

use crate::error::{CliError, Result};
use crate::formats::intrinsics::{self, DatasetCamera};
use crate::formats::poses::{self, PoseEntry};
use crate::formats::{pfm, pgm, ply, read_file};
use airmap::fusion::KeyframeRecord;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

pub const INTRINSICS_FILE: &str = "intrinsics.toml";
pub const POSES_FILE: &str = "poses.txt";
pub const DEPTH_DIR: &str = "depth";
pub const MASK_DIR: &str = "masks";
pub const CT_FILE: &str = "ct_ground_truth.ply";

pub fn depth_name(id: u64) -> String {
    format!("{id:06}.pfm")
}

pub fn mask_name(id: u64) -> String {
    format!("{id:06}.pgm")
}

/// One validation finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub file: PathBuf,
    pub reason: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.file.display(), self.reason)
    }
}

fn issues_error(issues: &[Issue]) -> CliError {
    let lines: Vec<String> = issues.iter().map(|i| format!("  {i}")).collect();
    CliError::Validation(format!(
        "dataset has {} problem(s):\n{}",
        issues.len(),
        lines.join("\n")
    ))
}

/// Lists `<id>.<ext>` files of a directory, keyed by id.
fn list_frames(dir: &Path, exts: &[&str], issues: &mut Vec<Issue>) -> BTreeMap<u64, PathBuf> {
    let mut out = BTreeMap::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) => {
            issues.push(Issue {
                file: dir.to_path_buf(),
                reason: format!("cannot list directory: {e}"),
            });
            return out;
        }
    };
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        if !exts.contains(&ext) {
            issues.push(Issue {
                file: path.clone(),
                reason: format!("unexpected file (expected .{})", exts.join(" or .")),
            });
            continue;
        }
        let Ok(id) = stem.parse::<u64>() else {
            issues.push(Issue {
                file: path.clone(),
                reason: "file name is not a frame id".into(),
            });
            continue;
        };
        if let Some(prev) = out.insert(id, path.clone()) {
            issues.push(Issue {
                file: path,
                reason: format!("duplicate frame id {id} (also {})", prev.display()),
            });
        }
    }
    out
}

/// Paths and metadata of a dataset. Per-frame files are read on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub camera: DatasetCamera,
    /// Sorted by frame id.
    pub poses: Vec<PoseEntry>,
    pub depth: BTreeMap<u64, PathBuf>,
    pub masks: BTreeMap<u64, PathBuf>,
    pub ct: Option<PathBuf>,
}

impl Dataset {
    /// Reads the layout, intrinsics and poses and checks that frame ids
    /// agree. Per-frame file contents are not read.
    pub fn open(root: &Path) -> Result<Self> {
        let mut issues = Vec::new();
        let ds = Self::scan(root, &mut issues);
        match ds {
            Some(ds) if issues.is_empty() => Ok(ds),
            _ => Err(issues_error(&issues)),
        }
    }

    fn scan(root: &Path, issues: &mut Vec<Issue>) -> Option<Self> {
        if !root.is_dir() {
            issues.push(Issue {
                file: root.to_path_buf(),
                reason: "dataset root is not a directory".into(),
            });
            return None;
        }
        let mut fail = |file: PathBuf, reason: String| issues.push(Issue { file, reason });

        let kpath = root.join(INTRINSICS_FILE);
        let camera = match std::fs::read_to_string(&kpath) {
            Ok(t) => intrinsics::decode(&t).map_err(|e| fail(kpath.clone(), e)).ok(),
            Err(e) => {
                fail(kpath.clone(), format!("cannot read: {e}"));
                None
            }
        };

        let ppath = root.join(POSES_FILE);
        let mut pose_list = match std::fs::read_to_string(&ppath) {
            Ok(t) => poses::decode(&t).map_err(|e| fail(ppath.clone(), e)).ok(),
            Err(e) => {
                fail(ppath.clone(), format!("cannot read: {e}"));
                None
            }
        };
        if let Some(list) = &mut pose_list {
            list.sort_by_key(|p| p.frame_id);
            for w in list.windows(2) {
                if w[0].frame_id == w[1].frame_id {
                    fail(ppath.clone(), format!("duplicate frame id {}", w[0].frame_id));
                }
            }
            if list.is_empty() {
                fail(ppath.clone(), "no poses".into());
            }
        }

        let depth = list_frames(&root.join(DEPTH_DIR), &["pfm"], issues);
        let masks = list_frames(&root.join(MASK_DIR), &["pgm", "png"], issues);

        if let Some(list) = &pose_list {
            let ids: Vec<u64> = list.iter().map(|p| p.frame_id).collect();
            for (dir, files) in [(DEPTH_DIR, &depth), (MASK_DIR, &masks)] {
                let missing: Vec<String> = ids
                    .iter()
                    .filter(|id| !files.contains_key(id))
                    .map(u64::to_string)
                    .collect();
                if !missing.is_empty() {
                    issues.push(Issue {
                        file: root.join(dir),
                        reason: format!("missing frame ids: {}", missing.join(", ")),
                    });
                }
                for (id, path) in files {
                    if ids.binary_search(id).is_err() {
                        issues.push(Issue {
                            file: path.clone(),
                            reason: format!("frame id {id} not in {POSES_FILE}"),
                        });
                    }
                }
            }
        }

        let ct = Some(root.join(CT_FILE)).filter(|p| p.exists());
        Some(Self {
            root: root.to_path_buf(),
            camera: camera?,
            poses: pose_list?,
            depth,
            masks,
            ct,
        })
    }

    /// Every `stride`-th pose in frame-id order, starting with the first.
    pub fn selected(&self, stride: usize) -> Vec<&PoseEntry> {
        self.poses.iter().step_by(stride.max(1)).collect()
    }

    fn load_frame(&self, entry: &PoseEntry) -> Result<KeyframeRecord> {
        let id = entry.frame_id;
        let dpath = &self.depth[&id];
        let mpath = &self.masks[&id];
        let inv_depth =
            pfm::decode(&read_file(dpath)?).map_err(|e| CliError::format(dpath, e))?;
        let raw_mask = read_mask(mpath)?;
        let mask = self
            .camera
            .prepare_mask(&raw_mask)
            .map_err(|e| CliError::format(mpath, e))?;
        let rec = KeyframeRecord {
            frame_id: id,
            intrinsics: self
                .camera
                .frame_intrinsics()
                .map_err(CliError::Validation)?,
            pose: entry.pose,
            inv_depth,
            mask,
        };
        self.check_dims(&rec, &raw_mask, dpath, mpath)?;
        rec.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(rec)
    }

    fn check_dims(
        &self,
        rec: &KeyframeRecord,
        raw_mask: &airmap::image::SegmentationMask,
        dpath: &Path,
        mpath: &Path,
    ) -> Result<()> {
        let (dw, dh) = self.camera.depth_size().map_err(CliError::Validation)?;
        if (rec.inv_depth.width(), rec.inv_depth.height()) != (dw, dh) {
            return Err(CliError::format(
                dpath,
                format!(
                    "depth map is {}x{}, intrinsics declare {dw}x{dh}",
                    rec.inv_depth.width(),
                    rec.inv_depth.height()
                ),
            ));
        }
        let k = &self.camera.raw;
        if (raw_mask.width(), raw_mask.height()) != (k.width, k.height) {
            return Err(CliError::format(
                mpath,
                format!(
                    "mask is {}x{}, intrinsics declare {}x{}",
                    raw_mask.width(),
                    raw_mask.height(),
                    k.width,
                    k.height
                ),
            ));
        }
        Ok(())
    }

    /// Loads the keyframes picked by `stride`.
    pub fn load_keyframes(&self, stride: usize) -> Result<Vec<KeyframeRecord>> {
        self.selected(stride)
            .into_iter()
            .map(|e| self.load_frame(e))
            .collect()
    }
}

pub fn read_mask(path: &Path) -> Result<airmap::image::SegmentationMask> {
    let bytes = read_file(path)?;
    let is_png = path.extension().is_some_and(|e| e == "png");
    let decoded = if is_png {
        pgm::decode_png(&bytes)
    } else {
        pgm::decode_pgm(&bytes)
    };
    decoded.map_err(|e| CliError::format(path, e))
}

pub fn read_cloud(path: &Path) -> Result<ply::PlyCloud> {
    ply::decode(&read_file(path)?).map_err(|e| CliError::format(path, e))
}

/// Full check: layout, ids, and the content of every file. Returns all
/// findings rather than stopping at the first.
pub fn validate(root: &Path) -> Vec<Issue> {
    let mut issues = Vec::new();
    let Some(ds) = Dataset::scan(root, &mut issues) else {
        return issues;
    };
    let mut fail = |file: &Path, reason: String| {
        issues.push(Issue {
            file: file.to_path_buf(),
            reason,
        })
    };
    let depth_size = ds.camera.depth_size();
    for (id, path) in &ds.depth {
        match std::fs::read(path) {
            Err(e) => fail(path, format!("cannot read: {e}")),
            Ok(bytes) => match pfm::decode(&bytes) {
                Err(e) => fail(path, e),
                Ok(m) => {
                    if let Ok((w, h)) = depth_size {
                        if (m.width(), m.height()) != (w, h) {
                            fail(
                                path,
                                format!(
                                    "frame {id}: depth map is {}x{}, intrinsics declare {w}x{h}",
                                    m.width(),
                                    m.height()
                                ),
                            );
                        }
                    }
                    if let Some(v) = m.data().iter().find(|v| v.is_nan()) {
                        fail(path, format!("frame {id}: inverse depth contains {v}"));
                    }
                }
            },
        }
    }
    let k = ds.camera.raw;
    for (id, path) in &ds.masks {
        match read_mask(path) {
            Err(e) => fail(path, strip_path(&e.to_string(), path)),
            Ok(m) => {
                if (m.width(), m.height()) != (k.width, k.height) {
                    fail(
                        path,
                        format!(
                            "frame {id}: mask is {}x{}, intrinsics declare {}x{}",
                            m.width(),
                            m.height(),
                            k.width,
                            k.height
                        ),
                    );
                }
            }
        }
    }
    if let Some(ct) = &ds.ct {
        match read_file(ct).map(|b| ply::decode(&b)) {
            Err(e) => fail(ct, e.to_string()),
            Ok(Err(e)) => fail(ct, e),
            Ok(Ok(c)) if c.cloud.is_empty() => fail(ct, "CT cloud is empty".into()),
            Ok(Ok(_)) => {}
        }
    }
    issues
}

/// Drops a leading `<path>: ` so issues do not repeat the file name.
fn strip_path(msg: &str, path: &Path) -> String {
    let prefix = format!("{}: ", path.display());
    msg.strip_prefix(&prefix).unwrap_or(msg).to_string()
}

pub fn validate_or_err(root: &Path) -> Result<()> {
    let issues = validate(root);
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues_error(&issues))
    }
}
