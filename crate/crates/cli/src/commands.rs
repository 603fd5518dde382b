//! The six subcommands. Each reads its inputs from files and writes its
//! outputs atomically; nothing is shared between stages except files.

use crate::config::{InitMethod, PipelineConfig};
use crate::dataset::{self, Dataset, CT_FILE, DEPTH_DIR, INTRINSICS_FILE, MASK_DIR, POSES_FILE};
use crate::error::{CliError, Result};
use crate::formats::intrinsics::{self, DatasetCamera};
use crate::formats::ply::PlyCloud;
use crate::formats::poses::{self, PoseEntry};
use crate::formats::{pfm, pgm, ply, read_text, report, transform, write_atomic};
use airmap::fusion::{fuse_keyframe_traced, voxel_downsample};
use airmap::geometry::{LabeledPointCloud, SimilarityTransform, Vec3};
use airmap::metrics::{evaluate, MetricsError, MetricsReport, PrecisionPolicy, RegistrationSummary};
use airmap::registration::{icp, pca_coarse_align, IcpResult, NearestNeighborIndex};
use airmap::synth::{generate_sequence, sample_surface};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const RECON_FILE: &str = "recon.ply";
pub const TRANSFORM_FILE: &str = "transform.toml";
pub const ALIGNED_FILE: &str = "aligned.ply";
pub const REGISTRATION_LOG: &str = "registration.log";
pub const REPORT_FILE: &str = "report.toml";
pub const HEATMAP_FILE: &str = "heatmap.ply";

fn write_cloud(path: &Path, cloud: &PlyCloud) -> Result<()> {
    let bytes = ply::encode(cloud).map_err(|e| CliError::format(path, e))?;
    write_atomic(path, &bytes)
}

/// Renders the configured synthetic scene into a dataset directory.
pub fn synth(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let s = &cfg.synth;
    let invalid = |e: airmap::synth::SynthError| CliError::Validation(format!("synth: {e}"));
    let k = s.intrinsics()?;
    let scene = s.scene();
    let records = generate_sequence(&scene, &s.trajectory(), &k, &s.sequence_options())
        .map_err(invalid)?;
    let ct = sample_surface(&scene, s.ct_points, s.seed).map_err(invalid)?;

    write_atomic(
        &out.join(INTRINSICS_FILE),
        intrinsics::encode(&DatasetCamera::pinhole(k)).as_bytes(),
    )?;
    let entries: Vec<PoseEntry> = records
        .iter()
        .map(|r| PoseEntry {
            frame_id: r.frame_id,
            pose: r.pose,
        })
        .collect();
    write_atomic(&out.join(POSES_FILE), poses::encode(&entries).as_bytes())?;
    for r in &records {
        write_atomic(
            &out.join(DEPTH_DIR).join(dataset::depth_name(r.frame_id)),
            &pfm::encode(&r.inv_depth),
        )?;
        write_atomic(
            &out.join(MASK_DIR).join(dataset::mask_name(r.frame_id)),
            &pgm::encode(&r.mask),
        )?;
    }
    write_cloud(&out.join(CT_FILE), &PlyCloud::new(ct))?;
    log::info!(
        "wrote {} frames and {} CT points to {}",
        records.len(),
        s.ct_points,
        out.display()
    );
    Ok(())
}

/// Checks a dataset; the error lists every problem found.
pub fn validate(root: &Path) -> Result<()> {
    dataset::validate_or_err(root)?;
    log::info!("{}: valid", root.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuseSummary {
    pub keyframes: usize,
    pub points: usize,
    pub obstruction: usize,
}

/// Fuses the selected keyframes into one labeled cloud. Each point records
/// its source frame id in the `frame` property unless voxel downsampling
/// merged points.
pub fn fuse(root: &Path, cfg: &PipelineConfig, out: &Path) -> Result<FuseSummary> {
    cfg.validate()?;
    let ds = Dataset::open(root)?;
    let records = ds.load_keyframes(cfg.frame_stride)?;
    let filter = cfg.fusion.filter();
    log::info!(
        "fusing {} of {} keyframes (stride {})",
        records.len(),
        ds.poses.len(),
        cfg.frame_stride
    );
    let mut cloud = LabeledPointCloud::new();
    let mut frames = Vec::new();
    for rec in &records {
        let id = u32::try_from(rec.frame_id).map_err(|_| {
            CliError::Validation(format!("frame id {} does not fit in 32 bits", rec.frame_id))
        })?;
        let start = Instant::now();
        let part = fuse_keyframe_traced(rec, &filter);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        log::info!(
            "frame {}: {} points ({} obstruction, {} depth rejected) in {ms:.2} ms",
            rec.frame_id,
            part.stats.emitted,
            part.stats.obstruction,
            part.stats.rejected_depth
        );
        cloud.extend_from(&part.cloud);
        frames.extend(std::iter::repeat_n(id, part.cloud.len()));
    }
    let mut out_cloud = PlyCloud::new(cloud);
    out_cloud.frames = Some(frames);
    if cfg.fusion.voxel_size > 0.0 {
        let merged = voxel_downsample(&out_cloud.cloud, cfg.fusion.voxel_size)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        log::info!(
            "voxel size {} mm: {} -> {} points (source frames dropped)",
            cfg.fusion.voxel_size,
            out_cloud.cloud.len(),
            merged.len()
        );
        out_cloud = PlyCloud::new(merged);
    }
    let summary = FuseSummary {
        keyframes: records.len(),
        points: out_cloud.cloud.len(),
        obstruction: out_cloud.cloud.count(airmap::geometry::Label::Obstruction),
    };
    write_cloud(out, &out_cloud)?;
    log::info!(
        "wrote {} points ({} obstruction) to {}",
        summary.points,
        summary.obstruction,
        out.display()
    );
    Ok(summary)
}

/// Evenly strided subset of at most `max` points, first point included.
pub fn subsample(points: &[Vec3], max: usize) -> Vec<Vec3> {
    let n = points.len();
    if n <= max {
        return points.to_vec();
    }
    (0..max).map(|i| points[i * n / max]).collect()
}

fn nn_rms(points: &[Vec3], t: &SimilarityTransform, index: &NearestNeighborIndex) -> f64 {
    let moved: Vec<Vec3> = points.iter().map(|p| t.apply(p)).collect();
    let sum: f64 = index
        .nearest_many(&moved)
        .iter()
        .map(|n| n.distance * n.distance)
        .sum();
    (sum / points.len() as f64).sqrt()
}

pub fn read_transform(path: &Path) -> Result<RegistrationSummary> {
    transform::decode(&read_text(path)?)
        .and_then(|d| d.summary())
        .map_err(|e| CliError::format(path, e))
}

/// Starting transforms to run ICP from. `auto` tries identity and PCA and
/// keeps whichever ICP result has the lower untrimmed RMS.
fn initial_candidates(
    src: &[Vec3],
    index: &NearestNeighborIndex,
    cfg: &PipelineConfig,
    init_file: Option<&Path>,
    log: &mut String,
) -> Result<Vec<(&'static str, SimilarityTransform)>> {
    if let Some(path) = init_file {
        let t = read_transform(path)?.transform;
        let _ = writeln!(log, "init: file {}", path.display());
        return Ok(vec![("file", t)]);
    }
    let method = cfg.registration.init;
    let identity = SimilarityTransform::identity();
    if method == InitMethod::Identity {
        let _ = writeln!(log, "init: identity");
        return Ok(vec![("identity", identity)]);
    }
    let pca = match pca_coarse_align(src, index, cfg.registration.with_scale) {
        Ok(p) => p.transform,
        Err(e) if method == InitMethod::Auto => {
            let _ = writeln!(log, "init: PCA unavailable ({e}); using identity");
            return Ok(vec![("identity", identity)]);
        }
        Err(e) => return Err(CliError::Numerical(format!("PCA initialization failed: {e}"))),
    };
    if method == InitMethod::Pca {
        let _ = writeln!(log, "init: pca");
        return Ok(vec![("pca", pca)]);
    }
    let _ = writeln!(
        log,
        "init: auto (identity rms {:.6} mm, pca rms {:.6} mm before ICP)",
        nn_rms(src, &identity, index),
        nn_rms(src, &pca, index)
    );
    Ok(vec![("identity", identity), ("pca", pca)])
}

/// Registers the reconstruction onto the CT cloud and writes
/// `transform.toml`, `aligned.ply` and `registration.log` into `out_dir`.
/// The log is written even when registration fails.
pub fn register(
    recon_path: &Path,
    ct_path: &Path,
    cfg: &PipelineConfig,
    init_file: Option<&Path>,
    out_dir: &Path,
) -> Result<RegistrationSummary> {
    cfg.validate()?;
    let recon = dataset::read_cloud(recon_path)?;
    let ct = dataset::read_cloud(ct_path)?;
    if recon.cloud.is_empty() || ct.cloud.is_empty() {
        return Err(CliError::Validation("registration needs non-empty clouds".into()));
    }
    let rc = &cfg.registration;
    let index = NearestNeighborIndex::build(ct.cloud.points())
        .map_err(|e| CliError::format(ct_path, e))?;
    let src = subsample(recon.cloud.points(), rc.max_points);
    let mut log = String::new();
    let _ = writeln!(
        log,
        "source: {} ({} points, {} used)\ntarget: {} ({} points)",
        recon_path.display(),
        recon.cloud.len(),
        src.len(),
        ct_path.display(),
        ct.cloud.len()
    );
    let log_path = out_dir.join(REGISTRATION_LOG);
    let candidates = match initial_candidates(&src, &index, cfg, init_file, &mut log) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            write_atomic(&log_path, log.as_bytes())?;
            return Err(e);
        }
    };
    let params = rc.icp_params();
    let mut best: Option<(&str, f64, IcpResult)> = None;
    let mut last_err = None;
    for (name, init) in candidates {
        match icp(&src, &index, &init, &params) {
            Ok(r) => {
                // Trimming hides small asymmetric features such as the
                // tumor, so starts are ranked on all points.
                let score = nn_rms(&src, &r.transform, &index);
                let _ = writeln!(
                    log,
                    "start {name}: rms {:.9} mm after {} iterations, untrimmed rms {score:.9} mm",
                    r.rms, r.iterations
                );
                if best.as_ref().is_none_or(|(_, b, _)| score < *b) {
                    best = Some((name, score, r));
                }
            }
            Err(e) => {
                let _ = writeln!(log, "start {name}: error: {e}");
                last_err = Some(e);
            }
        }
    }
    let Some((start, _, res)) = best else {
        write_atomic(&log_path, log.as_bytes())?;
        let e = last_err.expect("at least one start was tried");
        return Err(CliError::Numerical(format!(
            "registration failed: {e} (log: {})",
            log_path.display()
        )));
    };
    let _ = writeln!(log, "selected start: {start}\niteration rms_mm within kept");
    for it in &res.history {
        let _ = writeln!(log, "{} {:.9} {} {}", it.iteration, it.rms, it.within, it.kept);
    }
    let summary = RegistrationSummary {
        transform: res.transform,
        rms: res.rms,
        iterations: res.iterations,
        converged: res.converged,
    };
    let _ = writeln!(
        log,
        "result: converged={} iterations={} rms_mm={:.9} scale={:.9}",
        res.converged, res.iterations, res.rms, res.transform.scale
    );
    // Sampled CT surfaces make the RMS creep by tiny relative amounts for
    // many iterations, so running out of iterations alone is only a warning.
    // A final RMS above `max_rms` means the clouds were not matched.
    if !res.converged {
        let msg = format!(
            "ICP stopped at max_iterations {} before reaching rel_tol {}",
            res.iterations, params.rel_tol
        );
        let _ = writeln!(log, "warning: {msg}");
        log::warn!("{msg}");
    }
    let failure = (res.rms > rc.max_rms).then(|| {
        format!(
            "ICP did not converge to a match: rms {:.6} mm exceeds max_rms {} mm",
            res.rms, rc.max_rms
        )
    });
    if let Some(msg) = &failure {
        let _ = writeln!(log, "failure: {msg}");
    }
    let aligned = PlyCloud {
        cloud: recon.cloud.transformed(&res.transform),
        colors: recon.colors,
        frames: recon.frames,
        distances: None,
    };
    write_atomic(&out_dir.join(TRANSFORM_FILE), transform::encode(&summary).as_bytes())?;
    write_cloud(&out_dir.join(ALIGNED_FILE), &aligned)?;
    write_atomic(&log_path, log.as_bytes())?;
    log::info!(
        "registration: {} iterations, rms {:.6} mm, scale {:.6}",
        res.iterations,
        res.rms,
        res.transform.scale
    );
    match failure {
        Some(msg) => Err(CliError::Numerical(format!("{msg} (log: {})", log_path.display()))),
        None => Ok(summary),
    }
}

fn metrics_error(e: MetricsError) -> CliError {
    match e {
        MetricsError::Registration(_) => CliError::Numerical(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

/// Evaluates a reconstruction (SLAM frame) against the CT cloud and writes
/// `report.toml` and `heatmap.ply` into `out_dir`. A report with undefined
/// segmentation precision is still written, then reported as a failure.
pub fn eval(
    recon_path: &Path,
    ct_path: &Path,
    transform_path: Option<&Path>,
    root: &Path,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<MetricsReport> {
    cfg.validate()?;
    let recon = dataset::read_cloud(recon_path)?;
    let ct = dataset::read_cloud(ct_path)?;
    let reg = match transform_path {
        Some(p) => read_transform(p)?,
        None => RegistrationSummary::identity(),
    };
    let ds = Dataset::open(root)?;
    let keyframes = ds.load_keyframes(cfg.frame_stride)?;
    let opts = cfg.eval.options();

    let sources = match opts.policy {
        PrecisionPolicy::AllKeyframes => None,
        PrecisionPolicy::SourceFrameOnly => {
            let frames = recon.frames.as_ref().ok_or_else(|| {
                CliError::format(recon_path, "source_frame policy needs a `frame` property")
            })?;
            let slot: HashMap<u64, usize> = keyframes
                .iter()
                .enumerate()
                .map(|(i, k)| (k.frame_id, i))
                .collect();
            let mapped: Result<Vec<usize>> = frames
                .iter()
                .map(|&f| {
                    slot.get(&(f as u64)).copied().ok_or_else(|| {
                        CliError::Validation(format!(
                            "point source frame {f} is not among the selected keyframes \
                             (frame_stride {})",
                            cfg.frame_stride
                        ))
                    })
                })
                .collect();
            Some(mapped?)
        }
    };

    let ev = evaluate(
        &recon.cloud,
        &ct.cloud,
        &keyframes,
        sources.as_deref(),
        &reg,
        &opts,
    )
    .map_err(metrics_error)?;
    let heat = PlyCloud {
        cloud: LabeledPointCloud::from_parts(ev.heatmap.points.clone(), recon.cloud.labels().to_vec())
            .expect("heatmap has one point per reconstruction point"),
        colors: Some(ev.heatmap.colors.clone()),
        frames: recon.frames.clone(),
        distances: Some(ev.heatmap.distances.iter().map(|&d| d as f32).collect()),
    };
    write_atomic(&out_dir.join(REPORT_FILE), report::encode(&ev.report).as_bytes())?;
    write_cloud(&out_dir.join(HEATMAP_FILE), &heat)?;
    let r = &ev.report;
    log::info!(
        "coverage {:.3}% | chamfer {:.6} mm | median {:.6} mm | hausdorff {:.6} mm | precision {}",
        r.coverage_pct,
        r.chamfer_one_sided_mm,
        r.median_closest_mm,
        r.hausdorff_one_sided_mm,
        r.seg_precision_pct
            .map_or("undefined".to_string(), |p| format!("{p:.3}%"))
    );
    if r.seg_precision_pct.is_none() {
        return Err(CliError::Numerical(format!(
            "segmentation precision undefined: {} obstruction points, no valid projection \
             (report written to {})",
            r.counts.tumor_points,
            out_dir.join(REPORT_FILE).display()
        )));
    }
    Ok(ev.report)
}

/// fuse -> register -> eval, with every intermediate written to `out_dir`.
pub fn pipeline(
    root: &Path,
    cfg: &PipelineConfig,
    ct: Option<&Path>,
    init_file: Option<&Path>,
    out_dir: &Path,
) -> Result<MetricsReport> {
    let ct_path: PathBuf = match ct {
        Some(p) => p.to_path_buf(),
        None => Dataset::open(root)?.ct.ok_or_else(|| {
            CliError::Validation(format!(
                "{}: no {CT_FILE}; pass --ct",
                root.display()
            ))
        })?,
    };
    let recon = out_dir.join(RECON_FILE);
    fuse(root, cfg, &recon)?;
    register(&recon, &ct_path, cfg, init_file, out_dir)?;
    eval(
        &recon,
        &ct_path,
        Some(&out_dir.join(TRANSFORM_FILE)),
        root,
        cfg,
        out_dir,
    )
}
