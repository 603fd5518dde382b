use super::{
    distort_point, in_source, round_half_up, ImageError, ImageGray, PixelMap, SegmentationMask,
};
use crate::geometry::{CameraIntrinsics, Distortion};

/// For each pixel of the distortion-free `dst` camera, the location in the
/// distorted `src` image that sees the same ray.
///
/// Entries whose ray falls outside the source image, or outside the
/// distortion model's domain, are flagged invalid.
pub fn build_undistort_map(
    src: &CameraIntrinsics,
    dst: &CameraIntrinsics,
) -> Result<PixelMap, ImageError> {
    if dst.distortion != Distortion::None {
        return Err(ImageError::DistortedTarget);
    }
    let n = dst.width * dst.height;
    let mut src_x = Vec::with_capacity(n);
    let mut src_y = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for v in 0..dst.height {
        for u in 0..dst.width {
            let (xn, yn) = dst.pixel_to_normalized(u as f64, v as f64);
            match distort_point(xn, yn, &src.distortion) {
                Ok((xd, yd)) => {
                    let (us, vs) = src.normalized_to_pixel(xd, yd);
                    let ok = us.is_finite()
                        && vs.is_finite()
                        && in_source(us, vs, src.width, src.height);
                    src_x.push(us);
                    src_y.push(vs);
                    valid.push(ok);
                }
                Err(_) => {
                    src_x.push(f64::NAN);
                    src_y.push(f64::NAN);
                    valid.push(false);
                }
            }
        }
    }
    PixelMap::new(dst.width, dst.height, src_x, src_y, valid)
}

/// Bilinear resampling; invalid map entries produce 0.
pub fn remap_bilinear(img: &ImageGray, map: &PixelMap) -> ImageGray {
    let (w, h) = (img.width(), img.height());
    ImageGray::from_fn(map.width(), map.height(), |u, v| {
        let Some((x, y)) = map.get(u, v) else {
            return 0.0;
        };
        if !in_source(x, y, w, h) {
            return 0.0;
        }
        let x0 = (x.floor() as usize).min(w - 1);
        let y0 = (y.floor() as usize).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let ax = x - x0 as f64;
        let ay = y - y0 as f64;
        let top = img.get(x0, y0) * (1.0 - ax) + img.get(x1, y0) * ax;
        let bottom = img.get(x0, y1) * (1.0 - ax) + img.get(x1, y1) * ax;
        top * (1.0 - ay) + bottom * ay
    })
}

/// Nearest-neighbor (round half up) resampling that keeps masks binary.
pub fn remap_nearest(mask: &SegmentationMask, map: &PixelMap) -> SegmentationMask {
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    SegmentationMask::from_fn(map.width(), map.height(), |u, v| {
        let Some((x, y)) = map.get(u, v) else {
            return false;
        };
        let (xi, yi) = (round_half_up(x), round_half_up(y));
        if xi < 0.0 || yi < 0.0 || xi >= w || yi >= h {
            return false;
        }
        mask.get(xi as usize, yi as usize) == 1
    })
}

/// Integer pixel window used to crop an image around its principal point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl CropWindow {
    /// Window of the given size centered on `(cx, cy)`, clamped to the image.
    pub fn centered(k: &CameraIntrinsics, crop_w: usize, crop_h: usize) -> Result<Self, ImageError> {
        if crop_w == 0 || crop_h == 0 || crop_w > k.width || crop_h > k.height {
            return Err(ImageError::CropTooLarge {
                crop_w,
                crop_h,
                width: k.width,
                height: k.height,
            });
        }
        let origin = |c: f64, size: usize, full: usize| -> usize {
            let o = (c - size as f64 / 2.0).round();
            o.clamp(0.0, (full - size) as f64) as usize
        };
        Ok(Self {
            x0: origin(k.cx, crop_w, k.width),
            y0: origin(k.cy, crop_h, k.height),
            width: crop_w,
            height: crop_h,
        })
    }

    /// Map sampling the source at `(u + x0, v + y0)`.
    pub fn to_map(&self, src_w: usize, src_h: usize) -> PixelMap {
        PixelMap::shift(
            self.width,
            self.height,
            self.x0 as f64,
            self.y0 as f64,
            src_w,
            src_h,
        )
    }
}

/// Intrinsics after cropping `crop_w x crop_h` around the principal point.
/// Focal lengths are unchanged; the principal point shifts by the window origin.
pub fn crop_intrinsics(
    k: &CameraIntrinsics,
    crop_w: usize,
    crop_h: usize,
) -> Result<CameraIntrinsics, ImageError> {
    let win = CropWindow::centered(k, crop_w, crop_h)?;
    Ok(CameraIntrinsics::new(
        k.fx,
        k.fy,
        k.cx - win.x0 as f64,
        k.cy - win.y0 as f64,
        crop_w,
        crop_h,
        k.distortion,
    )?)
}

/// Nearest-neighbor rescale with pixel-center alignment:
/// `src = (dst + 0.5) * (in / out) - 0.5`, rounded half up.
pub fn rescale_mask_nearest(
    mask: &SegmentationMask,
    out_w: usize,
    out_h: usize,
) -> SegmentationMask {
    if out_w == mask.width() && out_h == mask.height() {
        return mask.clone();
    }
    let sx = mask.width() as f64 / out_w as f64;
    let sy = mask.height() as f64 / out_h as f64;
    let index = |dst: usize, scale: f64, len: usize| -> usize {
        let s = round_half_up((dst as f64 + 0.5) * scale - 0.5);
        s.clamp(0.0, (len - 1) as f64) as usize
    };
    let cols: Vec<usize> = (0..out_w).map(|u| index(u, sx, mask.width())).collect();
    let rows: Vec<usize> = (0..out_h).map(|v| index(v, sy, mask.height())).collect();
    SegmentationMask::from_fn(out_w, out_h, |u, v| mask.get(cols[u], rows[v]) == 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam(w: usize, h: usize) -> CameraIntrinsics {
        CameraIntrinsics::pinhole(300.0, 300.0, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap()
    }

    fn identity_map(w: usize, h: usize) -> PixelMap {
        PixelMap::shift(w, h, 0.0, 0.0, w, h)
    }

    #[test]
    fn undistort_map_identity() {
        let k = cam(64, 48);
        let map = build_undistort_map(&k, &k).unwrap();
        assert_eq!(map.valid_count(), 64 * 48);
        for v in 0..48 {
            for u in 0..64 {
                let (x, y) = map.get(u, v).unwrap();
                assert!((x - u as f64).abs() < 1e-12 && (y - v as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn undistort_map_pure_offset() {
        let src = cam(640, 480);
        let dst = CameraIntrinsics::pinhole(300.0, 300.0, 220.0, 160.0, 400, 300).unwrap();
        let map = build_undistort_map(&src, &dst).unwrap();
        for (u, v) in [(0, 0), (10, 20), (399, 299)] {
            let (x, y) = map.get(u, v).unwrap();
            assert!((x - (u as f64 + 100.0)).abs() < 1e-9);
            assert!((y - (v as f64 + 80.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn undistort_map_matches_per_pixel_evaluation() {
        let src = CameraIntrinsics::new(
            280.0,
            282.0,
            161.3,
            119.7,
            320,
            240,
            Distortion::RadTan {
                k1: -0.28,
                k2: 0.07,
                p1: 1e-3,
                p2: -5e-4,
                k3: 0.0,
            },
        )
        .unwrap();
        let dst = src.without_distortion();
        let map = build_undistort_map(&src, &dst).unwrap();
        let (k1, k2, p1, p2) = (-0.28, 0.07, 1e-3, -5e-4);
        for v in (0..240).step_by(7) {
            for u in (0..320).step_by(5) {
                // Written out independently of distort_point.
                let x = (u as f64 - dst.cx) / dst.fx;
                let y = (v as f64 - dst.cy) / dst.fy;
                let r2 = x * x + y * y;
                let rad = 1.0 + k1 * r2 + k2 * r2 * r2;
                let xd = x * rad + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
                let yd = y * rad + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
                let (ex, ey) = (src.fx * xd + src.cx, src.fy * yd + src.cy);
                let inside = ex >= 0.0 && ey >= 0.0 && ex <= 319.0 && ey <= 239.0;
                match map.get(u, v) {
                    Some((mx, my)) => {
                        assert!(inside);
                        assert!((mx - ex).abs() < 1e-6 && (my - ey).abs() < 1e-6);
                    }
                    None => assert!(!inside),
                }
            }
        }
    }

    #[test]
    fn undistort_map_rejects_distorted_target() {
        let mut dst = cam(10, 10);
        dst.distortion = Distortion::FisheyeEquidistant {
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            k4: 0.0,
        };
        assert_eq!(
            build_undistort_map(&cam(10, 10), &dst),
            Err(ImageError::DistortedTarget)
        );
    }

    #[test]
    fn bilinear_identity_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..17 * 13).map(|_| rng.random()).collect();
        let img = ImageGray::new(17, 13, data).unwrap();
        assert_eq!(remap_bilinear(&img, &identity_map(17, 13)), img);

        let w = 20;
        let ramp = ImageGray::from_fn(w, 5, |u, _| u as f64 / w as f64);
        let out = remap_bilinear(&ramp, &PixelMap::shift(w, 5, 1.0, 0.0, w, 5));
        for v in 0..5 {
            for u in 0..w - 1 {
                assert!((out.get(u, v) - (u + 1) as f64 / w as f64).abs() < 1e-15);
            }
            assert_eq!(out.get(w - 1, v), 0.0);
        }
    }

    #[test]
    fn bilinear_matches_formula_at_half_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (w, h) = (31, 23);
        let data: Vec<f64> = (0..w * h).map(|_| rng.random()).collect();
        let img = ImageGray::new(w, h, data.clone()).unwrap();
        let out = remap_bilinear(&img, &PixelMap::shift(w, h, 0.5, 0.5, w, h));
        let px = |u: usize, v: usize| data[v * w + u];
        for _ in 0..20 {
            let u = rng.random_range(0..w - 1);
            let v = rng.random_range(0..h - 1);
            let expect = 0.25 * (px(u, v) + px(u + 1, v) + px(u, v + 1) + px(u + 1, v + 1));
            assert!((out.get(u, v) - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn nearest_cases() {
        let checker = SegmentationMask::from_fn(16, 12, |u, v| (u + v) % 2 == 0);
        assert_eq!(remap_nearest(&checker, &identity_map(16, 12)), checker);

        let shifted = remap_nearest(&checker, &PixelMap::shift(16, 12, 0.4, 0.0, 16, 12));
        for v in 0..12 {
            for u in 0..15 {
                assert_eq!(shifted.get(u, v), checker.get(u, v));
            }
        }

        let ones = SegmentationMask::from_fn(16, 12, |_, _| true);
        let map = PixelMap::shift(10, 10, 2.3, 1.7, 16, 12);
        let out = remap_nearest(&ones, &map);
        for v in 0..10 {
            for u in 0..10 {
                assert_eq!(out.get(u, v), map.get(u, v).is_some() as u8);
            }
        }
        let zeros = SegmentationMask::zeros(16, 12);
        assert_eq!(remap_nearest(&zeros, &map).count_ones(), 0);
    }

    #[test]
    fn crop_cases() {
        let k = cam(640, 480);
        assert_eq!(crop_intrinsics(&k, 640, 480).unwrap(), k);

        let c = crop_intrinsics(&k, 512, 384).unwrap();
        assert_eq!((c.cx, c.cy, c.width, c.height), (256.0, 192.0, 512, 384));
        assert_eq!((c.fx, c.fy), (k.fx, k.fy));

        // Principal point near the left/top border: window clamps to the edge.
        let off = CameraIntrinsics::pinhole(300.0, 300.0, 30.0, 470.0, 640, 480).unwrap();
        let win = CropWindow::centered(&off, 512, 384).unwrap();
        assert_eq!((win.x0, win.y0), (0, 96));
        let c = crop_intrinsics(&off, 512, 384).unwrap();
        assert_eq!((c.cx, c.cy), (30.0, 374.0));
        assert!(c.cx < 512.0 && c.cy < 384.0);

        assert!(matches!(
            crop_intrinsics(&k, 641, 480),
            Err(ImageError::CropTooLarge { .. })
        ));
    }

    #[test]
    fn crop_preserves_projection() {
        let k = CameraIntrinsics::pinhole(310.0, 305.0, 331.7, 229.2, 640, 480).unwrap();
        let win = CropWindow::centered(&k, 400, 300).unwrap();
        let c = crop_intrinsics(&k, 400, 300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let p = Vec3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(1.0..50.0),
            );
            let (u, v) = k.project(&p);
            let (uc, vc) = c.project(&p);
            assert!((uc - (u - win.x0 as f64)).abs() < 1e-9);
            assert!((vc - (v - win.y0 as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn rescale_cases() {
        let m = SegmentationMask::from_fn(4, 4, |u, _| u < 2);
        assert_eq!(rescale_mask_nearest(&m, 4, 4), m);
        let small = rescale_mask_nearest(&m, 2, 2);
        assert_eq!(small.data(), &[1, 0, 1, 0]);

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let data: Vec<u8> = (0..9 * 7).map(|_| rng.random_range(0..2)).collect();
        let orig = SegmentationMask::new(9, 7, data).unwrap();
        let up = rescale_mask_nearest(&orig, 18, 14);
        assert_eq!(rescale_mask_nearest(&up, 9, 7), orig);
    }

    #[test]
    fn mask_constructor_rejects_non_binary() {
        assert_eq!(
            SegmentationMask::new(2, 1, vec![0, 7]),
            Err(ImageError::NonBinary { index: 1, value: 7 })
        );
        assert!(matches!(
            SegmentationMask::new(2, 2, vec![0, 1]),
            Err(ImageError::SizeMismatch { .. })
        ));
    }
}
