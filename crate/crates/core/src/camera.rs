//! Pinhole camera: projection, crop/resize intrinsic adjustment, default
//! focal policies, and back-projection of pixel-aligned correspondences to
//! camera-space 3D points.
//!
//! Conventions: +z looks away from the camera, pixel coordinates are
//! `u = fx * x / z + px`, `v = fy * y / z + py`, and all distances are meters.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub px: f64,
    pub py: f64,
}

/// Axis-aligned crop of a source image, resized to `out_size x out_size`.
/// The crop rectangle need not be square; scaling is per-axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
    pub out_size: f64,
}

/// How to pick intrinsics when none are measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy")]
pub enum FocalPolicy {
    /// Canonical fixed focal length of 1000 px, principal point at center.
    #[serde(rename = "fixed_1000")]
    Fixed1000 { width: f64, height: f64 },
    /// Focal equal to the image diagonal `sqrt(w^2 + h^2)`, principal point
    /// at center; a stable guess when the field of view is unknown.
    #[serde(rename = "diag")]
    Diagonal { width: f64, height: f64 },
}

impl CameraIntrinsics {
    /// Intrinsics from a focal policy.
    pub fn from_policy(policy: FocalPolicy) -> CameraIntrinsics {
        let (f, width, height) = match policy {
            FocalPolicy::Fixed1000 { width, height } => (1000.0, width, height),
            FocalPolicy::Diagonal { width, height } => {
                ((width * width + height * height).sqrt(), width, height)
            }
        };
        CameraIntrinsics {
            fx: f,
            fy: f,
            px: width / 2.0,
            py: height / 2.0,
        }
    }
}

/// Camera file: either explicit `{fx, fy, px, py}` or a policy form
/// `{policy, width, height}`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CameraFile {
    Policy(FocalPolicy),
    Explicit(CameraIntrinsics),
}

/// Load intrinsics from JSON, resolving a policy form if present.
pub fn load_camera(path: &Path) -> Result<CameraIntrinsics> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let file: CameraFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        detail: e.to_string(),
    })?;
    let cam = match file {
        CameraFile::Policy(policy) => CameraIntrinsics::from_policy(policy),
        CameraFile::Explicit(cam) => cam,
    };
    if !(cam.fx.is_finite() && cam.fy.is_finite() && cam.px.is_finite() && cam.py.is_finite())
        || cam.fx <= 0.0
        || cam.fy <= 0.0
    {
        return Err(Error::Parse {
            path: path.into(),
            detail: format!("focal lengths must be finite and positive, got fx={} fy={}", cam.fx, cam.fy),
        });
    }
    Ok(cam)
}

/// Load a crop box from JSON.
pub fn load_crop(path: &Path) -> Result<CropBox> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        detail: e.to_string(),
    })
}

/// Project camera-space points to pixels. Every point must sit strictly in
/// front of the camera.
pub fn project(cam: &CameraIntrinsics, points: &[Vector3<f64>]) -> Result<Vec<[f64; 2]>> {
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if p.z <= 0.0 {
            return Err(Error::NonPositiveDepth { index: i, z: p.z });
        }
        out.push([cam.fx * p.x / p.z + cam.px, cam.fy * p.y / p.z + cam.py]);
    }
    Ok(out)
}

/// Intrinsics of the virtual camera observing a crop resized to
/// `out_size x out_size`: focal lengths scale by `out_size / extent` per
/// axis, the principal point shifts by the crop origin then scales.
pub fn adjust_intrinsics(cam: &CameraIntrinsics, crop: &CropBox) -> Result<CameraIntrinsics> {
    if crop.width <= 0.0 || crop.height <= 0.0 || crop.out_size <= 0.0 {
        return Err(Error::InvalidValue {
            field: "crop".into(),
            index: 0,
            detail: format!(
                "extents must be positive, got width={} height={} out_size={}",
                crop.width, crop.height, crop.out_size
            ),
        });
    }
    let sx = crop.out_size / crop.width;
    let sy = crop.out_size / crop.height;
    Ok(CameraIntrinsics {
        fx: cam.fx * sx,
        fy: cam.fy * sy,
        px: (cam.px - crop.x0) * sx,
        py: (cam.py - crop.y0) * sy,
    })
}

/// Back-project pixel correspondences to camera space along their rays:
/// `X = ((u - px) / fx, (v - py) / fy, 1) * (depth + root_depth)`, where
/// `depth` is the per-point offset from the subject's root depth (zero when
/// absent). Total depth must stay positive.
pub fn lift_to_3d(
    cam: &CameraIntrinsics,
    uv: &[[f64; 2]],
    depth: Option<&[f64]>,
    root_depth: f64,
) -> Result<Vec<Vector3<f64>>> {
    if let Some(d) = depth {
        if d.len() != uv.len() {
            return Err(Error::Dimension {
                field: "depth".into(),
                expected: uv.len(),
                got: d.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(uv.len());
    for (i, p) in uv.iter().enumerate() {
        let z = root_depth + depth.map_or(0.0, |d| d[i]);
        if z <= 0.0 {
            return Err(Error::NonPositiveDepth { index: i, z });
        }
        out.push(Vector3::new(
            (p[0] - cam.px) / cam.fx * z,
            (p[1] - cam.py) / cam.fy * z,
            z,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn projects_pinned_point() {
        let cam = CameraIntrinsics {
            fx: 1000.0,
            fy: 1000.0,
            px: 112.0,
            py: 112.0,
        };
        let uv = project(&cam, &[Vector3::new(1.0, 0.0, 2.0)]).unwrap();
        assert_eq!(uv[0], [612.0, 112.0]);
    }

    #[test]
    fn rejects_points_behind_camera_with_index() {
        let cam = CameraIntrinsics {
            fx: 500.0,
            fy: 500.0,
            px: 0.0,
            py: 0.0,
        };
        let pts = [Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.1, 0.2, -0.5)];
        match project(&cam, &pts).unwrap_err() {
            Error::NonPositiveDepth { index, z } => {
                assert_eq!(index, 1);
                assert_eq!(z, -0.5);
            }
            other => panic!("expected NonPositiveDepth, got {other:?}"),
        }
    }

    #[test]
    fn crop_adjustment_matches_pinned_values() {
        let cam = CameraIntrinsics {
            fx: 1000.0,
            fy: 1000.0,
            px: 640.0,
            py: 360.0,
        };
        let crop = CropBox {
            x0: 320.0,
            y0: 180.0,
            width: 640.0,
            height: 360.0,
            out_size: 224.0,
        };
        let adjusted = adjust_intrinsics(&cam, &crop).unwrap();
        assert!((adjusted.fx - 350.0).abs() < 1e-12);
        assert!((adjusted.fy - 1000.0 * 224.0 / 360.0).abs() < 1e-12);
        assert!((adjusted.px - 112.0).abs() < 1e-12);
        assert!((adjusted.py - 112.0).abs() < 1e-12);
    }

    #[test]
    fn crop_adjustment_composes_with_pixel_affine_map() {
        // Projecting through adjusted intrinsics must equal projecting through
        // the original camera and then applying the crop's affine pixel map.
        let cam = CameraIntrinsics {
            fx: 1234.0,
            fy: 1180.0,
            px: 600.0,
            py: 340.0,
        };
        let crop = CropBox {
            x0: 150.0,
            y0: 90.0,
            width: 500.0,
            height: 420.0,
            out_size: 224.0,
        };
        let adjusted = adjust_intrinsics(&cam, &crop).unwrap();
        let mut stream = Stream::new(404);
        for _ in 0..200 {
            let p = Vector3::new(
                stream.uniform(-1.0, 1.0),
                stream.uniform(-1.0, 1.0),
                stream.uniform(0.5, 10.0),
            );
            let full = project(&cam, &[p]).unwrap()[0];
            let direct = project(&adjusted, &[p]).unwrap()[0];
            let via_affine = [
                (full[0] - crop.x0) * crop.out_size / crop.width,
                (full[1] - crop.y0) * crop.out_size / crop.height,
            ];
            assert!((direct[0] - via_affine[0]).abs() < 1e-9);
            assert!((direct[1] - via_affine[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_degenerate_crops() {
        let cam = CameraIntrinsics {
            fx: 1000.0,
            fy: 1000.0,
            px: 0.0,
            py: 0.0,
        };
        let crop = CropBox {
            x0: 0.0,
            y0: 0.0,
            width: 0.0,
            height: 100.0,
            out_size: 224.0,
        };
        assert!(matches!(
            adjust_intrinsics(&cam, &crop).unwrap_err(),
            Error::InvalidValue { .. }
        ));
    }

    #[test]
    fn diagonal_policy_matches_hand_value() {
        let cam = CameraIntrinsics::from_policy(FocalPolicy::Diagonal {
            width: 1280.0,
            height: 720.0,
        });
        let expect = (1280.0f64 * 1280.0 + 720.0 * 720.0).sqrt();
        assert_eq!(cam.fx, expect);
        assert_eq!(cam.fy, expect);
        assert_eq!((cam.px, cam.py), (640.0, 360.0));
        assert!((cam.fx - 1468.60478).abs() < 1e-5);

        let fixed = CameraIntrinsics::from_policy(FocalPolicy::Fixed1000 {
            width: 1280.0,
            height: 720.0,
        });
        assert_eq!((fixed.fx, fixed.fy), (1000.0, 1000.0));
    }

    #[test]
    fn camera_file_accepts_policy_and_explicit_forms() {
        let dir = tempfile::tempdir().unwrap();
        let policy_path = dir.path().join("policy.json");
        std::fs::write(
            &policy_path,
            r#"{"policy": "diag", "width": 1280, "height": 720}"#,
        )
        .unwrap();
        let cam = load_camera(&policy_path).unwrap();
        assert!((cam.fx - (1280.0f64 * 1280.0 + 720.0 * 720.0).sqrt()).abs() < 1e-12);

        let bad_tag = dir.path().join("bad.json");
        std::fs::write(&bad_tag, r#"{"policy": "median", "width": 10, "height": 10}"#).unwrap();
        assert!(matches!(load_camera(&bad_tag).unwrap_err(), Error::Parse { .. }));

        let explicit_path = dir.path().join("explicit.json");
        std::fs::write(
            &explicit_path,
            r#"{"fx": 900.0, "fy": 910.0, "px": 320.0, "py": 240.0}"#,
        )
        .unwrap();
        let cam = load_camera(&explicit_path).unwrap();
        assert_eq!(cam.fy, 910.0);

        let missing = dir.path().join("nope.json");
        assert!(matches!(
            load_camera(&missing).unwrap_err(),
            Error::Io { .. }
        ));
    }

    #[test]
    fn lift_inverts_projection_with_true_depths() {
        let cam = CameraIntrinsics {
            fx: 1468.6,
            fy: 1468.6,
            px: 640.0,
            py: 360.0,
        };
        let mut stream = Stream::new(9090);
        let root_depth = 7.0;
        let points: Vec<Vector3<f64>> = (0..300)
            .map(|_| {
                Vector3::new(
                    stream.uniform(-1.0, 1.0),
                    stream.uniform(-1.0, 1.0),
                    root_depth + stream.uniform(-0.8, 0.8),
                )
            })
            .collect();
        let uv = project(&cam, &points).unwrap();
        let depths: Vec<f64> = points.iter().map(|p| p.z - root_depth).collect();
        let lifted = lift_to_3d(&cam, &uv, Some(&depths), root_depth).unwrap();
        for (p, l) in points.iter().zip(&lifted) {
            assert!((p - l).norm() < 1e-12);
        }
    }

    #[test]
    fn lift_without_depths_lands_on_rays_at_root_depth() {
        let cam = CameraIntrinsics {
            fx: 1000.0,
            fy: 1000.0,
            px: 640.0,
            py: 360.0,
        };
        let uv = [[640.0, 360.0], [740.0, 460.0]];
        let lifted = lift_to_3d(&cam, &uv, None, 7.0).unwrap();
        assert!((lifted[0] - Vector3::new(0.0, 0.0, 7.0)).norm() < 1e-12);
        assert!((lifted[1] - Vector3::new(0.7, 0.7, 7.0)).norm() < 1e-12);
    }

    #[test]
    fn lift_validates_depth_length_and_sign() {
        let cam = CameraIntrinsics {
            fx: 1000.0,
            fy: 1000.0,
            px: 0.0,
            py: 0.0,
        };
        let uv = [[0.0, 0.0], [1.0, 1.0]];
        assert!(matches!(
            lift_to_3d(&cam, &uv, Some(&[0.1]), 7.0).unwrap_err(),
            Error::Dimension { .. }
        ));
        match lift_to_3d(&cam, &uv, Some(&[0.0, -8.0]), 7.0).unwrap_err() {
            Error::NonPositiveDepth { index, .. } => assert_eq!(index, 1),
            other => panic!("expected NonPositiveDepth, got {other:?}"),
        }
    }
}
