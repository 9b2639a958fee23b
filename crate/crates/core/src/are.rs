//! Analytic rotation estimation: per-segment weighted rigid alignment
//! between the rest mesh and a predicted 3D point cloud, giving world
//! rotations for every joint, plus the conversion to parent-relative
//! rotations consumed by the forward pass.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::{rest_mesh, ParametricModel, SegmentMap};

/// Per-vertex prediction confidences in `[0, 1]` (values outside are accepted
/// but unusual). A zero removes the vertex from every estimate.
pub type VertexConfidences = [f64];

/// World rotation per joint, with the indices of segments whose alignment was
/// too degenerate to determine and therefore fell back to the parent's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldRotations {
    pub rotations: Vec<Matrix3<f64>>,
    pub degenerate_segments: Vec<usize>,
}

/// Relative singular-value threshold below which the point covariance counts
/// as rank-deficient (rotation about the remaining axis undetermined).
const RANK_TOL: f64 = 1e-9;

/// Weighted rigid alignment: the proper rotation minimizing
/// `sum_i w_i * ||(dst_i - dst_mean) - R * (src_i - src_mean)||^2`.
///
/// Computed from the SVD of the weighted cross-covariance of the centered
/// point sets, with the smallest singular direction's sign corrected so the
/// result is always a rotation (determinant +1), never a reflection.
pub fn kabsch(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    weights: &[f64],
) -> Result<Matrix3<f64>> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::Dimension {
            field: "kabsch point sets".into(),
            expected: src.len(),
            got: dst.len().min(weights.len()),
        });
    }
    let usable = weights.iter().filter(|&&w| w > 0.0).count();
    if usable < 3 {
        return Err(Error::TooFewPoints {
            context: "rigid alignment".into(),
            got: usable,
            needed: 3,
        });
    }
    let mut wsum = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidValue {
                field: "weights".into(),
                index: i,
                detail: format!("must be finite and nonnegative, got {w}"),
            });
        }
        wsum += w;
    }

    let mut src_mean = Vector3::zeros();
    let mut dst_mean = Vector3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        src_mean += w * s;
        dst_mean += w * d;
    }
    src_mean /= wsum;
    dst_mean /= wsum;

    let mut cov = Matrix3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        cov += w * (s - src_mean) * (d - dst_mean).transpose();
    }
    if !cov.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite {
            context: "alignment covariance".into(),
        });
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let sv = svd.singular_values;
    if sv[1] <= RANK_TOL * sv[0].max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateCovariance {
            context: "rigid alignment".into(),
        });
    }
    let det = (v_t.transpose() * u.transpose()).determinant();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    Ok(v_t.transpose() * correction * u.transpose())
}

/// Estimate each segment's world rotation by rigidly aligning its rest
/// vertices (under `shape_guess`) to the predicted cloud, weighting every
/// vertex by confidence times its blend weight for that joint.
///
/// Segments whose covariance is rank-deficient inherit the parent's world
/// rotation (identity at the root) and are reported in
/// [`WorldRotations::degenerate_segments`]. Other alignment failures are
/// errors tagged with the segment index.
pub fn estimate_world_rotations(
    model: &ParametricModel,
    segments: &SegmentMap,
    predicted_vertices: &[Vector3<f64>],
    shape_guess: &[f64],
    confidences: &VertexConfidences,
) -> Result<WorldRotations> {
    let n = model.num_vertices();
    if predicted_vertices.len() != n {
        return Err(Error::Dimension {
            field: "predicted_vertices".into(),
            expected: n,
            got: predicted_vertices.len(),
        });
    }
    if confidences.len() != n {
        return Err(Error::Dimension {
            field: "confidences".into(),
            expected: n,
            got: confidences.len(),
        });
    }
    let rest = rest_mesh(model, shape_guess)?;

    let mut rotations: Vec<Matrix3<f64>> = Vec::with_capacity(model.num_joints());
    let mut degenerate_segments = Vec::new();
    for (k, members) in segments.members.iter().enumerate() {
        let src: Vec<Vector3<f64>> = members.iter().map(|&i| rest[i]).collect();
        let dst: Vec<Vector3<f64>> = members.iter().map(|&i| predicted_vertices[i]).collect();
        let w: Vec<f64> = members
            .iter()
            .map(|&i| confidences[i] * model.blend_weights[(k, i)])
            .collect();
        match kabsch(&src, &dst, &w) {
            Ok(r) => rotations.push(r),
            Err(Error::DegenerateCovariance { .. }) => {
                let fallback = if k == 0 {
                    Matrix3::identity()
                } else {
                    rotations[model.parent_of(k)]
                };
                rotations.push(fallback);
                degenerate_segments.push(k);
            }
            Err(e) => return Err(e.with_segment(k)),
        }
    }
    Ok(WorldRotations {
        rotations,
        degenerate_segments,
    })
}

/// Convert world rotations to parent-relative ones: the root keeps its world
/// rotation, every other joint gets `Rw[parent]^T * Rw[joint]`.
pub fn relative_rotations(world: &[Matrix3<f64>], parents: &[i64]) -> Vec<Matrix3<f64>> {
    let mut out = Vec::with_capacity(world.len());
    for (k, r) in world.iter().enumerate() {
        if k == 0 {
            out.push(*r);
        } else {
            out.push(world[parents[k] as usize].transpose() * r);
        }
    }
    out
}
