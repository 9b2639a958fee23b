//! Skinned parametric body model: template mesh, linear shape basis, blend
//! weights, joint regressor, and the kinematic tree, plus the forward pass
//! (shape -> rest mesh -> joints -> posed surface via linear blend skinning).
//!
//! Model files are JSON with flat row-major arrays; the loader checks entry
//! counts before structural invariants so error messages name the first field
//! that is actually wrong.

use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::{rotation_from_scaled_axis, scaled_axis_from_rotation};

/// Tolerance for "rows/columns sum to one" checks on weights and regressors.
const PARTITION_TOL: f64 = 1e-6;

/// Skinned body model with a linear shape space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricModel {
    pub name: String,
    /// Rest vertices at zero shape, meters. Length `num_vertices`.
    pub template: Vec<Vector3<f64>>,
    /// Per-coefficient vertex offset fields; `shape_basis[c][i]` displaces
    /// vertex `i` by one unit of coefficient `c`. Length `num_shapes`.
    pub shape_basis: Vec<Vec<Vector3<f64>>>,
    /// Blend weights, `num_joints x num_vertices`; column `i` is vertex `i`'s
    /// weight over joints and sums to one.
    pub blend_weights: DMatrix<f64>,
    /// Joint regressor, `num_joints x num_vertices`; row `k` is an affine
    /// combination of vertices producing rest joint `k`.
    pub joint_regressor: DMatrix<f64>,
    /// Kinematic tree: `parents[0] == -1` (root), `parents[k] < k` otherwise.
    pub parents: Vec<i64>,
    /// Optional triangles, for downstream visualization only.
    pub faces: Option<Vec<[usize; 3]>>,
}

/// Vertex-to-segment assignment derived from blend weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    /// Owning joint per vertex (the argmax blend weight).
    pub segment_of: Vec<usize>,
    /// Vertex indices per joint, ascending.
    pub members: Vec<Vec<usize>>,
}

/// Pose: one rotation per joint, relative to the parent joint's frame
/// (the root's rotation is its world orientation), plus a root translation.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseState {
    pub rotations: Vec<Matrix3<f64>>,
    pub root_translation: Vector3<f64>,
}

impl PoseState {
    /// Identity pose for `num_joints` joints at the origin.
    pub fn identity(num_joints: usize) -> Self {
        PoseState {
            rotations: vec![Matrix3::identity(); num_joints],
            root_translation: Vector3::zeros(),
        }
    }

    /// Build from per-joint axis-angle vectors (serialization form).
    pub fn from_axis_angles(axis_angles: &[Vector3<f64>], root_translation: Vector3<f64>) -> Self {
        PoseState {
            rotations: axis_angles
                .iter()
                .map(|v| rotation_from_scaled_axis(*v))
                .collect(),
            root_translation,
        }
    }

    /// Per-joint axis-angle vectors (serialization form).
    pub fn axis_angles(&self) -> Vec<Vector3<f64>> {
        self.rotations
            .iter()
            .map(scaled_axis_from_rotation)
            .collect()
    }
}

/// Output of the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedBody {
    pub vertices: Vec<Vector3<f64>>,
    pub world_rotations: Vec<Matrix3<f64>>,
    pub world_joints: Vec<Vector3<f64>>,
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    name: String,
    num_vertices: usize,
    num_joints: usize,
    num_shapes: usize,
    /// Flat row-major `num_vertices x 3`.
    template: Vec<f64>,
    /// Flat row-major `num_shapes x num_vertices x 3`.
    shape_basis: Vec<f64>,
    /// Flat row-major `num_joints x num_vertices`.
    blend_weights: Vec<f64>,
    /// Flat row-major `num_joints x num_vertices`.
    joint_regressor: Vec<f64>,
    parents: Vec<i64>,
    /// Flat triangle index list, length divisible by 3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    faces: Option<Vec<usize>>,
}

fn check_count(field: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            field: field.into(),
            expected,
            got,
        });
    }
    Ok(())
}

fn vec3s_from_flat(flat: &[f64]) -> Vec<Vector3<f64>> {
    flat.chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect()
}

fn flat_from_vec3s(v: &[Vector3<f64>]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

impl ParametricModel {
    pub fn num_vertices(&self) -> usize {
        self.template.len()
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn num_shapes(&self) -> usize {
        self.shape_basis.len()
    }

    /// Parent joint of a validated non-root joint.
    pub fn parent_of(&self, joint: usize) -> usize {
        debug_assert!(joint > 0);
        self.parents[joint] as usize
    }

    /// Check structural invariants. Returns non-fatal warnings (e.g. segments
    /// too small for rigid alignment); hard violations are errors naming the
    /// offending field and index.
    pub fn validate(&self) -> Result<Vec<String>> {
        let n = self.num_vertices();
        let k = self.num_joints();
        if n == 0 {
            return Err(Error::Dimension {
                field: "template".into(),
                expected: 1,
                got: 0,
            });
        }
        if k == 0 {
            return Err(Error::Dimension {
                field: "parents".into(),
                expected: 1,
                got: 0,
            });
        }
        for (c, field) in self.shape_basis.iter().enumerate() {
            check_count(&format!("shape_basis[{c}]"), n, field.len())?;
        }
        check_count("blend_weights", k * n, self.blend_weights.len())?;
        check_count("joint_regressor", k * n, self.joint_regressor.len())?;

        for (i, p) in self.template.iter().enumerate() {
            if !p.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidValue {
                    field: "template".into(),
                    index: i,
                    detail: "non-finite coordinate".into(),
                });
            }
        }
        for (c, field) in self.shape_basis.iter().enumerate() {
            for (i, p) in field.iter().enumerate() {
                if !p.iter().all(|x| x.is_finite()) {
                    return Err(Error::InvalidValue {
                        field: format!("shape_basis[{c}]"),
                        index: i,
                        detail: "non-finite coordinate".into(),
                    });
                }
            }
        }

        if self.parents[0] != -1 {
            return Err(Error::InvalidValue {
                field: "parents".into(),
                index: 0,
                detail: format!("root parent must be -1, got {}", self.parents[0]),
            });
        }
        for (j, &p) in self.parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= j {
                return Err(Error::InvalidValue {
                    field: "parents".into(),
                    index: j,
                    detail: format!("parent must satisfy 0 <= parent < {j}, got {p}"),
                });
            }
        }

        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..k {
                let w = self.blend_weights[(j, i)];
                if !w.is_finite() || w < -1e-12 {
                    return Err(Error::InvalidValue {
                        field: "blend_weights".into(),
                        index: j * n + i,
                        detail: format!("weight must be finite and nonnegative, got {w}"),
                    });
                }
                sum += w;
            }
            if (sum - 1.0).abs() > PARTITION_TOL {
                return Err(Error::InvalidValue {
                    field: "blend_weights".into(),
                    index: i,
                    detail: format!("vertex weights must sum to 1, got {sum}"),
                });
            }
        }

        for j in 0..k {
            let mut sum = 0.0;
            for i in 0..n {
                let w = self.joint_regressor[(j, i)];
                if !w.is_finite() {
                    return Err(Error::InvalidValue {
                        field: "joint_regressor".into(),
                        index: j * n + i,
                        detail: "non-finite entry".into(),
                    });
                }
                sum += w;
            }
            if (sum - 1.0).abs() > PARTITION_TOL {
                return Err(Error::InvalidValue {
                    field: "joint_regressor".into(),
                    index: j,
                    detail: format!("regressor row must sum to 1, got {sum}"),
                });
            }
        }

        if let Some(faces) = &self.faces {
            for (t, tri) in faces.iter().enumerate() {
                if tri.iter().any(|&v| v >= n) {
                    return Err(Error::InvalidValue {
                        field: "faces".into(),
                        index: t,
                        detail: format!("vertex index out of range (num_vertices = {n})"),
                    });
                }
            }
        }

        let mut warnings = Vec::new();
        let segments = assign_segments(self);
        for (j, members) in segments.members.iter().enumerate() {
            if members.len() < 3 {
                warnings.push(format!(
                    "segment {j} has only {} vertices; rigid alignment will fail on it",
                    members.len()
                ));
            }
        }
        Ok(warnings)
    }
}

/// Load a model from JSON, validating counts and invariants.
pub fn load_model(path: &Path) -> Result<ParametricModel> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        detail: e.to_string(),
    })?;

    let (n, k, s) = (file.num_vertices, file.num_joints, file.num_shapes);
    check_count("template", n * 3, file.template.len())?;
    check_count("shape_basis", s * n * 3, file.shape_basis.len())?;
    check_count("blend_weights", k * n, file.blend_weights.len())?;
    check_count("joint_regressor", k * n, file.joint_regressor.len())?;
    check_count("parents", k, file.parents.len())?;
    if let Some(faces) = &file.faces {
        if faces.len() % 3 != 0 {
            return Err(Error::Dimension {
                field: "faces".into(),
                expected: faces.len() / 3 * 3,
                got: faces.len(),
            });
        }
    }

    let model = ParametricModel {
        name: file.name,
        template: vec3s_from_flat(&file.template),
        shape_basis: file
            .shape_basis
            .chunks_exact(n * 3)
            .map(vec3s_from_flat)
            .collect(),
        blend_weights: DMatrix::from_row_slice(k, n, &file.blend_weights),
        joint_regressor: DMatrix::from_row_slice(k, n, &file.joint_regressor),
        parents: file.parents,
        faces: file.faces.map(|f| {
            f.chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect::<Vec<_>>()
        }),
    };
    model.validate()?;
    Ok(model)
}

/// Write a model as JSON (inverse of [`load_model`]).
pub fn save_model(path: &Path, model: &ParametricModel) -> Result<()> {
    let n = model.num_vertices();
    let k = model.num_joints();
    let file = ModelFile {
        name: model.name.clone(),
        num_vertices: n,
        num_joints: k,
        num_shapes: model.num_shapes(),
        template: flat_from_vec3s(&model.template),
        shape_basis: model
            .shape_basis
            .iter()
            .flat_map(|f| flat_from_vec3s(f))
            .collect(),
        blend_weights: (0..k)
            .flat_map(|j| (0..n).map(move |i| (j, i)))
            .map(|(j, i)| model.blend_weights[(j, i)])
            .collect(),
        joint_regressor: (0..k)
            .flat_map(|j| (0..n).map(move |i| (j, i)))
            .map(|(j, i)| model.joint_regressor[(j, i)])
            .collect(),
        parents: model.parents.clone(),
        faces: model
            .faces
            .as_ref()
            .map(|f| f.iter().flatten().copied().collect()),
    };
    let text = serde_json::to_string(&file).expect("model serialization cannot fail");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

/// Assign each vertex to the joint with the largest blend weight; ties break
/// toward the lower joint index.
pub fn assign_segments(model: &ParametricModel) -> SegmentMap {
    let n = model.num_vertices();
    let k = model.num_joints();
    let mut segment_of = Vec::with_capacity(n);
    let mut members = vec![Vec::new(); k];
    for i in 0..n {
        let mut best = 0usize;
        for j in 1..k {
            if model.blend_weights[(j, i)] > model.blend_weights[(best, i)] {
                best = j;
            }
        }
        segment_of.push(best);
        members[best].push(i);
    }
    SegmentMap {
        segment_of,
        members,
    }
}

/// Rest mesh under shape coefficients: `template + sum_c shape[c] * basis[c]`.
pub fn rest_mesh(model: &ParametricModel, shape: &[f64]) -> Result<Vec<Vector3<f64>>> {
    if shape.len() != model.num_shapes() {
        return Err(Error::Dimension {
            field: "shape".into(),
            expected: model.num_shapes(),
            got: shape.len(),
        });
    }
    let mut out = model.template.clone();
    for (coeff, field) in shape.iter().zip(&model.shape_basis) {
        for (v, offset) in out.iter_mut().zip(field) {
            *v += *coeff * offset;
        }
    }
    Ok(out)
}

/// Joint locations as regressor-weighted vertex combinations. Accepts any
/// regressor with matching vertex count, so alternate evaluation joint sets
/// reuse the same path.
pub fn regress_joints(
    regressor: &DMatrix<f64>,
    vertices: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    if regressor.ncols() != vertices.len() {
        return Err(Error::Dimension {
            field: "regressor columns".into(),
            expected: vertices.len(),
            got: regressor.ncols(),
        });
    }
    let mut joints = vec![Vector3::zeros(); regressor.nrows()];
    for (k, joint) in joints.iter_mut().enumerate() {
        for (i, v) in vertices.iter().enumerate() {
            *joint += regressor[(k, i)] * v;
        }
    }
    Ok(joints)
}

/// Forward pass: rest mesh from shape, rest joints from the regressor, world
/// joint frames down the tree, then linear blend skinning.
///
/// World rotations chain as `Rw[k] = Rw[parent] * R[k]`; world joints as
/// `jw[k] = jw[parent] + Rw[parent] * (j[k] - j[parent])` with
/// `jw[0] = j[0] + root_translation`. A vertex lands at
/// `sum_k w[k][i] * (Rw[k] * (x[i] - j[k]) + jw[k])`.
pub fn forward_kinematics(
    model: &ParametricModel,
    pose: &PoseState,
    shape: &[f64],
) -> Result<PosedBody> {
    let k = model.num_joints();
    if pose.rotations.len() != k {
        return Err(Error::Dimension {
            field: "pose.rotations".into(),
            expected: k,
            got: pose.rotations.len(),
        });
    }
    let rest = rest_mesh(model, shape)?;
    let rest_joints = regress_joints(&model.joint_regressor, &rest)?;

    let mut world_rotations = Vec::with_capacity(k);
    let mut world_joints = Vec::with_capacity(k);
    world_rotations.push(pose.rotations[0]);
    world_joints.push(rest_joints[0] + pose.root_translation);
    for j in 1..k {
        let p = model.parent_of(j);
        world_rotations.push(world_rotations[p] * pose.rotations[j]);
        world_joints.push(world_joints[p] + world_rotations[p] * (rest_joints[j] - rest_joints[p]));
    }

    let n = model.num_vertices();
    let mut vertices = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = Vector3::zeros();
        for j in 0..k {
            let w = model.blend_weights[(j, i)];
            if w != 0.0 {
                v += w * (world_rotations[j] * (rest[i] - rest_joints[j]) + world_joints[j]);
            }
        }
        vertices.push(v);
    }
    Ok(PosedBody {
        vertices,
        world_rotations,
        world_joints,
    })
}

/// Homogeneous-transform formulation of the same forward pass, kept as an
/// independent cross-check: per-joint local 4x4s chained down the tree, rest
/// positions removed with an inverse-bind translation, vertices blended in
/// matrix form.
#[doc(hidden)]
pub fn forward_kinematics_homogeneous(
    model: &ParametricModel,
    pose: &PoseState,
    shape: &[f64],
) -> Result<Vec<Vector3<f64>>> {
    let k = model.num_joints();
    if pose.rotations.len() != k {
        return Err(Error::Dimension {
            field: "pose.rotations".into(),
            expected: k,
            got: pose.rotations.len(),
        });
    }
    let rest = rest_mesh(model, shape)?;
    let rest_joints = regress_joints(&model.joint_regressor, &rest)?;

    let homog = |r: &Matrix3<f64>, t: Vector3<f64>| -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        m
    };

    let mut global = Vec::with_capacity(k);
    global.push(homog(
        &pose.rotations[0],
        rest_joints[0] + pose.root_translation,
    ));
    for j in 1..k {
        let p = model.parent_of(j);
        let local = homog(&pose.rotations[j], rest_joints[j] - rest_joints[p]);
        global.push(global[p] * local);
    }
    let skinning: Vec<Matrix4<f64>> = (0..k)
        .map(|j| global[j] * homog(&Matrix3::identity(), -rest_joints[j]))
        .collect();

    let mut out = Vec::with_capacity(model.num_vertices());
    for (i, x) in rest.iter().enumerate() {
        let xh = Vector4::new(x.x, x.y, x.z, 1.0);
        let mut blended = Matrix4::zeros();
        for j in 0..k {
            blended += model.blend_weights[(j, i)] * skinning[j];
        }
        let v = blended * xh;
        out.push(Vector3::new(v.x, v.y, v.z));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    /// Tiny hand-built chain model: 3 joints along +y, 4 vertices per joint
    /// in a tetrahedral cluster, optional weight bleed to the parent joint.
    fn chain_model(bleed: f64) -> ParametricModel {
        let k = 3;
        let joint_y = [0.0, 0.3, 0.6];
        let cluster = [
            Vector3::new(0.05, 0.05, 0.0),
            Vector3::new(-0.05, 0.1, 0.0),
            Vector3::new(0.0, 0.15, 0.05),
            Vector3::new(0.0, 0.2, -0.05),
        ];
        let mut template = Vec::new();
        for y in joint_y {
            for c in cluster {
                template.push(Vector3::new(c.x, y + c.y, c.z));
            }
        }
        let n = template.len();
        let mut blend = DMatrix::zeros(k, n);
        for j in 0..k {
            for i in 0..4 {
                let col = j * 4 + i;
                if j > 0 && bleed > 0.0 {
                    blend[(j, col)] = 1.0 - bleed;
                    blend[(j - 1, col)] = bleed;
                } else {
                    blend[(j, col)] = 1.0;
                }
            }
        }
        let mut regressor = DMatrix::zeros(k, n);
        for j in 0..k {
            for i in 0..4 {
                regressor[(j, j * 4 + i)] = 0.25;
            }
        }
        let basis: Vec<Vec<Vector3<f64>>> = (0..2)
            .map(|c| {
                (0..n)
                    .map(|i| Vector3::new(0.0, 0.01 * (c + 1) as f64 * (i % 3) as f64, 0.005))
                    .collect()
            })
            .collect();
        ParametricModel {
            name: "chain".into(),
            template,
            shape_basis: basis,
            blend_weights: blend,
            joint_regressor: regressor,
            parents: vec![-1, 0, 1],
            faces: Some(vec![[0, 1, 2], [1, 2, 3]]),
        }
    }

    fn random_pose(model: &ParametricModel, stream: &mut Stream, max_angle: f64) -> PoseState {
        let rotations = (0..model.num_joints())
            .map(|_| {
                let axis = Vector3::from(stream.unit_vector());
                rotation_from_scaled_axis(axis * stream.uniform(-max_angle, max_angle))
            })
            .collect();
        PoseState {
            rotations,
            root_translation: Vector3::new(
                stream.uniform(-0.5, 0.5),
                stream.uniform(-0.5, 0.5),
                stream.uniform(2.0, 8.0),
            ),
        }
    }

    #[test]
    fn validates_clean_model_without_warnings() {
        let model = chain_model(0.2);
        let warnings = model.validate().unwrap();
        assert!(warnings.is_empty(), "unexpected warnings: {warnings:?}");
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let model = chain_model(0.3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn loader_names_field_on_count_mismatch() {
        let model = chain_model(0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &model).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        value["template"].as_array_mut().unwrap().pop();
        std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        let err = load_model(&path).unwrap_err();
        match err {
            Error::Dimension { field, expected, got } => {
                assert_eq!(field, "template");
                assert_eq!(expected, 36);
                assert_eq!(got, 35);
            }
            other => panic!("expected Dimension error, got {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_bad_weights_and_parents() {
        let mut model = chain_model(0.0);
        model.blend_weights[(0, 0)] = 0.5; // breaks the partition of unity
        match model.validate().unwrap_err() {
            Error::InvalidValue { field, index, .. } => {
                assert_eq!(field, "blend_weights");
                assert_eq!(index, 0);
            }
            other => panic!("expected InvalidValue, got {other:?}"),
        }

        let mut model = chain_model(0.0);
        model.blend_weights[(0, 2)] = -0.4;
        assert!(matches!(
            model.validate().unwrap_err(),
            Error::InvalidValue { .. }
        ));

        let mut model = chain_model(0.0);
        model.parents = vec![-1, 2, 1]; // parent index not below joint index
        match model.validate().unwrap_err() {
            Error::InvalidValue { field, index, .. } => {
                assert_eq!(field, "parents");
                assert_eq!(index, 1);
            }
            other => panic!("expected InvalidValue, got {other:?}"),
        }
    }

    #[test]
    fn undersized_segments_only_warn() {
        let mut model = chain_model(0.0);
        // Reassign all but two of segment 2's vertices to segment 1.
        for i in 0..2 {
            let col = 2 * 4 + i;
            model.blend_weights[(2, col)] = 0.0;
            model.blend_weights[(1, col)] = 1.0;
        }
        let warnings = model.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("segment 2"));
    }

    #[test]
    fn segment_assignment_follows_argmax_with_low_index_ties() {
        let model = chain_model(0.2);
        let segments = assign_segments(&model);
        assert_eq!(segments.segment_of, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);

        // Exact tie between joints 0 and 1 must resolve to joint 0.
        let mut tied = chain_model(0.0);
        tied.blend_weights[(0, 5)] = 0.5;
        tied.blend_weights[(1, 5)] = 0.5;
        let segments = assign_segments(&tied);
        assert_eq!(segments.segment_of[5], 0);
        assert!(segments.members[0].contains(&5));
    }

    #[test]
    fn rest_mesh_matches_flat_summation_oracle() {
        let model = chain_model(0.1);
        let shape = [0.7, -1.3];
        let mesh = rest_mesh(&model, &shape).unwrap();

        // Oracle: plain per-coordinate accumulation over flat arrays.
        for (i, v) in mesh.iter().enumerate() {
            for axis in 0..3 {
                let mut expect = model.template[i][axis];
                for (c, coeff) in shape.iter().enumerate() {
                    expect += coeff * model.shape_basis[c][i][axis];
                }
                assert!((v[axis] - expect).abs() < 1e-15);
            }
        }

        assert!(matches!(
            rest_mesh(&model, &[0.0]).unwrap_err(),
            Error::Dimension { .. }
        ));
    }

    #[test]
    fn regress_joints_matches_matrix_product_oracle() {
        let model = chain_model(0.1);
        let mesh = rest_mesh(&model, &[0.5, 0.25]).unwrap();
        let joints = regress_joints(&model.joint_regressor, &mesh).unwrap();

        let stacked = DMatrix::from_fn(mesh.len(), 3, |i, c| mesh[i][c]);
        let product = &model.joint_regressor * stacked;
        for (k, j) in joints.iter().enumerate() {
            for c in 0..3 {
                assert!((j[c] - product[(k, c)]).abs() < 1e-14);
            }
        }

        let wide = DMatrix::zeros(2, mesh.len() + 1);
        assert!(matches!(
            regress_joints(&wide, &mesh).unwrap_err(),
            Error::Dimension { .. }
        ));
    }

    #[test]
    fn forward_kinematics_matches_homogeneous_oracle() {
        let model = chain_model(0.25);
        let mut stream = Stream::new(2024);
        for trial in 0..50 {
            let pose = random_pose(&model, &mut stream, 1.2);
            let shape = [stream.uniform(-2.0, 2.0), stream.uniform(-2.0, 2.0)];
            let body = forward_kinematics(&model, &pose, &shape).unwrap();
            let oracle = forward_kinematics_homogeneous(&model, &pose, &shape).unwrap();
            for (v, o) in body.vertices.iter().zip(&oracle) {
                assert!((v - o).norm() < 1e-12, "trial {trial}: {v:?} vs {o:?}");
            }
        }
    }

    #[test]
    fn identity_pose_translates_rest_mesh_rigidly() {
        let model = chain_model(0.3);
        let t = Vector3::new(0.2, -0.1, 7.0);
        let pose = PoseState {
            rotations: vec![Matrix3::identity(); 3],
            root_translation: t,
        };
        let body = forward_kinematics(&model, &pose, &[0.0, 0.0]).unwrap();
        for (v, x) in body.vertices.iter().zip(&model.template) {
            assert!((v - (x + t)).norm() < 1e-13);
        }
    }

    #[test]
    fn shape_response_is_affine_under_binary_weights() {
        let model = chain_model(0.0);
        let mut stream = Stream::new(77);
        let pose = random_pose(&model, &mut stream, 0.9);
        let fk = |shape: &[f64]| forward_kinematics(&model, &pose, shape).unwrap().vertices;
        let (a, b) = ([0.8, -0.4], [-1.1, 0.6]);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (va, vb, v0, vsum) = (fk(&a), fk(&b), fk(&[0.0, 0.0]), fk(&sum));
        for i in 0..va.len() {
            let superposed = va[i] + vb[i] - v0[i];
            assert!((superposed - vsum[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn global_rotation_spins_body_about_root_joint() {
        let model = chain_model(0.2);
        let mut stream = Stream::new(31);
        let pose = random_pose(&model, &mut stream, 0.8);
        let shape = [0.3, -0.2];
        let base = forward_kinematics(&model, &pose, &shape).unwrap();

        let g = rotation_from_scaled_axis(Vector3::new(0.4, 0.9, -0.3));
        let mut spun_pose = pose.clone();
        spun_pose.rotations[0] = g * pose.rotations[0];
        let spun = forward_kinematics(&model, &spun_pose, &shape).unwrap();

        let pivot = base.world_joints[0];
        assert!((spun.world_joints[0] - pivot).norm() < 1e-13);
        for (v, v0) in spun.vertices.iter().zip(&base.vertices) {
            let expect = g * (v0 - pivot) + pivot;
            assert!((v - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_kinematics_checks_input_lengths() {
        let model = chain_model(0.0);
        let bad_pose = PoseState::identity(2);
        assert!(matches!(
            forward_kinematics(&model, &bad_pose, &[0.0, 0.0]).unwrap_err(),
            Error::Dimension { .. }
        ));
        let pose = PoseState::identity(3);
        assert!(matches!(
            forward_kinematics(&model, &pose, &[0.0]).unwrap_err(),
            Error::Dimension { .. }
        ));
    }

    #[test]
    fn pose_state_round_trips_axis_angles() {
        let mut stream = Stream::new(8);
        let model = chain_model(0.0);
        let pose = random_pose(&model, &mut stream, 2.0);
        let back = PoseState::from_axis_angles(&pose.axis_angles(), pose.root_translation);
        for (a, b) in pose.rotations.iter().zip(&back.rotations) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
