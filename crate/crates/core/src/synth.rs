//! Deterministic synthetic models and ground-truth scenarios.
//!
//! Everything here is a pure function of its spec structs and their seeds
//! (see [`crate::rng`]), so benchmarks regenerate bit-identically. The
//! generated bodies are deliberately body-like — a spine, two legs, and two
//! arms once there are enough joints, vertex rings spiralling around each
//! bone, distance-falloff blend weights — without pretending to be any
//! particular mesh asset.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{project, CameraIntrinsics, CropBox};
use crate::error::{Error, Result};
use crate::model::{forward_kinematics, ParametricModel, PoseState};
use crate::rng::Stream;
use crate::rotation::rotation_from_scaled_axis;
use crate::solver::Observation;

/// Recipe for a procedural model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub num_joints: usize,
    pub verts_per_segment: usize,
    pub num_shapes: usize,
    /// Bone lengths are drawn uniformly from this range, meters.
    pub bone_length_range: (f64, f64),
    /// 0 gives hard one-vertex-one-joint skinning; positive values bleed
    /// weight into the parent and children while keeping the owner dominant.
    pub weight_smoothness: f64,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        // Roughly human-sized: five chains of ~0.17 m bones stack to a
        // ~1.7 m figure at 24 joints.
        ModelSpec {
            num_joints: 24,
            verts_per_segment: 32,
            num_shapes: 10,
            bone_length_range: (0.10, 0.24),
            weight_smoothness: 0.2,
            seed: 7,
        }
    }
}

fn jitter(stream: &mut Stream, scale: f64) -> Vector3<f64> {
    Vector3::new(
        stream.uniform(-scale, scale),
        stream.uniform(-scale, scale),
        stream.uniform(-scale, scale),
    )
}

/// Build a model from a spec. Same spec, same model, bit for bit.
pub fn generate_model(spec: &ModelSpec) -> Result<ParametricModel> {
    if spec.num_joints < 1 {
        return Err(Error::InvalidValue {
            field: "num_joints".into(),
            index: 0,
            detail: "at least one joint required".into(),
        });
    }
    if spec.verts_per_segment < 3 {
        return Err(Error::InvalidValue {
            field: "verts_per_segment".into(),
            index: 0,
            detail: "at least three vertices per segment required".into(),
        });
    }
    let (lo, hi) = spec.bone_length_range;
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
        return Err(Error::InvalidValue {
            field: "bone_length_range".into(),
            index: 0,
            detail: "need 0 < lo <= hi".into(),
        });
    }
    if !(0.0..=1.0).contains(&spec.weight_smoothness) {
        return Err(Error::InvalidValue {
            field: "weight_smoothness".into(),
            index: 0,
            detail: "must lie in [0, 1]".into(),
        });
    }

    let k = spec.num_joints;
    let root = Stream::new(spec.seed);

    // --- skeleton -----------------------------------------------------
    let mut skel = root.substream(1);
    let mut parents = vec![-1i64; k];
    let mut positions = vec![Vector3::zeros(); k];
    let mut chain_dir = vec![Vector3::new(0.0, 1.0, 0.0); k];
    if k >= 5 {
        // Five chains off the root: spine up, two legs down, two arms off
        // the spine's last joint. Blocks are contiguous so every parent
        // index precedes its children.
        let rest = k - 1;
        let base = rest / 5;
        let extra = rest % 5;
        let lens = [
            base + usize::from(extra > 0),
            base + usize::from(extra > 1),
            base + usize::from(extra > 2),
            base + usize::from(extra > 3),
            base,
        ];
        let dirs = [
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.28, -1.0, 0.0),
            Vector3::new(-0.28, -1.0, 0.0),
            Vector3::new(1.0, -0.12, 0.0),
            Vector3::new(-1.0, -0.12, 0.0),
        ];
        let mut start = 1;
        let mut spine_end = 0usize;
        for (c, &len) in lens.iter().enumerate() {
            for step in 0..len {
                let j = start + step;
                parents[j] = if step > 0 {
                    (j - 1) as i64
                } else if c < 3 {
                    0
                } else {
                    spine_end as i64
                };
                chain_dir[j] = dirs[c];
            }
            if c == 0 && len > 0 {
                spine_end = start + len - 1;
            }
            start += len;
        }
    } else {
        for j in 1..k {
            parents[j] = (j - 1) as i64;
        }
    }
    for j in 1..k {
        let len = skel.uniform(lo, hi);
        let dir = (chain_dir[j] + jitter(&mut skel, 0.15)).normalize();
        positions[j] = positions[parents[j] as usize] + dir * len;
    }
    let first_child: Vec<Option<usize>> = (0..k)
        .map(|j| (j + 1..k).find(|&c| parents[c] == j as i64))
        .collect();
    let children: Vec<Vec<usize>> = (0..k)
        .map(|j| (j + 1..k).filter(|&c| parents[c] == j as i64).collect())
        .collect();

    // --- vertices: a spiral of rings along each bone --------------------
    let mut vstream = root.substream(2);
    let vps = spec.verts_per_segment;
    let n = k * vps;
    let mut template = Vec::with_capacity(n);
    let mut ring_t = Vec::with_capacity(n);
    for seg in 0..k {
        let (axis, len) = match (first_child[seg], parents[seg]) {
            (Some(child), _) => {
                let v = positions[child] - positions[seg];
                (v.normalize(), v.norm())
            }
            (None, p) if p >= 0 => {
                // Leaf segments extend outward past their joint.
                let v = positions[seg] - positions[p as usize];
                (v.normalize(), 0.7 * v.norm())
            }
            _ => (Vector3::new(0.0, 1.0, 0.0), 0.5 * (lo + hi)),
        };
        let reference = if axis.x.abs() < 0.9 {
            Vector3::new(1.0, 0.0, 0.0)
        } else {
            Vector3::new(0.0, 1.0, 0.0)
        };
        let e1 = axis.cross(&reference).normalize();
        let e2 = axis.cross(&e1);
        let radius = 0.055 * vstream.uniform(0.8, 1.2);
        let phase = vstream.uniform(0.0, std::f64::consts::TAU);
        for i in 0..vps {
            let t = (i as f64 + 0.5) / vps as f64;
            let theta = phase + 2.0 * std::f64::consts::TAU * t;
            let r = radius * (1.0 + 0.15 * (3.0 * theta).sin());
            template.push(
                positions[seg]
                    + axis * (t * len)
                    + e1 * (r * theta.cos())
                    + e2 * (r * theta.sin())
                    + jitter(&mut vstream, 0.004),
            );
            ring_t.push(t);
        }
    }

    // --- blend weights ---------------------------------------------------
    // Owner always dominates; smoothing bleeds into the parent near the
    // joint (small ring parameter) and into children near the bone tip.
    let s = spec.weight_smoothness;
    let mut blend = DMatrix::zeros(k, n);
    for seg in 0..k {
        for i in 0..vps {
            let idx = seg * vps + i;
            let t = ring_t[idx];
            let mut raw = vec![(seg, 1.0)];
            if parents[seg] >= 0 {
                raw.push((parents[seg] as usize, 0.6 * (1.0 - t)));
            }
            if !children[seg].is_empty() {
                let share = 0.6 * t / children[seg].len() as f64;
                for &c in &children[seg] {
                    raw.push((c, share));
                }
            }
            let total: f64 = raw.iter().map(|(_, w)| w).sum();
            blend[(seg, idx)] += 1.0 - s;
            for (j, w) in raw {
                blend[(j, idx)] += s * w / total;
            }
        }
    }

    // --- joint regressor: average of the nearest template vertices -------
    let mut regressor = DMatrix::zeros(k, n);
    let picks = 8.min(n);
    for joint in 0..k {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let da = (template[a] - positions[joint]).norm_squared();
            let db = (template[b] - positions[joint]).norm_squared();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        });
        for &i in order.iter().take(picks) {
            regressor[(joint, i)] = 1.0 / picks as f64;
        }
    }

    // --- shape basis: smooth sinusoid fields, orthogonalized -------------
    // Each direction is a low-frequency displacement field over the body;
    // smoothness matters because coarse deformations are what body shape
    // spaces actually span. After orthonormalizing across the flattened
    // 3N-vectors, each field is scaled to 0.01 m rms per-vertex displacement
    // per unit coefficient.
    let mut bstream = root.substream(3);
    let mut unit_fields: Vec<DVector<f64>> = Vec::with_capacity(spec.num_shapes);
    let mut shape_basis = Vec::with_capacity(spec.num_shapes);
    for c in 0..spec.num_shapes {
        let mut field = DVector::zeros(3 * n);
        let mut attempts = 0;
        loop {
            for comp in 0..3 {
                let amp = bstream.uniform(0.5, 1.0);
                let dir = Vector3::from(bstream.unit_vector());
                let freq = bstream.uniform(1.5, 4.5);
                let phase = bstream.uniform(0.0, std::f64::consts::TAU);
                for (i, v) in template.iter().enumerate() {
                    field[3 * i + comp] = amp * (freq * v.dot(&dir) + phase).sin();
                }
            }
            let original = field.norm();
            for prev in &unit_fields {
                let overlap = field.dot(prev);
                field -= prev * overlap;
            }
            if field.norm() > 1e-6 * original {
                break;
            }
            attempts += 1;
            if attempts >= 32 {
                return Err(Error::InvalidValue {
                    field: "num_shapes".into(),
                    index: c,
                    detail: "could not draw an independent shape direction".into(),
                });
            }
        }
        let unit = field.normalize();
        let scale = 0.01 * (n as f64).sqrt();
        shape_basis.push(
            (0..n)
                .map(|i| Vector3::new(unit[3 * i], unit[3 * i + 1], unit[3 * i + 2]) * scale)
                .collect::<Vec<_>>(),
        );
        unit_fields.push(unit);
    }

    Ok(ParametricModel {
        name: format!("synthetic-k{}-v{}-s{}", k, vps, spec.num_shapes),
        template,
        shape_basis,
        blend_weights: blend,
        joint_regressor: regressor,
        parents,
        faces: None,
    })
}

/// Recipe for one ground-truth scenario (per-scenario seeds derive from
/// `seed` by scenario index).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Per-joint rotation angles are uniform in `±pose_angle_range` radians.
    pub pose_angle_range: f64,
    /// Shape coefficients are uniform in `±shape_coeff_range`.
    pub shape_coeff_range: f64,
    /// Root depth uniform in this range, meters.
    pub root_depth_range: (f64, f64),
    /// Root x/y offset uniform in `±lateral_range`, meters.
    pub lateral_range: f64,
    /// Uniform 3D perturbation of each vertex before projection: random
    /// direction, magnitude uniform in `[0, noise_3d_mm]` millimeters.
    pub noise_3d_mm: f64,
    /// Gaussian pixel noise added to each projected coordinate.
    pub noise_px: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            pose_angle_range: 0.45,
            shape_coeff_range: 1.5,
            root_depth_range: (6.6, 7.4),
            lateral_range: 0.1,
            noise_3d_mm: 0.0,
            noise_px: 0.0,
            seed: 42,
        }
    }
}

/// Ground truth carried alongside an observation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub pose: PoseState,
    pub shape: Vec<f64>,
}

/// One fit problem: what the solver sees, plus the truth it came from.
/// `camera` is the camera handed to fitting — focal sweeps deliberately make
/// it disagree with the camera that generated the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub observation: Observation,
    pub camera: CameraIntrinsics,
    pub crop: Option<CropBox>,
    pub ground_truth: Option<GroundTruth>,
}

fn validate_scenario_spec(spec: &ScenarioSpec) -> Result<()> {
    let ordered = spec.root_depth_range.0 <= spec.root_depth_range.1;
    let finite = spec.pose_angle_range.is_finite()
        && spec.shape_coeff_range.is_finite()
        && spec.root_depth_range.0.is_finite()
        && spec.root_depth_range.1.is_finite()
        && spec.lateral_range.is_finite()
        && spec.noise_3d_mm.is_finite()
        && spec.noise_px.is_finite();
    let nonneg = spec.pose_angle_range >= 0.0
        && spec.shape_coeff_range >= 0.0
        && spec.lateral_range >= 0.0
        && spec.noise_3d_mm >= 0.0
        && spec.noise_px >= 0.0;
    if !(ordered && finite && nonneg) {
        return Err(Error::InvalidValue {
            field: "scenario spec".into(),
            index: 0,
            detail: "ranges must be finite, well-ordered, and noise nonnegative".into(),
        });
    }
    Ok(())
}

/// Sample scenario number `index` for a spec: pose, shape, and translation
/// from seeded streams; observation = project(FK(truth)) with 3D noise
/// injected before projection and pixel noise after, each independently
/// seeded. Bodies that land behind the camera are resampled a bounded number
/// of times.
pub fn sample_scenario(
    model: &ParametricModel,
    cam: &CameraIntrinsics,
    spec: &ScenarioSpec,
    index: u64,
) -> Result<Scenario> {
    validate_scenario_spec(spec)?;
    let scenario_stream = Stream::new(spec.seed).substream(index);
    for attempt in 0..16 {
        let base = scenario_stream.substream(attempt);
        let mut pose_stream = base.substream(1);
        let mut shape_stream = base.substream(2);
        let mut trans_stream = base.substream(3);

        let rotations = (0..model.num_joints())
            .map(|_| {
                let axis = Vector3::from(pose_stream.unit_vector());
                let angle =
                    pose_stream.uniform(-spec.pose_angle_range, spec.pose_angle_range);
                rotation_from_scaled_axis(axis * angle)
            })
            .collect();
        let shape: Vec<f64> = (0..model.num_shapes())
            .map(|_| shape_stream.uniform(-spec.shape_coeff_range, spec.shape_coeff_range))
            .collect();
        let root_translation = Vector3::new(
            trans_stream.uniform(-spec.lateral_range, spec.lateral_range),
            trans_stream.uniform(-spec.lateral_range, spec.lateral_range),
            trans_stream.uniform(spec.root_depth_range.0, spec.root_depth_range.1),
        );
        let pose = PoseState {
            rotations,
            root_translation,
        };
        let body = forward_kinematics(model, &pose, &shape)?;
        if body.vertices.iter().any(|v| v.z < 0.05) {
            continue;
        }

        let mut noise3d = base.substream(4);
        let noisy: Vec<Vector3<f64>> = body
            .vertices
            .iter()
            .map(|v| {
                if spec.noise_3d_mm > 0.0 {
                    let dir = Vector3::from(noise3d.unit_vector());
                    v + dir * noise3d.uniform(0.0, spec.noise_3d_mm / 1000.0)
                } else {
                    *v
                }
            })
            .collect();
        let mut uv = project(cam, &noisy)?;
        if spec.noise_px > 0.0 {
            let mut px_stream = base.substream(5);
            for p in uv.iter_mut() {
                p[0] += spec.noise_px * px_stream.gaussian();
                p[1] += spec.noise_px * px_stream.gaussian();
            }
        }
        let root_depth = body.world_joints[0].z;
        let depth = noisy.iter().map(|v| v.z - root_depth).collect();

        return Ok(Scenario {
            observation: Observation {
                uv,
                weights: vec![1.0; model.num_vertices()],
                depth: Some(depth),
                root_depth: Some(root_depth),
            },
            camera: *cam,
            crop: None,
            ground_truth: Some(GroundTruth { pose, shape }),
        });
    }
    Err(Error::InvalidValue {
        field: "scenario spec".into(),
        index: index as usize,
        detail: "sampled body repeatedly landed behind the camera".into(),
    })
}

/// One scenario per grid focal: the observation is generated once with the
/// true camera, then each entry's *assumed* camera swaps in the grid focal
/// (principal point unchanged). A grid entry equal to the true focal
/// reproduces the true camera exactly.
pub fn focal_sweep(
    model: &ParametricModel,
    true_cam: &CameraIntrinsics,
    spec: &ScenarioSpec,
    index: u64,
    focal_grid: &[f64],
) -> Result<Vec<Scenario>> {
    if focal_grid.is_empty()
        || focal_grid.iter().any(|f| !f.is_finite() || *f <= 0.0)
        || focal_grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidValue {
            field: "focal_grid".into(),
            index: 0,
            detail: "grid must be positive, finite, and strictly ascending".into(),
        });
    }
    let base = sample_scenario(model, true_cam, spec, index)?;
    Ok(focal_grid
        .iter()
        .map(|&f| {
            let mut scenario = base.clone();
            scenario.camera = CameraIntrinsics {
                fx: f,
                fy: f,
                px: true_cam.px,
                py: true_cam.py,
            };
            scenario
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GroundTruthFile {
    /// Per-joint axis-angle rotations, flat row-major.
    pose: Vec<f64>,
    root_translation: [f64; 3],
    shape: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    observation: crate::solver::ObservationFile,
    camera: CameraIntrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crop: Option<CropBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<GroundTruthFile>,
}

/// Serialize a scenario (observation, camera, crop, optional ground truth).
pub fn scenario_to_json(scenario: &Scenario) -> String {
    let file = ScenarioFile {
        observation: scenario.observation.to_file(),
        camera: scenario.camera,
        crop: scenario.crop,
        ground_truth: scenario.ground_truth.as_ref().map(|gt| GroundTruthFile {
            pose: gt
                .pose
                .axis_angles()
                .iter()
                .flat_map(|v| [v.x, v.y, v.z])
                .collect(),
            root_translation: gt.pose.root_translation.into(),
            shape: gt.shape.clone(),
        }),
    };
    serde_json::to_string_pretty(&file).expect("scenario serialization")
}

/// Write a scenario as JSON.
pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    std::fs::write(path, scenario_to_json(scenario)).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

/// Read a scenario written by [`save_scenario`].
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        detail: e.to_string(),
    })?;
    let ground_truth = match file.ground_truth {
        Some(gt) => {
            if gt.pose.len() % 3 != 0 {
                return Err(Error::Dimension {
                    field: "ground_truth.pose".into(),
                    expected: gt.pose.len() / 3 * 3,
                    got: gt.pose.len(),
                });
            }
            let axis_angles: Vec<Vector3<f64>> = gt
                .pose
                .chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect();
            Some(GroundTruth {
                pose: PoseState::from_axis_angles(
                    &axis_angles,
                    Vector3::from(gt.root_translation),
                ),
                shape: gt.shape,
            })
        }
        None => None,
    };
    Ok(Scenario {
        observation: Observation::from_file(file.observation, path)?,
        camera: file.camera,
        crop: file.crop,
        ground_truth,
    })
}
