//! Linearized inverse kinematics as one regularized least-squares solve.
//!
//! Given initial world rotations per segment (from the rigid initializer or a
//! previous pass), each vertex's projection constraint is rewritten with the
//! direct linear transform into two rows that are linear in the unknowns:
//! a small rotation update per joint (first-order, exactified afterwards),
//! the shape coefficients, and a free translation per joint. Solving the
//! stacked system and re-linearizing at the updated rotations gives the
//! multi-pass scheme.
//!
//! Projection rows are normalized by the focal length (`P_x + c_u * P_z = 0`
//! with `c_u = (px - u) / fx`, and the v-row analogously), keeping
//! coefficients near unity so regularizer weights have a scale-free meaning.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::are::{estimate_world_rotations, relative_rotations, WorldRotations};
use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::model::{
    assign_segments, forward_kinematics, regress_joints, rest_mesh, ParametricModel, PoseState,
    SegmentMap,
};
use crate::rotation::{rotation_from_scaled_axis, skew};

/// Relative diagonal/singular-value threshold for declaring rank deficiency.
const RANK_TOL: f64 = 1e-10;

/// Column layout of the unknown vector:
/// `[rotation updates (3 per joint) | shape | translations (3 per joint)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownLayout {
    pub num_joints: usize,
    pub num_shapes: usize,
}

impl UnknownLayout {
    pub fn num_unknowns(&self) -> usize {
        6 * self.num_joints + self.num_shapes
    }

    /// Column of joint `k`'s rotation-update component `axis`.
    pub fn delta_col(&self, joint: usize, axis: usize) -> usize {
        3 * joint + axis
    }

    /// Column of shape coefficient `c`.
    pub fn shape_col(&self, c: usize) -> usize {
        3 * self.num_joints + c
    }

    /// Column of joint `k`'s translation component `axis`.
    pub fn translation_col(&self, joint: usize, axis: usize) -> usize {
        3 * self.num_joints + self.num_shapes + 3 * joint + axis
    }
}

/// One extra row of the least-squares system: sparse coefficients over the
/// unknown layout, a right-hand side, and a multiplicative weight applied to
/// both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coefficients: Vec<(usize, f64)>,
    pub rhs: f64,
    pub weight: f64,
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Ridge weight on the shape block (rows `sqrt(omega_beta) * I`).
    pub omega_beta: f64,
    /// Ridge weight on every rotation-update block; zero disables the rows.
    pub omega_theta: f64,
    /// Number of linearize-solve-extract passes (at least one).
    pub iterations: usize,
    /// Re-scale each vertex's rows by the inverse of its fitted depth between
    /// passes (iteratively reweighted least squares); off by default.
    pub reweight_by_depth: bool,
    /// Additional rows appended after the regularizers.
    pub constraints: Vec<LinearConstraint>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            omega_beta: 0.1,
            omega_theta: 0.0,
            iterations: 2,
            reweight_by_depth: false,
            constraints: Vec::new(),
        }
    }
}

/// Pixel-aligned vertex observations driving a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// One pixel position per model vertex.
    pub uv: Vec<[f64; 2]>,
    /// Per-vertex confidences; zero removes the vertex entirely.
    pub weights: Vec<f64>,
    /// Optional per-vertex depth offsets from the root depth, meters.
    pub depth: Option<Vec<f64>>,
    /// Optional depth of the subject's root, meters.
    pub root_depth: Option<f64>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ObservationFile {
    /// Flat row-major `num_vertices x 2`.
    uv: Vec<f64>,
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root_depth: Option<f64>,
}

impl Observation {
    pub(crate) fn from_file(file: ObservationFile, path: &Path) -> Result<Observation> {
        if file.uv.len() % 2 != 0 || file.uv.len() / 2 != file.weights.len() {
            return Err(Error::Dimension {
                field: "uv".into(),
                expected: file.weights.len() * 2,
                got: file.uv.len(),
            });
        }
        if let Some(d) = &file.depth {
            if d.len() != file.weights.len() {
                return Err(Error::Dimension {
                    field: "depth".into(),
                    expected: file.weights.len(),
                    got: d.len(),
                });
            }
        }
        let _ = path;
        Ok(Observation {
            uv: file.uv.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
            weights: file.weights,
            depth: file.depth,
            root_depth: file.root_depth,
        })
    }

    pub(crate) fn to_file(&self) -> ObservationFile {
        ObservationFile {
            uv: self.uv.iter().flatten().copied().collect(),
            weights: self.weights.clone(),
            depth: self.depth.clone(),
            root_depth: self.root_depth,
        }
    }
}

/// Load an observation from JSON (flat `uv` array).
pub fn load_observation(path: &Path) -> Result<Observation> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let file: ObservationFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        detail: e.to_string(),
    })?;
    Observation::from_file(file, path)
}

/// Write an observation as JSON (inverse of [`load_observation`]).
pub fn save_observation(path: &Path, obs: &Observation) -> Result<()> {
    let text = serde_json::to_string(&obs.to_file()).expect("observation serialization");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

/// Assembled least-squares system `min ||A x - b||`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub layout: UnknownLayout,
    pub data_rows: usize,
    pub regularizer_rows: usize,
    pub constraint_rows: usize,
}

/// Result of one linear solve.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: DVector<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
    pub condition_estimate: f64,
}

/// Build the stacked system for one linearization point.
///
/// Row order: two projection rows per vertex (scaled by its confidence),
/// then the shape ridge (when `omega_beta > 0`), then the rotation-update
/// ridge (when `omega_theta > 0`), then extra constraint rows scaled by
/// their weights.
pub fn assemble_system(
    model: &ParametricModel,
    segments: &SegmentMap,
    rotations: &[Matrix3<f64>],
    observation: &Observation,
    cam: &CameraIntrinsics,
    config: &SolverConfig,
) -> Result<LinearSystem> {
    assemble_scaled(model, segments, rotations, observation, cam, config, None)
}

fn assemble_scaled(
    model: &ParametricModel,
    segments: &SegmentMap,
    rotations: &[Matrix3<f64>],
    observation: &Observation,
    cam: &CameraIntrinsics,
    config: &SolverConfig,
    vertex_scales: Option<&[f64]>,
) -> Result<LinearSystem> {
    let n = model.num_vertices();
    let k = model.num_joints();
    let s = model.num_shapes();
    let layout = UnknownLayout {
        num_joints: k,
        num_shapes: s,
    };
    if rotations.len() != k {
        return Err(Error::Dimension {
            field: "rotations".into(),
            expected: k,
            got: rotations.len(),
        });
    }
    if observation.uv.len() != n {
        return Err(Error::Dimension {
            field: "observation.uv".into(),
            expected: n,
            got: observation.uv.len(),
        });
    }
    if observation.weights.len() != n {
        return Err(Error::Dimension {
            field: "observation.weights".into(),
            expected: n,
            got: observation.weights.len(),
        });
    }
    for (i, (uv, w)) in observation.uv.iter().zip(&observation.weights).enumerate() {
        if !(uv[0].is_finite() && uv[1].is_finite() && w.is_finite()) || *w < 0.0 {
            return Err(Error::InvalidValue {
                field: "observation".into(),
                index: i,
                detail: "pixel coordinates and weights must be finite, weights nonnegative".into(),
            });
        }
    }
    for (j, members) in segments.members.iter().enumerate() {
        let usable = members.iter().any(|&i| observation.weights[i] > 0.0);
        if !usable {
            return Err(Error::TooFewPoints {
                context: format!("segment {j}: every vertex has zero confidence"),
                got: 0,
                needed: 1,
            });
        }
    }

    let data_rows = 2 * n;
    let regularizer_rows =
        if config.omega_beta > 0.0 { s } else { 0 } + if config.omega_theta > 0.0 { 3 * k } else { 0 };
    let constraint_rows = config.constraints.len();
    let total_rows = data_rows + regularizer_rows + constraint_rows;
    let u_cols = layout.num_unknowns();

    let mut a = DMatrix::zeros(total_rows, u_cols);
    let mut b = DVector::zeros(total_rows);

    for i in 0..n {
        let seg = segments.segment_of[i];
        let r_init = &rotations[seg];
        let x_r = r_init * model.template[i];
        let m = -skew(x_r); // coefficient of the rotation update in the 3D point
        let w = observation.weights[i] * vertex_scales.map_or(1.0, |sc| sc[i]);
        let [u, v] = observation.uv[i];
        let cu = (cam.px - u) / cam.fx;
        let cv = (cam.py - v) / cam.fy;

        let (row_u, row_v) = (2 * i, 2 * i + 1);
        for axis in 0..3 {
            let col = layout.delta_col(seg, axis);
            a[(row_u, col)] = w * (m[(0, axis)] + cu * m[(2, axis)]);
            a[(row_v, col)] = w * (m[(1, axis)] + cv * m[(2, axis)]);
        }
        for c in 0..s {
            let b_r = r_init * model.shape_basis[c][i];
            let col = layout.shape_col(c);
            a[(row_u, col)] = w * (b_r.x + cu * b_r.z);
            a[(row_v, col)] = w * (b_r.y + cv * b_r.z);
        }
        a[(row_u, layout.translation_col(seg, 0))] = w;
        a[(row_u, layout.translation_col(seg, 2))] = w * cu;
        a[(row_v, layout.translation_col(seg, 1))] = w;
        a[(row_v, layout.translation_col(seg, 2))] = w * cv;
        b[row_u] = -w * (x_r.x + cu * x_r.z);
        b[row_v] = -w * (x_r.y + cv * x_r.z);
    }

    let mut next_row = data_rows;
    if config.omega_beta > 0.0 {
        let root = config.omega_beta.sqrt();
        for c in 0..s {
            a[(next_row, layout.shape_col(c))] = root;
            next_row += 1;
        }
    }
    if config.omega_theta > 0.0 {
        let root = config.omega_theta.sqrt();
        for j in 0..k {
            for axis in 0..3 {
                a[(next_row, layout.delta_col(j, axis))] = root;
                next_row += 1;
            }
        }
    }
    for constraint in &config.constraints {
        for &(col, coeff) in &constraint.coefficients {
            if col >= u_cols {
                return Err(Error::InvalidValue {
                    field: "constraints".into(),
                    index: next_row - data_rows - regularizer_rows,
                    detail: format!("column {col} out of range ({u_cols} unknowns)"),
                });
            }
            a[(next_row, col)] = constraint.weight * coeff;
        }
        b[next_row] = constraint.weight * constraint.rhs;
        next_row += 1;
    }

    if !a.iter().all(|x| x.is_finite()) || !b.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite {
            context: "assembled system".into(),
        });
    }

    Ok(LinearSystem {
        a,
        b,
        layout,
        data_rows,
        regularizer_rows,
        constraint_rows,
    })
}

/// Minimize `||A x - b||` through an orthogonal factorization.
///
/// The fast path is a Householder QR with a rank check on the triangular
/// factor's diagonal; anything borderline falls through to an SVD, which
/// reveals the numerical rank and returns the minimum-norm solution with a
/// rank-deficiency flag.
pub fn solve_linear(system: &LinearSystem) -> Result<LinearSolution> {
    let a = &system.a;
    let b = &system.b;
    let n = a.ncols();

    if a.nrows() >= n {
        let qr = a.clone().qr();
        let r = qr.r();
        let mut dmax = 0.0f64;
        let mut dmin = f64::MAX;
        for i in 0..n {
            let d = r[(i, i)].abs();
            dmax = dmax.max(d);
            dmin = dmin.min(d);
        }
        if dmin > RANK_TOL * dmax && dmax > 0.0 {
            let mut c = b.clone();
            qr.q_tr_mul(&mut c);
            let c_top = DVector::from(c.rows(0, n).into_owned());
            if let Some(x) = r.solve_upper_triangular(&c_top) {
                if x.iter().all(|v| v.is_finite()) {
                    return Ok(LinearSolution {
                        x,
                        rank: n,
                        rank_deficient: false,
                        condition_estimate: dmax / dmin,
                    });
                }
            }
        }
    }

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&sv| sv > cutoff).count();
    let smin_used = svd
        .singular_values
        .iter()
        .copied()
        .filter(|&sv| sv > cutoff)
        .fold(smax, f64::min);
    let x = svd
        .solve(b, cutoff)
        .map_err(|detail| Error::NonFinite {
            context: format!("svd solve: {detail}"),
        })?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "least-squares solution".into(),
        });
    }
    Ok(LinearSolution {
        x,
        rank,
        rank_deficient: rank < n,
        condition_estimate: if smin_used > 0.0 { smax / smin_used } else { f64::INFINITY },
    })
}

/// Pose, shape, and translation recovered from a solution vector.
#[derive(Debug, Clone)]
pub struct ExtractedParameters {
    pub pose: PoseState,
    pub shape: Vec<f64>,
    pub global_translation: Vector3<f64>,
    /// Per-joint rotation-update vectors, straight from the solution.
    pub delta_angles: Vec<Vector3<f64>>,
    /// Exactified world rotations (update times linearization point).
    pub world_rotations: Vec<Matrix3<f64>>,
}

/// Turn a solution vector back into model parameters.
///
/// Each first-order rotation update is exactified through the exponential
/// map before composing with its linearization point, so the returned pose
/// contains proper rotations. The global translation re-anchors the root
/// joint: the root block solved for the segment's free translation `t`, and
/// the forward pass places the root joint at `j0 + translation`, so
/// `translation = t - (j0 - Rw0 * j0)` with `j0` the rest root joint under
/// the solved shape.
pub fn extract_parameters(
    model: &ParametricModel,
    layout: &UnknownLayout,
    x: &DVector<f64>,
    rotations: &[Matrix3<f64>],
) -> Result<ExtractedParameters> {
    if x.len() != layout.num_unknowns() {
        return Err(Error::Dimension {
            field: "solution".into(),
            expected: layout.num_unknowns(),
            got: x.len(),
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "solution vector".into(),
        });
    }
    let k = layout.num_joints;
    let s = layout.num_shapes;

    let delta_angles: Vec<Vector3<f64>> = (0..k)
        .map(|j| {
            Vector3::new(
                x[layout.delta_col(j, 0)],
                x[layout.delta_col(j, 1)],
                x[layout.delta_col(j, 2)],
            )
        })
        .collect();
    let world_rotations: Vec<Matrix3<f64>> = delta_angles
        .iter()
        .zip(rotations)
        .map(|(w, r)| rotation_from_scaled_axis(*w) * r)
        .collect();
    let shape: Vec<f64> = (0..s).map(|c| x[layout.shape_col(c)]).collect();

    let rest = rest_mesh(model, &shape)?;
    let rest_joints = regress_joints(&model.joint_regressor, &rest)?;
    let j0 = rest_joints[0];
    let t_root = Vector3::new(
        x[layout.translation_col(0, 0)],
        x[layout.translation_col(0, 1)],
        x[layout.translation_col(0, 2)],
    );
    let global_translation = t_root - (j0 - world_rotations[0] * j0);

    let pose = PoseState {
        rotations: relative_rotations(&world_rotations, &model.parents),
        root_translation: global_translation,
    };
    Ok(ExtractedParameters {
        pose,
        shape,
        global_translation,
        delta_angles,
        world_rotations,
    })
}

/// Fit diagnostics carried alongside the recovered parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub rank: usize,
    pub rank_deficient: bool,
    pub condition_estimate: f64,
    /// Segments whose rigid initialization fell back to the parent frame.
    pub degenerate_segments: Vec<usize>,
    /// Set when a later pass's residual exceeded ten times the previous one.
    pub non_convergent: bool,
    pub data_rows: usize,
    pub constraint_rows: usize,
}

/// Complete output of [`pliks_fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub pose: PoseState,
    pub shape: Vec<f64>,
    pub global_translation: Vector3<f64>,
    pub delta_angles: Vec<Vector3<f64>>,
    /// Final stacked-system residual of each pass, in order.
    pub per_pass_residuals: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Initial world rotations for the first pass.
#[derive(Debug, Clone)]
pub enum FitInit {
    /// Run the rigid initializer on back-projected 3D vertex predictions.
    PredictedVertices {
        vertices: Vec<Vector3<f64>>,
        shape_guess: Vec<f64>,
    },
    /// Use caller-provided world rotations directly.
    WorldRotations(WorldRotations),
}

/// Full pipeline: initialize world rotations, then repeat
/// assemble / solve / extract, re-linearizing each pass at the previous
/// pass's exactified world rotations. Confidences stay fixed across passes.
///
/// Later passes apply a step-acceptance safeguard: when re-linearizing at the
/// full rotation update would increase the stacked residual (which can happen
/// once the fit sits at the model-error floor, where the linearized estimate
/// undershoots the exactified one), the update is halved until the residual
/// stops increasing, falling back to the previous linearization point
/// unchanged. Residuals over passes are therefore non-increasing whenever the
/// row weighting itself is fixed, i.e. unless `reweight_by_depth` is set.
pub fn pliks_fit(
    model: &ParametricModel,
    observation: &Observation,
    cam: &CameraIntrinsics,
    init: FitInit,
    config: &SolverConfig,
) -> Result<FitResult> {
    if config.iterations == 0 {
        return Err(Error::InvalidValue {
            field: "config.iterations".into(),
            index: 0,
            detail: "at least one pass is required".into(),
        });
    }
    let segments = assign_segments(model);
    let init_rotations = match init {
        FitInit::PredictedVertices {
            vertices,
            shape_guess,
        } => estimate_world_rotations(
            model,
            &segments,
            &vertices,
            &shape_guess,
            &observation.weights,
        )?,
        FitInit::WorldRotations(w) => {
            if w.rotations.len() != model.num_joints() {
                return Err(Error::Dimension {
                    field: "init rotations".into(),
                    expected: model.num_joints(),
                    got: w.rotations.len(),
                });
            }
            w
        }
    };

    let mut lin_rotations = init_rotations.rotations;
    let mut per_pass_residuals = Vec::with_capacity(config.iterations);
    let mut vertex_scales: Option<Vec<f64>> = None;
    // Previous pass's linearization point and the update solved there, kept so
    // the safeguard can damp the step that produced the current point.
    let mut prev_step: Option<(Vec<Matrix3<f64>>, Vec<Vector3<f64>>)> = None;
    let mut last: Option<(ExtractedParameters, LinearSolution, LinearSystem)> = None;

    for _pass in 0..config.iterations {
        let mut system = assemble_scaled(
            model,
            &segments,
            &lin_rotations,
            observation,
            cam,
            config,
            vertex_scales.as_deref(),
        )?;
        let mut solution = solve_linear(&system)?;
        let mut residual = (&system.a * &solution.x - &system.b).norm();

        if let (Some((base, delta)), Some(&prev_residual)) =
            (&prev_step, per_pass_residuals.last())
        {
            let mut alpha = 1.0;
            while residual > prev_residual {
                alpha *= 0.5;
                if alpha < 1.0 / 64.0 {
                    // A damped step still loses; keep the previous
                    // linearization, which reproduces the previous system and
                    // residual exactly.
                    lin_rotations = base.clone();
                } else {
                    lin_rotations = base
                        .iter()
                        .zip(delta)
                        .map(|(r, d)| rotation_from_scaled_axis(*d * alpha) * r)
                        .collect();
                }
                system = assemble_scaled(
                    model,
                    &segments,
                    &lin_rotations,
                    observation,
                    cam,
                    config,
                    vertex_scales.as_deref(),
                )?;
                solution = solve_linear(&system)?;
                residual = (&system.a * &solution.x - &system.b).norm();
                if alpha < 1.0 / 64.0 {
                    break;
                }
            }
        }

        let extracted = extract_parameters(model, &system.layout, &solution.x, &lin_rotations)?;
        per_pass_residuals.push(residual);

        prev_step = Some((lin_rotations, extracted.delta_angles.clone()));
        lin_rotations = extracted.world_rotations.clone();
        if config.reweight_by_depth {
            let body = forward_kinematics(model, &extracted.pose, &extracted.shape)?;
            vertex_scales = Some(
                body.vertices
                    .iter()
                    .map(|v| 1.0 / v.z.max(1e-3))
                    .collect(),
            );
        }
        last = Some((extracted, solution, system));
    }

    let (extracted, solution, system) = last.expect("at least one pass ran");
    let non_convergent = per_pass_residuals
        .windows(2)
        .any(|w| w[1] > 10.0 * w[0].max(f64::MIN_POSITIVE));
    Ok(FitResult {
        pose: extracted.pose,
        shape: extracted.shape,
        global_translation: extracted.global_translation,
        delta_angles: extracted.delta_angles,
        per_pass_residuals,
        diagnostics: FitDiagnostics {
            rank: solution.rank,
            rank_deficient: solution.rank_deficient,
            condition_estimate: solution.condition_estimate,
            degenerate_segments: init_rotations.degenerate_segments,
            non_convergent,
            data_rows: system.data_rows,
            constraint_rows: system.constraint_rows,
        },
    })
}

// ---------------------------------------------------------------------------
// Constraint and result files
// ---------------------------------------------------------------------------

/// One row of a constraint file: pins a single unknown toward `rhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConstraintFileRow {
    /// `"translation"`, `"delta"`, or `"shape"`.
    block: String,
    /// Joint index for translation/delta rows; coefficient index for shape.
    joint: usize,
    /// Component (0..3) for translation/delta rows; must be 0 for shape.
    #[serde(default)]
    axis: usize,
    rhs: f64,
    weight: f64,
}

/// Load single-unknown anchor constraints from JSON for a given layout.
pub fn load_constraints(path: &Path, layout: &UnknownLayout) -> Result<Vec<LinearConstraint>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let rows: Vec<ConstraintFileRow> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        detail: e.to_string(),
    })?;
    let mut out = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        let col = match row.block.as_str() {
            "translation" | "delta" => {
                if row.joint >= layout.num_joints || row.axis >= 3 {
                    return Err(Error::InvalidValue {
                        field: "constraints".into(),
                        index: idx,
                        detail: format!(
                            "joint {} axis {} out of range ({} joints)",
                            row.joint, row.axis, layout.num_joints
                        ),
                    });
                }
                if row.block == "translation" {
                    layout.translation_col(row.joint, row.axis)
                } else {
                    layout.delta_col(row.joint, row.axis)
                }
            }
            "shape" => {
                if row.joint >= layout.num_shapes || row.axis != 0 {
                    return Err(Error::InvalidValue {
                        field: "constraints".into(),
                        index: idx,
                        detail: format!(
                            "shape coefficient {} out of range ({} shapes) or nonzero axis",
                            row.joint, layout.num_shapes
                        ),
                    });
                }
                layout.shape_col(row.joint)
            }
            other => {
                return Err(Error::InvalidValue {
                    field: "constraints".into(),
                    index: idx,
                    detail: format!("unknown block {other:?}"),
                });
            }
        };
        if !(row.rhs.is_finite() && row.weight.is_finite()) || row.weight < 0.0 {
            return Err(Error::InvalidValue {
                field: "constraints".into(),
                index: idx,
                detail: "rhs and weight must be finite, weight nonnegative".into(),
            });
        }
        out.push(LinearConstraint {
            coefficients: vec![(col, 1.0)],
            rhs: row.rhs,
            weight: row.weight,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct FitResultFile {
    /// Per-joint axis-angle rotations, flat row-major `num_joints x 3`.
    pose: Vec<f64>,
    shape: Vec<f64>,
    global_translation: [f64; 3],
    /// Per-joint rotation updates of the final pass, flat row-major.
    delta_angles: Vec<f64>,
    per_pass_residuals: Vec<f64>,
    diagnostics: FitDiagnostics,
}

/// Serialize a fit result to a JSON string (pose as axis-angle vectors).
pub fn fit_result_to_json(result: &FitResult) -> String {
    let file = FitResultFile {
        pose: result
            .pose
            .axis_angles()
            .iter()
            .flat_map(|v| [v.x, v.y, v.z])
            .collect(),
        shape: result.shape.clone(),
        global_translation: result.global_translation.into(),
        delta_angles: result
            .delta_angles
            .iter()
            .flat_map(|v| [v.x, v.y, v.z])
            .collect(),
        per_pass_residuals: result.per_pass_residuals.clone(),
        diagnostics: result.diagnostics.clone(),
    };
    serde_json::to_string_pretty(&file).expect("fit result serialization")
}

/// Parse a fit result JSON string back into a [`FitResult`].
pub fn fit_result_from_json(text: &str, path: &Path) -> Result<FitResult> {
    let file: FitResultFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.into(),
        detail: e.to_string(),
    })?;
    if file.pose.len() % 3 != 0 || file.delta_angles.len() != file.pose.len() {
        return Err(Error::Dimension {
            field: "pose".into(),
            expected: file.pose.len() / 3 * 3,
            got: file.delta_angles.len(),
        });
    }
    let axis_angles: Vec<Vector3<f64>> = file
        .pose
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect();
    let translation = Vector3::from(file.global_translation);
    Ok(FitResult {
        pose: PoseState::from_axis_angles(&axis_angles, translation),
        shape: file.shape,
        global_translation: translation,
        delta_angles: file
            .delta_angles
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect(),
        per_pass_residuals: file.per_pass_residuals,
        diagnostics: file.diagnostics,
    })
}
