//! Analytic inverse kinematics for linear-blend-skinning body models.
//!
//! The pipeline recovers per-joint rotations, shape coefficients, and global
//! translation from pixel-aligned 2D vertex correspondences under a full
//! perspective camera. It runs in two stages:
//!
//! 1. [`are`] — a segment-wise weighted Kabsch registration that estimates
//!    initial world rotations from back-projected vertex predictions.
//! 2. [`solver`] — a direct-linear-transform least-squares solve for small
//!    rotation corrections, shape, and per-joint translations, optionally
//!    repeated with re-linearization.
//!
//! Supporting modules cover the body model and forward kinematics
//! ([`model`]), the pinhole camera with crop handling ([`camera`]),
//! evaluation metrics ([`metrics`]), deterministic synthetic data
//! ([`synth`]), and a reproducible random stream ([`rng`]).

pub mod are;
pub mod camera;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod rotation;
pub mod solver;
pub mod synth;

pub use are::{estimate_world_rotations, kabsch, relative_rotations, WorldRotations};
pub use camera::{adjust_intrinsics, lift_to_3d, project, CameraIntrinsics, CropBox, FocalPolicy};
pub use error::{Error, ErrorKind, Result};
pub use metrics::{mpjpe, mrpe, pa_mpjpe, pck_auc, pve, MetricReport, RootError};
pub use model::{
    assign_segments, forward_kinematics, load_model, regress_joints, rest_mesh, save_model,
    ParametricModel, PoseState, PosedBody, SegmentMap,
};
pub use solver::{
    assemble_system, extract_parameters, pliks_fit, solve_linear, FitInit, FitResult, LinearConstraint,
    LinearSystem, Observation, SolverConfig, UnknownLayout,
};
pub use synth::{
    focal_sweep, generate_model, sample_scenario, GroundTruth, ModelSpec, Scenario, ScenarioSpec,
};
