//! Command-line front end for the fitting pipeline: model generation,
//! single-case fits from files, batch benchmarks, and focal sweeps.
//!
//! Every command is deterministic given its flags and seeds: reports embed
//! the resolved configuration, contain no timestamps, and rerun
//! byte-identically. Batch commands fan out across a worker pool (sized by
//! `--threads` or the `PLIKS_THREADS` environment variable) and reduce
//! results in scenario-index order, so thread count never changes output.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 input error, 3 I/O error.
//! Failures print one machine-readable JSON line to stderr.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use pliks_core::are::{estimate_world_rotations, relative_rotations};
use pliks_core::camera::{
    adjust_intrinsics, lift_to_3d, load_camera, CameraIntrinsics, CropBox, FocalPolicy,
};
use pliks_core::error::{Error, ErrorKind, Result};
use pliks_core::metrics::{mpjpe, mrpe, pa_mpjpe, pck_auc, pve, MetricReport};
use pliks_core::model::{
    assign_segments, forward_kinematics, load_model, save_model, ParametricModel, PoseState,
};
use pliks_core::solver::{
    fit_result_to_json, load_constraints, load_observation, pliks_fit, FitInit, FitResult,
    Observation, SolverConfig, UnknownLayout,
};
use pliks_core::synth::{
    focal_sweep, generate_model, load_scenario, sample_scenario, GroundTruth, ModelSpec,
    ScenarioSpec,
};

#[derive(Parser)]
#[command(
    name = "pliks",
    version,
    about = "Fit skinned body models to 2D vertex observations"
)]
struct Cli {
    /// Worker threads for batch commands; 0 or absent means the
    /// PLIKS_THREADS environment variable, then machine parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural body model file.
    GenModel(GenModelArgs),
    /// Fit one observation or scenario file.
    Fit(FitArgs),
    /// Generate seeded scenarios and benchmark the fit over a
    /// noise x regularizer grid.
    Bench(BenchArgs),
    /// Fit one observation under a grid of assumed focal lengths.
    SweepFocal(SweepFocalArgs),
}

/// Intrinsics fallback when no measured camera is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyFlag {
    /// Focal length 1000 px, principal point at image center.
    #[value(name = "fixed_1000")]
    Fixed1000,
    /// Focal length = image diagonal, principal point at center.
    #[value(name = "diag")]
    Diag,
}

impl PolicyFlag {
    fn resolve(self, width: f64, height: f64) -> CameraIntrinsics {
        let policy = match self {
            PolicyFlag::Fixed1000 => FocalPolicy::Fixed1000 { width, height },
            PolicyFlag::Diag => FocalPolicy::Diagonal { width, height },
        };
        CameraIntrinsics::from_policy(policy)
    }

    fn name(self) -> &'static str {
        match self {
            PolicyFlag::Fixed1000 => "fixed_1000",
            PolicyFlag::Diag => "diag",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatFlag {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = match err.kind() {
                ErrorKind::Numerical => "numerical",
                ErrorKind::Input => "input",
                ErrorKind::Io => "io",
            };
            eprintln!(
                "{}",
                serde_json::json!({ "error": { "kind": kind, "message": err.to_string() } })
            );
            ExitCode::from(match err.kind() {
                ErrorKind::Numerical => 1,
                ErrorKind::Input => 2,
                ErrorKind::Io => 3,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    init_worker_pool(cli.threads)?;
    match cli.command {
        Command::GenModel(args) => cmd_gen_model(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Bench(args) => cmd_bench(args),
        Command::SweepFocal(args) => cmd_sweep_focal(args),
    }
}

fn init_worker_pool(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => n,
        None => match std::env::var("PLIKS_THREADS") {
            Ok(raw) => raw.trim().parse::<usize>().map_err(|_| Error::InvalidValue {
                field: "PLIKS_THREADS".into(),
                index: 0,
                detail: format!("not a thread count: {raw:?}"),
            })?,
            Err(_) => 0,
        },
    };
    // num_threads(0) asks rayon for machine parallelism.
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .expect("worker pool initialized once");
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared file and report helpers
// ---------------------------------------------------------------------------

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|err| Error::Parse {
        path: path.into(),
        detail: err.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

/// Single-line JSON of a config record, for `#`-comment report headers.
fn config_line<T: Serialize>(config: &T) -> String {
    serde_json::to_string(config).expect("config serializes")
}

/// Metrics of fitted parameters against a scenario's ground truth.
fn evaluate_against_truth(
    model: &ParametricModel,
    truth: &GroundTruth,
    pose: &PoseState,
    shape: &[f64],
) -> Result<MetricReport> {
    let gt_body = forward_kinematics(model, &truth.pose, &truth.shape)?;
    let body = forward_kinematics(model, pose, shape)?;
    let root = mrpe(body.world_joints[0], gt_body.world_joints[0]);
    let (pck, auc) = pck_auc(
        std::slice::from_ref(&body.world_joints),
        std::slice::from_ref(&gt_body.world_joints),
        0,
        150.0,
        150.0,
    )?;
    Ok(MetricReport {
        mpjpe: mpjpe(&body.world_joints, &gt_body.world_joints, 0)?,
        pa_mpjpe: pa_mpjpe(&body.world_joints, &gt_body.world_joints)?,
        pve: pve(
            &body.vertices,
            &gt_body.vertices,
            Some((body.world_joints[0], gt_body.world_joints[0])),
        )?,
        mrpe: root.total,
        mrpe_x: root.x,
        mrpe_y: root.y,
        mrpe_z: root.z,
        pck,
        auc,
        sample_count: 1,
    })
}

/// Back-project the observation and run the full initialize-and-fit pipeline.
fn fit_observation(
    model: &ParametricModel,
    observation: &Observation,
    cam: &CameraIntrinsics,
    root_depth_default: f64,
    config: &SolverConfig,
) -> Result<FitResult> {
    let root_depth = observation.root_depth.unwrap_or(root_depth_default);
    let lifted = lift_to_3d(cam, &observation.uv, observation.depth.as_deref(), root_depth)?;
    pliks_fit(
        model,
        observation,
        cam,
        FitInit::PredictedVertices {
            vertices: lifted,
            shape_guess: vec![0.0; model.num_shapes()],
        },
        config,
    )
}

/// Pose reconstructed from the rigid initializer alone: segment-wise
/// registered world rotations, template shape, root at the observed depth.
fn rigid_init_only(
    model: &ParametricModel,
    observation: &Observation,
    cam: &CameraIntrinsics,
    root_depth_default: f64,
) -> Result<(PoseState, Vec<f64>)> {
    let root_depth = observation.root_depth.unwrap_or(root_depth_default);
    let lifted = lift_to_3d(cam, &observation.uv, observation.depth.as_deref(), root_depth)?;
    let segments = assign_segments(model);
    let shape = vec![0.0; model.num_shapes()];
    let worlds = estimate_world_rotations(model, &segments, &lifted, &shape, &observation.weights)?;
    let pose = PoseState {
        rotations: relative_rotations(&worlds.rotations, &model.parents),
        root_translation: Vector3::new(0.0, 0.0, root_depth),
    };
    Ok((pose, shape))
}

// ---------------------------------------------------------------------------
// gen-model
// ---------------------------------------------------------------------------

#[derive(Args)]
struct GenModelArgs {
    /// Number of joints in the kinematic tree.
    #[arg(long, default_value_t = 24)]
    joints: usize,
    /// Ring vertices sampled per segment.
    #[arg(long = "verts-per-seg", default_value_t = 32)]
    verts_per_seg: usize,
    /// Number of shape basis components.
    #[arg(long, default_value_t = 10)]
    shapes: usize,
    /// Blend-weight bleed toward neighboring joints, 0 (hard) to 1.
    #[arg(long, default_value_t = 0.2)]
    smoothness: f64,
    /// Shortest bone length, meters.
    #[arg(long, default_value_t = 0.10)]
    bone_min: f64,
    /// Longest bone length, meters.
    #[arg(long, default_value_t = 0.24)]
    bone_max: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output model file (JSON).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_gen_model(args: GenModelArgs) -> Result<()> {
    let spec = ModelSpec {
        num_joints: args.joints,
        verts_per_segment: args.verts_per_seg,
        num_shapes: args.shapes,
        bone_length_range: (args.bone_min, args.bone_max),
        weight_smoothness: args.smoothness,
        seed: args.seed,
    };
    let model = generate_model(&spec)?;
    save_model(&args.out, &model)?;
    println!(
        "model {}: N={} vertices, K={} joints, |beta|={} -> {}",
        model.name,
        model.num_vertices(),
        model.num_joints(),
        model.num_shapes(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Args)]
struct FitArgs {
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// Observation file: either a bare observation or a full scenario file,
    /// whose embedded camera and ground truth are used when present.
    #[arg(long)]
    observation: PathBuf,
    /// Camera intrinsics file; overrides any camera embedded in the
    /// observation file.
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Intrinsics fallback when neither a camera file nor an embedded
    /// camera is available.
    #[arg(long, value_enum, default_value_t = PolicyFlag::Fixed1000)]
    camera_policy: PolicyFlag,
    /// Image width the fallback policy resolves against, pixels.
    #[arg(long, default_value_t = 1280.0)]
    width: f64,
    /// Image height the fallback policy resolves against, pixels.
    #[arg(long, default_value_t = 720.0)]
    height: f64,
    /// Crop box file; adjusts the resolved intrinsics.
    #[arg(long)]
    crop: Option<PathBuf>,
    /// Constraint file pinning individual unknowns.
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    omega_beta: f64,
    #[arg(long, default_value_t = 0.0)]
    omega_theta: f64,
    /// Root depth assumed when the observation has none, meters.
    #[arg(long, default_value_t = 7.0)]
    root_depth: f64,
    /// Rescale vertex rows by inverse estimated depth between passes.
    #[arg(long)]
    reweight_by_depth: bool,
    /// Output result file (JSON).
    #[arg(long)]
    out: PathBuf,
}

/// Resolved fit configuration, embedded in the result file for provenance.
#[derive(Serialize)]
struct FitConfigRecord {
    command: &'static str,
    model: String,
    observation: String,
    camera: CameraIntrinsics,
    /// Where the intrinsics came from: "file", "scenario", or "policy:...".
    camera_source: String,
    crop: Option<CropBox>,
    constraints: Option<String>,
    iterations: usize,
    omega_beta: f64,
    omega_theta: f64,
    root_depth: f64,
    reweight_by_depth: bool,
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let sniff: serde_json::Value = read_json(&args.observation)?;
    let is_scenario = sniff.get("observation").is_some();
    let (observation, embedded_camera, embedded_crop, ground_truth) = if is_scenario {
        let scenario = load_scenario(&args.observation)?;
        (
            scenario.observation,
            Some(scenario.camera),
            scenario.crop,
            scenario.ground_truth,
        )
    } else {
        (load_observation(&args.observation)?, None, None, None)
    };

    let (mut camera, camera_source) = match (&args.camera, embedded_camera) {
        (Some(path), _) => (load_camera(path)?, "file".to_string()),
        (None, Some(cam)) => (cam, "scenario".to_string()),
        (None, None) => (
            args.camera_policy.resolve(args.width, args.height),
            format!("policy:{}", args.camera_policy.name()),
        ),
    };
    let crop = match &args.crop {
        Some(path) => Some(read_json::<CropBox>(path)?),
        None => embedded_crop,
    };
    if let Some(crop) = &crop {
        camera = adjust_intrinsics(&camera, crop)?;
    }

    let layout = UnknownLayout {
        num_joints: model.num_joints(),
        num_shapes: model.num_shapes(),
    };
    let constraints = match &args.constraints {
        Some(path) => load_constraints(path, &layout)?,
        None => Vec::new(),
    };
    let config = SolverConfig {
        omega_beta: args.omega_beta,
        omega_theta: args.omega_theta,
        iterations: args.iterations,
        reweight_by_depth: args.reweight_by_depth,
        constraints,
    };

    let fit = fit_observation(&model, &observation, &camera, args.root_depth, &config)?;
    let metrics = match &ground_truth {
        Some(truth) => Some(evaluate_against_truth(&model, truth, &fit.pose, &fit.shape)?),
        None => None,
    };

    let record = FitConfigRecord {
        command: "fit",
        model: args.model.display().to_string(),
        observation: args.observation.display().to_string(),
        camera,
        camera_source,
        crop,
        constraints: args.constraints.as_ref().map(|p| p.display().to_string()),
        iterations: args.iterations,
        omega_beta: args.omega_beta,
        omega_theta: args.omega_theta,
        root_depth: args.root_depth,
        reweight_by_depth: args.reweight_by_depth,
    };
    let mut report = serde_json::Map::new();
    report.insert("config".into(), serde_json::to_value(&record).expect("config"));
    report.insert(
        "result".into(),
        serde_json::from_str(&fit_result_to_json(&fit)).expect("result round-trips"),
    );
    if let Some(metrics) = &metrics {
        report.insert(
            "metrics".into(),
            serde_json::to_value(metrics).expect("metrics"),
        );
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(report))
        .expect("report serializes");
    write_text(&args.out, &format!("{text}\n"))?;

    let final_residual = fit.per_pass_residuals.last().copied().unwrap_or(f64::NAN);
    match &metrics {
        Some(m) => println!(
            "fit: {} passes, residual {:.3e}, MPJPE {:.3} mm, PVE {:.3} mm -> {}",
            fit.per_pass_residuals.len(),
            final_residual,
            m.mpjpe,
            m.pve,
            args.out.display()
        ),
        None => println!(
            "fit: {} passes, residual {:.3e} -> {}",
            fit.per_pass_residuals.len(),
            final_residual,
            args.out.display()
        ),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Args)]
struct BenchArgs {
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// Scenarios per grid cell.
    #[arg(long, default_value_t = 100)]
    num: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Per-joint rotation angle range, radians.
    #[arg(long, default_value_t = 0.45)]
    pose_range: f64,
    /// Shape coefficient range.
    #[arg(long, default_value_t = 1.5)]
    shape_range: f64,
    /// Nearest sampled root depth, meters.
    #[arg(long, default_value_t = 6.6)]
    depth_min: f64,
    /// Farthest sampled root depth, meters.
    #[arg(long, default_value_t = 7.4)]
    depth_max: f64,
    /// Lateral root placement range, meters.
    #[arg(long, default_value_t = 0.1)]
    lateral: f64,
    /// Gaussian pixel noise on projections.
    #[arg(long, default_value_t = 0.0)]
    noise_px: f64,
    /// 3D vertex noise levels in mm; one grid cell per value.
    #[arg(long = "noise-mm", value_delimiter = ',', default_value = "0")]
    noise_mm: Vec<f64>,
    /// Shape ridge weights; one grid cell per value.
    #[arg(long = "omega-beta", value_delimiter = ',', default_value = "0.1")]
    omega_beta: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    iterations: usize,
    /// Evaluate the rigid initializer alone instead of the full fit.
    #[arg(long)]
    are_only: bool,
    #[arg(long, value_enum, default_value_t = PolicyFlag::Fixed1000)]
    camera_policy: PolicyFlag,
    #[arg(long, default_value_t = 1280.0)]
    width: f64,
    #[arg(long, default_value_t = 720.0)]
    height: f64,
    #[arg(long, value_enum, default_value_t = FormatFlag::Csv)]
    format: FormatFlag,
    /// Output report file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct BenchConfigRecord {
    command: &'static str,
    model: String,
    num: usize,
    seed: u64,
    pose_range: f64,
    shape_range: f64,
    depth_range: (f64, f64),
    lateral: f64,
    noise_px: f64,
    noise_mm: Vec<f64>,
    omega_beta: Vec<f64>,
    iterations: usize,
    are_only: bool,
    camera: CameraIntrinsics,
}

/// One evaluated scenario; mirrors the frozen CSV columns.
#[derive(Serialize)]
struct BenchRow {
    scenario_id: String,
    mpjpe: f64,
    pa_mpjpe: f64,
    pve: f64,
    mrpe: f64,
    mrpe_x: f64,
    mrpe_y: f64,
    mrpe_z: f64,
    pck: f64,
    auc: f64,
    passes: usize,
    residual: Option<f64>,
}

impl BenchRow {
    fn new(id: String, report: &MetricReport, passes: usize, residual: Option<f64>) -> BenchRow {
        BenchRow {
            scenario_id: id,
            mpjpe: report.mpjpe,
            pa_mpjpe: report.pa_mpjpe,
            pve: report.pve,
            mrpe: report.mrpe,
            mrpe_x: report.mrpe_x,
            mrpe_y: report.mrpe_y,
            mrpe_z: report.mrpe_z,
            pck: report.pck,
            auc: report.auc,
            passes,
            residual,
        }
    }

    fn csv(&self) -> String {
        let residual = match self.residual {
            Some(r) => format!("{r}"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario_id,
            self.mpjpe,
            self.pa_mpjpe,
            self.pve,
            self.mrpe,
            self.mrpe_x,
            self.mrpe_y,
            self.mrpe_z,
            self.pck,
            self.auc,
            self.passes,
            residual
        )
    }
}

const CSV_COLUMNS: &str =
    "scenario_id,mpjpe,pa_mpjpe,pve,mrpe,mrpe_x,mrpe_y,mrpe_z,pck,auc,passes,residual";

#[derive(Serialize)]
struct BenchCell {
    noise_mm: f64,
    omega_beta: f64,
    rows: Vec<BenchRow>,
    failures: Vec<BenchFailure>,
    mean: Option<BenchRow>,
}

#[derive(Serialize)]
struct BenchFailure {
    scenario_id: usize,
    error: String,
}

#[derive(Serialize)]
struct BenchReport {
    config: BenchConfigRecord,
    cells: Vec<BenchCell>,
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let camera = args.camera_policy.resolve(args.width, args.height);
    if args.num == 0 {
        return Err(Error::InvalidValue {
            field: "num".into(),
            index: 0,
            detail: "at least one scenario required".into(),
        });
    }

    let mut cells = Vec::new();
    for &noise in &args.noise_mm {
        let spec = ScenarioSpec {
            pose_angle_range: args.pose_range,
            shape_coeff_range: args.shape_range,
            root_depth_range: (args.depth_min, args.depth_max),
            lateral_range: args.lateral,
            noise_3d_mm: noise,
            noise_px: args.noise_px,
            seed: args.seed,
        };
        for &omega in &args.omega_beta {
            let config = SolverConfig {
                omega_beta: omega,
                iterations: args.iterations,
                ..SolverConfig::default()
            };
            let outcomes: Vec<(usize, Result<BenchRow>)> = (0..args.num)
                .into_par_iter()
                .map(|index| {
                    let row = bench_one(&model, &camera, &spec, index, &config, args.are_only);
                    (index, row)
                })
                .collect();

            let mut rows = Vec::new();
            let mut failures = Vec::new();
            for (index, outcome) in outcomes {
                match outcome {
                    Ok(row) => rows.push(row),
                    Err(err) => failures.push(BenchFailure {
                        scenario_id: index,
                        error: err.to_string(),
                    }),
                }
            }
            let mean = summarize(&rows);
            cells.push(BenchCell {
                noise_mm: noise,
                omega_beta: omega,
                rows,
                failures,
                mean,
            });
        }
    }

    let config = BenchConfigRecord {
        command: "bench",
        model: args.model.display().to_string(),
        num: args.num,
        seed: args.seed,
        pose_range: args.pose_range,
        shape_range: args.shape_range,
        depth_range: (args.depth_min, args.depth_max),
        lateral: args.lateral,
        noise_px: args.noise_px,
        noise_mm: args.noise_mm.clone(),
        omega_beta: args.omega_beta.clone(),
        iterations: args.iterations,
        are_only: args.are_only,
        camera,
    };
    let report = BenchReport { config, cells };
    let text = match args.format {
        FormatFlag::Json => {
            let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
            text.push('\n');
            text
        }
        FormatFlag::Csv => bench_csv(&report),
    };
    write_text(&args.out, &text)?;

    for cell in &report.cells {
        let label = if report.cells.len() > 1 {
            format!("cell noise_mm={} omega_beta={}: ", cell.noise_mm, cell.omega_beta)
        } else {
            String::new()
        };
        match &cell.mean {
            Some(mean) => println!(
                "bench: {}{} scenarios, mean MPJPE {:.3} mm, mean PVE {:.3} mm",
                label,
                cell.rows.len(),
                mean.mpjpe,
                mean.pve
            ),
            None => println!("bench: {}all {} scenarios failed", label, args.num),
        }
    }
    println!("bench: report -> {}", args.out.display());
    Ok(())
}

fn bench_one(
    model: &ParametricModel,
    camera: &CameraIntrinsics,
    spec: &ScenarioSpec,
    index: usize,
    config: &SolverConfig,
    are_only: bool,
) -> Result<BenchRow> {
    let scenario = sample_scenario(model, camera, spec, index as u64)?;
    let truth = scenario
        .ground_truth
        .as_ref()
        .expect("sampled scenarios carry ground truth");
    if are_only {
        let (pose, shape) =
            rigid_init_only(model, &scenario.observation, &scenario.camera, 7.0)?;
        let report = evaluate_against_truth(model, truth, &pose, &shape)?;
        Ok(BenchRow::new(index.to_string(), &report, 0, None))
    } else {
        let fit = fit_observation(model, &scenario.observation, &scenario.camera, 7.0, config)?;
        let report = evaluate_against_truth(model, truth, &fit.pose, &fit.shape)?;
        let residual = fit.per_pass_residuals.last().copied();
        Ok(BenchRow::new(
            index.to_string(),
            &report,
            fit.per_pass_residuals.len(),
            residual,
        ))
    }
}

/// Mean row over the successful scenarios of one cell.
fn summarize(rows: &[BenchRow]) -> Option<BenchRow> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&BenchRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let residuals: Vec<f64> = rows.iter().filter_map(|r| r.residual).collect();
    Some(BenchRow {
        scenario_id: "mean".into(),
        mpjpe: mean(|r| r.mpjpe),
        pa_mpjpe: mean(|r| r.pa_mpjpe),
        pve: mean(|r| r.pve),
        mrpe: mean(|r| r.mrpe),
        mrpe_x: mean(|r| r.mrpe_x),
        mrpe_y: mean(|r| r.mrpe_y),
        mrpe_z: mean(|r| r.mrpe_z),
        pck: mean(|r| r.pck),
        auc: mean(|r| r.auc),
        passes: rows[0].passes,
        residual: if residuals.is_empty() {
            None
        } else {
            Some(residuals.iter().sum::<f64>() / residuals.len() as f64)
        },
    })
}

fn bench_csv(report: &BenchReport) -> String {
    let mut out = String::new();
    writeln!(out, "# pliks-cli {} bench columns-v1", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(out, "# config: {}", config_line(&report.config)).unwrap();
    writeln!(out, "{CSV_COLUMNS}").unwrap();
    for cell in &report.cells {
        writeln!(out, "# cell noise_mm={} omega_beta={}", cell.noise_mm, cell.omega_beta).unwrap();
        for row in &cell.rows {
            writeln!(out, "{}", row.csv()).unwrap();
        }
        for failure in &cell.failures {
            writeln!(out, "# FAILED scenario {}: {}", failure.scenario_id, failure.error).unwrap();
        }
        if let Some(mean) = &cell.mean {
            writeln!(out, "{}", mean.csv()).unwrap();
        }
    }
    out
}

// ---------------------------------------------------------------------------
// sweep-focal
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SweepFocalArgs {
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// True generating focal length, pixels.
    #[arg(long, default_value_t = 600.0)]
    true_focal: f64,
    /// Image width; the principal point sits at the center.
    #[arg(long, default_value_t = 1280.0)]
    width: f64,
    /// Image height; the principal point sits at the center.
    #[arg(long, default_value_t = 720.0)]
    height: f64,
    /// Explicit comma-separated ascending focal grid; overrides
    /// --focal-min/--focal-max/--steps.
    #[arg(long, value_delimiter = ',')]
    focals: Option<Vec<f64>>,
    #[arg(long, default_value_t = 375.0)]
    focal_min: f64,
    #[arg(long, default_value_t = 900.0)]
    focal_max: f64,
    /// Number of evenly spaced grid points.
    #[arg(long, default_value_t = 8)]
    steps: usize,
    /// Scenarios averaged per grid focal.
    #[arg(long, default_value_t = 3)]
    num: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.45)]
    pose_range: f64,
    #[arg(long, default_value_t = 1.5)]
    shape_range: f64,
    #[arg(long, default_value_t = 6.6)]
    depth_min: f64,
    #[arg(long, default_value_t = 7.4)]
    depth_max: f64,
    #[arg(long, default_value_t = 0.1)]
    lateral: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_px: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_mm: f64,
    #[arg(long, default_value_t = 0.1)]
    omega_beta: f64,
    #[arg(long, default_value_t = 2)]
    iterations: usize,
    #[arg(long, value_enum, default_value_t = FormatFlag::Csv)]
    format: FormatFlag,
    /// Output report file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SweepConfigRecord {
    command: &'static str,
    model: String,
    true_camera: CameraIntrinsics,
    focal_grid: Vec<f64>,
    num: usize,
    seed: u64,
    pose_range: f64,
    shape_range: f64,
    depth_range: (f64, f64),
    lateral: f64,
    noise_px: f64,
    noise_mm: f64,
    omega_beta: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct SweepRow {
    focal: f64,
    mpjpe: f64,
    pve: f64,
}

#[derive(Serialize)]
struct SweepReport {
    config: SweepConfigRecord,
    rows: Vec<SweepRow>,
}

fn cmd_sweep_focal(args: SweepFocalArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let grid = match &args.focals {
        Some(list) => list.clone(),
        None => {
            if args.steps == 0 {
                return Err(Error::InvalidValue {
                    field: "steps".into(),
                    index: 0,
                    detail: "at least one grid point required".into(),
                });
            }
            if args.steps == 1 {
                vec![args.focal_min]
            } else {
                let step = (args.focal_max - args.focal_min) / (args.steps - 1) as f64;
                (0..args.steps)
                    .map(|i| args.focal_min + step * i as f64)
                    .collect()
            }
        }
    };
    if args.num == 0 {
        return Err(Error::InvalidValue {
            field: "num".into(),
            index: 0,
            detail: "at least one scenario required".into(),
        });
    }
    let true_camera = CameraIntrinsics {
        fx: args.true_focal,
        fy: args.true_focal,
        px: args.width / 2.0,
        py: args.height / 2.0,
    };
    let spec = ScenarioSpec {
        pose_angle_range: args.pose_range,
        shape_coeff_range: args.shape_range,
        root_depth_range: (args.depth_min, args.depth_max),
        lateral_range: args.lateral,
        noise_3d_mm: args.noise_mm,
        noise_px: args.noise_px,
        seed: args.seed,
    };
    let config = SolverConfig {
        omega_beta: args.omega_beta,
        iterations: args.iterations,
        ..SolverConfig::default()
    };

    // One scenario per index; each contributes one fit per grid focal.
    let per_index: Vec<Vec<(f64, f64)>> = (0..args.num)
        .into_par_iter()
        .map(|index| -> Result<Vec<(f64, f64)>> {
            let entries = focal_sweep(&model, &true_camera, &spec, index as u64, &grid)?;
            entries
                .iter()
                .map(|scenario| {
                    let truth = scenario
                        .ground_truth
                        .as_ref()
                        .expect("sampled scenarios carry ground truth");
                    let fit = fit_observation(
                        &model,
                        &scenario.observation,
                        &scenario.camera,
                        7.0,
                        &config,
                    )?;
                    let report = evaluate_against_truth(&model, truth, &fit.pose, &fit.shape)?;
                    Ok((report.mpjpe, report.pve))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let rows: Vec<SweepRow> = grid
        .iter()
        .enumerate()
        .map(|(i, &focal)| {
            let n = args.num as f64;
            SweepRow {
                focal,
                mpjpe: per_index.iter().map(|row| row[i].0).sum::<f64>() / n,
                pve: per_index.iter().map(|row| row[i].1).sum::<f64>() / n,
            }
        })
        .collect();

    let config_record = SweepConfigRecord {
        command: "sweep-focal",
        model: args.model.display().to_string(),
        true_camera,
        focal_grid: grid,
        num: args.num,
        seed: args.seed,
        pose_range: args.pose_range,
        shape_range: args.shape_range,
        depth_range: (args.depth_min, args.depth_max),
        lateral: args.lateral,
        noise_px: args.noise_px,
        noise_mm: args.noise_mm,
        omega_beta: args.omega_beta,
        iterations: args.iterations,
    };
    let report = SweepReport {
        config: config_record,
        rows,
    };
    let text = match args.format {
        FormatFlag::Json => {
            let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
            text.push('\n');
            text
        }
        FormatFlag::Csv => {
            let mut out = String::new();
            writeln!(
                out,
                "# pliks-cli {} sweep-focal columns-v1",
                env!("CARGO_PKG_VERSION")
            )
            .unwrap();
            writeln!(out, "# config: {}", config_line(&report.config)).unwrap();
            writeln!(out, "focal,mpjpe,pve").unwrap();
            for row in &report.rows {
                writeln!(out, "{},{},{}", row.focal, row.mpjpe, row.pve).unwrap();
            }
            out
        }
    };
    write_text(&args.out, &text)?;

    let best = report
        .rows
        .iter()
        .min_by(|a, b| a.mpjpe.partial_cmp(&b.mpjpe).expect("finite errors"))
        .expect("at least one grid point");
    println!(
        "sweep-focal: minimum MPJPE {:.3} mm at focal {} (true {}) -> {}",
        best.mpjpe,
        best.focal,
        args.true_focal,
        args.out.display()
    );
    Ok(())
}
