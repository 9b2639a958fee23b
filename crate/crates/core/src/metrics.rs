//! Reconstruction error metrics. Inputs are meters; every reported number is
//! millimeters (the meter-to-millimeter conversion happens exactly once, at
//! the reporting boundary in each metric).

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Number of evenly spaced thresholds (inclusive of both ends) used for the
/// area under the PCK curve.
pub const AUC_STEPS: usize = 31;

/// Default PCK threshold and AUC sweep ceiling, millimeters.
pub const PCK_THRESHOLD_MM: f64 = 150.0;

/// Aggregated metric row for one fit or one batch.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pve: f64,
    pub mrpe: f64,
    pub mrpe_x: f64,
    pub mrpe_y: f64,
    pub mrpe_z: f64,
    pub pck: f64,
    pub auc: f64,
    pub sample_count: usize,
}

impl MetricReport {
    /// Mean of per-sample reports (PCK/AUC average as fractions).
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let mut acc = MetricReport {
            mpjpe: 0.0,
            pa_mpjpe: 0.0,
            pve: 0.0,
            mrpe: 0.0,
            mrpe_x: 0.0,
            mrpe_y: 0.0,
            mrpe_z: 0.0,
            pck: 0.0,
            auc: 0.0,
            sample_count: 0,
        };
        for r in reports {
            acc.mpjpe += r.mpjpe;
            acc.pa_mpjpe += r.pa_mpjpe;
            acc.pve += r.pve;
            acc.mrpe += r.mrpe;
            acc.mrpe_x += r.mrpe_x;
            acc.mrpe_y += r.mrpe_y;
            acc.mrpe_z += r.mrpe_z;
            acc.pck += r.pck;
            acc.auc += r.auc;
            acc.sample_count += r.sample_count;
        }
        Some(MetricReport {
            mpjpe: acc.mpjpe / n,
            pa_mpjpe: acc.pa_mpjpe / n,
            pve: acc.pve / n,
            mrpe: acc.mrpe / n,
            mrpe_x: acc.mrpe_x / n,
            mrpe_y: acc.mrpe_y / n,
            mrpe_z: acc.mrpe_z / n,
            pck: acc.pck / n,
            auc: acc.auc / n,
            sample_count: acc.sample_count,
        })
    }
}

fn check_same_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension {
            field: what.into(),
            expected: a,
            got: b,
        });
    }
    if a == 0 {
        return Err(Error::Dimension {
            field: what.into(),
            expected: 1,
            got: 0,
        });
    }
    Ok(())
}

/// Mean per-joint position error after centering both sets on their root
/// joint, millimeters.
pub fn mpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>], root: usize) -> Result<f64> {
    check_same_len("joints", pred.len(), gt.len())?;
    if root >= pred.len() {
        return Err(Error::InvalidValue {
            field: "root".into(),
            index: root,
            detail: format!("root joint index out of range ({} joints)", pred.len()),
        });
    }
    let (pr, gr) = (pred[root], gt[root]);
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| ((p - pr) - (g - gr)).norm())
        .sum();
    Ok(sum / pred.len() as f64 * 1000.0)
}

/// Mean per-joint position error after the best similarity alignment
/// (rotation, isotropic scale, translation) of the prediction onto the ground
/// truth, millimeters.
pub fn pa_mpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    check_same_len("joints", pred.len(), gt.len())?;
    if pred.len() < 3 {
        return Err(Error::TooFewPoints {
            context: "similarity alignment".into(),
            got: pred.len(),
            needed: 3,
        });
    }
    let n = pred.len() as f64;
    let pm: Vector3<f64> = pred.iter().sum::<Vector3<f64>>() / n;
    let gm: Vector3<f64> = gt.iter().sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::zeros();
    let mut pred_var = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        cov += (g - gm) * (p - pm).transpose() / n;
        pred_var += (p - pm).norm_squared() / n;
    }
    if pred_var <= 0.0 {
        return Err(Error::DegenerateCovariance {
            context: "similarity alignment".into(),
        });
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let sign = (u * v_t).determinant().signum();
    let d = Vector3::new(1.0, 1.0, sign);
    let r = u * Matrix3::from_diagonal(&d) * v_t;
    let scale = svd.singular_values.dot(&d) / pred_var;

    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (scale * (r * (p - pm)) + gm - g).norm())
        .sum();
    Ok(sum / n * 1000.0)
}

/// Mean per-vertex position error, millimeters. When root positions are
/// given, both meshes are centered on them first.
pub fn pve(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    roots: Option<(Vector3<f64>, Vector3<f64>)>,
) -> Result<f64> {
    check_same_len("vertices", pred.len(), gt.len())?;
    let (pr, gr) = roots.unwrap_or((Vector3::zeros(), Vector3::zeros()));
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| ((p - pr) - (g - gr)).norm())
        .sum();
    Ok(sum / pred.len() as f64 * 1000.0)
}

/// Root position error: total Euclidean distance and absolute per-axis
/// components, millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootError {
    pub total: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Mean root position error of predicted versus true root joint.
pub fn mrpe(pred_root: Vector3<f64>, gt_root: Vector3<f64>) -> RootError {
    let d = pred_root - gt_root;
    RootError {
        total: d.norm() * 1000.0,
        x: d.x.abs() * 1000.0,
        y: d.y.abs() * 1000.0,
        z: d.z.abs() * 1000.0,
    }
}

/// Percentage of correct keypoints at `threshold_mm` and area under the PCK
/// curve over [`AUC_STEPS`] evenly spaced thresholds in `[0, auc_max_mm]`,
/// both as fractions in `[0, 1]`. Errors are root-centered per sample.
pub fn pck_auc(
    pred_batch: &[Vec<Vector3<f64>>],
    gt_batch: &[Vec<Vector3<f64>>],
    root: usize,
    threshold_mm: f64,
    auc_max_mm: f64,
) -> Result<(f64, f64)> {
    check_same_len("batches", pred_batch.len(), gt_batch.len())?;
    let mut errors_mm = Vec::new();
    for (pred, gt) in pred_batch.iter().zip(gt_batch) {
        check_same_len("joints", pred.len(), gt.len())?;
        if root >= pred.len() {
            return Err(Error::InvalidValue {
                field: "root".into(),
                index: root,
                detail: format!("root joint index out of range ({} joints)", pred.len()),
            });
        }
        let (pr, gr) = (pred[root], gt[root]);
        for (p, g) in pred.iter().zip(gt) {
            errors_mm.push(((p - pr) - (g - gr)).norm() * 1000.0);
        }
    }
    let total = errors_mm.len() as f64;
    let frac_below = |t: f64| errors_mm.iter().filter(|&&e| e <= t).count() as f64 / total;
    let pck = frac_below(threshold_mm);
    let auc = (0..AUC_STEPS)
        .map(|i| frac_below(auc_max_mm * i as f64 / (AUC_STEPS - 1) as f64))
        .sum::<f64>()
        / AUC_STEPS as f64;
    Ok((pck, auc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use crate::rotation::rotation_from_scaled_axis;

    fn cloud(stream: &mut Stream, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    stream.uniform(-1.0, 1.0),
                    stream.uniform(-1.0, 1.0),
                    stream.uniform(-1.0, 1.0),
                )
            })
            .collect()
    }

    #[test]
    fn mpjpe_matches_hand_computation() {
        // Root offsets cancel; joint 1 is off by the 3-4-5 triangle (5 mm).
        let gt = vec![Vector3::new(0.0, 0.0, 5.0), Vector3::new(0.1, 0.2, 5.0)];
        let pred = vec![
            Vector3::new(1.0, 1.0, 6.0),
            Vector3::new(1.1 + 0.003, 1.2 + 0.004, 6.0),
        ];
        let e = mpjpe(&pred, &gt, 0).unwrap();
        assert!((e - 2.5).abs() < 1e-9, "expected 2.5 mm, got {e}");
    }

    #[test]
    fn mpjpe_matches_loop_oracle_on_random_clouds() {
        let mut stream = Stream::new(5150);
        let gt = cloud(&mut stream, 24);
        let pred = cloud(&mut stream, 24);
        let e = mpjpe(&pred, &gt, 3).unwrap();
        // Plain-scalar oracle.
        let mut acc = 0.0;
        for i in 0..24 {
            let dx = (pred[i].x - pred[3].x) - (gt[i].x - gt[3].x);
            let dy = (pred[i].y - pred[3].y) - (gt[i].y - gt[3].y);
            let dz = (pred[i].z - pred[3].z) - (gt[i].z - gt[3].z);
            acc += (dx * dx + dy * dy + dz * dz).sqrt();
        }
        assert!((e - acc / 24.0 * 1000.0).abs() < 1e-12);
    }

    #[test]
    fn pa_mpjpe_is_zero_under_exact_similarity() {
        let mut stream = Stream::new(321);
        for _ in 0..20 {
            let gt = cloud(&mut stream, 17);
            let r = rotation_from_scaled_axis(
                Vector3::from(stream.unit_vector()) * stream.uniform(-3.0, 3.0),
            );
            let s = stream.uniform(0.3, 3.0);
            let t = Vector3::new(
                stream.uniform(-4.0, 4.0),
                stream.uniform(-4.0, 4.0),
                stream.uniform(-4.0, 4.0),
            );
            let pred: Vec<_> = gt.iter().map(|p| s * (r * p) + t).collect();
            let e = pa_mpjpe(&pred, &gt).unwrap();
            assert!(e < 1e-9, "similarity transform should align exactly, got {e}");
        }
    }

    /// Oracle: nested grid over rotations, closed-form scale/translation per
    /// rotation, selecting by the squared-error Procrustes objective and then
    /// reporting the mean distance at the winner (mm).
    fn grid_similarity_error(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> f64 {
        let n = pred.len() as f64;
        let pm: Vector3<f64> = pred.iter().sum::<Vector3<f64>>() / n;
        let gm: Vector3<f64> = gt.iter().sum::<Vector3<f64>>() / n;
        let pred_var: f64 = pred.iter().map(|p| (p - pm).norm_squared()).sum::<f64>() / n;
        let optimal_scale = |r: &Matrix3<f64>| -> f64 {
            let mut cross = 0.0;
            for (p, g) in pred.iter().zip(gt) {
                cross += (g - gm).dot(&(r * (p - pm))) / n;
            }
            cross / pred_var
        };
        let squared_cost = |r: &Matrix3<f64>| -> f64 {
            let s = optimal_scale(r);
            pred.iter()
                .zip(gt)
                .map(|(p, g)| (s * (r * (p - pm)) + gm - g).norm_squared())
                .sum()
        };
        let euler = |a: f64, b: f64, c: f64| {
            nalgebra::Rotation3::from_euler_angles(a, b, c).into_inner()
        };
        let mut center = (0.0, 0.0, 0.0);
        let mut best_cost = f64::MAX;
        let mut best_r = euler(0.0, 0.0, 0.0);
        let mut half_span = std::f64::consts::PI;
        for _ in 0..16 {
            let step = half_span / 6.0;
            let mut best_cand = center;
            for ia in -6..=6 {
                for ib in -6..=6 {
                    for ic in -6..=6 {
                        let cand = (
                            center.0 + step * ia as f64,
                            center.1 + step * ib as f64,
                            center.2 + step * ic as f64,
                        );
                        let r = euler(cand.0, cand.1, cand.2);
                        let c = squared_cost(&r);
                        if c < best_cost {
                            best_cost = c;
                            best_cand = cand;
                            best_r = r;
                        }
                    }
                }
            }
            center = best_cand;
            half_span = step * 1.5;
        }
        let s = optimal_scale(&best_r);
        pred.iter()
            .zip(gt)
            .map(|(p, g)| (s * (best_r * (p - pm)) + gm - g).norm())
            .sum::<f64>()
            / n
            * 1000.0
    }

    #[test]
    fn pa_mpjpe_matches_similarity_grid_oracle() {
        let mut stream = Stream::new(7777);
        let gt = cloud(&mut stream, 10);
        let r = rotation_from_scaled_axis(Vector3::new(0.4, -0.7, 1.1));
        let pred: Vec<_> = gt
            .iter()
            .map(|p| {
                1.4 * (r * p)
                    + Vector3::new(0.3, -0.2, 0.9)
                    + Vector3::new(
                        stream.uniform(-0.08, 0.08),
                        stream.uniform(-0.08, 0.08),
                        stream.uniform(-0.08, 0.08),
                    )
            })
            .collect();
        let fast = pa_mpjpe(&pred, &gt).unwrap();
        let oracle = grid_similarity_error(&pred, &gt);
        assert!(
            (fast - oracle).abs() < 1e-6,
            "pa_mpjpe {fast} vs grid oracle {oracle} (mm)"
        );
    }

    #[test]
    fn pve_matches_loop_oracle_and_handles_roots() {
        let mut stream = Stream::new(11);
        let gt = cloud(&mut stream, 40);
        let pred = cloud(&mut stream, 40);
        let plain = pve(&pred, &gt, None).unwrap();
        let mut acc = 0.0;
        for (p, g) in pred.iter().zip(&gt) {
            acc += (p - g).norm();
        }
        assert!((plain - acc / 40.0 * 1000.0).abs() < 1e-12);

        // Centered version removes a shared offset.
        let offset = Vector3::new(0.5, -0.3, 0.8);
        let shifted: Vec<_> = gt.iter().map(|g| g + offset).collect();
        let centered = pve(&shifted, &gt, Some((offset, Vector3::zeros()))).unwrap();
        assert!(centered < 1e-9);
    }

    #[test]
    fn mrpe_matches_pythagoras() {
        let e = mrpe(
            Vector3::new(0.003, 0.004, 7.0),
            Vector3::new(0.0, 0.0, 7.0),
        );
        assert!((e.total - 5.0).abs() < 1e-9);
        assert!((e.x - 3.0).abs() < 1e-9);
        assert!((e.y - 4.0).abs() < 1e-9);
        assert!(e.z.abs() < 1e-9);
    }

    #[test]
    fn pck_auc_match_counting_oracle() {
        // Two samples, two joints each; root is joint 0, so its error is zero
        // by construction. Engineered joint-1 errors: 60 mm and 200 mm.
        let gt = vec![
            vec![Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0)],
            vec![Vector3::zeros(), Vector3::new(0.0, 0.2, 0.0)],
        ];
        let pred = vec![
            vec![Vector3::zeros(), Vector3::new(0.16, 0.0, 0.0)],
            vec![Vector3::zeros(), Vector3::new(0.0, 0.4, 0.0)],
        ];
        let (pck, auc) = pck_auc(&pred, &gt, 0, 150.0, 150.0).unwrap();
        // Errors: {0, 60, 0, 200} mm; three of four fall at or below 150.
        assert!((pck - 0.75).abs() < 1e-12);
        // Counting oracle over the 31 thresholds 0, 5, ..., 150.
        let mut acc = 0.0;
        for i in 0..31 {
            let t = 150.0 * i as f64 / 30.0;
            let below = [0.0, 60.0, 0.0, 200.0].iter().filter(|&&e| e <= t).count();
            acc += below as f64 / 4.0;
        }
        assert!((auc - acc / 31.0).abs() < 1e-12);
    }

    #[test]
    fn exact_batch_scores_perfect_pck_and_auc() {
        let mut stream = Stream::new(2);
        let batch: Vec<Vec<Vector3<f64>>> = (0..5).map(|_| cloud(&mut stream, 14)).collect();
        let (pck, auc) = pck_auc(&batch, &batch, 0, PCK_THRESHOLD_MM, PCK_THRESHOLD_MM).unwrap();
        assert_eq!(pck, 1.0);
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn metrics_validate_inputs() {
        let a = vec![Vector3::zeros(); 3];
        let b = vec![Vector3::zeros(); 4];
        assert!(matches!(mpjpe(&a, &b, 0).unwrap_err(), Error::Dimension { .. }));
        assert!(matches!(
            mpjpe(&a, &a, 9).unwrap_err(),
            Error::InvalidValue { .. }
        ));
        assert!(matches!(
            pve(&[], &[], None).unwrap_err(),
            Error::Dimension { .. }
        ));
        assert!(matches!(
            pa_mpjpe(&a[..2], &b[..2]).unwrap_err(),
            Error::TooFewPoints { .. }
        ));
        // Collapsed prediction cannot be scaled onto the target.
        let collapsed = vec![Vector3::new(1.0, 1.0, 1.0); 3];
        let spread = vec![
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        assert!(matches!(
            pa_mpjpe(&collapsed, &spread).unwrap_err(),
            Error::DegenerateCovariance { .. }
        ));
    }

    #[test]
    fn report_mean_averages_componentwise() {
        let r1 = MetricReport {
            mpjpe: 10.0,
            pa_mpjpe: 8.0,
            pve: 12.0,
            mrpe: 100.0,
            mrpe_x: 10.0,
            mrpe_y: 20.0,
            mrpe_z: 98.0,
            pck: 1.0,
            auc: 0.9,
            sample_count: 1,
        };
        let mut r2 = r1;
        r2.mpjpe = 20.0;
        r2.pck = 0.5;
        let mean = MetricReport::mean(&[r1, r2]).unwrap();
        assert_eq!(mean.mpjpe, 15.0);
        assert_eq!(mean.pck, 0.75);
        assert_eq!(mean.sample_count, 2);
        assert!(MetricReport::mean(&[]).is_none());
    }
}
