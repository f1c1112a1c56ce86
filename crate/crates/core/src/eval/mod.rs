//! Trial CSV files, metrics, and reports.

pub mod records;
pub mod report;

use thiserror::Error;

use crate::pose::{rotation_angle_between, RigidPose};

pub use records::{read_records, write_records, COLUMNS, SCHEMA_LINE};
pub use report::{compute_report, ApproachMetrics, LevelMetrics, MetricsReport, Stat};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("pairwise disparity needs at least 2 sessions, got {0}")]
    TooFewSessions(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Agreement between sessions' reference poses, over all unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disparity {
    pub pairs: usize,
    pub pos_mean: f64,
    pub pos_max: f64,
    pub rot_mean: f64,
    pub rot_max: f64,
}

pub fn pairwise_disparity(poses: &[RigidPose]) -> Result<Disparity, EvalError> {
    if poses.len() < 2 {
        return Err(EvalError::TooFewSessions(poses.len()));
    }
    let mut d = Disparity {
        pairs: 0,
        pos_mean: 0.0,
        pos_max: 0.0,
        rot_mean: 0.0,
        rot_max: 0.0,
    };
    for (i, a) in poses.iter().enumerate() {
        for b in &poses[i + 1..] {
            let pos = (a.translation() - b.translation()).norm();
            let rot = rotation_angle_between(a.rotation(), b.rotation());
            d.pairs += 1;
            d.pos_mean += pos;
            d.rot_mean += rot;
            d.pos_max = d.pos_max.max(pos);
            d.rot_max = d.rot_max.max(rot);
        }
    }
    d.pos_mean /= d.pairs as f64;
    d.rot_mean /= d.pairs as f64;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{rotation_about_up, Vec3};

    #[test]
    fn identical_poses() {
        let p = RigidPose::new(rotation_about_up(0.4), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let d = pairwise_disparity(&[p, p]).unwrap();
        assert_eq!((d.pos_mean, d.pos_max, d.rot_mean, d.rot_max), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn three_on_a_line() {
        let poses: Vec<_> = (0..3)
            .map(|i| RigidPose::from_translation(Vec3::new(f64::from(i), 0.0, 0.0)))
            .collect();
        let d = pairwise_disparity(&poses).unwrap();
        assert_eq!(d.pairs, 3);
        assert!((d.pos_mean - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.pos_max, 2.0);
    }

    #[test]
    fn needs_two() {
        assert!(matches!(pairwise_disparity(&[]), Err(EvalError::TooFewSessions(0))));
        let one = [RigidPose::identity()];
        assert!(matches!(pairwise_disparity(&one), Err(EvalError::TooFewSessions(1))));
    }
}
