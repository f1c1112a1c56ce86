//! Aggregate metrics per approach and per environment change level.

use std::fmt::Write as _;

use crate::sim::{Approach, TrialRecord};

use super::{pairwise_disparity, Disparity};

/// Mean, maximum, and population standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub count: usize,
    pub mean: f64,
    pub max: f64,
    pub stddev: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat {
            count: values.len(),
            mean,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            stddev: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelMetrics {
    /// `None` when every level is pooled.
    pub level: Option<f64>,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Over every resolved anchor.
    pub position: Option<Stat>,
    pub orientation: Option<Stat>,
    pub latency: Option<Stat>,
}

impl LevelMetrics {
    fn of(level: Option<f64>, rows: &[&TrialRecord]) -> Self {
        let ok: Vec<_> = rows.iter().filter(|r| r.success).collect();
        let pos: Vec<f64> = ok.iter().flat_map(|r| r.position_errors.iter().copied()).collect();
        let rot: Vec<f64> = ok.iter().flat_map(|r| r.orientation_errors.iter().copied()).collect();
        let delay: Vec<f64> = ok.iter().filter_map(|r| r.localization_delay).collect();
        Self {
            level,
            trials: rows.len(),
            successes: ok.len(),
            success_rate: ok.len() as f64 / rows.len() as f64,
            position: Stat::of(&pos),
            orientation: Stat::of(&rot),
            latency: Stat::of(&delay),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproachMetrics {
    pub approach: Approach,
    pub overall: LevelMetrics,
    pub levels: Vec<LevelMetrics>,
    pub time_to_stable: Option<Stat>,
    /// Over every session that established a reference pose.
    pub disparity: Option<Disparity>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub approaches: Vec<ApproachMetrics>,
}

pub fn compute_report(records: &[TrialRecord]) -> MetricsReport {
    let mut approaches = Vec::new();
    for approach in Approach::ALL {
        let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.approach == approach).collect();
        if rows.is_empty() {
            continue;
        }
        let mut levels: Vec<f64> = rows.iter().map(|r| r.environment_change).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let per_level = levels
            .iter()
            .map(|&c| {
                let at: Vec<_> = rows
                    .iter()
                    .copied()
                    .filter(|r| r.environment_change == c)
                    .collect();
                LevelMetrics::of(Some(c), &at)
            })
            .collect();
        let tts: Vec<f64> = rows.iter().filter_map(|r| r.time_to_stable).collect();
        let refs: Vec<_> = rows.iter().filter_map(|r| r.reference_pose).collect();
        approaches.push(ApproachMetrics {
            approach,
            overall: LevelMetrics::of(None, &rows),
            levels: per_level,
            time_to_stable: Stat::of(&tts),
            disparity: pairwise_disparity(&refs).ok(),
        });
    }
    MetricsReport { approaches }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.4}"))
}

impl MetricsReport {
    pub fn is_empty(&self) -> bool {
        self.approaches.is_empty()
    }

    /// Human-readable summary.
    pub fn to_table(&self) -> String {
        if self.is_empty() {
            return "no data: the trial file has no rows\n".to_owned();
        }
        let mut s = String::new();
        for a in &self.approaches {
            let o = &a.overall;
            let _ = writeln!(
                s,
                "{}: {} trials, {} succeeded ({:.3})",
                a.approach, o.trials, o.successes, o.success_rate
            );
            if let Some(p) = o.position {
                let _ = writeln!(s, "  position error     mean {:.4} m    max {:.4} m", p.mean, p.max);
            }
            if let Some(r) = o.orientation {
                let _ = writeln!(s, "  orientation error  mean {:.4} rad  max {:.4} rad", r.mean, r.max);
            }
            if let Some(l) = o.latency {
                let _ = writeln!(s, "  latency            mean {:.3} s  stddev {:.3} s", l.mean, l.stddev);
            }
            if let Some(t) = a.time_to_stable {
                let _ = writeln!(s, "  time to stable     mean {:.3} s  stddev {:.3} s", t.mean, t.stddev);
            }
            if let Some(d) = a.disparity {
                let _ = writeln!(
                    s,
                    "  pairwise disparity ({} pairs)  position mean {:.4} m max {:.4} m  orientation mean {:.4} rad max {:.4} rad",
                    d.pairs, d.pos_mean, d.pos_max, d.rot_mean, d.rot_max
                );
            }
            let _ = writeln!(
                s,
                "  {:>10} {:>7} {:>8} {:>12} {:>12} {:>10}",
                "env_change", "trials", "success", "pos_mean_m", "rot_mean_rad", "latency_s"
            );
            for l in &a.levels {
                let _ = writeln!(
                    s,
                    "  {:>10} {:>7} {:>8.3} {:>12} {:>12} {:>10}",
                    l.level.unwrap_or(f64::NAN),
                    l.trials,
                    l.success_rate,
                    fmt_opt(l.position.map(|x| x.mean)),
                    fmt_opt(l.orientation.map(|x| x.mean)),
                    fmt_opt(l.latency.map(|x| x.mean)),
                );
            }
        }
        s
    }

    /// Long-form CSV: `approach,env_level,metric,value`. `env_level` is
    /// `all` for metrics pooled over every level. Absent metrics are omitted.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["approach", "env_level", "metric", "value"])
            .expect("write to memory");
        for a in &self.approaches {
            let name = a.approach.as_str();
            let mut emit = |level: &str, metric: &str, value: f64| {
                w.write_record([name, level, metric, &value.to_string()])
                    .expect("write to memory");
            };
            let mut level_rows = |level: &str, m: &LevelMetrics| {
                emit(level, "trials", m.trials as f64);
                emit(level, "successes", m.successes as f64);
                emit(level, "success_rate", m.success_rate);
                if let Some(p) = m.position {
                    emit(level, "position_error_mean_m", p.mean);
                    emit(level, "position_error_max_m", p.max);
                }
                if let Some(r) = m.orientation {
                    emit(level, "orientation_error_mean_rad", r.mean);
                    emit(level, "orientation_error_max_rad", r.max);
                }
                if let Some(l) = m.latency {
                    emit(level, "latency_mean_s", l.mean);
                    emit(level, "latency_stddev_s", l.stddev);
                }
            };
            level_rows("all", &a.overall);
            for l in &a.levels {
                level_rows(&l.level.map_or_else(|| "all".into(), |c| c.to_string()), l);
            }
            if let Some(t) = a.time_to_stable {
                emit("all", "time_to_stable_mean_s", t.mean);
                emit("all", "time_to_stable_stddev_s", t.stddev);
            }
            if let Some(d) = a.disparity {
                emit("all", "disparity_pairs", d.pairs as f64);
                emit("all", "disparity_pos_mean_m", d.pos_mean);
                emit("all", "disparity_pos_max_m", d.pos_max);
                emit("all", "disparity_rot_mean_rad", d.rot_mean);
                emit("all", "disparity_rot_max_rad", d.rot_max);
            }
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
    }
}
