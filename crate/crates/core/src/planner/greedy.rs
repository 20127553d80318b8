use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cspace::{ConfigDictionary, ConfigRecord};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::robot::{BasePose, RobotParams};

/// One base position and the views taken there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStop {
    pub base_index: usize,
    pub base: BasePose,
    /// Record indices into the dictionary, in capture order.
    pub views: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub stops: Vec<PlanStop>,
    /// Waypoints from stop `i` to stop `i + 1` (or from the start pose to the
    /// first stop when the plan starts elsewhere).
    pub base_paths: Vec<Vec<Vec2>>,
    /// Percent of samples covered by `already_seen` plus all selected views.
    pub expected_coverage: f64,
    /// Marginal gain of each selected view, in selection order.
    pub expected_new_points_per_view: Vec<usize>,
    /// Covered samples before any view was selected.
    pub initially_seen: usize,
    pub n_samples: usize,
}

impl ScanPlan {
    pub fn view_count(&self) -> usize {
        self.stops.iter().map(|s| s.views.len()).sum()
    }

    /// Cumulative expected coverage (%) after each stop.
    pub fn expected_stage_coverage(&self) -> Vec<f64> {
        let mut seen = self.initially_seen;
        let mut k = 0;
        self.stops
            .iter()
            .map(|s| {
                seen += self.expected_new_points_per_view[k..k + s.views.len()].iter().sum::<usize>();
                k += s.views.len();
                percent(seen, self.n_samples)
            })
            .collect()
    }

    /// Total floor distance along all base paths.
    pub fn path_length(&self) -> f64 {
        self.base_paths
            .iter()
            .map(|p| p.windows(2).map(|w| (w[1] - w[0]).norm()).sum::<f64>())
            .sum()
    }

    /// Human-readable plan: stops with joint vectors, then waypoints.
    pub fn to_text(&self, dict: &ConfigDictionary) -> String {
        let mut s = String::new();
        let w = &mut s;
        writeln!(w, "# scan plan").unwrap();
        writeln!(w, "expected_coverage {:.4}", self.expected_coverage).unwrap();
        writeln!(w, "stops {}", self.stops.len()).unwrap();
        let mut k = 0;
        for (i, stop) in self.stops.iter().enumerate() {
            writeln!(
                w,
                "stop {i} base {} x {:.4} y {:.4} heading {:.6}",
                stop.base_index, stop.base.x, stop.base.y, stop.base.heading
            )
            .unwrap();
            for &r in &stop.views {
                let rec = &dict.records[r];
                let joints: Vec<String> = rec.arm.joints.iter().map(|q| format!("{q:.6}")).collect();
                writeln!(w, "  view {r} gain {} joints {}", self.expected_new_points_per_view[k], joints.join(" ")).unwrap();
                k += 1;
            }
        }
        for (i, path) in self.base_paths.iter().enumerate() {
            let pts: Vec<String> = path.iter().map(|p| format!("{:.3},{:.3}", p.x, p.y)).collect();
            writeln!(w, "path {i} {}", pts.join(" ")).unwrap();
        }
        s
    }

    /// CSV of per-view gains.
    pub fn gains_csv(&self, dict: &ConfigDictionary) -> String {
        let mut s = String::from("stop,view,record,base_x,base_y,base_heading,gain,cumulative_coverage_pct\n");
        let mut seen = self.initially_seen;
        let mut k = 0;
        for (i, stop) in self.stops.iter().enumerate() {
            for (j, &r) in stop.views.iter().enumerate() {
                let gain = self.expected_new_points_per_view[k];
                seen += gain;
                k += 1;
                let b = &dict.records[r].base;
                writeln!(
                    s,
                    "{i},{j},{r},{:.4},{:.4},{:.6},{gain},{:.4}",
                    b.x,
                    b.y,
                    b.heading,
                    percent(seen, self.n_samples)
                )
                .unwrap();
            }
        }
        s
    }
}

pub(crate) fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        100.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

fn gain(record: &ConfigRecord, covered: &[bool]) -> usize {
    record.visible.iter().filter(|&&i| !covered[i]).count()
}

/// Highest-gain record among `candidates`, lowest index on ties.
fn best<'a>(candidates: impl Iterator<Item = (usize, &'a ConfigRecord)>, covered: &[bool]) -> Option<(usize, usize)> {
    candidates
        .map(|(i, r)| (i, gain(r, covered)))
        .filter(|&(_, g)| g > 0)
        .fold(None, |acc, (i, g)| match acc {
            Some((_, bg)) if bg >= g => acc,
            _ => Some((i, g)),
        })
}

/// Greedy view selection preferring arm moves over base moves.
///
/// While the current stop has room and one of its base's records adds unseen
/// samples, the best such record is taken. Otherwise a new stop opens at an
/// unused base holding the globally best record, until `max_bases` stops
/// exist or nothing adds coverage.
pub fn greedy_select(
    dict: &ConfigDictionary,
    max_bases: usize,
    max_views_per_base: usize,
    already_seen: &[usize],
) -> Result<ScanPlan> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if max_bases == 0 || max_views_per_base == 0 {
        return Err(Error::InvalidParameter("budgets must be at least 1".into()));
    }
    let mut covered = vec![false; dict.n_samples];
    for &i in already_seen {
        if i >= dict.n_samples {
            return Err(Error::InvalidParameter(format!("seen index {i} out of range")));
        }
        covered[i] = true;
    }
    let initially_seen = covered.iter().filter(|&&c| c).count();
    let mut used_base = vec![false; dict.bases.len()];
    let mut stops: Vec<PlanStop> = Vec::new();
    let mut gains = Vec::new();
    loop {
        let here = stops
            .last()
            .filter(|s| s.views.len() < max_views_per_base)
            .and_then(|s| best(dict.records_for_base(s.base_index), &covered));
        let pick = match here {
            Some(p) => Some(p),
            None if stops.len() < max_bases => {
                let opened = best(
                    dict.records.iter().enumerate().filter(|(_, r)| !used_base[r.base_index]),
                    &covered,
                );
                if let Some((r, _)) = opened {
                    let base_index = dict.records[r].base_index;
                    used_base[base_index] = true;
                    stops.push(PlanStop {
                        base_index,
                        base: dict.bases[base_index],
                        views: Vec::new(),
                    });
                }
                opened
            }
            None => None,
        };
        let Some((r, g)) = pick else { break };
        for &i in &dict.records[r].visible {
            covered[i] = true;
        }
        stops.last_mut().expect("open stop").views.push(r);
        gains.push(g);
    }
    let seen = covered.iter().filter(|&&c| c).count();
    Ok(ScanPlan {
        stops,
        base_paths: Vec::new(),
        expected_coverage: percent(seen, dict.n_samples),
        expected_new_points_per_view: gains,
        initially_seen,
        n_samples: dict.n_samples,
    })
}

/// Timing constants for plan execution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSettings {
    /// Seconds per camera view.
    pub dwell_per_view: f64,
    /// Seconds per base stop.
    pub settle_per_stop: f64,
}

impl Default for TimingSettings {
    fn default() -> Self {
        Self {
            dwell_per_view: 5.0,
            settle_per_stop: 10.0,
        }
    }
}

/// Seconds: travel at `base_speed` plus per-view dwell and per-stop settling.
pub fn estimate_plan_time(plan: &ScanPlan, params: &RobotParams) -> f64 {
    estimate_plan_time_with(plan, params, &TimingSettings::default())
}

pub fn estimate_plan_time_with(plan: &ScanPlan, params: &RobotParams, timing: &TimingSettings) -> f64 {
    plan.path_length() / params.base_speed
        + plan.stops.len() as f64 * timing.settle_per_stop
        + plan.view_count() as f64 * timing.dwell_per_view
}
