//! Coverage and distance metrics plus report rendering.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::SurfaceModel;
use crate::cspace::ConfigDictionary;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, SpatialIndex};
use crate::planner::ScanPlan;
use crate::sensor::{visible_points, CameraModel};

/// Percent of `reference` points with a scan point closer than `2 * voxel`.
pub fn coverage(scan: &PointCloud, reference: &PointCloud, voxel: f64) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    if !(voxel > 0.0) {
        return Err(Error::InvalidParameter(format!("voxel {voxel} must be > 0")));
    }
    if scan.is_empty() {
        return Ok(0.0);
    }
    let radius = 2.0 * voxel;
    let index = SpatialIndex::new(scan.points(), radius);
    let hits = reference
        .points()
        .par_iter()
        .filter(|p| index.nearest_within(p, radius).is_some_and(|(_, d)| d < radius))
        .count();
    Ok(100.0 * hits as f64 / reference.len() as f64)
}

/// Mean distance from each scan point to its nearest reference point, meters.
pub fn mean_surface_distance(scan: &PointCloud, reference: &PointCloud) -> Result<f64> {
    if scan.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    let index = SpatialIndex::auto(reference.points());
    let total: f64 = scan
        .points()
        .par_iter()
        .map(|p| index.nearest(p).expect("non-empty reference").1)
        .sum();
    Ok(total / scan.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    GroundTruthSamples,
    ExternalReference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Final coverage, %.
    pub coverage_pct: f64,
    /// Mean scan-to-reference distance, meters (absent without a scan).
    pub mean_distance: Option<f64>,
    /// Cumulative coverage after each stage, %.
    pub per_stage_coverage: Vec<f64>,
    /// Coverage of the stitched scan restricted to each stage, %.
    pub realized_stage_coverage: Vec<f64>,
    /// Stage labels, e.g. `explorative`, `base 1`.
    pub stage_names: Vec<String>,
    pub reference_kind: ReferenceKind,
    pub voxel: f64,
    pub n_reference_points: usize,
}

/// Expected coverage after each stop of `plan`, measured on `reference`.
///
/// Every selected record's camera pose is re-evaluated against the
/// reference model, so the planning resolution does not bias the result.
pub fn coverage_curve(dict: &ConfigDictionary, plan: &ScanPlan, reference: &SurfaceModel, cam: &CameraModel) -> CoverageReport {
    coverage_curve_from(dict, plan, reference, cam, None)
}

/// Like [`coverage_curve`] with an optional explorative stage, given as
/// reference indices seen before the plan starts.
pub fn coverage_curve_from(
    dict: &ConfigDictionary,
    plan: &ScanPlan,
    reference: &SurfaceModel,
    cam: &CameraModel,
    initial: Option<&[usize]>,
) -> CoverageReport {
    let n = reference.len();
    let mut seen = vec![false; n];
    let mut count = 0usize;
    let mut mark = |idx: &[usize]| {
        for &i in idx {
            if !seen[i] {
                seen[i] = true;
                count += 1;
            }
        }
        crate::planner::percent(count, n)
    };
    let mut stages = Vec::new();
    let mut names = Vec::new();
    if let Some(init) = initial {
        stages.push(mark(init));
        names.push("explorative".to_string());
    }
    for (k, stop) in plan.stops.iter().enumerate() {
        let sets: Vec<Vec<usize>> = stop
            .views
            .par_iter()
            .map(|&r| visible_points(cam, &dict.records[r].camera, reference))
            .collect();
        let mut pct = mark(&[]);
        for s in &sets {
            pct = mark(s);
        }
        stages.push(pct);
        names.push(format!("base {}", k + 1));
    }
    CoverageReport {
        coverage_pct: stages.last().copied().unwrap_or(0.0),
        mean_distance: None,
        per_stage_coverage: stages,
        realized_stage_coverage: Vec::new(),
        stage_names: names,
        reference_kind: ReferenceKind::GroundTruthSamples,
        voxel: reference.resolution(),
        n_reference_points: n,
    }
}

impl CoverageReport {
    pub fn is_monotone(&self) -> bool {
        self.per_stage_coverage.windows(2).all(|w| w[1] >= w[0])
            && self.realized_stage_coverage.windows(2).all(|w| w[1] >= w[0])
    }

    /// One row per stage.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,name,expected_coverage_pct,realized_coverage_pct\n");
        for (i, (name, exp)) in self.stage_names.iter().zip(&self.per_stage_coverage).enumerate() {
            let realized = self
                .realized_stage_coverage
                .get(i)
                .map_or(String::new(), |v| format!("{v:.4}"));
            writeln!(s, "{i},{name},{exp:.4},{realized}").unwrap();
        }
        s
    }

    /// Table with one column per stage, followed by the summary figures.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = self.stage_names.iter().map(|n| n.len()).max().unwrap_or(0).max(8);
        write!(s, "{:<12}", "stage").unwrap();
        for n in &self.stage_names {
            write!(s, " {n:>width$}").unwrap();
        }
        s.push('\n');
        write!(s, "{:<12}", "expected %").unwrap();
        for v in &self.per_stage_coverage {
            write!(s, " {v:>width$.2}").unwrap();
        }
        s.push('\n');
        if !self.realized_stage_coverage.is_empty() {
            write!(s, "{:<12}", "realized %").unwrap();
            for v in &self.realized_stage_coverage {
                write!(s, " {v:>width$.2}").unwrap();
            }
            s.push('\n');
        }
        writeln!(s, "coverage      {:.2} %", self.coverage_pct).unwrap();
        if let Some(d) = self.mean_distance {
            writeln!(s, "mean distance {:.2} mm", d * 1000.0).unwrap();
        }
        writeln!(s, "reference     {} points, voxel {} m", self.n_reference_points, self.voxel).unwrap();
        s
    }

    /// Line plot of the stage curves.
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (480.0, 320.0, 48.0);
        let n = self.per_stage_coverage.len().max(2);
        let x_of = |i: usize| m + (w - 2.0 * m) * i as f64 / (n - 1) as f64;
        let y_of = |v: f64| h - m - (h - 2.0 * m) * v / 100.0;
        let mut s = String::new();
        writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
        writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
        writeln!(
            s,
            r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
            h - m,
            w - m
        )
        .unwrap();
        for pct in [0, 25, 50, 75, 100] {
            let y = y_of(pct as f64);
            writeln!(s, r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{pct}</text>"#, m - 6.0, y + 4.0).unwrap();
        }
        for (i, name) in self.stage_names.iter().enumerate() {
            writeln!(
                s,
                r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{name}</text>"#,
                x_of(i),
                h - m + 16.0
            )
            .unwrap();
        }
        for (values, color) in [(&self.per_stage_coverage, "steelblue"), (&self.realized_stage_coverage, "darkorange")] {
            if values.is_empty() {
                continue;
            }
            let pts: Vec<String> = values.iter().enumerate().map(|(i, v)| format!("{:.1},{:.1}", x_of(i), y_of(*v))).collect();
            writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" ")).unwrap();
        }
        writeln!(s, r#"<text x="{}" y="20" font-size="13" text-anchor="middle">coverage [%]</text>"#, w / 2.0).unwrap();
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use proptest::prelude::*;

    fn line(n: usize, step: f64) -> PointCloud {
        PointCloud::new((0..n).map(|i| Vec3::new(i as f64 * step, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn identical_clouds() {
        let c = line(50, 0.01);
        assert_eq!(coverage(&c, &c, 0.01).unwrap(), 100.0);
        assert_eq!(mean_surface_distance(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn empty_cases() {
        let c = line(10, 0.01);
        assert_eq!(coverage(&PointCloud::empty(), &c, 0.01).unwrap(), 0.0);
        assert!(matches!(coverage(&c, &PointCloud::empty(), 0.01), Err(Error::EmptyReference)));
        assert!(matches!(mean_surface_distance(&PointCloud::empty(), &c), Err(Error::EmptyInput)));
    }

    #[test]
    fn line_with_gap() {
        // 100 points 10 mm apart; the scan drops indices 40..65. With
        // voxel 4 mm the threshold is 8 mm < spacing, so exactly the 25
        // missing points are uncovered.
        let reference = line(100, 0.01);
        let kept: Vec<usize> = (0..100).filter(|i| !(40..65).contains(i)).collect();
        let scan = reference.select(&kept);
        assert!((coverage(&scan, &reference, 0.004).unwrap() - 75.0).abs() < 1e-12);
    }

    #[test]
    fn rigid_offset_on_plane() {
        let mut pts = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                pts.push(Vec3::new(i as f64 * 0.005, j as f64 * 0.005, 0.0));
            }
        }
        let reference = PointCloud::new(pts.clone()).unwrap();
        let scan = PointCloud::new(pts.iter().map(|p| p + Vec3::new(0.0, 0.0, 0.003)).collect()).unwrap();
        let d = mean_surface_distance(&scan, &reference).unwrap();
        assert!((d - 0.003).abs() < 0.003 * 0.01);
    }

    #[test]
    fn report_exports() {
        let r = CoverageReport {
            coverage_pct: 90.0,
            mean_distance: Some(0.006),
            per_stage_coverage: vec![40.0, 80.0, 90.0],
            realized_stage_coverage: vec![38.0, 79.0, 89.5],
            stage_names: vec!["explorative".into(), "base 1".into(), "base 2".into()],
            reference_kind: ReferenceKind::GroundTruthSamples,
            voxel: 0.01,
            n_reference_points: 1000,
        };
        assert!(r.is_monotone());
        assert_eq!(r.to_csv().lines().count(), 4);
        assert!(r.to_text().contains("6.00 mm"));
        let svg = r.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn coverage_is_monotone(
            pts in prop::collection::vec(prop::array::uniform3(-0.2f64..0.2), 5..60),
            split in 0usize..60,
            v1 in 0.005f64..0.05,
            dv in 0.0f64..0.05,
        ) {
            let reference = PointCloud::new(pts.iter().map(|a| Vec3::from(*a)).collect()).unwrap();
            let shifted: Vec<Vec3> = pts.iter().map(|a| Vec3::from(*a) + Vec3::new(0.01, -0.004, 0.02)).collect();
            let k = split.min(shifted.len());
            let small = PointCloud::new(shifted[..k].to_vec()).unwrap();
            let big = PointCloud::new(shifted.clone()).unwrap();
            prop_assert!(coverage(&big, &reference, v1).unwrap() >= coverage(&small, &reference, v1).unwrap());
            prop_assert!(coverage(&big, &reference, v1 + dv).unwrap() >= coverage(&big, &reference, v1).unwrap());
        }
    }
}
