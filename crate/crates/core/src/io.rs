//! On-disk formats: ASCII PLY clouds and JSON for correspondences, poses,
//! ground truth and metrics.
//!
//! JSON is written pretty-printed with a trailing newline; floats use the
//! shortest representation that parses back to the same value, so a
//! parse/serialize cycle reproduces the file byte for byte.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::correspondence::{CorrId, Correspondence, CorrespondenceSet};
use crate::error::{Error, Result};
use crate::eval::{HitCriteria, MetricsReport};
use crate::geometry::{Point3, PointCloud, RigidTransform};
use crate::pipeline::{InstanceResult, RegistrationOutcome};
use crate::synth::{Label, LabeledCorrespondences, SceneGroundTruth};

// ---------------------------------------------------------------------------
// PLY

pub fn ply_to_string(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(64 + cloud.len() * 48);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in cloud.points() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

/// Parses an ASCII PLY, reading `x y z` from the vertex element and skipping
/// any other properties or elements.
pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Parse("missing 'ply' magic".into()));
    }
    // (name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    let mut ascii = false;
    loop {
        let line = lines.next().ok_or_else(|| Error::Parse("unterminated PLY header".into()))?.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                ascii = tok.next() == Some("ascii");
                if !ascii {
                    return Err(Error::Parse("only ASCII PLY is supported".into()));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| Error::Parse("element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad count for element '{name}'")))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            Some("property") => {
                let (_, _, props) = elements.last_mut().ok_or_else(|| Error::Parse("property before element".into()))?;
                let name = tok.last().ok_or_else(|| Error::Parse("property without name".into()))?;
                props.push(name.to_string());
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::Parse(format!("unexpected header keyword '{other}'"))),
        }
    }
    if !ascii {
        return Err(Error::Parse("missing format line".into()));
    }

    let mut points = None;
    for (name, count, props) in &elements {
        if name != "vertex" {
            for _ in 0..*count {
                lines.next().ok_or_else(|| Error::Parse(format!("truncated element '{name}'")))?;
            }
            continue;
        }
        let col = |axis: &str| {
            props.iter().position(|p| p == axis).ok_or_else(|| Error::Parse(format!("vertex has no '{axis}' property")))
        };
        let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
        let mut pts = Vec::with_capacity(*count);
        for row in 0..*count {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("expected {count} vertices, got {row}")))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let get = |i: usize| -> Result<f64> {
                fields
                    .get(i)
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("bad vertex row {row}: '{line}'")))
            };
            pts.push(Point3::new(get(ix)?, get(iy)?, get(iz)?));
        }
        points = Some(pts);
    }
    let points = points.ok_or_else(|| Error::Parse("no vertex element".into()))?;
    PointCloud::new(points)
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    parse_ply(&fs::read_to_string(path)?)
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, ply_to_string(cloud))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// JSON helpers

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Row-major rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for PoseRecord {
    fn from(t: &RigidTransform) -> Self {
        let r = t.rotation();
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i * 3 + j] = r[(i, j)];
            }
        }
        let tr = t.translation();
        Self { rotation, translation: [tr.x, tr.y, tr.z] }
    }
}

impl PoseRecord {
    pub fn to_transform(&self) -> Result<RigidTransform> {
        RigidTransform::new(Matrix3::from_row_slice(&self.rotation), Vector3::from(self.translation))
    }
}

// ---------------------------------------------------------------------------
// Correspondences

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: CorrId,
    pub src: [f64; 3],
    pub dst: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nnsr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceFile {
    pub pairs: Vec<PairRecord>,
}

impl CorrespondenceFile {
    pub fn from_set(set: &CorrespondenceSet) -> Self {
        Self {
            pairs: set
                .iter()
                .map(|c| PairRecord {
                    id: c.id,
                    src: [c.source.x, c.source.y, c.source.z],
                    dst: [c.target.x, c.target.y, c.target.z],
                    nnsr: None,
                })
                .collect(),
        }
    }

    pub fn to_set(&self) -> Result<CorrespondenceSet> {
        CorrespondenceSet::new(
            self.pairs
                .iter()
                .map(|p| Correspondence::new(p.id, Point3::from(p.src), Point3::from(p.dst)))
                .collect(),
        )
    }

    /// Similarity ratios keyed by id, or `None` unless every pair carries one.
    pub fn ratios(&self) -> Option<HashMap<CorrId, f64>> {
        self.pairs.iter().map(|p| p.nnsr.map(|r| (p.id, r))).collect()
    }
}

// ---------------------------------------------------------------------------
// Registration results

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    #[serde(flatten)]
    pub pose: PoseRecord,
    pub overlap: f64,
    pub mae: f64,
    pub iteration: usize,
    pub dense_count: usize,
    pub removed_count: usize,
}

impl From<&InstanceResult> for InstanceRecord {
    fn from(r: &InstanceResult) -> Self {
        Self {
            pose: PoseRecord::from(&r.transform),
            overlap: r.overlap,
            mae: r.mae,
            iteration: r.iteration,
            dense_count: r.dense_ids.len(),
            removed_count: r.removed_ids.len(),
        }
    }
}

/// Accepted instances of one registration run. Carries no timing so that
/// repeated runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosesFile {
    pub resolution: f64,
    pub iterations_run: usize,
    pub rejected_count: usize,
    pub instances: Vec<InstanceRecord>,
}

impl PosesFile {
    pub fn from_outcome(outcome: &RegistrationOutcome) -> Self {
        Self {
            resolution: outcome.resolution,
            iterations_run: outcome.iterations_run,
            rejected_count: outcome.rejected.len(),
            instances: outcome.results.iter().map(InstanceRecord::from).collect(),
        }
    }

    pub fn transforms(&self) -> Result<Vec<RigidTransform>> {
        self.instances.iter().map(|i| i.pose.to_transform()).collect()
    }
}

// ---------------------------------------------------------------------------
// Ground truth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: CorrId,
    /// Instance index for inliers, `null` for outliers.
    pub instance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    /// Resolution of the model cloud.
    pub resolution: f64,
    pub poses: Vec<PoseRecord>,
    pub instance_point_ranges: Vec<[usize; 2]>,
    pub clutter_count: usize,
    #[serde(default)]
    pub labels: Vec<LabelRecord>,
}

impl GroundTruthFile {
    pub fn new(gt: &SceneGroundTruth, resolution: f64, labeled: Option<&LabeledCorrespondences>) -> Self {
        let labels = labeled
            .map(|l| {
                l.set
                    .iter()
                    .map(|c| LabelRecord {
                        id: c.id,
                        instance: match l.label(c.id) {
                            Some(Label::Inlier(j)) => Some(j),
                            _ => None,
                        },
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            resolution,
            poses: gt.poses.iter().map(PoseRecord::from).collect(),
            instance_point_ranges: gt.instance_point_ranges.iter().map(|r| [r.start, r.end]).collect(),
            clutter_count: gt.clutter_count,
            labels,
        }
    }

    pub fn transforms(&self) -> Result<Vec<RigidTransform>> {
        self.poses.iter().map(PoseRecord::to_transform).collect()
    }
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub criteria: HitCriteria,
    #[serde(flatten)]
    pub report: MetricsReport,
}
