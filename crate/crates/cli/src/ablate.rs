//! Configuration grids over a directory of scene fixtures.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ibi_core::eval::{compute_metrics, pair_counts, HitCriteria};
use ibi_core::io::{read_json, GroundTruthFile};
use ibi_core::pipeline::{SeedMode, SolverMode, ValidationMode};
use ibi_core::PipelineConfig;

use crate::commands::{preset_config, Fixture};
use crate::error::{CliError, CliResult};
use crate::{AblateArgs, OUT_DIR_ENV};

/// A union of cartesian products. Axes left out keep the preset value; an
/// axis given as `[]` empties its group.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub groups: Vec<GridGroup>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGroup {
    pub validation: Option<Vec<ValidationMode>>,
    pub solver: Option<Vec<SolverMode>>,
    pub seed_mode: Option<Vec<SeedMode>>,
    pub t_overlap: Option<Vec<f64>>,
    pub t_inliers: Option<Vec<usize>>,
    pub n_gsac: Option<Vec<usize>>,
}

#[derive(Debug, Serialize)]
struct Row {
    config_id: String,
    mhr: f64,
    mhp: f64,
    mhf1: f64,
    mean_time: f64,
}

fn axis<T: Copy>(values: &Option<Vec<T>>, default: T) -> Vec<T> {
    values.clone().unwrap_or_else(|| vec![default])
}

fn lower<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

pub fn config_id(cfg: &PipelineConfig) -> String {
    format!(
        "validation={};solver={};seed={};t_overlap={};t_inliers={};n_gsac={}",
        lower(&cfg.validation_mode),
        lower(&cfg.solver_mode),
        lower(&cfg.seed_mode),
        cfg.t_overlap,
        cfg.t_inliers,
        cfg.n_gsac
    )
}

/// Expands the grid into configurations keyed and ordered by config id.
pub fn expand(spec: &GridSpec, base: &PipelineConfig) -> CliResult<BTreeMap<String, PipelineConfig>> {
    let mut cells = BTreeMap::new();
    for g in &spec.groups {
        for validation_mode in axis(&g.validation, base.validation_mode) {
            for solver_mode in axis(&g.solver, base.solver_mode) {
                for seed_mode in axis(&g.seed_mode, base.seed_mode) {
                    for t_overlap in axis(&g.t_overlap, base.t_overlap) {
                        for t_inliers in axis(&g.t_inliers, base.t_inliers) {
                            for n_gsac in axis(&g.n_gsac, base.n_gsac) {
                                let cfg = PipelineConfig { validation_mode, solver_mode, seed_mode, t_overlap, t_inliers, n_gsac, ..base.clone() };
                                cfg.validate()?;
                                cells.insert(config_id(&cfg), cfg);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(cells)
}

/// Fixture directories: `dir` itself when it holds `corrs.json`, otherwise
/// its subdirectories that do, in name order.
pub fn fixture_dirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if dir.join("corrs.json").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.join("corrs.json").is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Usage(format!("no fixtures under {}", dir.display())));
    }
    Ok(dirs)
}

pub fn run(args: &AblateArgs) -> CliResult<()> {
    let spec: GridSpec = read_json(&args.grid).map_err(CliError::at(&args.grid))?;
    let cells = expand(&spec, &preset_config(args.preset))?;

    let mut fixtures = Vec::new();
    if !cells.is_empty() {
        for dir in fixture_dirs(&args.fixtures)? {
            let fixture = Fixture::load(&dir.join("model.ply"), &dir.join("scene.ply"), &dir.join("corrs.json"))?;
            let gt_path = dir.join("gt.json");
            let gt: GroundTruthFile = read_json(&gt_path).map_err(CliError::at(&gt_path))?;
            fixtures.push((fixture, gt));
        }
    }

    let criteria = HitCriteria::default();
    let mut rows = Vec::with_capacity(cells.len());
    for (id, cfg) in &cells {
        let mut counts = Vec::with_capacity(fixtures.len());
        let mut total_time = 0.0;
        for (fixture, gt) in &fixtures {
            let outcome = fixture.register(cfg)?;
            let preds: Vec<_> = outcome.results.iter().map(|r| r.transform).collect();
            counts.push(pair_counts(&preds, &gt.transforms()?, &criteria, gt.resolution));
            total_time += outcome.wall_time;
        }
        let report = compute_metrics(&counts)?;
        rows.push(Row {
            config_id: id.clone(),
            mhr: report.mhr,
            mhp: report.mhp,
            mhf1: report.mhf1,
            mean_time: total_time / fixtures.len().max(1) as f64,
        });
    }

    let out = match &args.out {
        Some(p) => p.clone(),
        None => std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")).join("ablation.csv"),
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    let mut w = csv::Writer::from_path(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    if rows.is_empty() {
        w.write_record(["config_id", "mhr", "mhp", "mhf1", "mean_time"])?;
    }
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> GridSpec {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn overlap_sweep_expands_to_three_cells() {
        let cells = expand(&spec(r#"{"groups":[{"validation":["global"],"t_overlap":[0.8,0.85,0.9]}]}"#), &PipelineConfig::synthetic()).unwrap();
        assert_eq!(cells.len(), 3);
        assert!(cells.values().all(|c| c.validation_mode == ValidationMode::Global));
        let ids: Vec<_> = cells.keys().collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn groups_union_and_dedupe() {
        let cells = expand(
            &spec(r#"{"groups":[{"validation":["local"],"t_inliers":[50,100,150]},{"validation":["local"],"t_inliers":[100]},{"solver":["gsac","ransac"],"n_gsac":[20]}]}"#),
            &PipelineConfig::synthetic(),
        )
        .unwrap();
        assert_eq!(cells.len(), 5);
    }

    #[test]
    fn empty_grids() {
        assert!(expand(&spec(r#"{"groups":[]}"#), &PipelineConfig::synthetic()).unwrap().is_empty());
        assert!(expand(&spec(r#"{"groups":[{"t_overlap":[]}]}"#), &PipelineConfig::synthetic()).unwrap().is_empty());
    }

    #[test]
    fn invalid_cell_is_a_usage_error() {
        let err = expand(&spec(r#"{"groups":[{"t_overlap":[1.5]}]}"#), &PipelineConfig::synthetic()).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
        assert!(serde_json::from_str::<GridSpec>(r#"{"groups":[{"bogus":[1]}]}"#).is_err());
    }
}
