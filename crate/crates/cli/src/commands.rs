use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use ibi_core::eval::{compute_metrics, pair_counts, HitCriteria};
use ibi_core::geometry::cloud_resolution;
use ibi_core::io::{read_json, read_ply, write_json, write_ply, CorrespondenceFile, GroundTruthFile, MetricsFile, PosesFile};
use ibi_core::pipeline::run_ibi_with_ratios;
use ibi_core::synth::{synthesize_from, builtin_model, SceneRecipe, MAX_INSTANCES};
use ibi_core::PipelineConfig;

use crate::error::{CliError, CliResult};
use crate::{EvaluateArgs, Preset, RegisterArgs, SynthArgs};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Everything needed to reproduce one `register` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    pub rng_seed: u64,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    /// Seconds; the only field that differs between identical runs.
    pub wall_time: f64,
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    if !(1..=MAX_INSTANCES).contains(&args.instances) {
        return Err(CliError::Usage(format!("--instances must lie in 1..={MAX_INSTANCES}, got {}", args.instances)));
    }
    let model = match &args.model {
        Some(p) => read_ply(p).map_err(CliError::at(p))?,
        None => builtin_model(args.model_points, 0),
    };
    let recipe = SceneRecipe {
        instances: args.instances,
        model_points: model.len(),
        clutter_count: args.clutter,
        inliers_per_instance: args.inliers,
        outlier_ratio: args.outlier_ratio,
        noise_sigma: args.noise,
        min_separation: args.min_separation,
        seed: args.seed,
    };
    match args.scenes {
        None => write_scene(&args.out, &model, &recipe),
        Some(n) => {
            let width = n.saturating_sub(1).to_string().len().max(3);
            (0..n).try_for_each(|i| {
                let recipe = SceneRecipe { seed: args.seed.wrapping_add(i as u64), ..recipe };
                write_scene(&args.out.join(format!("scene_{i:0width$}")), &model, &recipe)
            })
        }
    }
}

fn write_scene(dir: &Path, model: &ibi_core::PointCloud, recipe: &SceneRecipe) -> CliResult<()> {
    let (gt, labeled) = synthesize_from(model, recipe)?;
    let resolution = cloud_resolution(&gt.model)?;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let out = |name: &str| dir.join(name);
    write_ply(&out("model.ply"), &gt.model).map_err(CliError::at(&out("model.ply")))?;
    write_ply(&out("scene.ply"), &gt.scene).map_err(CliError::at(&out("scene.ply")))?;
    write_json(&out("gt.json"), &GroundTruthFile::new(&gt, resolution, Some(&labeled))).map_err(CliError::at(&out("gt.json")))?;
    write_json(&out("corrs.json"), &CorrespondenceFile::from_set(&labeled.set)).map_err(CliError::at(&out("corrs.json")))?;
    Ok(())
}

pub fn preset_config(preset: Preset) -> PipelineConfig {
    match preset {
        Preset::Synthetic => PipelineConfig::synthetic(),
        Preset::Real => PipelineConfig::real(),
    }
}

/// Overlays the fields of a JSON object onto `base`. Unknown fields are
/// rejected by the config's own deserializer.
pub fn overlay_config(base: &PipelineConfig, patch: &Value) -> CliResult<PipelineConfig> {
    let Value::Object(fields) = patch else {
        return Err(CliError::Usage("config must be a JSON object".into()));
    };
    let mut merged = serde_json::to_value(base).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Value::Object(m) = &mut merged {
        for (k, v) in fields {
            m.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("bad config: {e}")))
}

fn resolve_config(args: &RegisterArgs) -> CliResult<PipelineConfig> {
    let mut cfg = preset_config(args.preset);
    if let Some(path) = &args.config {
        let patch: Value = read_json(path).map_err(CliError::at(path))?;
        cfg = overlay_config(&cfg, &patch)?;
    }
    if let Some(v) = args.validation {
        cfg.validation_mode = v.into();
    }
    if let Some(s) = args.solver {
        cfg.solver_mode = s.into();
    }
    if let Some(m) = args.seed_mode {
        cfg.seed_mode = m.into();
    }
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Inputs of one registration problem, loaded from disk.
pub struct Fixture {
    pub source: ibi_core::PointCloud,
    pub target: ibi_core::PointCloud,
    pub corrs: CorrespondenceFile,
}

impl Fixture {
    pub fn load(model: &Path, scene: &Path, corrs: &Path) -> CliResult<Self> {
        Ok(Self {
            source: read_ply(model).map_err(CliError::at(model))?,
            target: read_ply(scene).map_err(CliError::at(scene))?,
            corrs: read_json(corrs).map_err(CliError::at(corrs))?,
        })
    }

    pub fn register(&self, cfg: &PipelineConfig) -> CliResult<ibi_core::RegistrationOutcome> {
        let set = self.corrs.to_set()?;
        let ratios = self.corrs.ratios();
        Ok(run_ibi_with_ratios(&set, ratios.as_ref(), &self.source, &self.target, cfg)?)
    }
}

pub fn register(args: &RegisterArgs) -> CliResult<()> {
    let cfg = resolve_config(args)?;
    let fixture = Fixture::load(&args.model, &args.scene, &args.corrs)?;
    let outcome = fixture.register(&cfg)?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    let poses_path = args.out.join("poses.json");
    let manifest_path = args.out.join("manifest.json");
    write_json(&poses_path, &PosesFile::from_outcome(&outcome)).map_err(CliError::at(&poses_path))?;

    let mut inputs = BTreeMap::new();
    inputs.insert("model".to_string(), args.model.clone());
    inputs.insert("scene".to_string(), args.scene.clone());
    inputs.insert("corrs".to_string(), args.corrs.clone());
    if let Some(c) = &args.config {
        inputs.insert("config".to_string(), c.clone());
    }
    let manifest = RunManifest {
        version: VERSION.to_string(),
        rng_seed: cfg.rng_seed,
        config: cfg,
        inputs,
        outputs: BTreeMap::from([("poses".to_string(), poses_path)]),
        wall_time: outcome.wall_time,
    };
    write_json(&manifest_path, &manifest).map_err(CliError::at(&manifest_path))?;
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    if args.poses.len() != args.gt.len() {
        return Err(CliError::Usage(format!("{} --poses files but {} --gt files", args.poses.len(), args.gt.len())));
    }
    let criteria = HitCriteria { rre_max: args.rre_max, rte_max: args.rte_max };
    if !(criteria.rre_max >= 0.0 && criteria.rte_max >= 0.0) {
        return Err(CliError::Usage("hit bounds must be nonnegative".into()));
    }
    let mut counts = Vec::with_capacity(args.poses.len());
    let mut times = Vec::new();
    for (poses_path, gt_path) in args.poses.iter().zip(&args.gt) {
        let poses: PosesFile = read_json(poses_path).map_err(CliError::at(poses_path))?;
        let gt: GroundTruthFile = read_json(gt_path).map_err(CliError::at(gt_path))?;
        counts.push(pair_counts(&poses.transforms()?, &gt.transforms()?, &criteria, gt.resolution));
        if let Some(t) = sibling_wall_time(poses_path) {
            times.push(t);
        }
    }
    let mut report = compute_metrics(&counts)?;
    if !times.is_empty() {
        report.mean_time = times.iter().sum::<f64>() / times.len() as f64;
    }
    fs::create_dir_all(&args.out).map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    let path = args.out.join("metrics.json");
    write_json(&path, &MetricsFile { criteria, report }).map_err(CliError::at(&path))?;
    Ok(())
}

/// Wall time from the `manifest.json` written next to a poses file, if any.
fn sibling_wall_time(poses_path: &Path) -> Option<f64> {
    let manifest = poses_path.parent()?.join("manifest.json");
    let m: RunManifest = read_json(&manifest).ok()?;
    Some(m.wall_time)
}
