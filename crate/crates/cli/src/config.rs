//! Experiment configuration.
//!
//! The TOML document has a `[scene]` table (a [`SceneSpec`]), a `[solver]`
//! table holding shared solver settings, and optional `[overrides.<method>]`
//! tables. Solver keys use the field names of [`SolverConfig`], so nested
//! settings can be written with dotted keys, e.g. `cd.step_size = "greedy"`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sparse_gn::solvers::{Method, SolverConfig};
use sparse_gn::synth::{BlendshapeScene, SceneSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneSpec,
    /// Load this scene instead of generating one per seed.
    pub scene_path: Option<PathBuf>,
    pub noise_levels: Vec<f64>,
    pub methods: Vec<Method>,
    pub base_seed: u64,
    pub seed_count: usize,
    pub solver: toml::Table,
    pub overrides: BTreeMap<String, toml::Table>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            scene_path: None,
            noise_levels: vec![0.0, 0.005, 0.01],
            methods: Method::ALL.to_vec(),
            base_seed: 0,
            seed_count: 5,
            solver: toml::Table::new(),
            overrides: BTreeMap::new(),
        }
    }
}

/// Fully resolved settings for a run, also written as the provenance header of every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedExperiment {
    pub schema_version: u32,
    pub scene: SceneSpec,
    pub scene_path: Option<PathBuf>,
    pub noise_levels: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub solvers: BTreeMap<Method, SolverConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid experiment config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        if self.methods.is_empty() {
            bail!("at least one method is required");
        }
        if self.seed_count == 0 {
            bail!("seed_count must be at least 1");
        }
        if self.noise_levels.is_empty() {
            bail!("at least one noise level is required");
        }
        if let Some(bad) = self.noise_levels.iter().find(|a| a.is_nan() || **a < 0.0) {
            bail!("noise level {bad} is negative");
        }
        if self.scene_path.is_none() {
            self.scene.validate()?;
        }
        for name in self.overrides.keys() {
            name.parse::<Method>()
                .with_context(|| format!("[overrides.{name}]"))?;
        }
        let mut solvers = BTreeMap::new();
        for &method in &self.methods {
            solvers.insert(method, self.solver_config(method)?);
        }
        Ok(ResolvedExperiment {
            schema_version: SCHEMA_VERSION,
            scene: self.scene.clone(),
            scene_path: self.scene_path.clone(),
            noise_levels: self.noise_levels.clone(),
            methods: self.methods.clone(),
            seeds: (0..self.seed_count as u64)
                .map(|i| self.base_seed + i)
                .collect(),
            solvers,
        })
    }

    /// Defaults for `method`, then `[solver]`, then `[overrides.<method>]`.
    pub fn solver_config(&self, method: Method) -> Result<SolverConfig> {
        let mut merged = serde_json::to_value(SolverConfig::with_method(method))?;
        merge(&mut merged, serde_json::to_value(&self.solver)?);
        if let Some(extra) = self.overrides.get(method.name()) {
            merge(&mut merged, serde_json::to_value(extra)?);
        }
        merged["method"] = serde_json::to_value(method)?;
        let config: SolverConfig = serde_json::from_value(merged)
            .with_context(|| format!("solver settings for {method}"))?;
        config
            .validate()
            .with_context(|| format!("solver settings for {method}"))?;
        Ok(config)
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ResolvedExperiment {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn solver(&self, method: Method) -> &SolverConfig {
        &self.solvers[&method]
    }

    pub fn load_fixed_scene(&self) -> Result<Option<BlendshapeScene>> {
        match &self.scene_path {
            None => Ok(None),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let scene = BlendshapeScene::from_json(&text)
                    .with_context(|| format!("in {}", path.display()))?;
                Ok(Some(scene))
            }
        }
    }
}
