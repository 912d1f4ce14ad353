use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use fieldmap_core::pipeline::Timings;
use fieldmap_core::PipelineConfig;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Record of one command invocation, written as `manifest.json` next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Option<PipelineConfig>,
    /// Command parameters that are not part of the pipeline config.
    pub parameters: BTreeMap<String, Value>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub jobs: usize,
    pub timing: Vec<StageTiming>,
}

impl RunManifest {
    pub fn new(command: &'static str, jobs: usize) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: None,
            parameters: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            jobs,
            timing: Vec::new(),
        }
    }

    pub fn input(&mut self, name: impl Into<String>, path: &Path) {
        self.inputs.insert(name.into(), path.display().to_string());
    }

    pub fn output(&mut self, name: impl Into<String>, path: &Path) {
        self.outputs.insert(name.into(), path.display().to_string());
    }

    pub fn param(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("parameters serialize");
        self.parameters.insert(name.to_string(), v);
    }

    pub fn record(&mut self, timings: &Timings) {
        self.timing
            .extend(timings.0.iter().map(|(stage, d)| StageTiming {
                stage: stage.to_string(),
                seconds: d.as_secs_f64(),
            }));
    }

    pub fn write(&self, out_dir: &Path) -> anyhow::Result<()> {
        let path = out_dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}
