use std::path::Path;

use trendscope_core::corpus::default_anchors;
use trendscope_core::synth::{generate, SynthParams};

use crate::config::RunConfig;
use crate::error::{CliError, StageExt};

pub const RUN_CONFIG_FILE: &str = "run.toml";

pub fn load_params(path: &Path) -> Result<SynthParams, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Pipeline settings sized for a generated corpus.
pub fn fixture_config(params: &SynthParams) -> RunConfig {
    let mut config = RunConfig::default();
    config.k = params.clusters;
    config.periods = params.years;
    config.radius_km = config.radius_km.max(params.scatter_km);
    let years = (params.years.end - params.years.start + 1) as usize;
    let per_city = params.per_bucket * years;
    config.spatial.train_n = 50;
    config.spatial.test_n = 10;
    config.spatial.sample_size = (per_city / 4).clamp(1, 1_000);
    config.paths.manifest = Some("manifest.jsonl".into());
    config.paths.vectors = Some("vectors.tlvb".into());
    if params.cities != default_anchors() {
        config.paths.anchors = Some("anchors.json".into());
    }
    config.paths.out = "run".into();
    config
}

/// Writes the corpus, its ground truth and a ready-to-run `run.toml` into `out`.
pub fn write_fixture(params: &SynthParams, out: &Path) -> Result<RunConfig, CliError> {
    let corpus = generate(params).stage("synth")?;
    corpus.write_to_dir(out).stage("synth")?;
    let config = fixture_config(params);
    if config.paths.anchors.is_some() {
        let json = serde_json::to_vec_pretty(&params.cities).expect("anchors serialize");
        std::fs::write(out.join("anchors.json"), json).stage("synth")?;
    }
    std::fs::write(out.join(RUN_CONFIG_FILE), config.to_toml()).stage("synth")?;
    Ok(config)
}
