use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trendscope_core::codebook::{DEFAULT_K, DEFAULT_TRAIN_CAP};
use trendscope_core::features::FusionPlan;
use trendscope_core::spatial::{ClassifierKind, SimilarityMeasure, DEFAULT_GRAPH_THRESHOLD};
use trendscope_core::trend::DEFAULT_THRESHOLD;
use trendscope_core::YearRange;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    /// Pre-trained codebook header; when absent the pipeline fits one.
    pub codebook: Option<PathBuf>,
    /// JSON city anchor table; built-in anchors when absent.
    pub anchors: Option<PathBuf>,
    pub out: PathBuf,
}

/// One seed per source of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub sample: u64,
    pub kmeans: u64,
    pub split: u64,
    pub pca: u64,
    pub display: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            sample: 1,
            kmeans: 2,
            split: 3,
            pca: 4,
            display: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookSection {
    pub max_iter: usize,
    pub tol: f64,
    /// Upper bound on vectors used to fit the dictionary.
    pub train_cap: usize,
    /// k-means seedings tried; the lowest-inertia one is kept.
    pub n_init: usize,
}

impl Default for CodebookSection {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-4,
            train_cap: DEFAULT_TRAIN_CAP,
            n_init: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialSection {
    pub train_n: usize,
    pub test_n: usize,
    pub sample_size: usize,
    pub svm_c: f64,
    /// `None` means `1 / k`.
    pub svm_gamma: Option<f64>,
}

impl Default for SpatialSection {
    fn default() -> Self {
        Self {
            train_n: 500,
            test_n: 100,
            sample_size: 10_000,
            svm_c: 0.01,
            svm_gamma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: usize,
    pub threshold: f64,
    pub radius_km: f64,
    pub graph_threshold: f64,
    pub measure: SimilarityMeasure,
    pub classifier: ClassifierKind,
    pub periods: YearRange,
    /// Rising bins per city illustrated with exemplars.
    pub top_n: usize,
    pub exemplars_per_bin: usize,
    /// Random subset of each exemplar list kept for display, drawn with the
    /// display seed. `None` keeps the full nearest list.
    pub exemplar_display: Option<usize>,
    pub seeds: Seeds,
    pub paths: Paths,
    pub codebook: CodebookSection,
    pub spatial: SpatialSection,
    pub fusion: Option<FusionPlan>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            radius_km: 100.0,
            graph_threshold: DEFAULT_GRAPH_THRESHOLD,
            measure: SimilarityMeasure::Cosine,
            classifier: ClassifierKind::NearestClassMean,
            periods: YearRange::DEFAULT,
            top_n: 3,
            exemplars_per_bin: 9,
            exemplar_display: None,
            seeds: Seeds::default(),
            paths: Paths {
                out: PathBuf::from("out"),
                ..Paths::default()
            },
            codebook: CodebookSection::default(),
            spatial: SpatialSection::default(),
            fusion: None,
        }
    }
}

impl RunConfig {
    /// Parses TOML; relative paths are resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.paths.resolve_against(base);
        }
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Validation(m));
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return fail(format!("threshold must be finite and >= 0, got {}", self.threshold));
        }
        if !(self.radius_km > 0.0 && self.radius_km.is_finite()) {
            return fail(format!("radius_km must be positive, got {}", self.radius_km));
        }
        if !(0.0..=1.0).contains(&self.graph_threshold) {
            return fail(format!("graph_threshold must be in [0, 1], got {}", self.graph_threshold));
        }
        if self.periods.start > self.periods.end {
            return fail(format!("period range {}..={} is empty", self.periods.start, self.periods.end));
        }
        if self.codebook.max_iter == 0 || self.codebook.n_init == 0 || !(self.codebook.tol >= 0.0) || self.codebook.train_cap == 0 {
            return fail("codebook needs max_iter >= 1, n_init >= 1, tol >= 0 and train_cap >= 1".into());
        }
        let s = &self.spatial;
        if s.train_n == 0 || s.test_n == 0 || s.sample_size == 0 {
            return fail("spatial train_n, test_n and sample_size must be positive".into());
        }
        if !(s.svm_c > 0.0) || s.svm_gamma.is_some_and(|g| !(g > 0.0)) {
            return fail("svm_c and svm_gamma must be positive".into());
        }
        Ok(())
    }
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.manifest, &mut self.vectors, &mut self.codebook, &mut self.anchors]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.out);
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub k: Option<usize>,
    pub threshold: Option<f64>,
    pub radius_km: Option<f64>,
    pub graph_threshold: Option<f64>,
    pub measure: Option<SimilarityMeasure>,
    pub classifier: Option<ClassifierKind>,
    pub seed_sample: Option<u64>,
    pub seed_kmeans: Option<u64>,
    pub seed_split: Option<u64>,
    pub seed_pca: Option<u64>,
    pub seed_display: Option<u64>,
}

impl Overrides {
    pub fn apply(self, config: &mut RunConfig) {
        fn set<T>(slot: &mut T, value: Option<T>) {
            if let Some(v) = value {
                *slot = v;
            }
        }
        let p = &mut config.paths;
        for (slot, value) in [
            (&mut p.manifest, self.manifest),
            (&mut p.vectors, self.vectors),
            (&mut p.codebook, self.codebook),
            (&mut p.anchors, self.anchors),
        ] {
            if value.is_some() {
                *slot = value;
            }
        }
        set(&mut p.out, self.out);
        set(&mut config.k, self.k);
        set(&mut config.threshold, self.threshold);
        set(&mut config.radius_km, self.radius_km);
        set(&mut config.graph_threshold, self.graph_threshold);
        set(&mut config.measure, self.measure);
        set(&mut config.classifier, self.classifier);
        let s = &mut config.seeds;
        set(&mut s.sample, self.seed_sample);
        set(&mut s.kmeans, self.seed_kmeans);
        set(&mut s.split, self.seed_split);
        set(&mut s.pca, self.seed_pca);
        set(&mut s.display, self.seed_display);
    }
}

/// Defaults, then the file if given, then flags.
pub fn resolve(file: Option<&Path>, overrides: Overrides) -> Result<RunConfig, CliError> {
    let mut config = match file {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}
