//! Run configuration: one JSON document shared by every command.
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use raremap::metamodel::MetamodelConfig;
use raremap::quantizer::LloydConfig;
use raremap::sampling::{derive_seed, InputLaw};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream; sub-seeds are derived by name.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub densities: Option<Densities>,
    #[serde(default)]
    pub quantizer: QuantizerSection,
    #[serde(default)]
    pub metamodel: MetamodelConfig,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub io: IoSection,
}

/// The input law `f` and the importance density `g` (defaults to `f`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Densities {
    pub f: InputLaw,
    #[serde(default)]
    pub g: Option<InputLaw>,
}

impl Densities {
    pub fn g(&self) -> &InputLaw {
        self.g.as_ref().unwrap_or(&self.f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    /// Maps at the volume quantiles of the iteration sample.
    VolumeQuantiles,
    /// Prototypes read from a map archive.
    Archive(PathBuf),
    /// Prototypes given inline, one row-major pixel list each.
    Values(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizerSection {
    pub ell: usize,
    pub n_maps: usize,
    pub n_tilde: usize,
    pub min_distance: f64,
    pub max_iterations: usize,
    pub init: Initialization,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        Self {
            ell: 5,
            n_maps: 100_000,
            n_tilde: 1_000_000,
            min_distance: 1e-16,
            max_iterations: 100,
            init: Initialization::VolumeQuantiles,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub n_gamma: usize,
    /// Relative standard deviation of the prototype perturbations.
    pub scale: f64,
    pub n_boot: usize,
    /// Evaluation sample size; `None` uses every map of the truth archive.
    pub n_e: Option<usize>,
    /// Folds of the cross-validation run after `fit` (0 or 1 disables it).
    pub cv_folds: usize,
    /// Bins per axis of the FPCA-plane histogram.
    pub fpca_bins: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            n_gamma: 100,
            scale: 0.1,
            n_boot: 100,
            n_e: None,
            cv_folds: 5,
            fpca_bins: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapFormat {
    /// Single binary archive.
    Rmq1,
    /// One CSV file per map in a directory.
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSection {
    /// Depth range mapped onto the gray levels; `None` uses the shared
    /// min/max of the rendered maps.
    pub range: Option<(f64, f64)>,
    pub png: bool,
    /// Depth of the contour drawn on PNG renderings.
    pub contour: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    /// Input vectors, one CSV row each (with a header line).
    pub inputs: Option<PathBuf>,
    /// Training maps aligned with `inputs`.
    pub maps: Option<PathBuf>,
    /// Simulator maps aligned with `inputs`, for `metrics`.
    pub truth: Option<PathBuf>,
    /// Metamodel bundle written by `fit` and read by the other commands.
    pub bundle: Option<PathBuf>,
    /// Prototype archive used to define cells in `fpca-axes`.
    pub prototypes: Option<PathBuf>,
    pub output: PathBuf,
    pub format: MapFormat,
    pub image: ImageSection,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            inputs: None,
            maps: None,
            truth: None,
            bundle: None,
            prototypes: None,
            output: PathBuf::from("out"),
            format: MapFormat::Rmq1,
            image: ImageSection::default(),
        }
    }
}

/// Sub-seed names; each random stream of a run draws from one of them.
pub mod streams {
    pub const SAMPLING: &str = "sampling";
    pub const PERTURBATION: &str = "perturbation";
    pub const BOOTSTRAP: &str = "bootstrap";
    pub const FOREST: &str = "forest";
    pub const GP: &str = "gp";
    pub const CROSS_VALIDATION: &str = "cross-validation";
}

impl RunConfig {
    /// Reads, validates and resolves a config file.
    pub fn load(path: &Path, seed_override: Option<u64>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: invalid config: {e}", path.display())))?;
        if let Some(s) = seed_override {
            cfg.seed = s;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Anchors relative paths at `base` and fills derived seeds.
    pub fn resolve(&mut self, base: &Path) {
        let anchor = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        anchor(&mut self.io.inputs);
        anchor(&mut self.io.maps);
        anchor(&mut self.io.truth);
        anchor(&mut self.io.bundle);
        anchor(&mut self.io.prototypes);
        if self.io.output.is_relative() {
            self.io.output = base.join(&self.io.output);
        }
        if let Initialization::Archive(p) = &mut self.quantizer.init {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self.metamodel.forest.seed = self.sub_seed(streams::FOREST);
        self.metamodel.gp.seed = self.sub_seed(streams::GP);
    }

    pub fn sub_seed(&self, stream: &str) -> u64 {
        derive_seed(self.seed, stream)
    }

    fn validate(&self) -> CliResult<()> {
        if let Some(d) = &self.densities {
            d.f.validate().map_err(|e| CliError::Usage(format!("densities.f: {e}")))?;
            d.g().validate().map_err(|e| CliError::Usage(format!("densities.g: {e}")))?;
            if d.f.dim() != d.g().dim() {
                return Err(CliError::Usage(format!(
                    "densities.f has dimension {} but densities.g has {}",
                    d.f.dim(),
                    d.g().dim()
                )));
            }
        }
        if self.metrics.fpca_bins == 0 {
            return Err(CliError::Usage("metrics.fpca_bins must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.io.image.range {
            if !(lo < hi) {
                return Err(CliError::Usage(format!("io.image.range needs lo < hi, got ({lo}, {hi})")));
            }
        }
        self.lloyd().validate().map_err(|e| CliError::Usage(format!("quantizer: {e}")))
    }

    pub fn densities(&self) -> CliResult<&Densities> {
        self.densities
            .as_ref()
            .ok_or_else(|| CliError::Usage("this command needs a `densities` section".into()))
    }

    pub fn lloyd(&self) -> LloydConfig {
        LloydConfig {
            ell: self.quantizer.ell,
            n_maps: self.quantizer.n_maps,
            n_tilde: self.quantizer.n_tilde,
            min_distance: self.quantizer.min_distance,
            max_iterations: self.quantizer.max_iterations,
            seed: self.sub_seed(streams::SAMPLING),
        }
    }

    /// A path of the `io` section, or a usage error naming the missing key.
    pub fn require<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
        p.as_deref()
            .ok_or_else(|| CliError::Usage(format!("io.{key} is required for this command")))
    }

    pub fn bundle_path(&self) -> PathBuf {
        self.io
            .bundle
            .clone()
            .unwrap_or_else(|| self.io.output.join("bundle.json"))
    }
}
