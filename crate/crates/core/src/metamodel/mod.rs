//! The hurdle map predictor: a classifier gates the empty map, and each
//! input regime has its own FPCA + Gaussian-process surrogate.

pub mod forest;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::{fit_fpca, FpcaModel};
use crate::gp::{fit_gp, GpConfig, GpModel};
use crate::maps::{GridMap, MapSet};
use crate::quantizer::MapPredictor;
use crate::sampling::derive_seed;
pub use forest::{ForestConfig, RandomForest};

/// Which sub-model handles an input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKey {
    /// No regime split.
    All,
    BreachAbsent,
    BreachPresent,
}

impl RegimeKey {
    /// Key of `x` given the breach-location coordinate (`None`: no split).
    pub fn of(x: &[f64], coordinate: Option<usize>) -> RegimeKey {
        match coordinate {
            None => RegimeKey::All,
            Some(c) if x.get(c).copied().unwrap_or(0.0) == 0.0 => RegimeKey::BreachAbsent,
            Some(_) => RegimeKey::BreachPresent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetamodelMode {
    /// Classifier gate plus regime split.
    Hurdle,
    /// A single FPCA + GP set on every training map.
    Plain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetamodelConfig {
    pub mode: MetamodelMode,
    /// A map counts as flooded when its total volume exceeds this.
    pub threshold: f64,
    /// Input coordinate holding the breach location (0 = no breach).
    pub regime_coordinate: Option<usize>,
    pub p_energy: f64,
    pub n_pc: usize,
    pub forest: ForestConfig,
    pub gp: GpConfig,
    /// Smallest number of flooded maps a regime may be fitted on.
    pub min_train: usize,
    pub clip_negatives: bool,
}

impl Default for MetamodelConfig {
    fn default() -> Self {
        Self {
            mode: MetamodelMode::Hurdle,
            threshold: 0.0,
            regime_coordinate: Some(crate::sampling::flood::LOCATION_COORD),
            p_energy: 0.98,
            n_pc: 2,
            forest: ForestConfig::default(),
            gp: GpConfig::default(),
            min_train: 20,
            clip_negatives: true,
        }
    }
}

impl MetamodelConfig {
    /// Settings for an output without an atom at the empty map.
    pub fn plain() -> Self {
        Self {
            mode: MetamodelMode::Plain,
            regime_coordinate: None,
            clip_negatives: false,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HurdleClassifier {
    pub forest: RandomForest,
    pub threshold: f64,
}

impl HurdleClassifier {
    /// `true` when the map at `x` is predicted above the threshold.
    pub fn is_flooded(&self, x: &[f64]) -> bool {
        self.forest.predict(x)
    }
}

/// Trains the gate on `(inputs, labels)`.
pub fn fit_classifier(
    inputs: &[Vec<f64>],
    labels: &[bool],
    cfg: &MetamodelConfig,
) -> Result<HurdleClassifier> {
    Ok(HurdleClassifier {
        forest: RandomForest::fit(inputs, labels, &cfg.forest)?,
        threshold: cfg.threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// No flooded training map: always predicts the empty map.
    Empty,
    Fitted { fpca: FpcaModel, gps: Vec<GpModel> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapMetamodel {
    pub side: usize,
    pub input_dim: usize,
    pub classifier: Option<HurdleClassifier>,
    pub regime_coordinate: Option<usize>,
    pub regimes: Vec<(RegimeKey, Regime)>,
    pub clip_negatives: bool,
}

fn fit_regime(
    inputs: &[Vec<f64>],
    maps: &MapSet,
    idx: &[usize],
    key: RegimeKey,
    cfg: &MetamodelConfig,
) -> Result<Regime> {
    if idx.is_empty() {
        warn!("regime {key:?} has no flooded training map; it predicts the empty map");
        return Ok(Regime::Empty);
    }
    if idx.len() < cfg.min_train.max(2) {
        return Err(Error::InvalidArgument(format!(
            "regime {key:?} has {} flooded training maps, at least {} are needed",
            idx.len(),
            cfg.min_train.max(2)
        )));
    }
    let sub = maps.select(idx);
    let fpca = fit_fpca(&sub, cfg.p_energy, cfg.n_pc)?;
    let x: Vec<Vec<f64>> = idx.iter().map(|&i| inputs[i].clone()).collect();
    let scores: Vec<Vec<f64>> = sub
        .iter()
        .map(|m| fpca.project_values(m))
        .collect::<Result<_>>()?;
    let gps = (0..cfg.n_pc)
        .into_par_iter()
        .map(|j| {
            let z: Vec<f64> = scores.iter().map(|t| t[j]).collect();
            let gp_cfg = GpConfig {
                seed: derive_seed(cfg.gp.seed, &format!("{key:?}/{j}")),
                ..cfg.gp.clone()
            };
            fit_gp(&x, &z, &gp_cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    info!(
        "regime {key:?}: {} maps, {} coefficients kept, explained {:.4}",
        idx.len(),
        fpca.retained_len(),
        fpca.explained_ratio()
    );
    Ok(Regime::Fitted { fpca, gps })
}

/// Fits classifier and per-regime surrogates on a training database.
pub fn fit_metamodel(
    inputs: &[Vec<f64>],
    maps: &MapSet,
    cfg: &MetamodelConfig,
) -> Result<MapMetamodel> {
    if inputs.len() != maps.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs but {} maps",
            inputs.len(),
            maps.len()
        )));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("empty training database".into()));
    }
    let input_dim = inputs[0].len();
    if inputs.iter().any(|x| x.len() != input_dim) {
        return Err(Error::DimensionMismatch("ragged input matrix".into()));
    }
    let (coordinate, classifier, labels) = match cfg.mode {
        MetamodelMode::Plain => (None, None, vec![true; inputs.len()]),
        MetamodelMode::Hurdle => {
            let labels: Vec<bool> = maps
                .iter()
                .map(|m| m.iter().sum::<f64>() > cfg.threshold)
                .collect();
            let clf = fit_classifier(inputs, &labels, cfg)?;
            (cfg.regime_coordinate, Some(clf), labels)
        }
    };
    if let Some(c) = coordinate {
        if c >= input_dim {
            return Err(Error::InvalidArgument(format!(
                "regime coordinate {c} outside inputs of dimension {input_dim}"
            )));
        }
    }
    let keys: Vec<RegimeKey> = match coordinate {
        None => vec![RegimeKey::All],
        Some(_) => vec![RegimeKey::BreachAbsent, RegimeKey::BreachPresent],
    };
    let mut regimes = Vec::new();
    for key in keys {
        let idx: Vec<usize> = (0..inputs.len())
            .filter(|&i| labels[i] && RegimeKey::of(&inputs[i], coordinate) == key)
            .collect();
        regimes.push((key, fit_regime(inputs, maps, &idx, key, cfg)?));
    }
    Ok(MapMetamodel {
        side: maps.side(),
        input_dim,
        classifier,
        regime_coordinate: coordinate,
        regimes,
        clip_negatives: cfg.clip_negatives,
    })
}

impl MapMetamodel {
    pub fn regime(&self, key: RegimeKey) -> Option<&Regime> {
        self.regimes.iter().find(|(k, _)| *k == key).map(|(_, r)| r)
    }

    /// Principal-component scores predicted at `x`, with the regime used;
    /// `None` when the gate or the regime yields the empty map.
    pub fn predict_scores(&self, x: &[f64]) -> Option<(RegimeKey, Vec<f64>)> {
        if let Some(c) = &self.classifier {
            if !c.is_flooded(x) {
                return None;
            }
        }
        let key = RegimeKey::of(x, self.regime_coordinate);
        match self.regime(key)? {
            Regime::Empty => None,
            Regime::Fitted { gps, .. } => Some((key, gps.iter().map(|g| g.predict(x)).collect())),
        }
    }
}

impl MapPredictor for MapMetamodel {
    fn side(&self) -> usize {
        self.side
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "metamodel expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let Some((key, t)) = self.predict_scores(x) else {
            out.fill(0.0);
            return Ok(());
        };
        let Some(Regime::Fitted { fpca, .. }) = self.regime(key) else {
            unreachable!("scores come from a fitted regime");
        };
        fpca.inverse_into(&t, out)?;
        if self.clip_negatives {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(())
    }
}

/// `ŷ(x)`.
pub fn predict_map(model: &MapMetamodel, x: &[f64]) -> Result<GridMap> {
    model.predict(x)
}

/// Out-of-fold predictions of a `k`-fold cross-validation, in input order.
pub fn cross_validate(
    inputs: &[Vec<f64>],
    maps: &MapSet,
    cfg: &MetamodelConfig,
    k: usize,
    seed: u64,
) -> Result<MapSet> {
    let n = inputs.len();
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot run {k}-fold cross-validation on {n} maps"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = crate::sampling::SeedStream::new(seed, "cv-folds").rng(0);
        order.shuffle(&mut rng);
    }
    let px = maps.pixels();
    let mut out = vec![0.0; n * px];
    for fold in 0..k {
        let test: Vec<usize> = order.iter().copied().skip(fold).step_by(k).collect();
        let mut is_test = vec![false; n];
        test.iter().for_each(|&i| is_test[i] = true);
        let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
        let x_train: Vec<Vec<f64>> = train.iter().map(|&i| inputs[i].clone()).collect();
        let model = fit_metamodel(&x_train, &maps.select(&train), cfg)?;
        for &i in &test {
            model.predict_into(&inputs[i], &mut out[i * px..(i + 1) * px])?;
        }
    }
    MapSet::from_flat(maps.side(), out)
}
