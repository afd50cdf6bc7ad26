//! `quantize`: the prototype maps algorithm on a metamodel or an analytic
//! map generator.

use std::path::Path;

use clap::ValueEnum;
use raremap::campbell::{CampbellModel, INPUT_DIM};
use raremap::quantizer::{
    prototype_maps_algorithm, prototype_maps_from_quantiles, IdentityPredictor, MapPredictor,
    QuantizationResult,
};
use raremap::{GridMap, InnerProductWeights, MapSet, PrototypeSet};
use serde::Serialize;

use super::{frequency, write_json, write_metadata, Bundle};
use crate::archive::{archive_name, read_maps, write_bytes, write_maps};
use crate::config::{ImageSection, Initialization, RunConfig};
use crate::error::{CliError, CliResult};
use crate::render;

/// Built-in map generators usable instead of a metamodel bundle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Analytic {
    /// The Campbell2D function on the 64×64 grid.
    Campbell,
    /// Scalar inputs taken as 1×1 maps.
    Identity,
}

#[derive(Serialize)]
struct ResultFile<'a> {
    config: &'a RunConfig,
    predictor: String,
    ell: usize,
    iterations: usize,
    converged: bool,
    last_movement: f64,
    mean_weight: f64,
    probabilities: &'a [f64],
    /// `round(1/p)`: the cell holds one map in this many.
    frequencies: Vec<Option<u64>>,
    error_trace: &'a [f64],
}

/// Initial prototypes from the config, checked against the map side.
pub fn initial_prototypes(init: &Initialization, side: usize) -> CliResult<Option<PrototypeSet>> {
    let set = match init {
        Initialization::VolumeQuantiles => return Ok(None),
        Initialization::Archive(p) => {
            let maps = read_maps(p)?;
            if maps.side() != side {
                return Err(CliError::Data(format!(
                    "{}: prototypes of side {} for maps of side {side}",
                    p.display(),
                    maps.side()
                )));
            }
            PrototypeSet::new(maps.to_maps())?
        }
        Initialization::Values(v) => PrototypeSet::new(
            v.iter()
                .map(|m| GridMap::new(side, m.clone()))
                .collect::<raremap::Result<Vec<_>>>()
                .map_err(|e| CliError::Usage(format!("quantizer.init: {e}")))?,
        )?,
    };
    Ok(Some(set))
}

/// PGM (and optionally PNG) renderings `{stem}_{j}` of a map set, sharing
/// one value range.
pub fn render_all(dir: &Path, stem: &str, maps: &MapSet, image: &ImageSection) -> CliResult<()> {
    let range = image.range.unwrap_or_else(|| render::shared_range(maps));
    for (j, m) in maps.iter().enumerate() {
        let name = format!("{stem}_{:02}", j + 1);
        write_bytes(&dir.join(format!("{name}.pgm")), &render::pgm(m, maps.side(), range))?;
        if image.png {
            let bytes = render::png(m, maps.side(), range, image.contour)?;
            write_bytes(&dir.join(format!("{name}.png")), &bytes)?;
        }
    }
    Ok(())
}

fn trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("iteration,error\n");
    for (k, e) in trace.iter().enumerate() {
        s.push_str(&format!("{k},{e}\n"));
    }
    s
}

pub fn run(cfg: &RunConfig, analytic: Option<Analytic>) -> CliResult<()> {
    let d = cfg.densities()?;
    let (f, g) = (&d.f, d.g());
    let campbell = CampbellModel::default();
    let bundle;
    let (predictor, label, expected_dim): (&dyn MapPredictor, String, Option<usize>) = match analytic {
        Some(Analytic::Campbell) => (&campbell, "campbell".into(), Some(INPUT_DIM)),
        Some(Analytic::Identity) => (&IdentityPredictor, "identity".into(), Some(1)),
        None => {
            let path = cfg.bundle_path();
            bundle = Bundle::load(&path)?;
            (&bundle.model, format!("bundle:{}", path.display()), Some(bundle.model.input_dim))
        }
    };
    if let Some(dim) = expected_dim {
        if f.dim() != dim {
            return Err(CliError::Usage(format!(
                "the {label} predictor takes {dim} inputs but densities.f has {}",
                f.dim()
            )));
        }
    }
    let side = predictor.side();
    let w = InnerProductWeights::uniform(side);
    let lloyd = cfg.lloyd();
    let result: QuantizationResult = match initial_prototypes(&cfg.quantizer.init, side)? {
        None => prototype_maps_from_quantiles(&lloyd, predictor, f, g, &w)?,
        Some(init) => prototype_maps_algorithm(&lloyd, predictor, f, g, init, &w)?,
    };

    let out = &cfg.io.output;
    let protos = MapSet::from_maps(result.prototypes.prototypes())?;
    write_maps(&out.join(archive_name("prototypes", cfg.io.format)), &protos, cfg.io.format)?;
    write_json(
        &out.join("result.json"),
        &ResultFile {
            config: cfg,
            predictor: label,
            ell: lloyd.ell,
            iterations: result.iterations,
            converged: result.converged,
            last_movement: result.last_movement,
            mean_weight: result.mean_weight,
            probabilities: &result.probabilities,
            frequencies: result.probabilities.iter().map(|p| frequency(*p)).collect(),
            error_trace: &result.error_trace,
        },
    )?;
    write_bytes(&out.join("error_trace.csv"), trace_csv(&result.error_trace).as_bytes())?;
    render_all(out, "prototype", &protos, &cfg.io.image)?;
    write_metadata(out, "quantize")?;
    println!(
        "{} prototypes after {} iterations (converged: {}); probabilities {:?}",
        lloyd.ell, result.iterations, result.converged, result.probabilities
    );
    Ok(())
}
