//! `campbell-demo`: a synthetic map database from the Campbell2D function.

use clap::ValueEnum;
use raremap::campbell::{CampbellModel, INPUT_DIM, SUPPORTS};
use raremap::quantizer::MapPredictor;
use raremap::sampling::{sample, sobol_design};
use raremap::MapSet;

use super::write_metadata;
use crate::archive::{archive_name, write_bytes, write_inputs, write_maps};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::render;

/// Where the demo inputs come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Design {
    /// The first points of the Sobol sequence, scaled to the supports.
    Sobol,
    /// Random draws from `densities.f`.
    F,
    /// Random draws from `densities.g`.
    G,
}

pub fn design_inputs(cfg: &RunConfig, design: Design, n: usize) -> CliResult<Vec<Vec<f64>>> {
    let inputs = match design {
        Design::Sobol => sobol_design(INPUT_DIM, n)?
            .into_iter()
            .map(|u| {
                u.iter()
                    .zip(SUPPORTS)
                    .map(|(t, (lo, hi))| lo + t * (hi - lo))
                    .collect()
            })
            .collect(),
        Design::F | Design::G => {
            let d = cfg.densities()?;
            let law = if design == Design::F { &d.f } else { d.g() };
            if law.dim() != INPUT_DIM {
                return Err(CliError::Usage(format!(
                    "Campbell inputs have {INPUT_DIM} coordinates but the density has {}",
                    law.dim()
                )));
            }
            sample(law, n, cfg.lloyd().seed)?
        }
    };
    Ok(inputs)
}

pub fn run(cfg: &RunConfig, samples: usize, design: Design) -> CliResult<()> {
    if samples == 0 {
        return Err(CliError::Usage("--samples must be >= 1".into()));
    }
    let inputs = design_inputs(cfg, design, samples)?;
    let maps: MapSet = CampbellModel::default().predict_batch(&inputs)?;
    let out = &cfg.io.output;
    write_inputs(&out.join("inputs.csv"), &inputs)?;
    let archive = out.join(archive_name("maps", cfg.io.format));
    write_maps(&archive, &maps, cfg.io.format)?;
    let first = maps.get(0);
    let range = cfg.io.image.range.unwrap_or_else(|| render::shared_range(&maps));
    write_bytes(&out.join("map_000001.pgm"), &render::pgm(first, maps.side(), range))?;
    write_metadata(out, "campbell-demo")?;
    println!("{samples} Campbell maps written to {}", archive.display());
    Ok(())
}
