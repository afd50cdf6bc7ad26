//! `fit`: train the hurdle/FPCA/GP metamodel on a map database.

use raremap::metamodel::{cross_validate, fit_metamodel};
use raremap::metrics::{summarize, Summary};
use raremap::MapSet;
use serde::Serialize;

use super::{check_dim, write_json, write_metadata, Bundle, BUNDLE_FORMAT, BUNDLE_VERSION};
use crate::archive::{read_inputs, read_maps, write_bytes};
use crate::config::{streams, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Serialize)]
struct CvSummary<'a> {
    config: &'a RunConfig,
    folds: usize,
    maps: usize,
    /// `‖ŷ − y‖ / ‖y‖` per map; undefined for empty maps.
    relative_error: Summary,
    /// Empty maps whose out-of-fold prediction is exactly empty.
    empty_predicted_empty: usize,
    empty_maps: usize,
}

fn relative_errors(truth: &MapSet, pred: &MapSet) -> Vec<Option<f64>> {
    truth
        .iter()
        .zip(pred.iter())
        .map(|(y, p)| {
            let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff: f64 = y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            (norm > 0.0).then(|| diff / norm)
        })
        .collect()
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let inputs = read_inputs(cfg.require(&cfg.io.inputs, "inputs")?)?;
    let maps = read_maps(cfg.require(&cfg.io.maps, "maps")?)?;
    if inputs.len() != maps.len() {
        return Err(CliError::Data(format!(
            "{} input rows but {} maps in the archive",
            inputs.len(),
            maps.len()
        )));
    }
    check_dim(&inputs, inputs[0].len(), "inputs")?;
    let model = fit_metamodel(&inputs, &maps, &cfg.metamodel)?;
    let bundle = Bundle {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        config: cfg.clone(),
        model,
    };
    let path = cfg.bundle_path();
    let text = serde_json::to_vec(&bundle).map_err(|e| CliError::Data(e.to_string()))?;
    write_bytes(&path, &text)?;
    println!("metamodel written to {}", path.display());

    let folds = cfg.metrics.cv_folds;
    if folds >= 2 {
        let pred = cross_validate(&inputs, &maps, &cfg.metamodel, folds, cfg.sub_seed(streams::CROSS_VALIDATION))?;
        let errors = relative_errors(&maps, &pred);
        let empty: Vec<usize> = (0..maps.len())
            .filter(|&k| maps.get(k).iter().all(|v| *v == 0.0))
            .collect();
        let summary = CvSummary {
            config: cfg,
            folds,
            maps: maps.len(),
            relative_error: summarize(&errors),
            empty_predicted_empty: empty
                .iter()
                .filter(|&&k| pred.get(k).iter().all(|v| *v == 0.0))
                .count(),
            empty_maps: empty.len(),
        };
        let s = &summary.relative_error;
        println!(
            "{folds}-fold cross-validation on {} maps: relative error median {} (quartiles {} / {}), {} of {} empty maps predicted empty",
            maps.len(),
            fmt(s.median),
            fmt(s.q1),
            fmt(s.q3),
            summary.empty_predicted_empty,
            summary.empty_maps
        );
        write_json(&cfg.io.output.join("cv_summary.json"), &summary)?;
    }
    write_metadata(&cfg.io.output, "fit")
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}
