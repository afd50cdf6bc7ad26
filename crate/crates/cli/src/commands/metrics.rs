//! `metrics`: metamodel and estimator quality on a truth archive.
//!
//! The reference prototypes `Γ*` come from Lloyd on the simulator maps and
//! `Γ̂*` from Lloyd on the metamodel maps of the same inputs. The per-cell
//! metrics are evaluated on `n_gamma` perturbations `Γ^r` of `Γ*`.

use raremap::metrics::{
    excess_quantization_error, is_centroid_stds, is_probability_cvs, perturb_prototypes,
    relative_probability_errors, summarize, BootstrapConfig, PerturbationConfig, Summary,
};
use raremap::quantizer::{initialize_prototypes, run_lloyd, MapPredictor};
use raremap::{InnerProductWeights, MapSet};
use serde::Serialize;

use super::{check_dim, weights, write_json, write_metadata, Bundle};
use crate::archive::{read_inputs, read_maps, write_bytes};
use crate::config::{streams, RunConfig};
use crate::error::{CliError, CliResult};

pub const RELATIVE_PROBABILITY_ERROR: &str = "relative_probability_error";
pub const PROBABILITY_CV: &str = "is_probability_cv";
pub const CENTROID_STD: &str = "is_centroid_std";
pub const EXCESS_ERROR: &str = "excess_quantization_error";

#[derive(Serialize)]
struct MetricsSummary<'a> {
    config: &'a RunConfig,
    n_e: usize,
    excess_quantization_error: f64,
    relative_probability_error: Summary,
    is_probability_cv: Summary,
    is_centroid_std: Summary,
}

/// One CSV row; `None` fields are written as `NA`.
struct Row {
    r: Option<usize>,
    j: Option<usize>,
    metric: &'static str,
    value: Option<f64>,
}

fn rows_csv(rows: &[Row]) -> CliResult<Vec<u8>> {
    let na = |v: Option<String>| v.unwrap_or_else(|| "NA".into());
    let mut bytes = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        let err = |e: csv::Error| CliError::Data(format!("metrics.csv: {e}"));
        w.write_record(["r", "j", "metric", "value"]).map_err(err)?;
        for row in rows {
            w.write_record([
                na(row.r.map(|r| r.to_string())),
                na(row.j.map(|j| j.to_string())),
                row.metric.to_string(),
                na(row.value.map(|v| v.to_string())),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| CliError::Data(format!("metrics.csv: {e}")))?;
    }
    Ok(bytes)
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let d = cfg.densities()?;
    let bundle = Bundle::load(&cfg.bundle_path())?;
    let mut inputs = read_inputs(cfg.require(&cfg.io.inputs, "inputs")?)?;
    let mut truth = read_maps(cfg.require(&cfg.io.truth, "truth")?)?;
    if inputs.len() != truth.len() {
        return Err(CliError::Data(format!(
            "{} input rows but {} truth maps",
            inputs.len(),
            truth.len()
        )));
    }
    if truth.side() != bundle.model.side {
        return Err(CliError::Data(format!(
            "truth maps have side {} but the metamodel predicts side {}",
            truth.side(),
            bundle.model.side
        )));
    }
    if let Some(n_e) = cfg.metrics.n_e {
        if n_e < inputs.len() {
            inputs.truncate(n_e);
            truth = truth.select(&(0..n_e).collect::<Vec<_>>());
        }
    }
    check_dim(&inputs, d.f.dim(), "inputs")?;
    let is_weights = weights(&d.f, d.g(), &inputs)?;
    let predicted = bundle.model.predict_batch(&inputs)?;
    let w = InnerProductWeights::uniform(truth.side());
    let q = &cfg.quantizer;

    let lloyd = |maps: &MapSet| -> CliResult<_> {
        let init = initialize_prototypes(maps, q.ell)?;
        Ok(run_lloyd(init, maps, &is_weights, &w, q.min_distance, q.max_iterations)?.prototypes)
    };
    let gamma_star = lloyd(&truth)?;
    let gamma_hat = lloyd(&predicted)?;
    let excess = excess_quantization_error(&gamma_hat, &gamma_star, &truth, &is_weights, &w)?;

    let perturbed = perturb_prototypes(
        &gamma_star,
        &PerturbationConfig {
            n_gamma: cfg.metrics.n_gamma,
            scale: cfg.metrics.scale,
            seed: cfg.sub_seed(streams::PERTURBATION),
        },
    )?;
    // One bootstrap seed for every r, so that identical Γ^r give identical rows.
    let boot = BootstrapConfig {
        n_boot: cfg.metrics.n_boot,
        seed: cfg.sub_seed(streams::BOOTSTRAP),
    };
    let mut rows = vec![Row { r: None, j: None, metric: EXCESS_ERROR, value: Some(excess) }];
    let (mut eps_p, mut cvs, mut stds) = (Vec::new(), Vec::new(), Vec::new());
    for (r, gamma) in perturbed.iter().enumerate() {
        let e = relative_probability_errors(gamma, &truth, &predicted, &is_weights, &w)?;
        let c = is_probability_cvs(gamma, &predicted, &is_weights, &boot, &w)?;
        let s = is_centroid_stds(gamma, &predicted, &is_weights, &boot, &w)?;
        for (metric, values) in [(RELATIVE_PROBABILITY_ERROR, &e), (PROBABILITY_CV, &c), (CENTROID_STD, &s)] {
            rows.extend(values.iter().enumerate().map(|(j, v)| Row {
                r: Some(r + 1),
                j: Some(j + 1),
                metric,
                value: *v,
            }));
        }
        eps_p.extend(e);
        cvs.extend(c);
        stds.extend(s);
    }

    let out = &cfg.io.output;
    write_bytes(&out.join("metrics.csv"), &rows_csv(&rows)?)?;
    let summary = MetricsSummary {
        config: cfg,
        n_e: inputs.len(),
        excess_quantization_error: excess,
        relative_probability_error: summarize(&eps_p),
        is_probability_cv: summarize(&cvs),
        is_centroid_std: summarize(&stds),
    };
    write_json(&out.join("metrics_summary.json"), &summary)?;
    write_metadata(out, "metrics")?;
    let med = |s: &Summary| s.median.map_or_else(|| "n/a".into(), |m| format!("{m:.4}"));
    println!(
        "excess quantization error {excess:.4}; medians: relative probability error {}, IS CV {}, IS centroid std {}",
        med(&summary.relative_probability_error),
        med(&summary.is_probability_cv),
        med(&summary.is_centroid_std)
    );
    Ok(())
}
