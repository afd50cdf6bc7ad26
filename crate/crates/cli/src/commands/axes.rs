//! `fpca-axes`: a `g`-sample seen in the plane of the first two FPCA axes,
//! with cell memberships and per-cell 2D histograms of `log Σ f/g`.

use std::collections::BTreeMap;

use raremap::fpca::FpcaModel;
use raremap::maps::assign_all;
use raremap::metamodel::Regime;
use raremap::quantizer::{initialize_prototypes, run_lloyd, MapPredictor};
use raremap::sampling::WeightedSampleSet;
use raremap::{InnerProductWeights, PrototypeSet};

use super::{write_metadata, Bundle};
use crate::archive::{read_maps, write_bytes};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// The FPCA of the first fitted regime of a metamodel.
pub fn axes_model(bundle: &Bundle) -> CliResult<&FpcaModel> {
    let fpca = bundle
        .model
        .regimes
        .iter()
        .find_map(|(_, r)| match r {
            Regime::Fitted { fpca, .. } => Some(fpca),
            Regime::Empty => None,
        })
        .ok_or_else(|| CliError::Data("the metamodel has no fitted FPCA regime".into()))?;
    if fpca.n_pc < 2 {
        return Err(CliError::Usage(format!(
            "fpca-axes needs n_pc >= 2, the metamodel keeps {}",
            fpca.n_pc
        )));
    }
    Ok(fpca)
}

/// Equal-width binning of `[lo, hi]`; a flat range is widened by one.
#[derive(Clone, Copy, Debug)]
pub struct Axis {
    lo: f64,
    width: f64,
    bins: usize,
}

impl Axis {
    pub fn covering(values: impl Iterator<Item = f64>, bins: usize) -> Self {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let hi = if hi > lo { hi } else { lo + 1.0 };
        Self { lo, width: (hi - lo) / bins as f64, bins }
    }

    pub fn bin(&self, v: f64) -> usize {
        (((v - self.lo) / self.width).floor().max(0.0) as usize).min(self.bins - 1)
    }

    pub fn edges(&self, b: usize) -> (f64, f64) {
        (self.lo + b as f64 * self.width, self.lo + (b + 1) as f64 * self.width)
    }
}

fn fmt_log(total: f64) -> String {
    if total > 0.0 {
        total.ln().to_string()
    } else {
        "NA".into()
    }
}

pub fn run(cfg: &RunConfig, samples: usize) -> CliResult<()> {
    if samples == 0 {
        return Err(CliError::Usage("--samples must be >= 1".into()));
    }
    let d = cfg.densities()?;
    let bundle = Bundle::load(&cfg.bundle_path())?;
    let fpca = axes_model(&bundle)?;
    if d.f.dim() != bundle.model.input_dim {
        return Err(CliError::Usage(format!(
            "densities.f has dimension {} but the metamodel takes {} inputs",
            d.f.dim(),
            bundle.model.input_dim
        )));
    }
    let sample = WeightedSampleSet::draw(&d.f, d.g(), samples, cfg.lloyd().seed)?;
    let maps = bundle.model.predict_batch(&sample.inputs)?;
    let w = InnerProductWeights::uniform(maps.side());
    let gamma = match &cfg.io.prototypes {
        Some(p) => PrototypeSet::new(read_maps(p)?.to_maps())?,
        None => {
            let q = &cfg.quantizer;
            let init = initialize_prototypes(&maps, q.ell)?;
            run_lloyd(init, &maps, &sample.weights, &w, q.min_distance, q.max_iterations)?.prototypes
        }
    };
    if gamma.side() != maps.side() {
        return Err(CliError::Data(format!(
            "prototypes of side {} for maps of side {}",
            gamma.side(),
            maps.side()
        )));
    }
    let cells: Vec<usize> = assign_all(&gamma, &maps, &w).into_iter().map(|a| a.0).collect();
    let scores: Vec<(f64, f64)> = maps
        .iter()
        .map(|y| fpca.project_values(y).map(|t| (t[0], t[1])))
        .collect::<raremap::Result<_>>()?;

    let bins = cfg.metrics.fpca_bins;
    let ax1 = Axis::covering(scores.iter().map(|t| t.0), bins);
    let ax2 = Axis::covering(scores.iter().map(|t| t.1), bins);
    let key = |k: usize| (cells[k], ax1.bin(scores[k].0), ax2.bin(scores[k].1));
    let mut mass: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for (k, wk) in sample.weights.iter().enumerate() {
        *mass.entry(key(k)).or_default() += wk;
    }

    let mut points = String::from("t1,t2,cell,weight,bin_log_weight\n");
    for (k, (t1, t2)) in scores.iter().enumerate() {
        points.push_str(&format!(
            "{t1},{t2},{},{},{}\n",
            cells[k] + 1,
            sample.weights[k],
            fmt_log(mass[&key(k)])
        ));
    }
    let mut table = String::from("cell,bin1,bin2,t1_lo,t1_hi,t2_lo,t2_hi,log_weight\n");
    for (&(j, b1, b2), total) in &mass {
        let (a_lo, a_hi) = ax1.edges(b1);
        let (b_lo, b_hi) = ax2.edges(b2);
        table.push_str(&format!(
            "{},{},{},{a_lo},{a_hi},{b_lo},{b_hi},{}\n",
            j + 1,
            b1 + 1,
            b2 + 1,
            fmt_log(*total)
        ));
    }
    let out = &cfg.io.output;
    write_bytes(&out.join("axes.csv"), points.as_bytes())?;
    write_bytes(&out.join("bins.csv"), table.as_bytes())?;
    write_metadata(out, "fpca-axes")?;
    println!(
        "{samples} points in {} cells and {} occupied bins written to {}",
        gamma.len(),
        mass.len(),
        out.display()
    );
    Ok(())
}
