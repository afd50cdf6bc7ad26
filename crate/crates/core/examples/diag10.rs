use raremap::campbell::{synthetic_input_law, uniform_input_law, CampbellModel, SUPPORTS};
use raremap::quantizer::*;
use raremap::sampling::sobol_design;
use raremap::InnerProductWeights;
fn main() {
    let mode = std::env::args().nth(1).unwrap();
    let model = CampbellModel::default();
    let (f, g) = (synthetic_input_law().into(), uniform_input_law().into());
    let w = InnerProductWeights::uniform(64);
    let train: Vec<Vec<f64>> = sobol_design(7, 1300).unwrap().into_iter()
        .map(|u| u.iter().zip(SUPPORTS).map(|(t,(lo,hi))| lo + t*(hi-lo)).collect()).collect();
    let tm = model.predict_batch(&train).unwrap();
    let init = initialize_prototypes(&tm, 5).unwrap();
    if mode == "inits" {
        let cfg = LloydConfig::new(5, 100_000, 1_000_000, 1);
        for off in [0usize, 1, 2, 3] {
            let sel: Vec<usize> = (0..1300).filter(|k| k % 4 == off).collect();
            let i2 = initialize_prototypes(&tm.select(&sel), 5).unwrap();
            let r = prototype_maps_algorithm(&cfg, &model, &f, &g, i2, &w).unwrap();
            let mut idx: Vec<usize> = (0..5).collect();
            idx.sort_by(|&a,&b| r.prototypes.get(a).volume().total_cmp(&r.prototypes.get(b).volume()));
            println!("off {off} it {} err {:.5} p {:?}", r.iterations, r.error_trace.last().unwrap(),
              idx.iter().map(|&j| format!("{:.4}", r.probabilities[j])).collect::<Vec<_>>());
        }
        return;
    }
    for seed in 1..=5u64 {
        let cfg = LloydConfig::new(5, 100_000, 1_000_000, seed);
        let t = std::time::Instant::now();
        let r = if mode == "q" { prototype_maps_from_quantiles(&cfg, &model, &f, &g, &w).unwrap() }
                else { prototype_maps_algorithm(&cfg, &model, &f, &g, init.clone(), &w).unwrap() };
        let mut idx: Vec<usize> = (0..5).collect();
        idx.sort_by(|&a,&b| r.prototypes.get(a).volume().total_cmp(&r.prototypes.get(b).volume()));
        println!("seed {seed} it {} err {:.5} p {:?} {:?}", r.iterations, r.error_trace.last().unwrap(),
          idx.iter().map(|&j| format!("{:.4}", r.probabilities[j])).collect::<Vec<_>>(), t.elapsed());
    }
}
