//! Box-constrained Nelder–Mead minimization.

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
}

pub(crate) struct NelderMead {
    pub max_evals: usize,
    /// Stop when the simplex values span less than this (absolute).
    pub f_tol: f64,
    /// Stop when every vertex is within this of the best one (per coordinate).
    pub x_tol: f64,
}

fn clamp(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

impl NelderMead {
    /// Minimizes `f` from `x0` inside `[lo, hi]`; points are clamped into the box.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(
        &self,
        mut f: F,
        x0: &[f64],
        lo: &[f64],
        hi: &[f64],
    ) -> Minimum {
        let d = x0.len();
        let mut evals = 0;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
        let mut start = x0.to_vec();
        clamp(&mut start, lo, hi);
        simplex.push(start.clone());
        for i in 0..d {
            let mut p = start.clone();
            let step = 0.1 * (hi[i] - lo[i]).max(1e-8);
            p[i] = if p[i] + step <= hi[i] { p[i] + step } else { p[i] - step };
            simplex.push(p);
        }
        let mut values: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();

        while evals < self.max_evals {
            let mut order: Vec<usize> = (0..=d).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = values[d] - values[0];
            let size = simplex[1..]
                .iter()
                .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if (spread.is_finite() && spread <= self.f_tol) || size <= self.x_tol {
                break;
            }

            let mut centroid = vec![0.0; d];
            for p in &simplex[..d] {
                for (c, v) in centroid.iter_mut().zip(p) {
                    *c += v / d as f64;
                }
            }
            let along = |t: f64| {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[d])
                    .map(|(c, w)| c + t * (w - c))
                    .collect();
                clamp(&mut p, lo, hi);
                p
            };
            let reflected = along(-1.0);
            let fr = eval(&reflected, &mut evals);
            if fr < values[0] {
                let expanded = along(-2.0);
                let fe = eval(&expanded, &mut evals);
                if fe < fr {
                    simplex[d] = expanded;
                    values[d] = fe;
                } else {
                    simplex[d] = reflected;
                    values[d] = fr;
                }
            } else if fr < values[d - 1] {
                simplex[d] = reflected;
                values[d] = fr;
            } else {
                let (contracted, fc) = if fr < values[d] {
                    let c = along(-0.5);
                    let v = eval(&c, &mut evals);
                    (c, v)
                } else {
                    let c = along(0.5);
                    let v = eval(&c, &mut evals);
                    (c, v)
                };
                if fc < values[d].min(fr) {
                    simplex[d] = contracted;
                    values[d] = fc;
                } else {
                    for i in 1..=d {
                        let p: Vec<f64> = simplex[0]
                            .iter()
                            .zip(&simplex[i])
                            .map(|(b, v)| b + 0.5 * (v - b))
                            .collect();
                        values[i] = eval(&p, &mut evals);
                        simplex[i] = p;
                    }
                }
            }
        }
        let best = (0..=d)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]))
            .unwrap_or(0);
        Minimum {
            x: simplex[best].clone(),
            value: values[best],
        }
    }
}
