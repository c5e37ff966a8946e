//! Derivative-free local minimization inside a box.

/// Settings for [`nelder_mead`].
#[derive(Clone, Debug)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop when the simplex spread in every coordinate falls below this
    /// fraction of the box width.
    pub x_tol: f64,
    /// Stop when the spread of vertex values falls below this (absolute).
    pub f_tol: f64,
    /// Initial simplex edge as a fraction of the box width.
    pub initial_step: f64,
    /// Number of restarts from the best vertex after convergence.
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_evals: 4000,
            x_tol: 1e-10,
            f_tol: 1e-15,
            initial_step: 0.1,
            restarts: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(*lo, *hi);
    }
}

/// Nelder–Mead with every trial point projected onto `[lower, upper]`.
/// Non-finite objective values are treated as `+inf`.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMead,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0 && lower.len() == n && upper.len() == n);
    let width: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut best = x0.to_vec();
    clamp_into(&mut best, lower, upper);
    let mut best_value = eval(&best, &mut evals);

    for _round in 0..=opts.restarts {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best.clone(), best_value));
        for i in 0..n {
            let mut v = best.clone();
            let step = opts.initial_step * width[i];
            // step away from the nearer bound
            if v[i] + step <= upper[i] {
                v[i] += step;
            } else {
                v[i] -= step;
            }
            clamp_into(&mut v, lower, upper);
            let fv = eval(&v, &mut evals);
            simplex.push((v, fv));
        }

        while evals < opts.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread_f = simplex[n].1 - simplex[0].1;
            let spread_x = (0..n).all(|i| {
                let (lo, hi) = simplex
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, v| {
                        (acc.0.min(v.0[i]), acc.1.max(v.0[i]))
                    });
                hi - lo <= opts.x_tol * width[i].max(f64::MIN_POSITIVE)
            });
            if spread_x || (spread_f.is_finite() && spread_f <= opts.f_tol) {
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|i| simplex[..n].iter().map(|v| v.0[i]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| {
                let mut p: Vec<f64> = (0..n)
                    .map(|i| centroid[i] + t * (simplex[n].0[i] - centroid[i]))
                    .collect();
                clamp_into(&mut p, lower, upper);
                p
            };
            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(-0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for v in simplex.iter_mut().skip(1) {
                        for (vi, ci) in v.0.iter_mut().zip(&x0) {
                            *vi = ci + 0.5 * (*vi - ci);
                        }
                        v.1 = eval(&v.0, &mut evals);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best_value;
        if simplex[0].1 <= best_value {
            best = simplex[0].0.clone();
            best_value = simplex[0].1;
        }
        if !improved || evals >= opts.max_evals {
            break;
        }
    }

    Minimum {
        x: best,
        value: best_value,
        evals,
    }
}
