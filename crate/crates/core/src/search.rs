//! Derivative-free minimization used as the solver's fallback search.

/// Outcome of a Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// True when the simplex collapsed below tolerance before the budget ran out.
    pub converged: bool,
    /// Best objective value after each iteration that improved it.
    pub improvements: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_iters: usize,
    /// Initial simplex edge, scaled by `1 + |x0|_inf`.
    pub initial_step: f64,
    pub xtol: f64,
    pub ftol: f64,
    /// Stop as soon as the best value reaches this target.
    pub target: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead { max_iters: 200, initial_step: 0.25, xtol: 1e-10, ftol: 1e-15, target: f64::NEG_INFINITY }
    }
}

impl NelderMead {
    /// Minimizes `f` from `x0`. Infeasible points should return `f64::INFINITY`.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, x0: &[f64], mut f: F) -> Minimum {
        let n = x0.len();
        let f0 = f(x0);
        if n == 0 {
            return Minimum { x: Vec::new(), value: f0, iterations: 0, converged: true, improvements: vec![f0] };
        }
        let scale = 1.0 + x0.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), f0));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.initial_step * scale;
            let mut fx = f(&x);
            if !fx.is_finite() {
                x[i] = x0[i] - self.initial_step * scale;
                fx = f(&x);
            }
            simplex.push((x, fx));
        }
        let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
        order(&mut simplex);
        let mut improvements = vec![simplex[0].1];
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iters {
            if simplex[0].1 <= self.target {
                break;
            }
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| x.iter().zip(&simplex[0].0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
                .fold(0.0f64, f64::max);
            let xscale = 1.0 + simplex[0].0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let flat = worst.is_finite() && (worst - best) <= self.ftol * (1.0 + best.abs());
            if diameter <= self.xtol * xscale || flat {
                converged = true;
                break;
            }
            iterations += 1;

            let centroid: Vec<f64> =
                (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect()
            };
            let xr = along(1.0);
            let fr = f(&xr);
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = f(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(0.5);
                    let fc = f(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-0.5);
                    let fc = f(&xc);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x_best = simplex[0].0.clone();
                    for (x, fx) in simplex.iter_mut().skip(1) {
                        for (xi, bi) in x.iter_mut().zip(&x_best) {
                            *xi = bi + 0.5 * (*xi - bi);
                        }
                        *fx = f(x);
                    }
                }
            }
            order(&mut simplex);
            if simplex[0].1 < *improvements.last().unwrap() {
                improvements.push(simplex[0].1);
            }
        }
        let (x, value) = simplex.swap_remove(0);
        Minimum { x, value, iterations, converged, improvements }
    }
}
