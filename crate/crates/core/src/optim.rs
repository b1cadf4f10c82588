//! Derivative-free simplex minimisation (Nelder–Mead with adaptive
//! parameters). Objectives reject out-of-bounds points by returning a
//! large finite value.

pub struct NelderMead {
    pub max_iters: usize,
    pub x_tol: f64,
    pub f_tol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iters: 4000,
            x_tol: 1e-12,
            f_tol: 1e-16,
        }
    }
}

pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    #[allow(dead_code)]
    pub iterations: usize,
}

impl NelderMead {
    pub fn minimize<F>(&self, f: F, x0: &[f64], step: &[f64]) -> OptimOutcome
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = x0.len();
        assert!(n > 0 && step.len() == n);
        // Adaptive coefficients (scale with dimension).
        let nf = n as f64;
        let alpha = 1.0;
        let beta = 1.0 + 2.0 / nf;
        let gamma = 0.75 - 1.0 / (2.0 * nf);
        let delta = 1.0 - 1.0 / nf;

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += if step[i] != 0.0 { step[i] } else { 1e-4 };
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();

        let mut iters = 0;
        while iters < self.max_iters {
            iters += 1;
            // Order the simplex by value.
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
            let best = order[0];
            let worst = order[n];
            let second_worst = order[n - 1];

            let spread = (values[worst] - values[best]).abs();
            let size = (0..n)
                .map(|d| {
                    simplex
                        .iter()
                        .map(|v| v[d])
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                            (lo.min(x), hi.max(x))
                        })
                })
                .map(|(lo, hi)| hi - lo)
                .fold(0.0, f64::max);
            if spread <= self.f_tol * (1.0 + values[best].abs()) && size <= self.x_tol {
                break;
            }

            // Centroid of all but the worst.
            let mut centroid = vec![0.0; n];
            for (i, v) in simplex.iter().enumerate() {
                if i == worst {
                    continue;
                }
                for d in 0..n {
                    centroid[d] += v[d] / nf;
                }
            }

            let lerp = |from: &[f64], coeff: f64| -> Vec<f64> {
                (0..n)
                    .map(|d| centroid[d] + coeff * (centroid[d] - from[d]))
                    .collect()
            };

            let reflected = lerp(&simplex[worst], alpha);
            let fr = f(&reflected);
            if fr < values[best] {
                let expanded = lerp(&simplex[worst], beta);
                let fe = f(&expanded);
                if fe < fr {
                    simplex[worst] = expanded;
                    values[worst] = fe;
                } else {
                    simplex[worst] = reflected;
                    values[worst] = fr;
                }
            } else if fr < values[second_worst] {
                simplex[worst] = reflected;
                values[worst] = fr;
            } else {
                let contracted = if fr < values[worst] {
                    lerp(&simplex[worst], gamma * alpha)
                } else {
                    lerp(&simplex[worst], -gamma)
                };
                let fc = f(&contracted);
                if fc < values[worst].min(fr) {
                    simplex[worst] = contracted;
                    values[worst] = fc;
                } else {
                    // Shrink towards the best vertex.
                    let best_point = simplex[best].clone();
                    for (i, v) in simplex.iter_mut().enumerate() {
                        if i == best {
                            continue;
                        }
                        for d in 0..n {
                            v[d] = best_point[d] + delta * (v[d] - best_point[d]);
                        }
                        values[i] = f(v);
                    }
                }
            }
        }

        let mut best = 0;
        for i in 1..=n {
            if values[i] < values[best] {
                best = i;
            }
        }
        OptimOutcome {
            x: simplex[best].clone(),
            value: values[best],
            iterations: iters,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2);
        let out = NelderMead::default().minimize(f, &[0.0, 0.0], &[0.5, 0.5]);
        assert!((out.x[0] - 1.5).abs() < 1e-7, "x0 = {}", out.x[0]);
        assert!((out.x[1] + 0.5).abs() < 1e-7, "x1 = {}", out.x[1]);
        assert!(out.iterations > 0);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let out = NelderMead {
            max_iters: 20_000,
            ..Default::default()
        }
        .minimize(f, &[-1.2, 1.0], &[0.3, 0.3]);
        assert!(out.value < 1e-10, "value = {}", out.value);
    }

    #[test]
    fn respects_penalty_walls() {
        // Constrained minimum at x = 0 enforced by a penalty.
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                1e30
            } else {
                (x[0] + 1.0).powi(2)
            }
        };
        let out = NelderMead::default().minimize(f, &[2.0], &[0.5]);
        assert!(out.x[0].abs() < 1e-6);
    }
}
