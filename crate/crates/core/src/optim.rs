//! Derivative-free Nelder–Mead minimization with box bounds.
//!
//! Points outside the box are projected onto it before evaluation, so the
//! simplex never leaves the feasible region.

/// Result of a single minimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Convergence when every vertex is within this (max-norm) distance of
    /// the best vertex.
    pub tol: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iter: 5_000,
            tol: 1e-8,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

impl NelderMead {
    /// Minimizes `f` from `start` with initial edge lengths `step`.
    ///
    /// Non-finite objective values are treated as `+inf`.
    pub fn minimize<F>(
        &self,
        f: F,
        start: &[f64],
        step: &[f64],
        lower: &[f64],
        upper: &[f64],
    ) -> Minimum
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = start.len();
        let eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut x0 = start.to_vec();
        project(&mut x0, lower, upper);
        let mut simplex: Vec<Vec<f64>> = vec![x0.clone()];
        for i in 0..n {
            let mut v = x0.clone();
            v[i] += step[i];
            // step into the box if we hit an upper bound
            if v[i] > upper[i] {
                v[i] = x0[i] - step[i];
            }
            project(&mut v, lower, upper);
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

        let mut iterations = 0;
        let mut converged = false;
        let mut order: Vec<usize> = (0..=n).collect();
        while iterations < self.max_iter {
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let best = order[0];
            let worst = order[n];
            let second_worst = order[n - 1];

            let diameter = simplex
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if diameter < self.tol {
                converged = true;
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for &i in &order[..n] {
                for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                    *c += v / n as f64;
                }
            }
            let along = |t: f64| {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[worst])
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                project(&mut p, lower, upper);
                p
            };

            let xr = along(self.reflection);
            let fr = eval(&xr);
            if fr < values[best] {
                let xe = along(self.reflection * self.expansion);
                let fe = eval(&xe);
                if fe < fr {
                    simplex[worst] = xe;
                    values[worst] = fe;
                } else {
                    simplex[worst] = xr;
                    values[worst] = fr;
                }
                continue;
            }
            if fr < values[second_worst] {
                simplex[worst] = xr;
                values[worst] = fr;
                continue;
            }
            // outside contraction if the reflection improved on the worst
            // vertex, inside contraction otherwise
            let xc = if fr < values[worst] {
                along(self.reflection * self.contraction)
            } else {
                along(-self.contraction)
            };
            let fc = eval(&xc);
            if fc < values[worst].min(fr) {
                simplex[worst] = xc;
                values[worst] = fc;
                continue;
            }
            let xb = simplex[best].clone();
            for &i in &order[1..] {
                for (v, b) in simplex[i].iter_mut().zip(&xb) {
                    *v = b + self.shrink * (*v - b);
                }
                values[i] = eval(&simplex[i]);
            }
        }

        let best = (0..=n)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]))
            .unwrap();
        Minimum {
            x: simplex[best].clone(),
            value: values[best],
            iterations,
            converged,
        }
    }

    /// Runs [`Self::minimize`] and then restarts once from the reported
    /// minimum with a smaller simplex, which guards against the simplex
    /// collapsing away from the optimum.
    pub fn minimize_with_restart<F>(
        &self,
        f: F,
        start: &[f64],
        step: &[f64],
        lower: &[f64],
        upper: &[f64],
    ) -> Minimum
    where
        F: Fn(&[f64]) -> f64,
    {
        let first = self.minimize(&f, start, step, lower, upper);
        let small: Vec<f64> = step.iter().map(|s| s * 0.1).collect();
        let second = self.minimize(&f, &first.x, &small, lower, upper);
        let iterations = first.iterations + second.iterations;
        if second.value <= first.value {
            Minimum {
                iterations,
                converged: second.converged,
                ..second
            }
        } else {
            Minimum {
                iterations,
                converged: first.converged && second.converged,
                ..first
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = NelderMead::default().minimize_with_restart(
            f,
            &[-1.2, 1.0],
            &[0.5, 0.5],
            &[-5.0, -5.0],
            &[5.0, 5.0],
        );
        assert!(m.converged);
        assert!(
            (m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            m.x
        );
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let m =
            NelderMead::default().minimize(f, &[0.0, 0.0], &[0.3, 0.3], &[-1.0, 0.0], &[1.0, 1.0]);
        assert!((m.x[0] - 1.0).abs() < 1e-7);
        assert!(m.x[1].abs() < 1e-7);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| x.iter().map(|v| v.abs().sqrt()).sum::<f64>();
        let start = [0.7, -0.2, 0.4];
        let m = NelderMead::default().minimize(f, &start, &[0.1; 3], &[-2.0; 3], &[2.0; 3]);
        assert!(m.value <= f(&start));
    }
}
