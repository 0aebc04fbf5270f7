//! Bounded derivative-free maximisation with a Nelder-Mead simplex.
//!
//! Every simplex operation clamps coordinates into the box, which keeps the
//! search strictly feasible. The evaluation budget is a hard cap; running out
//! of budget returns the best point found with `converged = false`.

/// Options for a single Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Hard cap on objective evaluations.
    pub max_evaluations: usize,
    /// Relative spread of simplex values below which the run stops.
    pub relative_tolerance: f64,
    /// Absolute step used to seed the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 2000,
            relative_tolerance: 1e-6,
            initial_step: 0.25,
        }
    }
}

/// Outcome of a maximisation.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn clamp(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

/// Maximises `f` over the box `[lower, upper]`, starting from `x0`.
///
/// The returned value is never worse than `f` at the clamped starting point:
/// the start is a vertex of the initial simplex and the best vertex only
/// improves.
pub fn maximize_bounded<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> OptimResult {
    let n = x0.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);

    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    clamp(&mut start, lower, upper);
    if n == 0 {
        let value = eval(&start, &mut evaluations);
        return OptimResult {
            x: start,
            value,
            evaluations,
            converged: true,
        };
    }

    // Simplex of n + 1 vertices: the start plus one step along each axis
    // (stepping inward when the boundary is in the way).
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.clone());
    for i in 0..n {
        let mut v = start.clone();
        let step = opts.initial_step;
        if v[i] + step <= upper[i] {
            v[i] += step;
        } else if v[i] - step >= lower[i] {
            v[i] -= step;
        } else {
            v[i] = (lower[i] + upper[i]) / 2.0;
        }
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex
        .iter()
        .map(|v| eval(v, &mut evaluations))
        .collect();

    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let mut converged = false;
    while evaluations < opts.max_evaluations {
        // Order vertices by value, best first.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let (f_best, f_worst) = (values[best], values[worst]);
        if f_best.is_finite() && f_worst.is_finite() {
            let spread = (f_best - f_worst).abs();
            if spread <= opts.relative_tolerance * (f_best.abs() + f_worst.abs() + 1e-12) {
                converged = true;
                break;
            }
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; n];
        for (i, v) in simplex.iter().enumerate() {
            if i == worst {
                continue;
            }
            for (c, &x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            let mut out: Vec<f64> = a
                .iter()
                .zip(b)
                .map(|(&xa, &xb)| xa + t * (xa - xb))
                .collect();
            clamp(&mut out, lower, upper);
            out
        };

        let reflected = blend(&centroid, &simplex[worst], ALPHA);
        let f_reflected = eval(&reflected, &mut evaluations);

        if f_reflected > values[best] {
            let expanded = blend(&centroid, &simplex[worst], GAMMA);
            let f_expanded = eval(&expanded, &mut evaluations);
            if f_expanded > f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected > values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            // Contraction: outside when the reflection helped over the worst,
            // inside otherwise.
            let contracted = if f_reflected > values[worst] {
                blend(&centroid, &simplex[worst], RHO)
            } else {
                let mut v: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[worst])
                    .map(|(&c, &w)| c + RHO * (w - c))
                    .collect();
                clamp(&mut v, lower, upper);
                v
            };
            let f_contracted = eval(&contracted, &mut evaluations);
            if f_contracted > values[worst].max(f_reflected) {
                simplex[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                // Shrink towards the best vertex.
                let best_point = simplex[best].clone();
                for i in 0..=n {
                    if i == best {
                        continue;
                    }
                    for (x, &b) in simplex[i].iter_mut().zip(&best_point) {
                        *x = b + SIGMA * (*x - b);
                    }
                    clamp(&mut simplex[i], lower, upper);
                    values[i] = eval(&simplex[i], &mut evaluations);
                    if evaluations >= opts.max_evaluations {
                        break;
                    }
                }
            }
        }
    }

    let mut best_idx = 0;
    for i in 1..=n {
        if values[i] > values[best_idx] {
            best_idx = i;
        }
    }
    OptimResult {
        x: simplex.swap_remove(best_idx),
        value: values[best_idx],
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let f = |x: &[f64]| -(x[0] - 3.0).powi(2);
        let r = maximize_bounded(f, &[0.0], &[-10.0], &[10.0], &NelderMeadOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-3, "x={}", r.x[0]);
    }

    #[test]
    fn respects_bounds() {
        // Unconstrained maximum at 5, box caps at 2.
        let f = |x: &[f64]| -(x[0] - 5.0).powi(2);
        let r = maximize_bounded(f, &[0.0], &[-2.0], &[2.0], &NelderMeadOptions::default());
        assert!(r.x[0] <= 2.0 + 1e-12);
        assert!((r.x[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn two_dimensional_concave() {
        let f = |x: &[f64]| -((x[0] - 1.0).powi(2) + 4.0 * (x[1] + 2.0).powi(2));
        let r = maximize_bounded(
            f,
            &[0.0, 0.0],
            &[-10.0, -10.0],
            &[10.0, 10.0],
            &NelderMeadOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-2);
        assert!((r.x[1] + 2.0).abs() < 1e-2);
    }

    #[test]
    fn never_returns_worse_than_start() {
        let f = |x: &[f64]| -(x[0].powi(2) + x[1].powi(2));
        let start = [0.1, -0.2];
        let r = maximize_bounded(
            f,
            &start,
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &NelderMeadOptions {
                max_evaluations: 10,
                ..Default::default()
            },
        );
        assert!(r.value >= f(&start));
    }

    #[test]
    fn budget_exhaustion_reports_not_converged() {
        let f = |x: &[f64]| -(x[0] - 3.0).powi(2);
        let r = maximize_bounded(
            f,
            &[9.0],
            &[-10.0],
            &[10.0],
            &NelderMeadOptions {
                max_evaluations: 4,
                ..Default::default()
            },
        );
        assert!(!r.converged);
        assert!(r.evaluations <= 5);
    }

    #[test]
    fn tolerates_neg_infinity_regions() {
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NEG_INFINITY
            } else {
                -(x[0] - 2.0).powi(2)
            }
        };
        let r = maximize_bounded(f, &[-4.0], &[-5.0], &[5.0], &NelderMeadOptions::default());
        assert!((r.x[0] - 2.0).abs() < 1e-2, "x={}", r.x[0]);
    }
}
