//! Dense BFGS maximizer with backtracking line search. Problem sizes here are
//! small (one coefficient plus one utility level per partition), so the full
//! inverse-Hessian approximation is kept explicitly.

/// Convergence knobs for the quasi-Newton ascent.
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    /// Converged when the Euclidean gradient norm falls below this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            gradient_tolerance: 1e-6,
            max_iterations: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Maximizes `eval` (which returns the value and its gradient) from `x0`.
pub fn maximize<F>(mut eval: F, x0: &[f64], options: &BfgsOptions) -> BfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let m = x0.len();
    let mut x = x0.to_vec();
    let (mut value, mut grad) = eval(&x);
    // Inverse Hessian approximation of the negated objective, kept as a dense
    // row-major matrix initialized to the identity.
    let mut h = identity(m);
    let mut iterations = 0usize;

    while iterations < options.max_iterations {
        let gnorm = norm(&grad);
        if gnorm < options.gradient_tolerance {
            return BfgsOutcome {
                x,
                value,
                gradient_norm: gnorm,
                iterations,
                converged: true,
            };
        }
        iterations += 1;

        // Ascent direction p = H * grad; fall back to the raw gradient if the
        // approximation has lost positive definiteness.
        let mut p = mat_vec(&h, &grad, m);
        let mut slope: f64 = p.iter().zip(&grad).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) || !slope.is_finite() {
            h = identity(m);
            p = grad.clone();
            slope = grad.iter().map(|g| g * g).sum();
        }

        // Backtracking Armijo line search on the ascent problem.
        let mut alpha = 1.0f64;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + alpha * pi).collect();
            let (trial_value, trial_grad) = eval(&trial);
            if trial_value.is_finite() && trial_value >= value + 1e-4 * alpha * slope {
                accepted = Some((trial, trial_value, trial_grad));
                break;
            }
            alpha *= 0.5;
        }
        let Some((new_x, new_value, new_grad)) = accepted else {
            // No admissible step along this direction; the gradient norm above
            // is the honest convergence verdict.
            return BfgsOutcome {
                x,
                value,
                gradient_norm: gnorm,
                iterations,
                converged: gnorm < options.gradient_tolerance,
            };
        };

        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        // y is the change of the negated-objective gradient.
        let y: Vec<f64> = grad.iter().zip(&new_grad).map(|(g0, g1)| g0 - g1).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm(&s) * norm(&y) {
            bfgs_update(&mut h, &s, &y, sy, m);
        }
        x = new_x;
        value = new_value;
        grad = new_grad;
    }

    let gnorm = norm(&grad);
    BfgsOutcome {
        converged: gnorm < options.gradient_tolerance,
        x,
        value,
        gradient_norm: gnorm,
        iterations,
    }
}

fn identity(m: usize) -> Vec<f64> {
    let mut h = vec![0.0; m * m];
    for i in 0..m {
        h[i * m + i] = 1.0;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for i in 0..m {
        let row = &h[i * m..(i + 1) * m];
        out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

/// H <- (I - rho s y') H (I - rho y s') + rho s s'
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, m: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, m);
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    // Expanded form: H += rho^2 (sy + yHy) s s' - rho (H y s' + s y' H)
    let c = rho * rho * (sy + yhy);
    for i in 0..m {
        for jj in 0..m {
            h[i * m + jj] +=
                c * s[i] * s[jj] - rho * (hy[i] * s[jj] + s[i] * hy[jj]);
        }
    }
}

/// Solves the symmetric system `A x = I` by Gauss-Jordan elimination with
/// partial pivoting; returns the inverse or `None` when near-singular.
pub fn invert_symmetric(a: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut aug = vec![0.0; m * 2 * m];
    for i in 0..m {
        for j in 0..m {
            aug[i * 2 * m + j] = a[i * m + j];
        }
        aug[i * 2 * m + m + i] = 1.0;
    }
    for col in 0..m {
        let mut pivot = col;
        for row in col + 1..m {
            if aug[row * 2 * m + col].abs() > aug[pivot * 2 * m + col].abs() {
                pivot = row;
            }
        }
        let pivot_value = aug[pivot * 2 * m + col];
        if pivot_value.abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for j in 0..2 * m {
                aug.swap(col * 2 * m + j, pivot * 2 * m + j);
            }
        }
        let inv = 1.0 / aug[col * 2 * m + col];
        for j in 0..2 * m {
            aug[col * 2 * m + j] *= inv;
        }
        for row in 0..m {
            if row == col {
                continue;
            }
            let factor = aug[row * 2 * m + col];
            if factor != 0.0 {
                for j in 0..2 * m {
                    aug[row * 2 * m + j] -= factor * aug[col * 2 * m + j];
                }
            }
        }
    }
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = aug[i * 2 * m + m + j];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        // f(x) = -(x0-3)^2 - 2(x1+1)^2
        let outcome = maximize(
            |x| {
                let f = -(x[0] - 3.0).powi(2) - 2.0 * (x[1] + 1.0).powi(2);
                let g = vec![-2.0 * (x[0] - 3.0), -4.0 * (x[1] + 1.0)];
                (f, g)
            },
            &[0.0, 0.0],
            &BfgsOptions::default(),
        );
        assert!(outcome.converged);
        assert!((outcome.x[0] - 3.0).abs() < 1e-6);
        assert!((outcome.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn maximizes_log_concave() {
        // Logistic log-likelihood-like shape: f(t) = 3 ln p + 2 ln (1-p).
        let outcome = maximize(
            |x| {
                let p = 1.0 / (1.0 + (-x[0]).exp());
                let f = 3.0 * p.ln() + 2.0 * (1.0 - p).ln();
                let g = vec![3.0 * (1.0 - p) - 2.0 * p];
                (f, g)
            },
            &[0.0],
            &BfgsOptions::default(),
        );
        assert!(outcome.converged);
        let p = 1.0 / (1.0 + (-outcome.x[0]).exp());
        assert!((p - 0.6).abs() < 1e-8);
    }

    #[test]
    fn inverts_small_matrix() {
        let a = vec![4.0, 1.0, 1.0, 3.0];
        let inv = invert_symmetric(&a, 2).unwrap();
        let det = 11.0;
        assert!((inv[0] - 3.0 / det).abs() < 1e-12);
        assert!((inv[1] + 1.0 / det).abs() < 1e-12);
        assert!((inv[3] - 4.0 / det).abs() < 1e-12);
    }
}
