//! Two-class soft-margin SVM trained by SMO over a precomputed kernel.
//!
//! Working-set selection picks the maximal violating pair; the two-variable
//! update and bias estimate follow the usual libsvm formulation.

use serde::{Deserialize, Serialize};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoConfig {
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            eps: 1e-3,
            max_iter: 100_000,
        }
    }
}

/// Dual solution: decision value is `sum_i coef[i] * K(x_i, x) - rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    /// `alpha_i * y_i` for every training point.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvm {
    /// `kernel` is the full `n x n` row-major Gram matrix, `y` holds ±1.
    pub fn train(kernel: &[f64], y: &[f64], config: &SmoConfig) -> Self {
        let n = y.len();
        debug_assert_eq!(kernel.len(), n * n);
        let c = config.c;
        let k = |i: usize, j: usize| kernel[i * n + j];
        let mut alpha = vec![0.0f64; n];
        let mut grad = vec![-1.0f64; n];
        let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
        let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

        let mut iterations = 0;
        let mut converged = false;
        while iterations < config.max_iter {
            let mut g_max = f64::NEG_INFINITY;
            let mut g_max2 = f64::NEG_INFINITY;
            let mut pick_i = None;
            let mut pick_j = None;
            for t in 0..n {
                if in_up(alpha[t], y[t]) && -y[t] * grad[t] > g_max {
                    g_max = -y[t] * grad[t];
                    pick_i = Some(t);
                }
                if in_low(alpha[t], y[t]) && y[t] * grad[t] > g_max2 {
                    g_max2 = y[t] * grad[t];
                    pick_j = Some(t);
                }
            }
            let (Some(i), Some(j)) = (pick_i, pick_j) else {
                converged = true;
                break;
            };
            if g_max + g_max2 < config.eps {
                converged = true;
                break;
            }
            iterations += 1;

            let q_ij = y[i] * y[j] * k(i, j);
            let (old_i, old_j) = (alpha[i], alpha[j]);
            if y[i] != y[j] {
                let quad = (k(i, i) + k(j, j) + 2.0 * q_ij).max(TAU);
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = (k(i, i) + k(j, j) - 2.0 * q_ij).max(TAU);
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }

            let (d_i, d_j) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += y[t] * (y[i] * k(i, t) * d_i + y[j] * k(j, t) * d_j);
            }
        }

        let rho = bias(&alpha, &grad, y, c);
        BinarySvm {
            coef: alpha.iter().zip(y).map(|(a, yi)| a * yi).collect(),
            rho,
            iterations,
            converged,
        }
    }

    /// `kernel_row[i] = K(x_i, x)`.
    pub fn decision(&self, kernel_row: &[f64]) -> f64 {
        self.coef
            .iter()
            .zip(kernel_row)
            .filter(|(c, _)| **c != 0.0)
            .map(|(c, k)| c * k)
            .sum::<f64>()
            - self.rho
    }
}

fn bias(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
