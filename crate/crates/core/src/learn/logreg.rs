use std::collections::VecDeque;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HISTORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    /// Inverse regularization strength, applied on the loss side.
    pub c_reg: f64,
    pub max_iter: usize,
    /// Stop when the gradient max-norm falls to this value.
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            c_reg: 2.0,
            max_iter: 1000,
            tol: 1e-5,
        }
    }
}

impl LogRegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_reg.is_finite() && self.c_reg > 0.0) {
            return Err(Error::Config(format!(
                "c_reg must be positive, got {}",
                self.c_reg
            )));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::Config(format!(
                "tol must be non-negative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub grad_max_norm: f64,
    /// Objective after each accepted step, starting with the value at zero.
    pub objective_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel {
    /// `C x d`, one row per entry of `classes`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub params: LogRegParams,
    /// Sorted ascending.
    pub classes: Vec<u8>,
}

/// Value and gradient of `0.5 ||W||^2 + c_reg * sum_i CE(softmax(W x_i + b), y_i)`.
/// `y` holds class indices in `0..weights.nrows()`.
pub fn objective(
    x: ArrayView2<f64>,
    y: &[usize],
    weights: ArrayView2<f64>,
    biases: ArrayView1<f64>,
    c_reg: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let mut scores = x.dot(&weights.t());
    scores += &biases;
    let mut ce = 0.0;
    for (mut row, &label) in scores.axis_iter_mut(Axis(0)).zip(y) {
        let lse = log_sum_exp(row.view());
        ce += lse - row[label];
        row.mapv_inplace(|v| (v - lse).exp());
        row[label] -= 1.0;
    }
    // `scores` now holds softmax - onehot
    let mut grad_w = scores.t().dot(&x);
    grad_w *= c_reg;
    grad_w += &weights;
    let grad_b = scores.sum_axis(Axis(0)) * c_reg;
    let reg = 0.5 * weights.iter().map(|w| w * w).sum::<f64>();
    (reg + c_reg * ce, grad_w, grad_b)
}

fn log_sum_exp(row: ArrayView1<f64>) -> f64 {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Fits the model by full-batch L-BFGS with Armijo backtracking from a zero
/// start. Single-threaded and deterministic.
pub fn fit_logreg(
    x: &Array2<f64>,
    y: &[u8],
    params: LogRegParams,
) -> Result<(LogRegModel, TrainReport)> {
    params.validate()?;
    if x.nrows() == 0 {
        return Err(Error::Empty("training matrix"));
    }
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features"));
    }
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass(classes[0]));
    }
    let idx: Vec<usize> = y
        .iter()
        .map(|c| classes.binary_search(c).expect("collected above"))
        .collect();

    let (c, d) = (classes.len(), x.ncols());
    let n_w = c * d;
    let eval = |theta: &[f64]| -> (f64, Vec<f64>) {
        let w = ArrayView2::from_shape((c, d), &theta[..n_w]).expect("shape");
        let b = ArrayView1::from(&theta[n_w..]);
        let (f, gw, gb) = objective(x.view(), &idx, w, b, params.c_reg);
        let mut g = Vec::with_capacity(theta.len());
        g.extend(gw.iter());
        g.extend(gb.iter());
        (f, g)
    };

    let mut theta = vec![0.0; n_w + c];
    let (mut f, mut g) = eval(&theta);
    check_finite(f, &g, 0)?;
    let mut history = vec![f];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);
    let mut iterations = 0;
    let mut converged = max_abs(&g) <= params.tol;

    while !converged && iterations < params.max_iter {
        let mut dir = two_loop(&g, &memory);
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            memory.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if memory.is_empty() {
            (1.0 / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, p)| t + step * p).collect();
            let (f_new, g_new) = eval(&trial);
            if f_new.is_finite() && f_new <= f + ARMIJO_C1 * step * slope {
                accepted = Some((trial, f_new, g_new));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((trial, f_new, g_new)) = accepted else {
            // no decrease is representable along this direction
            break;
        };
        check_finite(f_new, &g_new, iterations)?;

        let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if memory.len() == HISTORY {
                memory.pop_front();
            }
            memory.push_back((s, yv, 1.0 / sy));
        }
        theta = trial;
        f = f_new;
        g = g_new;
        history.push(f);
        converged = max_abs(&g) <= params.tol;
    }

    let weights = Array2::from_shape_vec((c, d), theta[..n_w].to_vec()).expect("shape");
    let biases = Array1::from(theta[n_w..].to_vec());
    let report = TrainReport {
        iterations,
        converged,
        final_objective: f,
        grad_max_norm: max_abs(&g),
        objective_history: history,
    };
    Ok((
        LogRegModel {
            weights,
            biases,
            params,
            classes,
        },
        report,
    ))
}

fn check_finite(f: f64, g: &[f64], iteration: usize) -> Result<()> {
    if f.is_finite() && g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteObjective { iteration })
    }
}

fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

impl LogRegModel {
    /// A model with all weights and biases zero.
    pub fn zeros(classes: Vec<u8>, dim: usize, params: LogRegParams) -> Self {
        let c = classes.len();
        Self {
            weights: Array2::zeros((c, dim)),
            biases: Array1::zeros(c),
            params,
            classes,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn decision_function(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        let mut scores = x.dot(&self.weights.t());
        scores += &self.biases;
        Ok(scores)
    }

    /// Softmax class probabilities, columns ordered as `classes`.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut scores = self.decision_function(x)?;
        for mut row in scores.axis_iter_mut(Axis(0)) {
            let lse = log_sum_exp(row.view());
            row.mapv_inplace(|v| (v - lse).exp());
        }
        Ok(scores)
    }

    /// Argmax of the scores; ties go to the smallest class id.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<u8>> {
        let scores = self.decision_function(x)?;
        Ok(scores
            .axis_iter(Axis(0))
            .map(|row| {
                let mut best = 0;
                for (j, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = j;
                    }
                }
                self.classes[best]
            })
            .collect())
    }

    /// Training-objective parts at the current parameters: `(0.5 ||W||^2, sum CE)`.
    pub fn objective_parts(&self, x: &Array2<f64>, y: &[u8]) -> Result<(f64, f64)> {
        let idx = y
            .iter()
            .map(|c| {
                self.classes
                    .binary_search(c)
                    .map_err(|_| Error::Config(format!("label {c} not among model classes")))
            })
            .collect::<Result<Vec<_>>>()?;
        if x.ncols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        let (total, _, _) = objective(x.view(), &idx, self.weights.view(), self.biases.view(), 1.0);
        let reg = 0.5 * self.weights.iter().map(|w| w * w).sum::<f64>();
        Ok((reg, total - reg))
    }

    /// Weight and bias for one class, for inspection.
    pub fn class_row(&self, class: u8) -> Option<(ArrayView1<'_, f64>, f64)> {
        let i = self.classes.binary_search(&class).ok()?;
        Some((self.weights.slice(s![i, ..]), self.biases[i]))
    }
}
