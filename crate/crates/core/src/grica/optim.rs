use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Optimizer {
    /// Limited-memory BFGS with Armijo backtracking; `step` is the trial
    /// length of the first (steepest-descent) move.
    Lbfgs { memory: usize, step: f64 },
    /// Adam with learning rate `step`.
    Adam { step: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Lbfgs { memory: 10, step: 1.0 }
    }
}

impl Optimizer {
    pub fn check(&self) -> Result<(), String> {
        let (step, memory) = match *self {
            Optimizer::Lbfgs { memory, step } => (step, memory),
            Optimizer::Adam { step } => (step, 1),
        };
        if !(step > 0.0 && step.is_finite()) {
            return Err(format!("step size must be positive, got {step}"));
        }
        if memory == 0 {
            return Err("L-BFGS memory must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` from `x0`; `f` returns the value and gradient. Stops when
/// the gradient's largest component drops below `tol`, after `max_iter`
/// iterations, when no descent step can be found, or on a non-finite value.
pub fn minimize<F>(f: F, x0: Vec<f64>, optimizer: Optimizer, max_iter: usize, tol: f64) -> OptimResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    match optimizer {
        Optimizer::Lbfgs { memory, step } => lbfgs(f, x0, memory, step, max_iter, tol),
        Optimizer::Adam { step } => adam(f, x0, step, max_iter, tol),
    }
}

fn lbfgs<F>(f: F, mut x: Vec<f64>, memory: usize, step0: f64, max_iter: usize, tol: f64) -> OptimResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (mut fx, mut g) = f(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut iterations = 0;
    while iterations < max_iter && fx.is_finite() && inf_norm(&g) > tol {
        let mut d = direction(&g, &history);
        let mut slope = dot(&d, &g);
        if history.is_empty() || slope >= 0.0 {
            history.clear();
            let scale = step0 / inf_norm(&g).max(1.0);
            d = g.iter().map(|v| -v * scale).collect();
            slope = dot(&d, &g);
        }
        let Some((x_new, f_new, g_new)) = backtrack(&f, &x, fx, &d, slope) else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        iterations += 1;
    }
    let grad_norm = inf_norm(&g);
    OptimResult {
        x,
        value: fx,
        iterations,
        grad_norm,
        converged: fx.is_finite() && grad_norm <= tol,
    }
}

/// Two-loop recursion for `−H g`.
fn direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alpha.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alpha.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

type Trial = (Vec<f64>, f64, Vec<f64>);

fn backtrack<F>(f: &F, x: &[f64], fx: f64, d: &[f64], slope: f64) -> Option<Trial>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    const C1: f64 = 1e-4;
    let mut t = 1.0;
    for _ in 0..60 {
        let x_new: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        let (f_new, g_new) = f(&x_new);
        if f_new.is_finite() && f_new <= fx + C1 * t * slope {
            return Some((x_new, f_new, g_new));
        }
        t *= 0.5;
    }
    None
}

fn adam<F>(f: F, mut x: Vec<f64>, step: f64, max_iter: usize, tol: f64) -> OptimResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    let mut m = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    let (mut fx, mut g) = f(&x);
    let mut best = (x.clone(), fx, g.clone());
    let mut iterations = 0;
    while iterations < max_iter && fx.is_finite() && inf_norm(&g) > tol {
        iterations += 1;
        let c1 = 1.0 - B1.powi(iterations as i32);
        let c2 = 1.0 - B2.powi(iterations as i32);
        for k in 0..x.len() {
            m[k] = B1 * m[k] + (1.0 - B1) * g[k];
            v[k] = B2 * v[k] + (1.0 - B2) * g[k] * g[k];
            x[k] -= step * (m[k] / c1) / ((v[k] / c2).sqrt() + 1e-12);
        }
        (fx, g) = f(&x);
        if fx < best.1 {
            best = (x.clone(), fx, g.clone());
        }
    }
    // Adam is not a descent method; report the best iterate seen.
    let (x, value, g) = best;
    let grad_norm = inf_norm(&g);
    OptimResult {
        x,
        value,
        iterations,
        grad_norm,
        converged: value.is_finite() && grad_norm <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let r = minimize(rosenbrock, vec![-1.2, 1.0], Optimizer::default(), 1000, 1e-8);
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn adam_reaches_quadratic_minimum() {
        let f = |x: &[f64]| {
            let f = (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
            (f, vec![2.0 * (x[0] - 3.0), 4.0 * (x[1] + 1.0)])
        };
        let r = minimize(f, vec![0.0, 0.0], Optimizer::Adam { step: 0.05 }, 5000, 1e-6);
        assert!((r.x[0] - 3.0).abs() < 1e-3 && (r.x[1] + 1.0).abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn starting_at_minimum_takes_no_steps() {
        let r = minimize(rosenbrock, vec![1.0, 1.0], Optimizer::default(), 100, 1e-8);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn empty_problem() {
        let r = minimize(|_| (2.5, vec![]), vec![], Optimizer::default(), 100, 1e-8);
        assert_eq!(r.value, 2.5);
        assert!(r.converged);
    }
}
