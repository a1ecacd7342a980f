//! Limited-memory BFGS minimizer with a strong Wolfe line search.
//!
//! Near the optimum the objective's rounding noise can exceed the decrease a
//! step is able to produce, which stalls a pure Armijo test. The line search
//! therefore also accepts steps meeting the approximate Wolfe conditions of
//! Hager and Zhang, which rely on the directional derivative instead.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the gradient sup-norm falls below this.
    pub gradient_tolerance: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 2000,
            gradient_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    /// No acceptable step could be found even along steepest descent.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

impl Outcome {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn gradient_norm(&self) -> f64 {
        sup_norm(&self.gradient)
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_BRACKET: usize = 25;
const MAX_ZOOM: usize = 40;
/// Relative slack allowed on the objective under approximate Wolfe.
const APPROX_EPS: f64 = 1e-12;

#[derive(Clone)]
struct Trial {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    gradient: Vec<f64>,
}

struct Problem<'f, F> {
    objective: &'f mut F,
    evaluations: usize,
}

impl<F> Problem<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    /// Evaluates at `x + alpha d`; failures and non-finite values become
    /// `+inf` so the line search backs off.
    fn trial(&mut self, x: &[f64], d: &[f64], alpha: f64) -> Trial {
        let point: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        self.evaluations += 1;
        match (self.objective)(&point) {
            Ok((value, gradient)) if value.is_finite() && gradient.iter().all(|g| g.is_finite()) => {
                let slope = dot(&gradient, d);
                Trial {
                    alpha,
                    value,
                    slope,
                    x: point,
                    gradient,
                }
            }
            _ => Trial {
                alpha,
                value: f64::INFINITY,
                slope: f64::NAN,
                x: point,
                gradient: Vec::new(),
            },
        }
    }
}

fn acceptable(t: &Trial, f0: f64, d0: f64) -> bool {
    if !t.value.is_finite() {
        return false;
    }
    let armijo = t.value <= f0 + C1 * t.alpha * d0;
    if armijo && t.slope.abs() <= -C2 * d0 {
        return true;
    }
    let eps = APPROX_EPS * (1.0 + f0.abs());
    t.value <= f0 + eps && t.slope >= C2 * d0 && t.slope <= (2.0 * C1 - 1.0) * d0
}

/// Safeguarded cubic interpolation inside `[lo, hi]`.
fn interpolate(lo: &Trial, hi: &Trial) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let width = right - left;
    let fallback = 0.5 * (a + b);
    if !hi.value.is_finite() || !hi.slope.is_finite() {
        return fallback;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return fallback;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = hi.slope - lo.slope + 2.0 * d2;
    if denom == 0.0 {
        return fallback;
    }
    let t = b - (b - a) * (hi.slope + d2 - d1) / denom;
    if t.is_finite() && t > left + 0.1 * width && t < right - 0.1 * width {
        t
    } else {
        fallback
    }
}

fn line_search<F>(problem: &mut Problem<'_, F>, x: &[f64], f0: f64, d: &[f64], d0: f64, first: f64) -> Option<Trial>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let origin = Trial {
        alpha: 0.0,
        value: f0,
        slope: d0,
        x: x.to_vec(),
        gradient: Vec::new(),
    };
    let mut prev = origin.clone();
    let mut alpha = first;
    for i in 0..MAX_BRACKET {
        let t = problem.trial(x, d, alpha);
        if !t.value.is_finite() || t.value > f0 + C1 * alpha * d0 || (i > 0 && t.value >= prev.value) {
            if acceptable(&t, f0, d0) {
                return Some(t);
            }
            return zoom(problem, x, f0, d, d0, prev, t);
        }
        if acceptable(&t, f0, d0) {
            return Some(t);
        }
        if t.slope >= 0.0 {
            return zoom(problem, x, f0, d, d0, t, prev);
        }
        prev = t;
        alpha *= 2.0;
    }
    (prev.alpha > 0.0).then_some(prev)
}

fn zoom<F>(
    problem: &mut Problem<'_, F>,
    x: &[f64],
    f0: f64,
    d: &[f64],
    d0: f64,
    mut lo: Trial,
    mut hi: Trial,
) -> Option<Trial>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    for _ in 0..MAX_ZOOM {
        if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(hi.alpha.abs()) {
            break;
        }
        let alpha = interpolate(&lo, &hi);
        let t = problem.trial(x, d, alpha);
        if acceptable(&t, f0, d0) {
            return Some(t);
        }
        if !t.value.is_finite() || t.value > f0 + C1 * alpha * d0 || t.value >= lo.value {
            hi = t;
        } else {
            if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    // Fall back to the best sufficient-decrease point found, if any.
    (lo.alpha > 0.0 && lo.value < f0).then_some(lo)
}

/// Minimizes `objective`, which returns the value and gradient at a point.
pub fn minimize<F>(x0: Vec<f64>, options: &LbfgsOptions, mut objective: F) -> Result<Outcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (mut value, mut gradient) = objective(&x0)?;
    if !value.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Initialization(format!(
            "objective is not finite at the starting point (value {value})"
        )));
    }
    let mut problem = Problem {
        objective: &mut objective,
        evaluations: 1,
    };
    let mut x = x0;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(options.memory);
    let mut iterations = 0;
    let mut status = Status::MaxIterations;

    while iterations < options.max_iterations {
        if sup_norm(&gradient) < options.gradient_tolerance {
            status = Status::Converged;
            break;
        }
        let mut direction = two_loop(&gradient, &history);
        let mut slope = dot(&gradient, &direction);
        if !(slope < 0.0) {
            history.clear();
            direction = gradient.iter().map(|g| -g).collect();
            slope = dot(&gradient, &direction);
        }
        let first = if history.is_empty() {
            (1.0 / sup_norm(&gradient)).min(1.0)
        } else {
            1.0
        };
        let step = match line_search(&mut problem, &x, value, &direction, slope, first) {
            Some(t) => t,
            None if !history.is_empty() => {
                history.clear();
                continue;
            }
            None => {
                status = Status::LineSearchFailed;
                break;
            }
        };
        iterations += 1;
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.gradient.iter().zip(&gradient).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == options.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = step.x;
        value = step.value;
        gradient = step.gradient;
    }
    if status == Status::MaxIterations && sup_norm(&gradient) < options.gradient_tolerance {
        status = Status::Converged;
    }
    Ok(Outcome {
        x,
        value,
        gradient,
        iterations,
        evaluations: problem.evaluations,
        status,
    })
}

/// Two-loop recursion: returns `-H g`.
fn two_loop(gradient: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = gradient.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let scale = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= scale);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut f = 0.0;
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() - 1 {
            let a = x[i + 1] - x[i] * x[i];
            let b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
            g[i] += -400.0 * x[i] * a - 2.0 * b;
            g[i + 1] += 200.0 * a;
        }
        Ok((f, g))
    }

    #[test]
    fn minimizes_rosenbrock() {
        let opts = LbfgsOptions {
            gradient_tolerance: 1e-8,
            ..Default::default()
        };
        let out = minimize(vec![-1.2, 1.0, -0.5, 0.8], &opts, rosenbrock).unwrap();
        assert!(out.converged(), "{:?}", out.status);
        for v in &out.x {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_with_bad_scaling() {
        let scales = [1.0, 1e3, 1e-2, 50.0];
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let v = x.iter().zip(&scales).map(|(xi, s)| 0.5 * s * (xi - 2.0).powi(2)).sum();
            let g = x.iter().zip(&scales).map(|(xi, s)| s * (xi - 2.0)).collect();
            Ok((v, g))
        };
        let out = minimize(vec![0.0; 4], &LbfgsOptions::default(), f).unwrap();
        assert!(out.converged());
        assert!(out.gradient_norm() < 1e-6);
    }

    #[test]
    fn backs_off_from_failing_region() {
        // defined only for x > 0; minimum at x = 1
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] <= 0.0 {
                return Err(Error::Numerical("outside domain".into()));
            }
            Ok((x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]]))
        };
        let out = minimize(vec![5.0], &LbfgsOptions::default(), f).unwrap();
        assert!(out.converged());
        assert!((out.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((f64::NAN, vec![0.0])) };
        assert!(matches!(
            minimize(vec![0.0], &LbfgsOptions::default(), f),
            Err(Error::Initialization(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_status() {
        let opts = LbfgsOptions {
            max_iterations: 2,
            gradient_tolerance: 1e-12,
            ..Default::default()
        };
        let out = minimize(vec![-1.2, 1.0], &opts, rosenbrock).unwrap();
        assert_eq!(out.status, Status::MaxIterations);
        assert_eq!(out.iterations, 2);
    }
}
