//! First-order optimization: Adam over objectives with analytic gradients,
//! finite-difference gradient checking, and loss traces.

use std::fmt::Write as _;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Learning rate at the last iteration relative to the first; the rate
    /// decays geometrically in between. `1.0` keeps it constant.
    pub final_lr_scale: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig { learning_rate: 0.01, iterations: 1000, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, final_lr_scale: 1.0 }
    }
}

impl OptimConfig {
    pub fn new(learning_rate: f64, iterations: usize) -> Self {
        OptimConfig { learning_rate, iterations, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.iterations == 0 {
            return Err(Error::Invalid(format!(
                "optimizer needs lr > 0 and iterations >= 1, got lr {} and {} iterations",
                self.learning_rate, self.iterations
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Invalid("Adam betas must lie in [0, 1) and epsilon be positive".into()));
        }
        if !(self.final_lr_scale > 0.0 && self.final_lr_scale <= 1.0) {
            return Err(Error::Invalid(format!("final_lr_scale {} outside (0, 1]", self.final_lr_scale)));
        }
        Ok(())
    }

    /// Learning rate used at step `t` (0-based).
    pub fn lr_at(&self, t: usize) -> f64 {
        if self.final_lr_scale == 1.0 || self.iterations < 2 {
            return self.learning_rate;
        }
        self.learning_rate * self.final_lr_scale.powf(t as f64 / (self.iterations - 1) as f64)
    }
}

/// Adam moment state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    beta1: T,
    beta2: T,
    epsilon: T,
}

impl<T: Float> Adam<T> {
    pub fn new(dim: usize, cfg: &OptimConfig) -> Self {
        let c = |x: f64| T::from(x).expect("representable");
        Adam { m: vec![T::zero(); dim], v: vec![T::zero(); dim], t: 0, beta1: c(cfg.beta1), beta2: c(cfg.beta2), epsilon: c(cfg.epsilon) }
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, x: &mut [T], grad: &[T], lr: T) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for i in 0..x.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            x[i] = x[i] - lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Value of an objective split into named terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub total: f64,
    pub terms: Vec<f64>,
}

impl Evaluation {
    pub fn single(total: f64) -> Self {
        Evaluation { total, terms: vec![total] }
    }
}

/// A differentiable scalar objective.
///
/// `refresh` re-selects any discrete structure (nearest-neighbour matches,
/// active minima, hinge sides) at `x`; `evaluate` treats that structure as
/// fixed, so its gradient is exact for the frozen selection.
pub trait Objective {
    fn dim(&self) -> usize;

    fn term_names(&self) -> Vec<String> {
        vec!["total".into()]
    }

    fn refresh(&mut self, _x: &[f64]) {}

    /// Returns the loss and writes its gradient into `grad` (overwriting).
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Evaluation;
}

/// Wraps a closure `f(x, grad) -> loss` as an objective.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnObjective { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Evaluation {
        Evaluation::single((self.f)(x, grad))
    }
}

/// Per-iteration loss values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub term_names: Vec<String>,
    pub totals: Vec<f64>,
    pub terms: Vec<Vec<f64>>,
}

impl LossTrace {
    pub fn new(term_names: Vec<String>) -> Self {
        LossTrace { term_names, ..Default::default() }
    }

    pub fn push(&mut self, eval: &Evaluation) {
        self.totals.push(eval.total);
        self.terms.push(eval.terms.clone());
    }

    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }

    /// CSV with header `iteration,total,<terms...>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,total");
        for n in &self.term_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, (t, terms)) in self.totals.iter().zip(&self.terms).enumerate() {
            let _ = write!(out, "{i},{t}");
            for v in terms {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Result of [`minimize`].
#[derive(Debug, Clone)]
pub struct Minimized {
    /// Iterate after the last step.
    pub x: Vec<f64>,
    /// Evaluated iterate with the lowest loss (the start point included).
    pub best_x: Vec<f64>,
    pub best_loss: f64,
    pub trace: LossTrace,
}

/// Runs `cfg.iterations` Adam steps from `x0`. Entry `i` of the trace is the
/// loss at the iterate before step `i`.
pub fn minimize(objective: &mut dyn Objective, x0: &[f64], cfg: &OptimConfig) -> Result<Minimized> {
    cfg.validate()?;
    let n = objective.dim();
    if x0.len() != n {
        return Err(Error::LengthMismatch(format!("x0 has {} entries, objective expects {n}", x0.len())));
    }
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut adam = Adam::new(n, cfg);
    let mut trace = LossTrace { term_names: objective.term_names(), ..Default::default() };
    let (mut best_x, mut best_loss) = (x.clone(), f64::INFINITY);
    for it in 0..cfg.iterations {
        objective.refresh(&x);
        let eval = objective.evaluate(&x, &mut grad);
        if !eval.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        if eval.total < best_loss {
            best_loss = eval.total;
            best_x.copy_from_slice(&x);
        }
        trace.totals.push(eval.total);
        trace.terms.push(eval.terms);
        adam.step(&mut x, &grad, cfg.lr_at(it));
    }
    Ok(Minimized { x, best_x, best_loss, trace })
}

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub passed: bool,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    /// Coordinates skipped because the objective has a kink there.
    pub non_smooth: Vec<usize>,
    /// `(index, analytic, numeric, relative error)` above tolerance.
    pub failures: Vec<(usize, f64, f64, f64)>,
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_ABS_FLOOR: f64 = 1e-8;

/// Compares the analytic gradient at `x` to central differences with step
/// `1e-5`. The objective is refreshed once at `x`. A coordinate is treated as
/// non-smooth when the second difference does not shrink with the step, as it
/// would for a differentiable function.
pub fn grad_check(objective: &mut dyn Objective, x: &[f64], rel_tol: f64) -> GradCheckReport {
    let n = objective.dim();
    objective.refresh(x);
    let mut analytic = vec![0.0; n];
    let f0 = objective.evaluate(x, &mut analytic).total;
    let mut scratch = vec![0.0; n];
    let mut probe = x.to_vec();
    let mut f = |i: usize, delta: f64| {
        probe[i] = x[i] + delta;
        let v = objective.evaluate(&probe, &mut scratch).total;
        probe[i] = x[i];
        v
    };
    let h = GRAD_CHECK_STEP;
    let mut report = GradCheckReport { passed: true, max_rel_error: 0.0, worst_index: None, non_smooth: vec![], failures: vec![] };
    for i in 0..n {
        let (fp, fm) = (f(i, h), f(i, -h));
        let numeric = (fp - fm) / (2.0 * h);
        let curvature = (fp - 2.0 * f0 + fm).abs() / h;
        if curvature > 1e-6 * (1.0 + numeric.abs()) {
            let half = (f(i, h / 2.0) - 2.0 * f0 + f(i, -h / 2.0)).abs() / (h / 2.0);
            if half > 0.75 * curvature {
                report.non_smooth.push(i);
                continue;
            }
        }
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_ABS_FLOOR);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
        }
        if rel >= rel_tol {
            report.passed = false;
            report.failures.push((i, a, numeric, rel));
        }
    }
    report
}

/// Second-difference acceleration `2 x_i - x_{i-1} - x_{i+1}` penalty over a
/// frame-major track of `width` values per frame, `sum_i sum_k a_ik^2`.
/// Adds `weight *` its gradient into `grad` and returns the weighted value.
pub fn acceleration_penalty(track: &[f64], width: usize, weight: f64, grad: &mut [f64]) -> f64 {
    let frames = track.len() / width;
    let mut total = 0.0;
    for i in 1..frames.saturating_sub(1) {
        for k in 0..width {
            let (p, c, n) = (track[(i - 1) * width + k], track[i * width + k], track[(i + 1) * width + k]);
            let a = 2.0 * c - p - n;
            total += a * a;
            let g = 2.0 * weight * a;
            grad[i * width + k] += 2.0 * g;
            grad[(i - 1) * width + k] -= g;
            grad[(i + 1) * width + k] -= g;
        }
    }
    weight * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quadratic(c: Vec<f64>) -> FnObjective<impl Fn(&[f64], &mut [f64]) -> f64> {
        FnObjective::new(c.len(), move |x: &[f64], g: &mut [f64]| {
            let mut f = 0.0;
            for i in 0..x.len() {
                let d = x[i] - c[i];
                f += d * d;
                g[i] = 2.0 * d;
            }
            f
        })
    }

    #[test]
    fn adam_solves_quadratic() {
        let c = vec![0.3, -0.7, 1.1];
        let res = minimize(&mut quadratic(c.clone()), &[0.0; 3], &OptimConfig::new(0.1, 500)).unwrap();
        for i in 0..3 {
            assert!((res.x[i] - c[i]).abs() < 1e-4, "{:?}", res.x);
        }
        assert_eq!(res.trace.len(), 500);
    }

    #[test]
    fn adam_solves_rosenbrock() {
        let mut obj = FnObjective::new(2, |x: &[f64], g: &mut [f64]| {
            let (a, b) = (1.0 - x[0], x[1] - x[0] * x[0]);
            g[0] = -2.0 * a - 400.0 * x[0] * b;
            g[1] = 200.0 * b;
            a * a + 100.0 * b * b
        });
        let res = minimize(&mut obj, &[-1.2, 1.0], &OptimConfig::new(0.02, 5000)).unwrap();
        let mut g = [0.0; 2];
        let f = obj.evaluate(&res.x, &mut g).total;
        assert!(f < 1e-3, "{f} at {:?}", res.x);
    }

    #[test]
    fn zero_gradient_start_is_a_fixed_point() {
        let c = vec![0.5, -2.0];
        let res = minimize(&mut quadratic(c.clone()), &c, &OptimConfig::new(0.01, 100)).unwrap();
        assert_eq!(res.x, c);
    }

    #[test]
    fn non_finite_loss_reports_iteration() {
        let mut obj = FnObjective::new(1, |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            if x[0] < -0.025 {
                f64::NAN
            } else {
                x[0]
            }
        });
        match minimize(&mut obj, &[0.0], &OptimConfig::new(0.01, 10)) {
            Err(Error::NonFiniteLoss { iteration }) => assert_eq!(iteration, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grad_check_quadratic_and_kink() {
        let mut q = quadratic(vec![0.2, 0.4]);
        assert!(grad_check(&mut q, &[1.0, -1.0], 1e-6).passed);

        let mut abs = FnObjective::new(1, |x: &[f64], g: &mut [f64]| {
            g[0] = x[0].signum();
            x[0].abs()
        });
        let r = grad_check(&mut abs, &[0.0], 1e-6);
        assert_eq!(r.non_smooth, vec![0]);
        assert!(r.passed);

        let mut wrong = FnObjective::new(1, |x: &[f64], g: &mut [f64]| {
            g[0] = 3.0 * x[0];
            x[0] * x[0]
        });
        assert!(!grad_check(&mut wrong, &[1.0], 1e-3).passed);
    }

    #[test]
    fn smoothness_penalty_passes_grad_check() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut obj = FnObjective::new(30, |x: &[f64], g: &mut [f64]| {
                g.fill(0.0);
                acceleration_penalty(x, 3, 1.7, g)
            });
            let r = grad_check(&mut obj, &x, 1e-4);
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn trace_csv_layout() {
        let t = LossTrace { term_names: vec!["a".into()], totals: vec![2.0, 1.0], terms: vec![vec![2.0], vec![1.0]] };
        assert_eq!(t.to_csv(), "iteration,total,a\n0,2,2\n1,1,1\n");
    }

    #[test]
    fn decayed_rate_reaches_final_scale() {
        let cfg = OptimConfig { final_lr_scale: 0.1, ..OptimConfig::new(0.01, 11) };
        assert!((cfg.lr_at(10) - 0.001).abs() < 1e-15);
        assert_eq!(cfg.lr_at(0), 0.01);
    }

    proptest! {
        // Adam's steps are bounded by roughly the learning rate, so while the
        // iterate is far from the minimum every step descends.
        #[test]
        fn monotone_on_quadratic_before_arrival(
            c in proptest::collection::vec(-1.0..1.0f64, 1..6),
            scale in 0.5..20.0f64,
        ) {
            let start: Vec<f64> = c.iter().map(|v| v + 5.0).collect();
            let n = c.len();
            let mut obj = FnObjective::new(n, move |x: &[f64], g: &mut [f64]| {
                let mut f = 0.0;
                for i in 0..n {
                    let w = scale * (1.0 + i as f64);
                    f += w * (x[i] - c[i]).powi(2);
                    g[i] = 2.0 * w * (x[i] - c[i]);
                }
                f
            });
            let res = minimize(&mut obj, &start, &OptimConfig::new(0.01, 300)).unwrap();
            for w in res.trace.totals[10..].windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }
}
