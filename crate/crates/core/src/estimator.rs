//! Initial-state recovery by minimizing
//!
//! ```text
//! J(x) = ½ ∫₀ᵀ ‖C e^{−Lt} x − ŷ(t)‖² dt + (λ/2) ‖x‖²
//! ```
//!
//! The integral is the trapezoidal rule on the observation grid. The gradient
//! comes from the adjoint equation `dP/dτ = −L P + Cᵀ û(τ)`, `P(0) = 0`, run
//! forward in reversed time `τ = T − t` with `û(τ) = y(T−τ) − ŷ(T−τ)`, so that
//! `∇J = P(T) + λ x`.
//!
//! The default adjoint scheme propagates `P` exactly between samples in the
//! Laplacian eigenbasis and injects the forcing with trapezoidal weights. That
//! makes the gradient exact for the discretized objective, which is what the
//! descent loop and any finite-difference check see. A classical RK4 scheme
//! with linearly interpolated forcing is available for comparison.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dynamics::{NetworkSystem, StateVector, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::SymmetricEigen;
use crate::scalar::Real;

/// Consecutive objective increases tolerated under a fixed step.
pub const DIVERGENCE_WINDOW: usize = 10;

/// Power-iteration sweeps used to estimate the Lipschitz constant of `∇J`.
const LIPSCHITZ_SWEEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule<T> {
    Fixed(T),
    /// Armijo backtracking: accept `α` once `J(x − α g) ≤ J(x) − c α ‖g‖²`,
    /// shrinking by `rho` otherwise. Each iteration starts from the last
    /// accepted step enlarged by `1/rho`.
    Backtracking { c: T, rho: T },
    /// Barzilai–Borwein spectral step `sᵀs / sᵀy`. Non-monotone; the best
    /// iterate is returned.
    BarzilaiBorwein,
}

impl<T: Real> Default for StepRule<T> {
    fn default() -> Self {
        StepRule::Backtracking {
            c: T::lit(1e-4),
            rho: T::lit(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init<T> {
    #[default]
    Zeros,
    Custom(StateVector<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjointScheme {
    /// Exact propagation between samples, trapezoidal forcing.
    #[default]
    Exponential,
    /// RK4 at the sample period with linearly interpolated forcing.
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig<T> {
    pub lambda: T,
    pub max_iters: usize,
    /// Stop once `‖∇J‖₂ ≤ grad_tol`; `None` means `1e-8 · ‖Ŷ‖_F`.
    pub grad_tol: Option<T>,
    pub step_rule: StepRule<T>,
    pub init: Init<T>,
    pub adjoint: AdjointScheme,
}

impl<T: Real> EstimationConfig<T> {
    pub fn new(lambda: T) -> Self {
        Self {
            lambda,
            max_iters: 5000,
            grad_tol: None,
            step_rule: StepRule::default(),
            init: Init::Zeros,
            adjoint: AdjointScheme::default(),
        }
    }

    /// `1e-6 · k · T`.
    pub fn default_lambda(k: usize, horizon: T) -> T {
        T::lit(1e-6) * T::from_usize_lossy(k) * horizon
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_grad_tol(mut self, tol: T) -> Self {
        self.grad_tol = Some(tol);
        self
    }

    pub fn with_step_rule(mut self, rule: StepRule<T>) -> Self {
        self.step_rule = rule;
        self
    }

    pub fn with_init(mut self, init: Init<T>) -> Self {
        self.init = init;
        self
    }

    pub fn with_adjoint(mut self, scheme: AdjointScheme) -> Self {
        self.adjoint = scheme;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.lambda >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        if let Some(tol) = self.grad_tol {
            if !(tol > T::zero()) {
                return Err(Error::InvalidParameter(format!("grad_tol must be positive, got {tol}")));
            }
        }
        match self.step_rule {
            StepRule::Fixed(a) if !(a > T::zero()) => {
                return Err(Error::InvalidParameter(format!("fixed step must be positive, got {a}")))
            }
            StepRule::Backtracking { c, rho }
                if !(c > T::zero() && c < T::one() && rho > T::zero() && rho < T::one()) =>
            {
                return Err(Error::InvalidParameter(format!(
                    "backtracking needs 0 < c < 1 and 0 < rho < 1, got c = {c}, rho = {rho}"
                )))
            }
            _ => {}
        }
        if let Init::Custom(x) = &self.init {
            if x.len() != n {
                return Err(Error::Shape(format!(
                    "initial guess has {} entries, system has {n} nodes",
                    x.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult<T> {
    pub x0_hat: StateVector<T>,
    /// `J` at the initial guess followed by one entry per iteration.
    pub objective_history: Vec<T>,
    /// `‖∇J‖₂`, aligned with `objective_history`.
    pub grad_norm_history: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct ResultDoc<T> {
    x0_hat: Vec<T>,
    objective_history: Vec<T>,
    grad_norm_history: Vec<T>,
    iterations: usize,
    converged: bool,
}

impl<T: Real> EstimationResult<T> {
    pub fn final_objective(&self) -> T {
        *self.objective_history.last().expect("history starts with the initial guess")
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ResultDoc {
            x0_hat: self.x0_hat.to_vec(),
            objective_history: self.objective_history.clone(),
            grad_norm_history: self.grad_norm_history.clone(),
            iterations: self.iterations,
            converged: self.converged,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ResultDoc<T> = serde_json::from_str(s)?;
        Ok(Self {
            x0_hat: Array1::from(doc.x0_hat),
            objective_history: doc.objective_history,
            grad_norm_history: doc.grad_norm_history,
            iterations: doc.iterations,
            converged: doc.converged,
        })
    }
}

/// Discretized objective bound to one system and one observed trajectory.
pub struct Problem<'a, T> {
    sys: &'a NetworkSystem<T>,
    eig: &'a SymmetricEigen<T>,
    /// `C V`: accessible rows of the eigenvector matrix.
    cv: Array2<T>,
    observed: &'a Trajectory<T>,
    weights: Array1<T>,
    lambda: T,
}

impl<'a, T: Real> Problem<'a, T> {
    pub fn new(sys: &'a NetworkSystem<T>, observed: &'a Trajectory<T>, lambda: T) -> Result<Self> {
        if observed.width() != sys.k() {
            return Err(Error::Shape(format!(
                "trajectory has {} output channels, system has k = {}",
                observed.width(),
                sys.k()
            )));
        }
        if !(lambda >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        observed.uniform_step()?;
        let eig = sys.eigen()?;
        let mut cv = Array2::zeros((sys.k(), sys.n()));
        for (row, &node) in sys.accessible().iter().enumerate() {
            cv.row_mut(row).assign(&eig.vectors.row(node));
        }
        Ok(Self {
            sys,
            eig,
            cv,
            observed,
            weights: observed.trapezoid_weights(),
            lambda,
        })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    fn check(&self, x: &StateVector<T>) -> Result<()> {
        if x.len() != self.sys.n() {
            return Err(Error::Shape(format!(
                "state has {} entries, system has {} nodes",
                x.len(),
                self.sys.n()
            )));
        }
        Ok(())
    }

    /// Output residuals `C e^{−L tᵢ} x − ŷᵢ`, one row per sample.
    fn residuals(&self, x: &StateVector<T>) -> Array2<T> {
        let modal = self.eig.vectors.t().dot(x);
        let times = self.observed.times();
        let obs = self.observed.samples();
        let mut res = Array2::zeros(obs.dim());
        let mut decayed = Array1::zeros(modal.len());
        for (i, &t) in times.iter().enumerate() {
            for ((d, &z), &lam) in decayed.iter_mut().zip(modal.iter()).zip(self.eig.values.iter()) {
                *d = z * (-lam * t).exp();
            }
            let mut row = res.row_mut(i);
            row.assign(&self.cv.dot(&decayed));
            row -= &obs.row(i);
        }
        res
    }

    fn objective_from(&self, res: &Array2<T>, x: &StateVector<T>) -> T {
        let half = T::lit(0.5);
        let mismatch: T = res
            .outer_iter()
            .zip(self.weights.iter())
            .map(|(r, &w)| w * r.dot(&r))
            .sum();
        half * mismatch + half * self.lambda * x.dot(x)
    }

    pub fn objective(&self, x: &StateVector<T>) -> Result<T> {
        self.check(x)?;
        Ok(self.objective_from(&self.residuals(x), x))
    }

    pub fn gradient(&self, x: &StateVector<T>, scheme: AdjointScheme) -> Result<StateVector<T>> {
        Ok(self.evaluate(x, scheme)?.1)
    }

    /// Objective and gradient from one forward pass.
    pub fn evaluate(&self, x: &StateVector<T>, scheme: AdjointScheme) -> Result<(T, StateVector<T>)> {
        self.check(x)?;
        let res = self.residuals(x);
        let j = self.objective_from(&res, x);
        let mut p = match scheme {
            AdjointScheme::Exponential => self.adjoint_exponential(&res),
            AdjointScheme::Rk4 => self.adjoint_rk4(&res),
        };
        p.scaled_add(self.lambda, x);
        Ok((j, p))
    }

    /// `P(T) = Σᵢ wᵢ e^{−L tᵢ} Cᵀ rᵢ`, accumulated in reversed time in the
    /// eigenbasis: decay over each gap, then inject the weighted forcing.
    fn adjoint_exponential(&self, res: &Array2<T>) -> Array1<T> {
        let times = self.observed.times();
        let m = times.len();
        let mut modal = Array1::<T>::zeros(self.sys.n());
        for i in (0..m).rev() {
            if i + 1 < m {
                let gap = times[i + 1] - times[i];
                for (p, &lam) in modal.iter_mut().zip(self.eig.values.iter()) {
                    *p *= (-lam * gap).exp();
                }
            }
            modal.scaled_add(self.weights[i], &self.cv.t().dot(&res.row(i)));
        }
        self.eig.vectors.dot(&modal)
    }

    /// RK4 on `dP/dτ = −L P + Cᵀ û(τ)` with `û` linear between samples.
    fn adjoint_rk4(&self, res: &Array2<T>) -> Array1<T> {
        let times = self.observed.times();
        let lap = self.sys.laplacian();
        let acc = self.sys.accessible();
        let m = times.len();
        let half = T::lit(0.5);
        let sixth = T::one() / T::lit(6.0);
        let two = T::lit(2.0);

        let rhs = |p: &Array1<T>, forcing: ArrayView1<'_, T>| -> Array1<T> {
            let mut d = lap.dot(p).mapv(|v| -v);
            for (&node, &u) in acc.iter().zip(forcing.iter()) {
                d[node] += u;
            }
            d
        };

        let mut p = Array1::<T>::zeros(self.sys.n());
        for i in (1..m).rev() {
            // τ runs from T − tᵢ to T − tᵢ₋₁; the forcing moves from rᵢ to rᵢ₋₁.
            let h = times[i] - times[i - 1];
            let u0 = res.row(i);
            let u1 = res.row(i - 1);
            let umid = (&u0 + &u1) * half;
            let k1 = rhs(&p, u0);
            let k2 = rhs(&(&p + &(&k1 * (h * half))), umid.view());
            let k3 = rhs(&(&p + &(&k2 * (h * half))), umid.view());
            let k4 = rhs(&(&p + &(&k3 * h)), u1);
            let incr = (&k1 + &(&k2 * two) + &(&k3 * two) + &k4) * (h * sixth);
            p += &incr;
        }
        p
    }

    /// Largest eigenvalue of the Gauss–Newton operator `∇²J`, estimated by
    /// power iteration (a lower bound that tightens with more sweeps).
    pub fn lipschitz_estimate(&self, sweeps: usize) -> Result<T> {
        let n = self.sys.n();
        let zero_obs = Trajectory::new(
            self.observed.times().clone(),
            Array2::zeros(self.observed.samples().dim()),
        )?;
        let op = Problem::new(self.sys, &zero_obs, self.lambda)?;
        let mut v = Array1::from_shape_fn(n, |i| T::one() + T::from_usize_lossy(i % 7) / T::lit(7.0));
        let mut norm = v.dot(&v).sqrt();
        v /= norm;
        let mut estimate = T::zero();
        for _ in 0..sweeps.max(1) {
            let hv = op.gradient(&v, AdjointScheme::Exponential)?;
            estimate = v.dot(&hv);
            norm = hv.dot(&hv).sqrt();
            if norm == T::zero() {
                break;
            }
            v = hv / norm;
        }
        Ok(estimate.max(norm))
    }
}

pub fn objective<T: Real>(
    sys: &NetworkSystem<T>,
    x0: &StateVector<T>,
    observed: &Trajectory<T>,
    lambda: T,
) -> Result<T> {
    Problem::new(sys, observed, lambda)?.objective(x0)
}

/// Adjoint gradient with the default (exponential) scheme.
pub fn gradient<T: Real>(
    sys: &NetworkSystem<T>,
    x0: &StateVector<T>,
    observed: &Trajectory<T>,
    lambda: T,
) -> Result<StateVector<T>> {
    Problem::new(sys, observed, lambda)?.gradient(x0, AdjointScheme::Exponential)
}

pub fn gradient_with<T: Real>(
    sys: &NetworkSystem<T>,
    x0: &StateVector<T>,
    observed: &Trajectory<T>,
    lambda: T,
    scheme: AdjointScheme,
) -> Result<StateVector<T>> {
    Problem::new(sys, observed, lambda)?.gradient(x0, scheme)
}

fn norm<T: Real>(v: &Array1<T>) -> T {
    v.dot(v).sqrt()
}

/// Gradient descent on `J` until `‖∇J‖₂ ≤ grad_tol` or `max_iters`.
pub fn estimate<T: Real>(
    sys: &NetworkSystem<T>,
    observed: &Trajectory<T>,
    cfg: &EstimationConfig<T>,
) -> Result<EstimationResult<T>> {
    cfg.validate(sys.n())?;
    let problem = Problem::new(sys, observed, cfg.lambda)?;
    let scheme = cfg.adjoint;
    let tol = cfg.grad_tol.unwrap_or_else(|| {
        let obs = observed.samples();
        T::lit(1e-8) * obs.iter().map(|&v| v * v).sum::<T>().sqrt()
    });

    let mut x = match &cfg.init {
        Init::Zeros => Array1::zeros(sys.n()),
        Init::Custom(x) => x.clone(),
    };
    let (mut j, mut g) = problem.evaluate(&x, scheme)?;
    let mut gnorm = norm(&g);
    let mut objective_history = vec![j];
    let mut grad_norm_history = vec![gnorm];
    let mut best = (j, x.clone());

    let base_step = match cfg.step_rule {
        StepRule::Fixed(a) => a,
        _ => {
            let lip = problem.lipschitz_estimate(LIPSCHITZ_SWEEPS)?;
            if lip > T::zero() {
                T::one() / lip
            } else {
                T::one()
            }
        }
    };
    let mut step = base_step;
    let mut increases = 0usize;
    let mut prev: Option<(Array1<T>, Array1<T>)> = None;
    let mut iterations = 0usize;

    while iterations < cfg.max_iters && gnorm > tol {
        let (x_new, j_new, g_new) = match cfg.step_rule {
            StepRule::Fixed(a) => {
                let mut xn = x.clone();
                xn.scaled_add(-a, &g);
                let (jn, gn) = problem.evaluate(&xn, scheme)?;
                increases = if jn > j { increases + 1 } else { 0 };
                if increases >= DIVERGENCE_WINDOW {
                    return Err(Error::StepSize(DIVERGENCE_WINDOW));
                }
                (xn, jn, gn)
            }
            StepRule::Backtracking { c, rho } => {
                let g2 = gnorm * gnorm;
                let mut a = step / rho;
                let floor = base_step * T::epsilon();
                let accepted = loop {
                    let mut xn = x.clone();
                    xn.scaled_add(-a, &g);
                    let jn = problem.objective(&xn)?;
                    if jn <= j - c * a * g2 {
                        break Some((xn, jn));
                    }
                    a *= rho;
                    if a < floor {
                        break None;
                    }
                };
                // No step gives sufficient decrease: stalled at rounding level.
                let Some((xn, jn)) = accepted else { break };
                step = a;
                let gn = problem.gradient(&xn, scheme)?;
                (xn, jn, gn)
            }
            StepRule::BarzilaiBorwein => {
                let a = match &prev {
                    Some((s, y)) => {
                        let sy = s.dot(y);
                        if sy > T::zero() {
                            s.dot(s) / sy
                        } else {
                            base_step
                        }
                    }
                    None => base_step,
                };
                let mut xn = x.clone();
                xn.scaled_add(-a, &g);
                let (jn, gn) = problem.evaluate(&xn, scheme)?;
                prev = Some((&xn - &x, &gn - &g));
                (xn, jn, gn)
            }
        };
        iterations += 1;
        x = x_new;
        j = j_new;
        g = g_new;
        gnorm = norm(&g);
        objective_history.push(j);
        grad_norm_history.push(gnorm);
        if !j.is_finite() {
            return Err(Error::StepSize(iterations));
        }
        if j <= best.0 {
            best = (j, x.clone());
        }
    }

    Ok(EstimationResult {
        x0_hat: best.1,
        objective_history,
        grad_norm_history,
        iterations,
        converged: gnorm <= tol,
    })
}

/// `‖estimate − truth‖₂ / ‖truth‖₂`.
pub fn relative_error<T: Real>(estimate: &StateVector<T>, truth: &StateVector<T>) -> T {
    let diff = estimate - truth;
    let denom = norm(truth);
    if denom == T::zero() {
        norm(&diff)
    } else {
        norm(&diff) / denom
    }
}
