//! Consensus dynamics `Ẋ = −L X`, the selector output `Y = C X`, and the
//! white-noise-driven variant `Ẋ = −L X + W`.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::SymmetricEigen;
use crate::scalar::Real;

pub type StateVector<T> = Array1<T>;

/// Laplacian plus the ordered set of accessible (measured) nodes.
#[derive(Debug)]
pub struct NetworkSystem<T> {
    laplacian: Array2<T>,
    accessible: Vec<usize>,
    eigen: OnceLock<SymmetricEigen<T>>,
}

impl<T: Real> Clone for NetworkSystem<T> {
    fn clone(&self) -> Self {
        Self {
            laplacian: self.laplacian.clone(),
            accessible: self.accessible.clone(),
            eigen: self.eigen.clone(),
        }
    }
}

impl<T: Real> NetworkSystem<T> {
    /// `accessible` holds 0-based node indices in output order.
    pub fn new(laplacian: Array2<T>, accessible: Vec<usize>) -> Result<Self> {
        let n = laplacian.nrows();
        if n == 0 || laplacian.ncols() != n {
            return Err(Error::Shape(format!(
                "laplacian must be square and non-empty, got {:?}",
                laplacian.dim()
            )));
        }
        let scale = laplacian.iter().fold(T::one(), |m, v| m.max(v.abs()));
        let tol = T::epsilon() * T::lit(16.0) * T::from_usize_lossy(n) * scale;
        let asym = crate::linalg::max_asymmetry(laplacian.view());
        if asym > tol {
            return Err(Error::NotSymmetric(asym.to_f64_lossy()));
        }
        for (i, row) in laplacian.axis_iter(Axis(0)).enumerate() {
            let sum: T = row.iter().copied().sum();
            if sum.abs() > tol {
                return Err(Error::InvalidGraph(format!(
                    "laplacian row {i} sums to {sum}, expected 0"
                )));
            }
            if row.iter().enumerate().any(|(j, &v)| j != i && v > T::zero()) {
                return Err(Error::InvalidGraph(format!(
                    "laplacian row {i} has a positive off-diagonal entry"
                )));
            }
        }
        if accessible.is_empty() || accessible.len() > n {
            return Err(Error::InvalidParameter(format!(
                "accessible set size must be in 1..={n}, got {}",
                accessible.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in &accessible {
            if i >= n {
                return Err(Error::InvalidParameter(format!(
                    "accessible node {} out of range 1..={n}",
                    i + 1
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParameter(format!(
                    "accessible node {} listed twice",
                    i + 1
                )));
            }
        }
        Ok(Self {
            laplacian,
            accessible,
            eigen: OnceLock::new(),
        })
    }

    pub fn from_graph(graph: &Graph, accessible: Vec<usize>) -> Result<Self> {
        Self::new(graph.laplacian(), accessible)
    }

    /// Nodes `1..=k` accessible, so `C = [I 0]`.
    pub fn with_prefix(graph: &Graph, k: usize) -> Result<Self> {
        if k == 0 || k > graph.num_nodes() {
            return Err(Error::InvalidParameter(format!(
                "accessible count k must be in 1..={}, got {k}",
                graph.num_nodes()
            )));
        }
        Self::from_graph(graph, (0..k).collect())
    }

    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn k(&self) -> usize {
        self.accessible.len()
    }

    pub fn laplacian(&self) -> &Array2<T> {
        &self.laplacian
    }

    pub fn accessible(&self) -> &[usize] {
        &self.accessible
    }

    /// Eigendecomposition of the Laplacian, computed on first use.
    pub fn eigen(&self) -> Result<&SymmetricEigen<T>> {
        if let Some(e) = self.eigen.get() {
            return Ok(e);
        }
        let e = SymmetricEigen::new(self.laplacian.view())?;
        Ok(self.eigen.get_or_init(|| e))
    }

    /// `k × N` selector with `c[i, accessible[i]] = 1`.
    pub fn output_matrix(&self) -> Array2<T> {
        let mut c = Array2::zeros((self.k(), self.n()));
        for (row, &node) in self.accessible.iter().enumerate() {
            c[[row, node]] = T::one();
        }
        c
    }

    /// `C x`.
    pub fn observe(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        self.accessible.iter().map(|&i| x[i]).collect()
    }

    /// `e^{−L t} x0` through the eigendecomposition.
    pub fn propagate(&self, x0: &StateVector<T>, t: T) -> Result<StateVector<T>> {
        if !(t >= T::zero()) {
            return Err(Error::InvalidTime(t.to_f64_lossy()));
        }
        self.check_state(x0)?;
        if t == T::zero() {
            return Ok(x0.clone());
        }
        Ok(self.eigen()?.apply_fn(x0, |lam| (-lam * t).exp()))
    }

    /// Outputs sampled at `i / rate` for every instant in `[0, horizon]`.
    pub fn simulate(&self, x0: &StateVector<T>, horizon: T, rate: T) -> Result<Trajectory<T>> {
        let times = sample_times(horizon, rate)?;
        self.check_state(x0)?;
        let mut samples = Array2::zeros((times.len(), self.k()));
        for (i, &t) in times.iter().enumerate() {
            let x = self.propagate(x0, t)?;
            samples.row_mut(i).assign(&self.observe(x.view()));
        }
        Trajectory::new(times, samples)
    }

    /// Euler–Maruyama path of `Ẋ = −L X + W` recorded at every step.
    pub fn simulate_noisy(
        &self,
        x0: &StateVector<T>,
        horizon: T,
        step: T,
        seed: u64,
        noise: Noise,
    ) -> Result<Trajectory<T>> {
        self.check_state(x0)?;
        let mut stepper = EulerMaruyama::new(self, x0.clone(), step, seed, noise)?;
        let steps = step_count(horizon, step)?;
        let mut times = Array1::zeros(steps + 1);
        let mut samples = Array2::zeros((steps + 1, self.n()));
        samples.row_mut(0).assign(stepper.state());
        for i in 1..=steps {
            stepper.advance();
            times[i] = T::from_usize_lossy(i) * step;
            samples.row_mut(i).assign(stepper.state());
        }
        Trajectory::new(times, samples)
    }

    fn check_state(&self, x: &StateVector<T>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Shape(format!(
                "state has {} entries, system has {} nodes",
                x.len(),
                self.n()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Whether the white-noise input is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    On,
    Off,
}

/// Explicit Euler–Maruyama integrator for `Ẋ = −L X + W` with unit-covariance `W`.
pub struct EulerMaruyama<'a, T> {
    laplacian: &'a Array2<T>,
    state: Array1<T>,
    step: T,
    sqrt_step: T,
    rng: ChaCha8Rng,
    noise: Noise,
}

impl<'a, T: Real> EulerMaruyama<'a, T> {
    /// Rejects `step ≥ 2/λ_max`, where the explicit scheme is unstable.
    pub fn new(
        sys: &'a NetworkSystem<T>,
        x0: Array1<T>,
        step: T,
        seed: u64,
        noise: Noise,
    ) -> Result<Self> {
        if !(step > T::zero()) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
        }
        let lam_max = sys.eigen()?.max_value();
        if lam_max > T::zero() {
            let bound = T::lit(2.0) / lam_max;
            if step >= bound {
                return Err(Error::Unstable {
                    step: step.to_f64_lossy(),
                    bound: bound.to_f64_lossy(),
                });
            }
        }
        Ok(Self {
            laplacian: sys.laplacian(),
            state: x0,
            step,
            sqrt_step: step.sqrt(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
        })
    }

    pub fn state(&self) -> &Array1<T> {
        &self.state
    }

    pub fn advance(&mut self) {
        let drift = self.laplacian.dot(&self.state);
        self.state.scaled_add(-self.step, &drift);
        if self.noise == Noise::On {
            for v in self.state.iter_mut() {
                let xi: f64 = StandardNormal.sample(&mut self.rng);
                *v += self.sqrt_step * T::lit(xi);
            }
        }
    }
}

/// `[0, 1/rate, 2/rate, …]` up to and including `horizon` when it falls on the grid.
pub fn sample_times<T: Real>(horizon: T, rate: T) -> Result<Array1<T>> {
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    if !(rate > T::zero()) || !rate.is_finite() {
        return Err(Error::InvalidParameter(format!("rate must be positive, got {rate}")));
    }
    let last = grid_count(horizon * rate);
    Ok((0..=last).map(|i| T::from_usize_lossy(i) / rate).collect())
}

fn step_count<T: Real>(horizon: T, step: T) -> Result<usize> {
    if !(step > T::zero()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    if !(horizon >= step) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must be at least one step ({step})"
        )));
    }
    Ok(grid_count(horizon / step))
}

/// `floor(x)` tolerant to representation error just below an integer.
fn grid_count<T: Real>(x: T) -> usize {
    let rounded = x.round();
    let n = if (x - rounded).abs() <= T::lit(1e-9) * rounded.max(T::one()) {
        rounded
    } else {
        x.floor()
    };
    n.to_usize().unwrap_or(0)
}

/// Time-stamped samples; one row per instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    times: Array1<T>,
    samples: Array2<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(times: Array1<T>, samples: Array2<T>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Shape("trajectory has no samples".into()));
        }
        if samples.nrows() != times.len() {
            return Err(Error::Shape(format!(
                "{} sample rows for {} time instants",
                samples.nrows(),
                times.len()
            )));
        }
        if times[0] != T::zero() {
            return Err(Error::InvalidParameter(format!(
                "trajectory must start at t = 0, got {}",
                times[0]
            )));
        }
        if times.windows(2).into_iter().any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("sample times must be strictly increasing".into()));
        }
        Ok(Self { times, samples })
    }

    pub fn times(&self) -> &Array1<T> {
        &self.times
    }

    pub fn samples(&self) -> &Array2<T> {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of output channels.
    pub fn width(&self) -> usize {
        self.samples.ncols()
    }

    pub fn horizon(&self) -> T {
        self.times[self.len() - 1]
    }

    /// Sample period, or an error when spacing varies by more than `1e-9` relative.
    pub fn uniform_step(&self) -> Result<T> {
        if self.len() < 2 {
            return Err(Error::InvalidParameter(
                "need at least two samples for a time step".into(),
            ));
        }
        let dt = self.horizon() / T::from_usize_lossy(self.len() - 1);
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) * dt.max(self.horizon());
        for (i, &t) in self.times.iter().enumerate() {
            if (t - T::from_usize_lossy(i) * dt).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "sample times are not uniform (row {} at t = {t})",
                    i + 1
                )));
            }
        }
        Ok(dt)
    }

    /// Trapezoidal-rule weights on the sample grid.
    pub fn trapezoid_weights(&self) -> Array1<T> {
        let m = self.len();
        let mut w = Array1::zeros(m);
        let half = T::lit(0.5);
        for i in 1..m {
            let dt = self.times[i] - self.times[i - 1];
            w[i - 1] += half * dt;
            w[i] += half * dt;
        }
        w
    }

    /// Adds independent `N(0, std²)` perturbations to every sample.
    pub fn add_measurement_noise(&mut self, std: T, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in self.samples.iter_mut() {
            let xi: f64 = StandardNormal.sample(&mut rng);
            *v += std * T::lit(xi);
        }
    }

    /// CSV with header `t,y1,…,yk` and 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.width()).map(|j| format!("y{j}")));
        w.write_record(&header)?;
        for (i, &t) in self.times.iter().enumerate() {
            let mut rec = vec![fmt_full(t)];
            rec.extend(self.samples.row(i).iter().map(|&v| fmt_full(v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<trajectory>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    /// Parses the trajectory format; `origin` only labels error messages.
    pub fn parse_csv(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let origin = origin.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| Error::format(origin, 1, e.to_string()))?
            .clone();
        if header.get(0).map(str::trim) != Some("t") || header.len() < 2 {
            return Err(Error::format(origin, 1, "expected header `t,y1,...,yk`"));
        }
        let width = header.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::format(origin, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != width + 1 {
                return Err(Error::format(
                    origin,
                    line,
                    format!("expected {} fields, found {}", width + 1, rec.len()),
                ));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: T = field.trim().parse().map_err(|_| {
                    Error::format(origin, line, format!("cannot parse {field:?} as a number"))
                })?;
                if !v.is_finite() {
                    return Err(Error::format(origin, line, format!("non-finite value {field:?}")));
                }
                if j == 0 {
                    times.push(v);
                } else {
                    values.push(v);
                }
            }
        }
        if times.is_empty() {
            return Err(Error::EmptyData(origin.to_path_buf()));
        }
        let samples = Array2::from_shape_vec((times.len(), width), values)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(Array1::from(times), samples)
    }
}

/// 17 significant digits.
pub(crate) fn fmt_full<T: Real>(v: T) -> String {
    format!("{v:.16e}")
}

/// State CSV: header `node,value`, 1-based node index.
pub fn write_state_csv<T: Real, W: Write>(x: &StateVector<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node", "value"])?;
    for (i, &v) in x.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_full(v)])?;
    }
    w.flush().map_err(|e| Error::io("<state>", e))?;
    Ok(())
}

pub fn save_state_csv<T: Real>(x: &StateVector<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_state_csv(x, std::io::BufWriter::new(file))
}

pub fn load_state_csv<T: Real>(path: impl AsRef<Path>) -> Result<StateVector<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            Error::format(path, e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let node: usize = rec.get(0).unwrap_or("").trim().parse().map_err(|_| {
            Error::format(path, line, "node index must be a positive integer")
        })?;
        if node != values.len() + 1 {
            return Err(Error::format(path, line, format!("expected node {}", values.len() + 1)));
        }
        let v: T = rec
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::format(path, line, "cannot parse value"))?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::EmptyData(path.to_path_buf()));
    }
    Ok(Array1::from(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn chain2(acc: Vec<usize>) -> NetworkSystem<f64> {
        NetworkSystem::from_graph(&Graph::chain(2).unwrap(), acc).unwrap()
    }

    #[test]
    fn output_matrix_examples() {
        let g3 = Graph::chain(3).unwrap();
        let sys = NetworkSystem::<f64>::with_prefix(&g3, 3).unwrap();
        assert_eq!(sys.output_matrix(), Array2::<f64>::eye(3));

        let g4 = Graph::chain(4).unwrap();
        let sys = NetworkSystem::<f64>::with_prefix(&g4, 2).unwrap();
        assert_eq!(sys.output_matrix(), array![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]);

        let sys = NetworkSystem::<f64>::from_graph(&g3, vec![2]).unwrap();
        assert_eq!(sys.output_matrix(), array![[0.0, 0.0, 1.0]]);
    }

    #[test]
    fn rejects_bad_accessible_sets() {
        let g = Graph::chain(3).unwrap();
        assert!(NetworkSystem::<f64>::from_graph(&g, vec![]).is_err());
        assert!(NetworkSystem::<f64>::from_graph(&g, vec![0, 0]).is_err());
        assert!(NetworkSystem::<f64>::from_graph(&g, vec![3]).is_err());
        assert!(NetworkSystem::<f64>::with_prefix(&g, 4).is_err());
    }

    #[test]
    fn rejects_non_laplacian() {
        let not_sym = array![[1.0, -1.0], [0.0, 0.0]];
        assert!(NetworkSystem::new(not_sym, vec![0]).is_err());
        let bad_rows = array![[2.0, -1.0], [-1.0, 2.0]];
        assert!(matches!(NetworkSystem::new(bad_rows, vec![0]), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn propagate_chain2_closed_form() {
        let sys = chain2(vec![0]);
        let x0 = array![1.0, 0.0];
        for &t in &[0.0, 0.1, 0.5, 1.0, 3.0] {
            let x = sys.propagate(&x0, t).unwrap();
            let decay = (-2.0 * t).exp();
            assert!((x[0] - (0.5 + 0.5 * decay)).abs() < 1e-14);
            assert!((x[1] - (0.5 - 0.5 * decay)).abs() < 1e-14);
        }
        assert_eq!(sys.propagate(&x0, 0.0).unwrap(), x0);
        assert!(matches!(sys.propagate(&x0, -1.0), Err(Error::InvalidTime(_))));
        assert!(matches!(sys.propagate(&array![1.0], 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn constant_state_is_fixed_point() {
        let sys = NetworkSystem::<f64>::with_prefix(&Graph::grid(3, 3).unwrap(), 2).unwrap();
        let x0 = Array1::from_elem(9, 2.5);
        for &t in &[0.3, 7.0, 40.0] {
            let x = sys.propagate(&x0, t).unwrap();
            assert!(x.iter().all(|v| (v - 2.5).abs() < 1e-12));
        }
    }

    #[test]
    fn simulate_sample_count_and_values() {
        let sys = chain2(vec![0]);
        let traj = sys.simulate(&array![1.0, 0.0], 50.0, 10.0).unwrap();
        assert_eq!(traj.len(), 501);
        assert_eq!(traj.width(), 1);
        assert!((traj.horizon() - 50.0).abs() < 1e-12);
        for (i, &t) in traj.times().iter().enumerate() {
            assert!((traj.samples()[[i, 0]] - (0.5 + 0.5 * (-2.0 * t).exp())).abs() < 1e-14);
        }
        // horizon off the grid is not included
        assert_eq!(sys.simulate(&array![1.0, 0.0], 1.05, 10.0).unwrap().len(), 11);
        assert!(sys.simulate(&array![1.0, 0.0], 0.0, 10.0).is_err());
        assert!(sys.simulate(&array![1.0, 0.0], 1.0, -1.0).is_err());
    }

    #[test]
    fn simulate_ones_gives_ones() {
        let g = Graph::grid(3, 3).unwrap();
        let sys = NetworkSystem::<f64>::with_prefix(&g, 4).unwrap();
        let traj = sys.simulate(&Array1::ones(9), 2.0, 5.0).unwrap();
        assert!(traj.samples().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn simulate_full_observation_matches_propagate_exactly() {
        let g = Graph::chain(5).unwrap();
        let sys = NetworkSystem::<f64>::with_prefix(&g, 5).unwrap();
        let x0 = array![0.3, -1.0, 2.0, 0.0, 0.7];
        let traj = sys.simulate(&x0, 3.0, 7.0).unwrap();
        for (i, &t) in traj.times().iter().enumerate() {
            assert_eq!(traj.samples().row(i), sys.propagate(&x0, t).unwrap());
        }
    }

    #[test]
    fn noisy_zero_noise_tracks_propagate() {
        let sys = chain2(vec![0, 1]);
        let x0 = array![1.0, 0.0];
        let path = sys.simulate_noisy(&x0, 2.0, 1e-4, 3, Noise::Off).unwrap();
        let last = path.samples().row(path.len() - 1).to_owned();
        let exact = sys.propagate(&x0, path.horizon()).unwrap();
        assert!((&last - &exact).iter().all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn noisy_is_deterministic_per_seed() {
        let sys = chain2(vec![0]);
        let x0 = array![0.0, 0.0];
        let a = sys.simulate_noisy(&x0, 1.0, 0.01, 42, Noise::On).unwrap();
        let b = sys.simulate_noisy(&x0, 1.0, 0.01, 42, Noise::On).unwrap();
        let c = sys.simulate_noisy(&x0, 1.0, 0.01, 43, Noise::On).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 101);
    }

    #[test]
    fn noisy_rejects_unstable_step() {
        let sys = chain2(vec![0]);
        let x0 = array![0.0, 0.0];
        // lambda_max = 2, bound = 1
        assert!(matches!(
            sys.simulate_noisy(&x0, 5.0, 1.01, 0, Noise::On),
            Err(Error::Unstable { .. })
        ));
        assert!(sys.simulate_noisy(&x0, 5.0, 0.99, 0, Noise::On).is_ok());
        assert!(sys.simulate_noisy(&x0, 0.001, 0.01, 0, Noise::On).is_err());
    }

    #[test]
    fn trajectory_validation_and_weights() {
        assert!(Trajectory::new(array![0.0, 1.0], Array2::<f64>::zeros((3, 1))).is_err());
        assert!(Trajectory::new(array![0.5, 1.0], Array2::<f64>::zeros((2, 1))).is_err());
        assert!(Trajectory::new(array![0.0, 0.0], Array2::<f64>::zeros((2, 1))).is_err());
        let t = Trajectory::new(array![0.0, 0.5, 1.0], Array2::<f64>::zeros((3, 2))).unwrap();
        assert_eq!(t.trapezoid_weights(), array![0.25, 0.5, 0.25]);
        assert!((t.uniform_step().unwrap() - 0.5).abs() < 1e-15);
        let uneven = Trajectory::new(array![0.0, 0.2, 1.0], Array2::<f64>::zeros((3, 1))).unwrap();
        assert!(uneven.uniform_step().is_err());
    }

    #[test]
    fn trajectory_csv_roundtrip() {
        let sys = chain2(vec![0, 1]);
        let traj = sys.simulate(&array![0.123_456_789_012_345_68, -3.0], 1.0, 10.0).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,y1,y2\n"));
        let back = Trajectory::<f64>::parse_csv(&text, "mem").unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn trajectory_csv_errors_name_lines() {
        let err = Trajectory::<f64>::parse_csv("t,y1\n0,1\n0.1,abc\n", "f.csv").unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }), "{err}");
        let err = Trajectory::<f64>::parse_csv("t,y1\n0,1\n0.1,2,3\n", "f.csv").unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }), "{err}");
        let err = Trajectory::<f64>::parse_csv("x,y1\n0,1\n", "f.csv").unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
        assert!(matches!(
            Trajectory::<f64>::parse_csv("t,y1\n", "f.csv"),
            Err(Error::EmptyData(_))
        ));
    }

    #[test]
    fn measurement_noise_is_seeded() {
        let sys = chain2(vec![0]);
        let base = sys.simulate(&array![1.0, 0.0], 1.0, 10.0).unwrap();
        let mut a = base.clone();
        let mut b = base.clone();
        a.add_measurement_noise(0.1, 5);
        b.add_measurement_noise(0.1, 5);
        assert_eq!(a, b);
        assert_ne!(a, base);
    }
}
