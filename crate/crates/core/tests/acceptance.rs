//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fieldrecon::dynamics::NetworkSystem;
use fieldrecon::estimator::{estimate, gradient, objective, relative_error, EstimationConfig, StepRule};
use fieldrecon::field::{field_to_state, gaussian_field, Extent};
use fieldrecon::graph::{chain_spectrum, grid_spectrum, numeric_spectrum, Graph};
use fieldrecon::observability::{gramian_trace_numeric, trace_bounds};
use fieldrecon::robustness::{empirical_output_variance, laplacian_energy, project_out_consensus, MonteCarloConfig};
use fieldrecon::{Noise, Trajectory};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    o.detail = format!("{} [{:.1}s]", o.detail, elapsed.as_secs_f64());
    if let Some(limit) = limit {
        if elapsed > limit {
            o.pass = false;
            o.detail = format!("{} exceeds {}s limit", o.detail, limit.as_secs());
        }
    }
    o
}

fn norm(x: &Array1<f64>) -> f64 {
    x.dot(x).sqrt()
}

// Gradient against central finite differences on random small networks.
fn gradient_matches_finite_differences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let graphs = [
        Graph::chain(5).unwrap(),
        Graph::chain(8).unwrap(),
        Graph::chain(16).unwrap(),
        Graph::grid(3, 3).unwrap(),
        Graph::grid(4, 4).unwrap(),
    ];
    let mut worst = 0.0f64;
    for case in 0..20 {
        let g = &graphs[case % graphs.len()];
        let n = g.num_nodes();
        let k = rng.random_range(1..=n);
        let sys = NetworkSystem::<f64>::with_prefix(g, k).unwrap();
        let truth = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..=1.0));
        let x = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..=1.0));
        let lambda = if case % 2 == 0 { 0.0 } else { 1e-3 };
        let obs = sys.simulate(&truth, 2.0, 50.0).unwrap();
        let g_adj = gradient(&sys, &x, &obs, lambda).unwrap();
        for i in 0..n {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (objective(&sys, &xp, &obs, lambda).unwrap() - objective(&sys, &xm, &obs, lambda).unwrap())
                / (2.0 * h);
            worst = worst.max((g_adj[i] - fd).abs() / fd.abs());
        }
    }
    outcome(worst < 1e-5, format!("worst componentwise relative error {worst:.2e} (< 1e-5)"))
}

/// Exact minimizer of the discretized objective via the normal equations in
/// the modal basis, solved by Cholesky.
fn regularized_minimizer(sys: &NetworkSystem<f64>, obs: &Trajectory<f64>, lambda: f64) -> Array1<f64> {
    let eig = sys.eigen().unwrap();
    let n = sys.n();
    let cv = eig.vectors.select(ndarray::Axis(0), sys.accessible());
    let w = obs.trapezoid_weights();
    let mut h = Array2::<f64>::eye(n) * lambda;
    let mut b = Array1::<f64>::zeros(n);
    for (i, &t) in obs.times().iter().enumerate() {
        let decay = eig.values.mapv(|l| (-l * t).exp());
        let gi = &cv * &decay;
        h += &(gi.t().dot(&gi) * w[i]);
        b += &(gi.t().dot(&obs.samples().row(i)) * w[i]);
    }
    let z = cholesky_solve(h, b);
    eig.vectors.dot(&z)
}

fn cholesky_solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = b.len();
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[[i, k]] * b[k];
        }
        b[i] /= a[[i, i]];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            b[i] -= a[[k, i]] * b[k];
        }
        b[i] /= a[[i, i]];
    }
    b
}

struct Reconstruction {
    error: f64,
    minimizer_error: f64,
    iterations: usize,
    converged: bool,
}

fn reconstruct(graph: &Graph) -> Reconstruction {
    let field = gaussian_field(10, 10, (0.5, 0.5), (0.2, 0.2), 1.0, Extent::unit()).unwrap();
    let truth = field_to_state(&field, graph).unwrap();
    let sys = NetworkSystem::with_prefix(graph, 30).unwrap();
    let obs = sys.simulate(&truth, 50.0, 10.0).unwrap();
    let cfg = EstimationConfig::new(1e-6)
        .with_max_iters(5000)
        .with_step_rule(StepRule::BarzilaiBorwein);
    let res = estimate(&sys, &obs, &cfg).unwrap();
    Reconstruction {
        error: relative_error(&res.x0_hat, &truth),
        minimizer_error: relative_error(&regularized_minimizer(&sys, &obs, 1e-6), &truth),
        iterations: res.iterations,
        converged: res.converged,
    }
}

fn grid_reconstruction(grid: &Reconstruction) -> Outcome {
    outcome(
        grid.error < 1e-2,
        format!(
            "grid(10,10) relative L2 error {:.3e} (< 1e-2) after {} iterations, converged {}; \
             exact regularized minimizer error {:.3e}",
            grid.error, grid.iterations, grid.converged, grid.minimizer_error
        ),
    )
}

fn reconstruction_ordering(grid: &Reconstruction, chain: &Reconstruction) -> Outcome {
    let ratio = chain.error / grid.error;
    outcome(
        ratio >= 5.0,
        format!(
            "chain error {:.3e} / grid error {:.3e} = {ratio:.1} (>= 5), budget 5000 iterations",
            chain.error, grid.error
        ),
    )
}

/// Trace of `∫₀ᵀ e^{−Lt} CᵀC e^{−Lt} dt` by Taylor-series propagator and
/// composite Simpson quadrature.
fn brute_force_trace(graph: &Graph, k: usize, horizon: f64, intervals: usize) -> f64 {
    let n = graph.num_nodes();
    let l: Array2<f64> = graph.laplacian();
    let dt = horizon / intervals as f64;
    let a = l * (-dt);
    let mut step = Array2::<f64>::eye(n);
    let mut term = Array2::<f64>::eye(n);
    for j in 1..30 {
        term = term.dot(&a) / j as f64;
        step += &term;
    }
    let mut phi = Array2::<f64>::eye(n);
    let mut total = 0.0;
    for i in 0..=intervals {
        let f: f64 = (0..k).map(|r| phi.row(r).dot(&phi.row(r))).sum();
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        total += w * f;
        phi = phi.dot(&step);
    }
    total * dt / 3.0
}

fn trace_sandwich() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let mut worst_coincide = 0.0f64;
    for n in [4usize, 16, 100] {
        let side = (n as f64).sqrt() as usize;
        let cases = [
            (Graph::chain(n).unwrap(), chain_spectrum::<f64>(n).unwrap()),
            (Graph::grid(side, side).unwrap(), grid_spectrum::<f64>(side, side).unwrap()),
        ];
        for (graph, spectrum) in &cases {
            for k in [1, n / 4, n / 2, n] {
                for t in [1.0, 50.0] {
                    let sys = NetworkSystem::<f64>::with_prefix(graph, k).unwrap();
                    let exact = gramian_trace_numeric(&sys, t).unwrap();
                    let b = trace_bounds(spectrum, k, t).unwrap();
                    let slack = 1e-6 * n as f64;
                    if !(b.lower - slack <= exact && exact <= b.upper + slack) {
                        ok = false;
                        notes.push(format!("{} k={k} T={t}", graph.topology()));
                    }
                    if k == n {
                        let rel = ((b.lower - exact).abs().max((b.upper - exact).abs())) / exact;
                        worst_coincide = worst_coincide.max(rel);
                    }
                }
            }
        }
    }
    ok &= worst_coincide < 1e-9;

    let mut worst_brute = 0.0f64;
    let small = [
        Graph::chain(2).unwrap(),
        Graph::chain(5).unwrap(),
        Graph::chain(9).unwrap(),
        Graph::grid(2, 2).unwrap(),
        Graph::grid(2, 3).unwrap(),
        Graph::grid(3, 3).unwrap(),
    ];
    for graph in &small {
        let n = graph.num_nodes();
        for k in [1, n.div_ceil(2), n] {
            for (t, intervals) in [(1.0, 200), (50.0, 10_000)] {
                let sys = NetworkSystem::<f64>::with_prefix(graph, k).unwrap();
                let exact = gramian_trace_numeric(&sys, t).unwrap();
                let brute = brute_force_trace(graph, k, t, intervals);
                worst_brute = worst_brute.max((exact - brute).abs() / exact);
            }
        }
    }
    ok &= worst_brute < 1e-4;
    outcome(
        ok,
        format!(
            "bounds hold{}; k=N coincidence {worst_coincide:.1e} (< 1e-9); \
             brute-force Gramian agreement {worst_brute:.1e} (< 1e-4)",
            if notes.is_empty() { String::new() } else { format!(" except {notes:?}") }
        ),
    )
}

fn spectrum_oracles() -> Outcome {
    let mut shapes: Vec<(usize, usize)> = (2..=200).map(|n| (n, 1)).collect();
    for l1 in 2..=20 {
        for l2 in 2..=20 {
            shapes.push((l1, l2));
        }
    }
    let worst = shapes
        .par_iter()
        .map(|&(a, b)| {
            let (graph, closed) = if b == 1 {
                (Graph::chain(a).unwrap(), chain_spectrum::<f64>(a).unwrap())
            } else {
                (Graph::grid(a, b).unwrap(), grid_spectrum::<f64>(a, b).unwrap())
            };
            let numeric = numeric_spectrum(graph.laplacian::<f64>().view()).unwrap();
            closed
                .eigenvalues
                .iter()
                .zip(&numeric.eigenvalues)
                .map(|(c, m)| (c - m).abs())
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    outcome(
        worst < 1e-9,
        format!("{} graphs, worst closed-form vs numeric gap {worst:.2e} (< 1e-9)", shapes.len()),
    )
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fieldrecon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn gramian_figure(dir: &Path) -> Outcome {
    let out = dir.join("gramian");
    let status = run_cli(&["gramian", "--out", out.to_str().unwrap()]);
    if !status.status.success() {
        return outcome(false, format!("gramian exited with {}", status.status));
    }
    let rows = read_rows(&out.join("gramian.csv"));
    let pick = |topo: &str, n: &str| -> Vec<csv::StringRecord> {
        rows.iter().filter(|r| &r[0] == topo && &r[1] == n).cloned().collect()
    };
    let (c100, g100) = (pick("chain", "100"), pick("grid", "100"));
    let (c10k, g10k) = (pick("chain", "10000"), pick("grid", "10000"));
    let counts_ok = [&c100, &g100, &c10k, &g10k].iter().all(|v| v.len() == 10);
    let numeric_ok = c100.iter().chain(&g100).all(|r| !r[7].is_empty())
        && c10k.iter().chain(&g10k).all(|r| r[7].is_empty());
    let bounds_ok = rows.iter().all(|r| r[5].parse::<f64>().unwrap() <= r[6].parse::<f64>().unwrap());
    let ordering_ok = c100
        .iter()
        .zip(&g100)
        .all(|(c, g)| c[7].parse::<f64>().unwrap() >= g[7].parse::<f64>().unwrap());
    outcome(
        counts_ok && numeric_ok && bounds_ok && ordering_ok && out.join("config.json").exists(),
        format!(
            "10 ratios per curve {counts_ok}, numeric trace only for n=100 {numeric_ok}, \
             lower<=upper {bounds_ok}, chain trace >= grid trace {ordering_ok}"
        ),
    )
}

fn energy_figure(dir: &Path) -> Outcome {
    let out = dir.join("energy");
    let status = run_cli(&["energy", "--out", out.to_str().unwrap()]);
    if !status.status.success() {
        return outcome(false, format!("energy exited with {}", status.status));
    }
    let rows = read_rows(&out.join("energy.csv"));
    let sizes: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    let sizes_ok = sizes == [4, 16, 36, 64, 100, 400, 2500, 10000];
    let ordering_ok = rows
        .iter()
        .all(|r| r[1].parse::<f64>().unwrap() > r[2].parse::<f64>().unwrap());
    let chain4: f64 = rows[0][1].parse().unwrap();
    let grid4: f64 = rows[0][2].parse().unwrap();
    let lib_chain4 = laplacian_energy(&chain_spectrum::<f64>(4).unwrap()).unwrap();
    let lib_grid4 = laplacian_energy(&grid_spectrum::<f64>(2, 2).unwrap()).unwrap();
    let small_ok = [chain4, lib_chain4].iter().all(|v| (v - 1.25).abs() < 1e-12)
        && [grid4, lib_grid4].iter().all(|v| (v - 0.625).abs() < 1e-12);
    outcome(
        sizes_ok && ordering_ok && small_ok,
        format!(
            "default sizes {sizes_ok}, chain > grid everywhere {ordering_ok}, \
             chain(4) {chain4:.15} grid(2,2) {grid4:.15}"
        ),
    )
}

fn spectral_identity() -> Outcome {
    let graphs = [
        Graph::chain(2).unwrap(),
        Graph::chain(4).unwrap(),
        Graph::grid(2, 2).unwrap(),
        Graph::chain(9).unwrap(),
        Graph::grid(3, 3).unwrap(),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, g) in graphs.iter().enumerate() {
        let cfg = MonteCarloConfig {
            horizon: 200.0,
            step: 0.002,
            replicates: 64,
            seed: 1000 * (i as u64 + 1),
            noise: Noise::On,
        };
        let mc = empirical_output_variance::<f64>(g, &cfg).unwrap();
        let exact = laplacian_energy(&g.spectrum::<f64>().unwrap()).unwrap();
        let z = (mc.mean - exact).abs() / mc.std_error;
        ok &= z <= 3.0;
        parts.push(format!("{} {:.4}±{:.4} vs {:.4} ({z:.1} SE)", g.topology(), mc.mean, mc.std_error, exact));
    }
    outcome(ok, parts.join("; "))
}

fn dynamics_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst_mean, mut worst_semi) = (0.0f64, 0.0f64);
    let mut monotone = true;
    for _ in 0..50 {
        let graph = if rng.random_bool(0.5) {
            Graph::chain(rng.random_range(2..=40)).unwrap()
        } else {
            Graph::grid(rng.random_range(2..=7), rng.random_range(2..=7)).unwrap()
        };
        let n = graph.num_nodes();
        let sys = NetworkSystem::<f64>::with_prefix(&graph, 1).unwrap();
        let x0 = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..=1.0));
        let mean0 = x0.mean().unwrap();
        let s = rng.random_range(0.0..=50.0);
        let t = rng.random_range(0.0..=50.0);

        let xt = sys.propagate(&x0, s + t).unwrap();
        worst_mean = worst_mean.max((xt.mean().unwrap() - mean0).abs() / mean0.abs());
        let twice = sys.propagate(&sys.propagate(&x0, s).unwrap(), t).unwrap();
        worst_semi = worst_semi.max(norm(&(&twice - &xt)) / norm(&xt));

        // rounding floor of the projected norm
        let floor = 1e-12 * norm(&x0);
        let mut prev = f64::INFINITY;
        for j in 0..=20 {
            let x = sys.propagate(&x0, 100.0 * j as f64 / 20.0).unwrap();
            let dev = norm(&project_out_consensus(&x));
            monotone &= dev <= prev + floor;
            prev = dev;
        }
    }
    outcome(
        worst_mean < 1e-10 && worst_semi < 1e-9 && monotone,
        format!(
            "50 cases: mean drift {worst_mean:.1e} (< 1e-10), semigroup gap {worst_semi:.1e} (< 1e-9), \
             monotone decay {monotone}"
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    results.push((
        "1 gradient vs finite differences",
        timed(Some(Duration::from_secs(30)), gradient_matches_finite_differences),
    ));
    let mut grid = None;
    results.push((
        "2 grid reconstruction",
        timed(Some(Duration::from_secs(300)), || {
            let g = reconstruct(&Graph::grid(10, 10).unwrap());
            let o = grid_reconstruction(&g);
            grid = Some(g);
            o
        }),
    ));
    let grid = grid.expect("grid run finished");
    results.push((
        "3 chain vs grid reconstruction",
        timed(None, || reconstruction_ordering(&grid, &reconstruct(&Graph::chain(100).unwrap()))),
    ));
    results.push(("4 trace bounds", timed(None, trace_sandwich)));
    results.push(("5 spectrum oracles", timed(None, spectrum_oracles)));
    results.push((
        "6 gramian figure data",
        timed(Some(Duration::from_secs(120)), || gramian_figure(dir.path())),
    ));
    results.push(("7 energy figure data", timed(None, || energy_figure(dir.path()))));
    results.push((
        "8 spectral identity",
        timed(Some(Duration::from_secs(180)), spectral_identity),
    ));
    results.push(("9 dynamics invariants", timed(None, dynamics_invariants)));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
