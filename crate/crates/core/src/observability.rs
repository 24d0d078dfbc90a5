//! Trace of the observability Gramian `W_O(0,T) = ∫₀ᵀ e^{−Lᵀt} CᵀC e^{−Lt} dt`
//! and its spectral bounds.
//!
//! With `L = V Λ Vᵀ` and mode weights `cᵢ = ∫₀ᵀ e^{−2λᵢt} dt`, the trace reduces to
//! `Σ_{i∈Id} Mᵢᵢ` where `M = V diag(c) Vᵀ`. Since `M` has eigenvalues `c`, the
//! sum of any `k` diagonal entries lies between the sums of the `k` smallest
//! and the `k` largest weights.

use std::io::Write;

use ndarray::Array1;

use crate::dynamics::{fmt_full, NetworkSystem};
use crate::error::{Error, Result};
use crate::graph::{chain_spectrum, grid_spectrum, Graph, SpectralData, Topology};
use crate::linalg::SymmetricEigen;
use crate::scalar::Real;

/// Largest network for which the comparison also evaluates the exact trace.
pub const NUMERIC_TRACE_MAX_NODES: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBounds<T> {
    pub lower: T,
    pub upper: T,
    pub trace_numeric: Option<T>,
    pub n: usize,
    pub k: usize,
    pub horizon: T,
}

/// `∫₀ᵀ e^{−2λt} dt`, equal to `T` at `λ = 0`.
pub fn mode_weight<T: Real>(lambda: T, horizon: T) -> T {
    if lambda == T::zero() {
        horizon
    } else {
        let two_l = T::lit(2.0) * lambda;
        -(-two_l * horizon).exp_m1() / two_l
    }
}

/// Mode weights sorted ascending (largest eigenvalue first).
pub fn mode_weights<T: Real>(spectrum: &SpectralData<T>, horizon: T) -> Result<Vec<T>> {
    if !(horizon > T::zero()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let tol = spectrum.zero_tolerance();
    let mut weights = Vec::with_capacity(spectrum.len());
    for &lam in &spectrum.eigenvalues {
        if lam < -tol || !lam.is_finite() {
            return Err(Error::InvalidSpectrum(format!("eigenvalue {lam} is negative")));
        }
        weights.push(mode_weight(lam.max(T::zero()), horizon));
    }
    weights.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    Ok(weights)
}

/// Lower bound: sum of the `k` smallest weights. Upper: the `k` largest.
pub fn trace_bounds<T: Real>(spectrum: &SpectralData<T>, k: usize, horizon: T) -> Result<TraceBounds<T>> {
    let n = spectrum.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "accessible count k must be in 1..={n}, got {k}"
        )));
    }
    let c = mode_weights(spectrum, horizon)?;
    Ok(TraceBounds {
        lower: c[..k].iter().copied().sum(),
        upper: c[n - k..].iter().copied().sum(),
        trace_numeric: None,
        n,
        k,
        horizon,
    })
}

/// Diagonal of `M = V diag(c) Vᵀ` for every node.
pub fn gramian_diagonal<T: Real>(eig: &SymmetricEigen<T>, horizon: T) -> Array1<T> {
    let c: Vec<T> = eig
        .values
        .iter()
        .map(|&lam| mode_weight(lam.max(T::zero()), horizon))
        .collect();
    eig.vectors
        .outer_iter()
        .map(|row| row.iter().zip(&c).map(|(&v, &w)| v * v * w).sum())
        .collect()
}

/// `Trace(W_O(0,T))` from the eigendecomposition, no time stepping.
pub fn gramian_trace_numeric<T: Real>(sys: &NetworkSystem<T>, horizon: T) -> Result<T> {
    if !(horizon > T::zero()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let diag = gramian_diagonal(sys.eigen()?, horizon);
    Ok(sys.accessible().iter().map(|&i| diag[i]).sum())
}

/// One line of the chain-vs-grid comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow<T> {
    pub topology: Topology,
    pub n: usize,
    pub k: usize,
    pub ratio: T,
    pub horizon: T,
    pub lower: T,
    pub upper: T,
    pub trace_numeric: Option<T>,
}

/// `count` evenly spaced sensor ratios `1/count, 2/count, …, 1`.
pub fn default_ratios<T: Real>(count: usize) -> Vec<T> {
    (1..=count)
        .map(|i| T::from_usize_lossy(i) / T::from_usize_lossy(count))
        .collect()
}

pub(crate) fn square_side(n: usize) -> Option<usize> {
    let l = (n as f64).sqrt().round() as usize;
    (l * l == n).then_some(l)
}

/// Bounds (and the exact trace for `n ≤ 400`) for `chain(n)` and
/// `grid(√n, √n)`, accessible nodes `1..=round(r·n)` for every ratio `r`.
pub fn compare_topologies<T: Real>(n: usize, ratios: &[T], horizon: T) -> Result<Vec<ComparisonRow<T>>> {
    let side = square_side(n)
        .filter(|&l| l >= 2)
        .ok_or_else(|| Error::InvalidParameter(format!("n = {n} is not a perfect square >= 4")))?;
    if !(horizon > T::zero()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    if let Some(r) = ratios.iter().find(|&&r| !(r > T::zero() && r <= T::one())) {
        return Err(Error::InvalidParameter(format!("sensor ratio {r} outside (0, 1]")));
    }

    let cases = [
        (Topology::Chain, chain_spectrum::<T>(n)?),
        (Topology::Grid { l1: side, l2: side }, grid_spectrum::<T>(side, side)?),
    ];
    let mut rows = Vec::with_capacity(2 * ratios.len());
    for (topology, spectrum) in cases {
        let diag = if n <= NUMERIC_TRACE_MAX_NODES {
            let graph = match topology {
                Topology::Chain => Graph::chain(n)?,
                _ => Graph::grid(side, side)?,
            };
            let eig = SymmetricEigen::new(graph.laplacian::<T>().view())?;
            Some(gramian_diagonal(&eig, horizon))
        } else {
            None
        };
        for &ratio in ratios {
            let k = (ratio * T::from_usize_lossy(n))
                .round()
                .to_usize()
                .unwrap_or(1)
                .clamp(1, n);
            let bounds = trace_bounds(&spectrum, k, horizon)?;
            rows.push(ComparisonRow {
                topology,
                n,
                k,
                ratio,
                horizon,
                lower: bounds.lower,
                upper: bounds.upper,
                trace_numeric: diag.as_ref().map(|d| d.iter().take(k).copied().sum()),
            });
        }
    }
    Ok(rows)
}

/// CSV with header `topology,n,k,ratio,horizon,lower,upper,trace_numeric`.
pub fn write_comparison_csv<T: Real, W: Write>(rows: &[ComparisonRow<T>], out: W, header: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if header {
        w.write_record(["topology", "n", "k", "ratio", "horizon", "lower", "upper", "trace_numeric"])?;
    }
    for r in rows {
        w.write_record([
            r.topology.tag().to_string(),
            r.n.to_string(),
            r.k.to_string(),
            format!("{}", r.ratio),
            format!("{}", r.horizon),
            fmt_full(r.lower),
            fmt_full(r.upper),
            r.trace_numeric.map(fmt_full).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<gramian csv>", e))?;
    Ok(())
}
