//! Noise robustness through the first-order Laplacian energy
//! `H = Σ_{λᵢ>0} 1/(2λᵢ)`: the steady-state variance of the consensus
//! deviation `(I − J/N) X` under `Ẋ = −L X + W` with unit white noise.

use std::io::Write;

use ndarray::Array1;
use rayon::prelude::*;

use crate::dynamics::{fmt_full, EulerMaruyama, NetworkSystem, Noise};
use crate::error::{Error, Result};
use crate::graph::{chain_spectrum, grid_spectrum, Graph, SpectralData, Topology};
use crate::observability::square_side;
use crate::scalar::Real;

/// Eigenvalues at or below this count as zero when checking connectivity.
pub const ZERO_EIGENVALUE_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport<T> {
    pub topology: Topology,
    pub n: usize,
    pub energy: T,
    pub eigenvalues_used: Vec<T>,
}

pub fn laplacian_energy<T: Real>(spectrum: &SpectralData<T>) -> Result<T> {
    Ok(energy_terms(spectrum)?.0)
}

fn energy_terms<T: Real>(spectrum: &SpectralData<T>) -> Result<(T, Vec<T>)> {
    let threshold = T::lit(ZERO_EIGENVALUE_THRESHOLD);
    let (zeros, nonzero): (Vec<T>, Vec<T>) =
        spectrum.eigenvalues.iter().partition(|&&lam| lam.abs() <= threshold);
    if zeros.len() != 1 {
        return Err(Error::Disconnected {
            zeros: zeros.len(),
            threshold: ZERO_EIGENVALUE_THRESHOLD,
        });
    }
    if let Some(neg) = nonzero.iter().find(|&&lam| lam < T::zero()) {
        return Err(Error::InvalidSpectrum(format!("eigenvalue {neg} is negative")));
    }
    let half = T::lit(0.5);
    let energy = nonzero.iter().map(|&lam| half / lam).sum();
    Ok((energy, nonzero))
}

pub fn energy_report<T: Real>(graph: &Graph) -> Result<EnergyReport<T>> {
    let spectrum = graph.spectrum::<T>()?;
    let (energy, eigenvalues_used) = energy_terms(&spectrum)?;
    Ok(EnergyReport {
        topology: graph.topology(),
        n: graph.num_nodes(),
        energy,
        eigenvalues_used,
    })
}

/// `(chain(n), grid(√n, √n))` energies from closed-form spectra.
pub fn energy_sweep<T: Real>(sizes: &[usize]) -> Result<Vec<(EnergyReport<T>, EnergyReport<T>)>> {
    sizes
        .iter()
        .map(|&n| {
            let side = square_side(n)
                .filter(|&l| l >= 2)
                .ok_or_else(|| Error::InvalidParameter(format!("size {n} is not a perfect square >= 4")))?;
            let chain = chain_spectrum::<T>(n)?;
            let grid = grid_spectrum::<T>(side, side)?;
            let (ce, cu) = energy_terms(&chain)?;
            let (ge, gu) = energy_terms(&grid)?;
            Ok((
                EnergyReport {
                    topology: Topology::Chain,
                    n,
                    energy: ce,
                    eigenvalues_used: cu,
                },
                EnergyReport {
                    topology: Topology::Grid { l1: side, l2: side },
                    n,
                    energy: ge,
                    eigenvalues_used: gu,
                },
            ))
        })
        .collect()
}

/// CSV with header `n,chain_energy,grid_energy`.
pub fn write_energy_csv<T: Real, W: Write>(
    sweep: &[(EnergyReport<T>, EnergyReport<T>)],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "chain_energy", "grid_energy"])?;
    for (chain, grid) in sweep {
        w.write_record([chain.n.to_string(), fmt_full(chain.energy), fmt_full(grid.energy)])?;
    }
    w.flush().map_err(|e| Error::io("<energy csv>", e))?;
    Ok(())
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate<T> {
    pub mean: T,
    pub std_error: T,
    pub replicates: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct MonteCarloConfig<T> {
    pub horizon: T,
    pub step: T,
    pub replicates: usize,
    pub seed: u64,
    pub noise: Noise,
}

/// `‖(I − J/N) x‖²`.
pub fn consensus_deviation_sq<T: Real>(x: &Array1<T>) -> T {
    let mean = x.sum() / T::from_usize_lossy(x.len());
    x.iter().map(|&v| (v - mean) * (v - mean)).sum()
}

/// `(I − J/N) x`.
pub fn project_out_consensus<T: Real>(x: &Array1<T>) -> Array1<T> {
    let mean = x.sum() / T::from_usize_lossy(x.len());
    x.mapv(|v| v - mean)
}

/// Steady-state `E‖(I − J/N) X‖²` from Euler–Maruyama paths started at zero.
///
/// Each replicate (seed `seed + r`) discards the first half of its path and
/// time-averages the rest; the standard error comes from the spread of the
/// replicate means. The horizon must satisfy `e^{−λ₂·horizon} < 0.01`.
pub fn empirical_output_variance<T: Real>(graph: &Graph, cfg: &MonteCarloConfig<T>) -> Result<VarianceEstimate<T>> {
    if cfg.replicates < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 replicates for a standard error, got {}",
            cfg.replicates
        )));
    }
    if !(cfg.step > T::zero()) || !(cfg.horizon >= cfg.step) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < step <= horizon, got step {} and horizon {}",
            cfg.step, cfg.horizon
        )));
    }
    let spectrum = graph.spectrum::<T>()?;
    let lambda2 = spectrum
        .fiedler()
        .ok_or_else(|| Error::InvalidParameter("graph needs at least 2 nodes".into()))?;
    let decay = (-lambda2 * cfg.horizon).exp();
    if !(decay < T::lit(0.01)) {
        return Err(Error::HorizonTooShort {
            horizon: cfg.horizon.to_f64_lossy(),
            decay: decay.to_f64_lossy(),
        });
    }

    let n = graph.num_nodes();
    let sys = NetworkSystem::<T>::with_prefix(graph, n)?;
    sys.eigen()?;
    let steps = (cfg.horizon / cfg.step).floor().to_usize().unwrap_or(0);
    let burn_in = steps / 2;

    let means: Vec<T> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<T> {
            let seed = cfg.seed.wrapping_add(r as u64);
            let mut em = EulerMaruyama::new(&sys, Array1::zeros(n), cfg.step, seed, cfg.noise)?;
            let mut acc = T::zero();
            for i in 1..=steps {
                em.advance();
                if i > burn_in {
                    acc += consensus_deviation_sq(em.state());
                }
            }
            Ok(acc / T::from_usize_lossy(steps - burn_in))
        })
        .collect::<Result<_>>()?;

    let count = T::from_usize_lossy(means.len());
    let mean = means.iter().copied().sum::<T>() / count;
    let var = means.iter().map(|&m| (m - mean) * (m - mean)).sum::<T>() / (count - T::one());
    Ok(VarianceEstimate {
        mean,
        std_error: (var / count).sqrt(),
        replicates: means.len(),
    })
}
