//! Communication graphs and their matrices.
//!
//! Node indices are 0-based in memory. The JSON interchange format uses
//! 1-based indices to line up with the robot labels in figures.
//!
//! A grid `grid(l1, l2)` has `l2` rows of `l1` nodes each, numbered row-major,
//! so its Laplacian is block tridiagonal with `l1 × l1` diagonal blocks.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricEigen;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    Chain,
    /// `l1` nodes per row, `l2` rows.
    Grid { l1: usize, l2: usize },
    Custom,
}

impl Topology {
    pub fn tag(&self) -> &'static str {
        match self {
            Topology::Chain => "chain",
            Topology::Grid { .. } => "grid",
            Topology::Custom => "custom",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Simple, connected, undirected graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// `(i, j)` with `i < j`, sorted lexicographically.
    edges: Vec<(usize, usize)>,
    topology: Topology,
}

impl Graph {
    /// Path `0 - 1 - … - (n-1)`.
    pub fn chain(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSize(format!("chain needs at least 2 nodes, got {n}")));
        }
        Ok(Self {
            n,
            edges: (0..n - 1).map(|i| (i, i + 1)).collect(),
            topology: Topology::Chain,
        })
    }

    /// Four-neighbour lattice with `l2` rows of `l1` nodes, row-major numbering.
    pub fn grid(l1: usize, l2: usize) -> Result<Self> {
        if l1 < 2 || l2 < 2 {
            return Err(Error::InvalidSize(format!(
                "grid sides must be at least 2, got {l1}x{l2}"
            )));
        }
        let mut edges = Vec::with_capacity(2 * l1 * l2 - l1 - l2);
        for row in 0..l2 {
            for col in 0..l1 {
                let i = row * l1 + col;
                if col + 1 < l1 {
                    edges.push((i, i + 1));
                }
                if row + 1 < l2 {
                    edges.push((i, i + l1));
                }
            }
        }
        edges.sort_unstable();
        Ok(Self {
            n: l1 * l2,
            edges,
            topology: Topology::Grid { l1, l2 },
        })
    }

    /// Square grid of side `l`.
    pub fn square_grid(l: usize) -> Result<Self> {
        Self::grid(l, l)
    }

    /// Arbitrary edge list (0-based). Rejects self-loops, duplicates,
    /// out-of-range endpoints and disconnected graphs.
    pub fn custom(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
        }
        let g = Self {
            n,
            edges: set.into_iter().collect(),
            topology: Topology::Custom,
        };
        if !g.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(g)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| match (a == i, b == i) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect()
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    pub fn degree_matrix<T: Entry>(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.n, self.n));
        for (i, d) in self.degrees().into_iter().enumerate() {
            m[[i, i]] = count_as::<T>(d);
        }
        m
    }

    pub fn adjacency<T: Entry>(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.n, self.n));
        for &(a, b) in &self.edges {
            m[[a, b]] = T::one();
            m[[b, a]] = T::one();
        }
        m
    }

    /// `L = Δ − A`. Works in any signed type, so `i64` gives exact integer checks.
    pub fn laplacian<T: Entry>(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.n, self.n));
        for &(a, b) in &self.edges {
            m[[a, a]] = m[[a, a]] + T::one();
            m[[b, b]] = m[[b, b]] + T::one();
            m[[a, b]] = m[[a, b]] - T::one();
            m[[b, a]] = m[[b, a]] - T::one();
        }
        m
    }

    /// `N × M` incidence matrix; edge `(i, j)` with `i < j` has `+1` at `i`, `−1` at `j`.
    pub fn incidence<T: Entry>(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.n, self.edges.len()));
        for (col, &(a, b)) in self.edges.iter().enumerate() {
            m[[a, col]] = T::one();
            m[[b, col]] = -T::one();
        }
        m
    }

    /// Closed form for chain and grid, numeric eigensolver otherwise.
    pub fn spectrum<T: Real>(&self) -> Result<SpectralData<T>> {
        match self.topology {
            Topology::Chain => chain_spectrum(self.n),
            Topology::Grid { l1, l2 } => grid_spectrum(l1, l2),
            Topology::Custom => numeric_spectrum(self.laplacian::<T>().view()),
        }
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            n: self.n,
            edges: self.edges.iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
            topology: self.topology.tag().to_string(),
            dims: match self.topology {
                Topology::Grid { l1, l2 } => Some([l1, l2]),
                _ => None,
            },
        }
    }

    pub fn from_doc(doc: &GraphDoc) -> Result<Self> {
        let mut edges = Vec::with_capacity(doc.edges.len());
        for &[a, b] in &doc.edges {
            if a == 0 || b == 0 {
                return Err(Error::InvalidGraph(format!(
                    "edge [{a}, {b}]: indices are 1-based"
                )));
            }
            edges.push((a - 1, b - 1));
        }
        let custom = Self::custom(doc.n, edges)?;
        let expected = match (doc.topology.as_str(), doc.dims) {
            ("custom", _) => return Ok(custom),
            ("chain", _) => Self::chain(doc.n)?,
            ("grid", Some([l1, l2])) => Self::grid(l1, l2)?,
            ("grid", None) => {
                return Err(Error::InvalidGraph("grid topology requires \"dims\"".into()))
            }
            (other, _) => {
                return Err(Error::InvalidGraph(format!("unknown topology {other:?}")))
            }
        };
        if expected.n != custom.n || expected.edges != custom.edges {
            return Err(Error::InvalidGraph(format!(
                "edges do not match the canonical {} numbering",
                doc.topology
            )));
        }
        Ok(expected)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(s)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Matrix entry type for the graph matrices: any signed ring, so both
/// floating-point and exact integer (`i64`) matrices can be built.
pub trait Entry: Copy + Zero + One + std::ops::Neg<Output = Self> + std::ops::Sub<Output = Self> {}

impl<T> Entry for T where T: Copy + Zero + One + std::ops::Neg<Output = T> + std::ops::Sub<Output = T> {}

fn count_as<T: Entry>(d: usize) -> T {
    (0..d).fold(T::zero(), |acc, _| acc + T::one())
}

/// Serialized graph, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub topology: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Numeric,
}

/// Laplacian eigenvalues, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData<T> {
    pub eigenvalues: Vec<T>,
    pub provenance: Provenance,
}

impl<T: Real> SpectralData<T> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Algebraic connectivity λ₂.
    pub fn fiedler(&self) -> Option<T> {
        self.eigenvalues.get(1).copied()
    }

    pub fn max(&self) -> T {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// Zero tolerance used for numeric spectra: `1e-12 · N · max(1, λ_max)`.
    pub fn zero_tolerance(&self) -> T {
        T::lit(1e-12) * T::from_usize_lossy(self.len()) * self.max().max(T::one())
    }

    pub fn is_connected(&self) -> bool {
        self.fiedler().is_some_and(|l2| l2 > self.zero_tolerance())
    }
}

/// `4 sin²(kπ/2n) = 2 − 2cos(kπ/n)`, `k = 0..n`; the sine form keeps small
/// eigenvalues accurate.
pub fn chain_spectrum<T: Real>(n: usize) -> Result<SpectralData<T>> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("chain needs at least 2 nodes, got {n}")));
    }
    let eigenvalues = (0..n).map(|k| path_eigenvalue(k, n)).collect();
    Ok(SpectralData {
        eigenvalues,
        provenance: Provenance::ClosedForm,
    })
}

fn path_eigenvalue<T: Real>(k: usize, n: usize) -> T {
    let half_angle = T::PI() * T::from_usize_lossy(k) / (T::lit(2.0) * T::from_usize_lossy(n));
    let s = half_angle.sin();
    T::lit(4.0) * s * s
}

/// Cartesian product of two paths: all pairwise sums of the path spectra.
pub fn grid_spectrum<T: Real>(l1: usize, l2: usize) -> Result<SpectralData<T>> {
    if l1 < 2 || l2 < 2 {
        return Err(Error::InvalidSize(format!(
            "grid sides must be at least 2, got {l1}x{l2}"
        )));
    }
    let a: Vec<T> = (0..l1).map(|k| path_eigenvalue(k, l1)).collect();
    let b: Vec<T> = (0..l2).map(|k| path_eigenvalue(k, l2)).collect();
    let mut eigenvalues: Vec<T> = a
        .iter()
        .flat_map(|&x| b.iter().map(move |&y| x + y))
        .collect();
    eigenvalues.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(SpectralData {
        eigenvalues,
        provenance: Provenance::ClosedForm,
    })
}

/// Sorted eigenvalues of a symmetric matrix.
pub fn numeric_spectrum<T: Real>(l: ArrayView2<'_, T>) -> Result<SpectralData<T>> {
    let values = SymmetricEigen::values_only(l)?;
    Ok(SpectralData {
        eigenvalues: values.to_vec(),
        provenance: Provenance::Numeric,
    })
}
