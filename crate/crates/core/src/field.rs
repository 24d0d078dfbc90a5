//! Gridded scalar fields and their mapping onto robot states.
//!
//! A field has `rows × cols` cells; row 0 is the top of the domain. Cell
//! values sit at cell centres. On a grid network node `r·cols + c` measures
//! cell `(r, c)`. On a chain the nodes walk the cells in serpentine order
//! (even rows left to right, odd rows right to left) so consecutive robots
//! are neighbours in space too.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::dynamics::{fmt_full, StateVector};
use crate::error::{Error, Result};
use crate::graph::{Graph, Topology};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

impl<T: Real> Extent<T> {
    pub fn unit() -> Self {
        Self {
            x_min: T::zero(),
            x_max: T::one(),
            y_min: T::zero(),
            y_max: T::one(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("degenerate extent {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    values: Array2<T>,
    extent: Extent<T>,
    units: String,
}

impl<T: Real> ScalarField<T> {
    pub fn new(values: Array2<T>, extent: Extent<T>, units: impl Into<String>) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 2 {
            return Err(Error::InvalidSize(format!(
                "field must be at least 2x2, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field has non-finite values".into()));
        }
        extent.validate()?;
        Ok(Self {
            values,
            extent,
            units: units.into(),
        })
    }

    pub fn constant(rows: usize, cols: usize, value: T) -> Result<Self> {
        Self::new(Array2::from_elem((rows, cols), value), Extent::unit(), "")
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn extent(&self) -> Extent<T> {
        self.extent
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Centre `x` of column `j`.
    pub fn x_at(&self, j: usize) -> T {
        let e = &self.extent;
        let dx = (e.x_max - e.x_min) / T::from_usize_lossy(self.cols());
        e.x_min + (T::from_usize_lossy(j) + T::lit(0.5)) * dx
    }

    /// Centre `y` of row `i` (row 0 at the top).
    pub fn y_at(&self, i: usize) -> T {
        let e = &self.extent;
        let dy = (e.y_max - e.y_min) / T::from_usize_lossy(self.rows());
        e.y_max - (T::from_usize_lossy(i) + T::lit(0.5)) * dy
    }

    /// Writes the field CSV: `# extent: x_min,x_max,y_min,y_max units: <label>`
    /// then one line per row, top row first.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let e = &self.extent;
        writeln!(
            out,
            "# extent: {},{},{},{} units: {}",
            e.x_min, e.x_max, e.y_min, e.y_max, self.units
        )
        .map_err(|err| Error::io("<field>", err))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.values.outer_iter() {
            w.write_record(row.iter().map(|&v| fmt_full(v)))?;
        }
        w.flush().map_err(|err| Error::io("<field>", err))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Field loaded from disk plus the number of missing cells that were filled.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedField<T> {
    pub field: ScalarField<T>,
    pub fill_count: usize,
}

pub fn load_gridded_csv<T: Real>(path: impl AsRef<Path>) -> Result<LoadedField<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gridded_csv(&text, path)
}

/// Parses the field CSV. Empty cells and `NaN` are missing and get the value of
/// the nearest present cell (Euclidean distance in index space, first in
/// row-major order on ties). Without a header the extent is the unit square.
pub fn parse_gridded_csv<T: Real>(text: &str, origin: impl AsRef<Path>) -> Result<LoadedField<T>> {
    let origin = origin.as_ref();
    let mut extent = Extent::unit();
    let mut units = String::new();
    let mut body = text;
    let mut line_offset = 0u64;
    if let Some(first) = text.lines().next() {
        if let Some(rest) = first.trim_start().strip_prefix('#') {
            (extent, units) = parse_header(rest, origin)?;
            body = text.split_once('\n').map_or("", |(_, b)| b);
            line_offset = 1;
        }
    }

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(body.as_bytes());
    let mut cells: Vec<Option<T>> = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            Error::format(origin, line_offset + e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = line_offset + rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::format(
                    origin,
                    line,
                    format!("ragged row: expected {c} values, found {}", rec.len()),
                ))
            }
            _ => {}
        }
        for cell in rec.iter() {
            let cell = cell.trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                cells.push(None);
            } else {
                let v: T = cell.parse().map_err(|_| {
                    Error::format(origin, line, format!("cannot parse {cell:?} as a number"))
                })?;
                if !v.is_finite() {
                    return Err(Error::format(origin, line, format!("non-finite value {cell:?}")));
                }
                cells.push(Some(v));
            }
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if cells.iter().all(Option::is_none) {
        return Err(Error::EmptyData(origin.to_path_buf()));
    }

    let present: Vec<(usize, usize, T)> = cells
        .iter()
        .enumerate()
        .filter_map(|(idx, v)| v.map(|v| (idx / cols, idx % cols, v)))
        .collect();
    let mut fill_count = 0;
    let values = Array2::from_shape_fn((rows, cols), |(i, j)| match cells[i * cols + j] {
        Some(v) => v,
        None => {
            fill_count += 1;
            nearest(&present, i, j)
        }
    });
    Ok(LoadedField {
        field: ScalarField::new(values, extent, units)?,
        fill_count,
    })
}

fn nearest<T: Copy>(present: &[(usize, usize, T)], i: usize, j: usize) -> T {
    present
        .iter()
        .min_by_key(|(r, c, _)| r.abs_diff(i).pow(2) + c.abs_diff(j).pow(2))
        .map(|&(_, _, v)| v)
        .expect("at least one present cell")
}

fn parse_header<T: Real>(rest: &str, origin: &Path) -> Result<(Extent<T>, String)> {
    let bad = |msg: &str| Error::format(origin, 1, format!("bad header: {msg}"));
    let rest = rest.trim();
    let rest = rest
        .strip_prefix("extent:")
        .ok_or_else(|| bad("expected `# extent: x_min,x_max,y_min,y_max units: <label>`"))?;
    let (nums, units) = match rest.split_once("units:") {
        Some((n, u)) => (n, u.trim().to_string()),
        None => (rest, String::new()),
    };
    let parsed: Vec<T> = nums
        .split(',')
        .map(|s| s.trim().parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("extent values must be numbers"))?;
    let [x_min, x_max, y_min, y_max] = parsed[..] else {
        return Err(bad("extent needs exactly four values"));
    };
    let extent = Extent {
        x_min,
        x_max,
        y_min,
        y_max,
    };
    extent.validate().map_err(|_| bad("degenerate extent"))?;
    Ok((extent, units))
}

/// `amplitude · exp(−((x−x₀)²/2σx² + (y−y₀)²/2σy²))` at cell centres.
pub fn gaussian_field<T: Real>(
    rows: usize,
    cols: usize,
    center: (T, T),
    sigma: (T, T),
    amplitude: T,
    extent: Extent<T>,
) -> Result<ScalarField<T>> {
    if !(sigma.0 > T::zero() && sigma.1 > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got ({}, {})",
            sigma.0, sigma.1
        )));
    }
    let mut field = ScalarField::new(Array2::zeros((rows, cols)), extent, "")?;
    let two = T::lit(2.0);
    let values = Array2::from_shape_fn((rows, cols), |(i, j)| {
        let dx = field.x_at(j) - center.0;
        let dy = field.y_at(i) - center.1;
        amplitude * (-(dx * dx / (two * sigma.0 * sigma.0) + dy * dy / (two * sigma.1 * sigma.1))).exp()
    });
    field.values = values;
    Ok(field)
}

/// Stand-in for gridded ocean data: two Gaussian features on a linear ramp,
/// in salinity-like units.
pub fn synthetic_salinity<T: Real>(rows: usize, cols: usize) -> Result<ScalarField<T>> {
    let extent = Extent::unit();
    let high = gaussian_field(rows, cols, (T::lit(0.3), T::lit(0.7)), (T::lit(0.15), T::lit(0.2)), T::lit(0.8), extent)?;
    let low = gaussian_field(rows, cols, (T::lit(0.75), T::lit(0.3)), (T::lit(0.2), T::lit(0.12)), T::lit(-0.5), extent)?;
    let mut values = high.values + &low.values;
    for ((i, j), v) in values.indexed_iter_mut() {
        let x = cell_center(j, cols);
        let y = T::one() - cell_center(i, rows);
        *v += T::lit(35.0) + T::lit(0.6) * x - T::lit(0.3) * y;
    }
    ScalarField::new(values, extent, "psu")
}

fn cell_center<T: Real>(j: usize, n: usize) -> T {
    (T::from_usize_lossy(j) + T::lit(0.5)) / T::from_usize_lossy(n)
}

/// Node-to-cell assignment for a graph laid over a `rows × cols` field.
fn node_cells(graph: &Graph, rows: usize, cols: usize) -> Result<Vec<(usize, usize)>> {
    match graph.topology() {
        Topology::Grid { l1, l2 } => {
            if l1 != cols || l2 != rows {
                return Err(Error::Shape(format!(
                    "grid({l1}, {l2}) needs a field with {l2} rows of {l1} cells, got {rows}x{cols}"
                )));
            }
            Ok((0..rows * cols).map(|n| (n / cols, n % cols)).collect())
        }
        Topology::Chain => {
            if graph.num_nodes() != rows * cols {
                return Err(Error::Shape(format!(
                    "chain of {} nodes cannot cover a {rows}x{cols} field",
                    graph.num_nodes()
                )));
            }
            Ok((0..rows * cols)
                .map(|n| {
                    let (r, c) = (n / cols, n % cols);
                    (r, if r % 2 == 0 { c } else { cols - 1 - c })
                })
                .collect())
        }
        Topology::Custom => Err(Error::InvalidParameter(
            "field mapping is defined for chain and grid graphs only".into(),
        )),
    }
}

/// Initial robot states read off the field.
pub fn field_to_state<T: Real>(field: &ScalarField<T>, graph: &Graph) -> Result<StateVector<T>> {
    let cells = node_cells(graph, field.rows(), field.cols())?;
    Ok(cells.iter().map(|&(r, c)| field.values[[r, c]]).collect())
}

/// Inverse of [`field_to_state`]; extent and units are copied from `template`.
pub fn state_to_field<T: Real>(state: &StateVector<T>, graph: &Graph, template: &ScalarField<T>) -> Result<ScalarField<T>> {
    let cells = node_cells(graph, template.rows(), template.cols())?;
    if state.len() != cells.len() {
        return Err(Error::Shape(format!(
            "state has {} entries, field has {} cells",
            state.len(),
            cells.len()
        )));
    }
    let mut values = Array2::zeros((template.rows(), template.cols()));
    for (&(r, c), &v) in cells.iter().zip(state.iter()) {
        values[[r, c]] = v;
    }
    ScalarField::new(values, template.extent, template.units.clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary<T> {
    /// `‖estimate − actual‖₂ / ‖actual‖₂` over all cells.
    pub l2_relative: T,
    pub max_abs: T,
}

/// `|estimate − actual|` per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap<T> {
    pub field: ScalarField<T>,
    pub summary: ErrorSummary<T>,
}

pub fn error_map<T: Real>(actual: &ScalarField<T>, estimated_state: &StateVector<T>, graph: &Graph) -> Result<ErrorMap<T>> {
    let estimated = state_to_field(estimated_state, graph, actual)?;
    let diff = &estimated.values - &actual.values;
    let abs = diff.mapv(T::abs);
    let num = diff.iter().map(|&d| d * d).sum::<T>().sqrt();
    let den = actual.values.iter().map(|&v| v * v).sum::<T>().sqrt();
    let l2_relative = if den == T::zero() { num } else { num / den };
    let max_abs = abs.iter().fold(T::zero(), |m, &v| m.max(v));
    Ok(ErrorMap {
        field: ScalarField::new(abs, actual.extent, actual.units.clone())?,
        summary: ErrorSummary { l2_relative, max_abs },
    })
}
