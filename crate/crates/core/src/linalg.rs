//! Dense symmetric eigendecomposition.
//!
//! Householder reduction to tridiagonal form followed by the implicit QL
//! algorithm (the classic `tred2`/`tql2` pair from EISPACK, by way of JAMA).
//! Written against [`Real`] so the same code runs in `f32` and `f64`.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// QL sweeps allowed per eigenvalue before giving up.
const MAX_QL_SWEEPS: usize = 64;

/// `A = V diag(values) Vᵀ` with eigenvalues ascending and eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Array1<T>,
    pub vectors: Array2<T>,
}

impl<T: Real> SymmetricEigen<T> {
    /// Full decomposition. The input must be square and symmetric to within
    /// `n · ε · max|aᵢⱼ|`.
    pub fn new(a: ArrayView2<'_, T>) -> Result<Self> {
        check_symmetric(a)?;
        let (values, vectors) = decompose(a, true)?;
        Ok(Self {
            values,
            vectors: vectors.expect("vectors requested"),
        })
    }

    /// Eigenvalues only, ascending. Skips accumulation of the rotations.
    pub fn values_only(a: ArrayView2<'_, T>) -> Result<Array1<T>> {
        check_symmetric(a)?;
        Ok(decompose(a, false)?.0)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Largest eigenvalue.
    pub fn max_value(&self) -> T {
        self.values[self.dim() - 1]
    }

    /// `V · diag(f(λ)) · Vᵀ · x` for a spectral function `f`.
    pub fn apply_fn(&self, x: &Array1<T>, f: impl Fn(T) -> T) -> Array1<T> {
        let mut modal = self.vectors.t().dot(x);
        for (m, &lam) in modal.iter_mut().zip(self.values.iter()) {
            *m *= f(lam);
        }
        self.vectors.dot(&modal)
    }
}

/// Largest `|aᵢⱼ − aⱼᵢ|`.
pub fn max_asymmetry<T: Real>(a: ArrayView2<'_, T>) -> T {
    let n = a.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

fn check_symmetric<T: Real>(a: ArrayView2<'_, T>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = T::epsilon() * T::from_usize_lossy(a.nrows()) * scale;
    let asym = max_asymmetry(a);
    if asym > tol {
        return Err(Error::NotSymmetric(asym.to_f64_lossy()));
    }
    Ok(())
}

fn decompose<T: Real>(a: ArrayView2<'_, T>, want_vectors: bool) -> Result<(Array1<T>, Option<Array2<T>>)> {
    let n = a.nrows();
    let mut v = a.to_owned();
    let mut d = Array1::<T>::zeros(n);
    let mut e = Array1::<T>::zeros(n);
    if n == 1 {
        d[0] = a[[0, 0]];
        return Ok((d, want_vectors.then(|| Array2::eye(1))));
    }
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e, want_vectors)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let vectors = want_vectors.then(|| {
        let mut sorted = Array2::<T>::zeros((n, n));
        for (dst, &src) in order.iter().enumerate() {
            sorted.column_mut(dst).assign(&v.column(src));
        }
        sorted
    });
    Ok((values, vectors))
}

/// Householder reduction; on return `v` holds the accumulated orthogonal
/// transform, `d` the diagonal and `e[1..]` the sub-diagonal.
fn tridiagonalize<T: Real>(v: &mut Array2<T>, d: &mut Array1<T>, e: &mut Array1<T>) {
    let n = d.len();
    let zero = T::zero();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }

    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = zero;
                v[[j, i]] = zero;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = zero;
            }

            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in (j + 1)..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[[k, j]] -= upd;
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = zero;
            }
        }
        d[i] = h;
    }

    for i in 0..(n - 1) {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = T::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[[k, j]] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = zero;
    }
    v[[n - 1, n - 1]] = T::one();
    e[0] = zero;
}

fn ql_implicit<T: Real>(
    v: &mut Array2<T>,
    d: &mut Array1<T>,
    e: &mut Array1<T>,
    want_vectors: bool,
) -> Result<()> {
    let n = d.len();
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;

    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(Error::NoConvergence(MAX_QL_SWEEPS));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in (l + 2)..n {
                    d[i] -= h;
                }
                f += h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if want_vectors {
                        for k in 0..n {
                            let vk1 = v[[k, i + 1]];
                            let vk = v[[k, i]];
                            v[[k, i + 1]] = s * vk + c * vk1;
                            v[[k, i]] = c * vk - s * vk1;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = zero;
    }
    Ok(())
}
