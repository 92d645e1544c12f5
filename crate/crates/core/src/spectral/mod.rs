//! Spectral analysis of supra-graphs: the normalized supra-Laplacian, its
//! smallest eigenpairs and the raw spatio-temporal encodings derived from them.

pub mod dense;
mod encoding;
pub mod lanczos;
mod laplacian;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use encoding::{raw_encoding, RawEncodingTable};
pub use lanczos::LanczosOptions;
pub use laplacian::{normalized_laplacian, NormalizedSupraLaplacian};

/// Matrices up to this size are solved densely under [`EigenMethod::Auto`].
pub const DENSE_LIMIT: usize = 512;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenMethod {
    Dense,
    Lanczos,
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub method: EigenMethod,
    pub tol: f64,
    pub seed: u64,
    /// Lanczos iterations per pass; `None` means `10 k + 50`.
    pub max_iter: Option<usize>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            method: EigenMethod::Auto,
            tol: 1e-8,
            seed: 0,
            max_iter: None,
        }
    }
}

/// The `k` smallest non-trivial eigenpairs of a normalized supra-Laplacian.
#[derive(Clone, Debug)]
pub struct SpectralBasis<T: Scalar> {
    eigenvalues: Vec<T>,
    /// Row-major `size * k`, column `i` pairs with `eigenvalues[i]`.
    eigenvectors: Vec<T>,
    size: usize,
    lambda0: T,
}

impl<T: Scalar> SpectralBasis<T> {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Smallest eigenvalue, discarded from the basis (0 for a connected graph).
    pub fn lambda0(&self) -> T {
        self.lambda0
    }

    pub fn eigenvectors(&self) -> &[T] {
        &self.eigenvectors
    }

    /// Projections of `row` on every basis vector.
    pub fn row(&self, row: usize) -> &[T] {
        let k = self.k();
        &self.eigenvectors[row * k..(row + 1) * k]
    }

    pub fn column(&self, i: usize) -> Vec<T> {
        let k = self.k();
        (0..self.size).map(|r| self.eigenvectors[r * k + i]).collect()
    }

    /// `||L phi_i - lambda_i phi_i||_2` for every pair.
    pub fn residual_norms(&self, l: &NormalizedSupraLaplacian<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.size];
        (0..self.k())
            .map(|i| {
                let phi = self.column(i);
                l.apply(&phi, &mut out);
                out.iter()
                    .zip(&phi)
                    .map(|(&a, &p)| {
                        let r = a - self.eigenvalues[i] * p;
                        r * r
                    })
                    .sum::<T>()
                    .sqrt()
            })
            .collect()
    }
}

/// Flips each column so its largest-magnitude entry is positive; among
/// entries tied in magnitude the lowest row wins. Idempotent.
pub fn canonicalize_signs<T: Scalar>(vectors: &mut [T], rows: usize, cols: usize) {
    let slack = T::lit(1e-9);
    for c in 0..cols {
        let max = (0..rows)
            .map(|r| vectors[r * cols + c].abs())
            .fold(T::zero(), T::max);
        if max == T::zero() {
            continue;
        }
        let pivot = (0..rows)
            .find(|&r| vectors[r * cols + c].abs() >= max * (T::one() - slack))
            .expect("max is attained");
        if vectors[pivot * cols + c] < T::zero() {
            for r in 0..rows {
                vectors[r * cols + c] = -vectors[r * cols + c];
            }
        }
    }
}

/// The `count` smallest eigenpairs as (values, row-major `size * count` vectors).
fn smallest_raw<T: Scalar>(
    l: &NormalizedSupraLaplacian<T>,
    count: usize,
    k_for_cap: usize,
    opts: &EigenOptions,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = l.size();
    if count > n {
        return Err(Error::Config(format!(
            "{count} eigenpairs requested from a {n}-row supra-Laplacian"
        )));
    }
    if opts.tol <= 0.0 || opts.tol.is_nan() {
        return Err(Error::Config(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let use_dense = match opts.method {
        EigenMethod::Dense => true,
        EigenMethod::Lanczos => false,
        EigenMethod::Auto => n <= DENSE_LIMIT,
    };
    let mut vectors = vec![T::zero(); n * count];
    let values = if use_dense {
        let (vals, vecs) = dense::symmetric_eigen(&l.to_dense(), n);
        for r in 0..n {
            vectors[r * count..(r + 1) * count].copy_from_slice(&vecs[r * n..r * n + count]);
        }
        vals[..count].to_vec()
    } else {
        let lopts = LanczosOptions {
            tol: opts.tol,
            max_iter: opts.max_iter.unwrap_or(10 * k_for_cap + 50),
            seed: opts.seed,
        };
        let (vals, cols) = lanczos::lanczos_smallest(l, count, &lopts)?;
        for (c, col) in cols.iter().enumerate() {
            for r in 0..n {
                vectors[r * count + c] = col[r];
            }
        }
        vals
    };
    Ok((values, vectors))
}

/// Computes the `k + 1` smallest eigenpairs, discards the smallest (the
/// trivial `lambda_0`), and sign-canonicalizes the remaining `k` columns.
pub fn smallest_eigenpairs<T: Scalar>(
    l: &NormalizedSupraLaplacian<T>,
    k: usize,
    opts: &EigenOptions,
) -> Result<SpectralBasis<T>> {
    let n = l.size();
    if k + 1 > n {
        return Err(Error::Config(format!(
            "k = {k} needs at least {} supra-graph rows, found {n}",
            k + 1
        )));
    }
    let (values, vectors) = smallest_raw(l, k + 1, k, opts)?;
    let mut kept = vec![T::zero(); n * k];
    for r in 0..n {
        kept[r * k..(r + 1) * k].copy_from_slice(&vectors[r * (k + 1) + 1..(r + 1) * (k + 1)]);
    }
    canonicalize_signs(&mut kept, n, k);
    Ok(SpectralBasis {
        eigenvalues: values[1..].to_vec(),
        eigenvectors: kept,
        size: n,
        lambda0: values[0],
    })
}

/// The `k` smallest eigenpairs with nothing discarded, for graphs whose zero
/// eigenvalue has multiplicity above one. `lambda0` repeats the first value.
pub fn smallest_eigenpairs_keep_trivial<T: Scalar>(
    l: &NormalizedSupraLaplacian<T>,
    k: usize,
    opts: &EigenOptions,
) -> Result<SpectralBasis<T>> {
    let n = l.size();
    let (values, mut vectors) = smallest_raw(l, k, k, opts)?;
    canonicalize_signs(&mut vectors, n, k);
    Ok(SpectralBasis {
        lambda0: values.first().copied().unwrap_or_else(T::zero),
        eigenvalues: values,
        eigenvectors: vectors,
        size: n,
    })
}
