use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::supra::SupraGraph;

/// `L = I - D^{-1/2} A D^{-1/2}` in compressed sparse row form.
///
/// Rows of degree zero (only possible for untransformed supra-graphs) are
/// entirely zero, so every isolated row contributes an eigenvalue 0.
#[derive(Clone, Debug)]
pub struct NormalizedSupraLaplacian<T: Scalar> {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<T>,
    degree: Vec<usize>,
}

/// Builds the normalized Laplacian of `sg`. A zero-degree row in a
/// transformed (connected by construction) supra-graph is a construction bug
/// and reported as [`Error::Internal`].
pub fn normalized_laplacian<T: Scalar>(sg: &SupraGraph) -> Result<NormalizedSupraLaplacian<T>> {
    let n = sg.size();
    let degree: Vec<usize> = (0..n).map(|r| sg.degree(r)).collect();
    if sg.is_transformed() {
        if let Some(r) = degree.iter().position(|&d| d == 0) {
            return Err(Error::Internal(format!(
                "row {r} of a transformed supra-graph has degree 0"
            )));
        }
    }
    let inv_sqrt: Vec<T> = degree
        .iter()
        .map(|&d| {
            if d == 0 {
                T::zero()
            } else {
                T::one() / T::lit(d as f64).sqrt()
            }
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for i in 0..n {
        let mut diag_done = false;
        let push_diag = |cols: &mut Vec<usize>, values: &mut Vec<T>| {
            if degree[i] > 0 {
                cols.push(i);
                values.push(T::one());
            }
        };
        for &j in sg.neighbors(i) {
            if !diag_done && j > i {
                push_diag(&mut cols, &mut values);
                diag_done = true;
            }
            cols.push(j);
            values.push(-(inv_sqrt[i] * inv_sqrt[j]));
        }
        if !diag_done {
            push_diag(&mut cols, &mut values);
        }
        row_ptr.push(cols.len());
    }
    Ok(NormalizedSupraLaplacian {
        row_ptr,
        cols,
        values,
        degree,
    })
}

impl<T: Scalar> NormalizedSupraLaplacian<T> {
    pub fn size(&self) -> usize {
        self.degree.len()
    }

    pub fn degree(&self) -> &[usize] {
        &self.degree
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(column, value)`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map_or(T::zero(), |(_, v)| v)
    }

    /// `y = L x`, accumulated in column order.
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn to_dense(&self) -> Vec<T> {
        let n = self.size();
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for (j, v) in self.row(i) {
                out[i * n + j] = v;
            }
        }
        out
    }
}
