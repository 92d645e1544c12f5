//! Symmetric Lanczos for the smallest eigenpairs of a sparse Laplacian.
//!
//! Every pass uses full (twice-iterated Gram-Schmidt) reorthogonalization and
//! restarts with a fresh random vector when the Krylov space becomes invariant.
//! A single Krylov space only ever holds one vector per eigenspace, so after
//! the first pass the solver keeps running short passes in the orthogonal
//! complement of everything found so far, locking any eigenvalue smaller than
//! the current `count`-th one, until a pass finds nothing new below it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dense::tridiagonal_eigen;
use super::laplacian::NormalizedSupraLaplacian;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Ritz residual bound `|beta_m s_mi|` required for every wanted pair.
    pub tol: f64,
    /// Iteration cap per pass.
    pub max_iter: usize,
    pub seed: u64,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn orthogonalize<T: Scalar>(w: &mut [T], against: &[&[T]]) {
    for _ in 0..2 {
        for q in against {
            let c = dot(w, q);
            for (wi, &qi) in w.iter_mut().zip(q.iter()) {
                *wi -= c * qi;
            }
        }
    }
}

fn random_unit_orthogonal<T: Scalar>(
    n: usize,
    against: &[&[T]],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<T>> {
    for _ in 0..8 {
        let mut v: Vec<T> = (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        orthogonalize(&mut v, against);
        let nv = norm(&v);
        if nv > T::lit(1e-3) {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

struct PassResult<T> {
    values: Vec<T>,
    vectors: Vec<Vec<T>>,
}

/// One Lanczos run restricted to the complement of `deflate`, returning the
/// `need` smallest converged Ritz pairs.
fn lanczos_pass<T: Scalar>(
    op: &NormalizedSupraLaplacian<T>,
    need: usize,
    deflate: &[Vec<T>],
    opts: &LanczosOptions,
    rng: &mut ChaCha8Rng,
) -> Result<PassResult<T>> {
    let n = op.size();
    let room = n - deflate.len();
    let tol = T::lit(opts.tol);
    let breakdown = T::epsilon().powf(T::lit(0.75));
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut alphas: Vec<T> = Vec::new();
    let mut betas: Vec<T> = Vec::new();

    fn against_all<'a, T>(deflate: &'a [Vec<T>], basis: &'a [Vec<T>]) -> Vec<&'a [T]> {
        deflate.iter().chain(basis).map(Vec::as_slice).collect()
    }

    let mut q = match random_unit_orthogonal(n, &against_all(deflate, &basis), rng) {
        Some(q) => q,
        None => {
            return Ok(PassResult {
                values: Vec::new(),
                vectors: Vec::new(),
            })
        }
    };
    let mut w = vec![T::zero(); n];
    loop {
        op.apply(&q, &mut w);
        let alpha = dot(&q, &w);
        for (wi, &qi) in w.iter_mut().zip(&q) {
            *wi -= alpha * qi;
        }
        if let (Some(prev), Some(&beta_prev)) = (basis.last(), betas.last()) {
            for (wi, &pi) in w.iter_mut().zip(prev) {
                *wi -= beta_prev * pi;
            }
        }
        basis.push(std::mem::take(&mut q));
        alphas.push(alpha);
        orthogonalize(&mut w, &against_all(deflate, &basis));
        let beta = norm(&w);
        let m = basis.len();
        let exhausted = m >= room;
        let broke_down = beta < breakdown;

        if m >= need && (exhausted || (!broke_down && (m.is_multiple_of(5) || m >= opts.max_iter))) {
            let (theta, s) = tridiagonal_eigen(&alphas, &betas);
            let residuals: Vec<T> = (0..need.min(m))
                .map(|i| (beta * s[(m - 1) * m + i]).abs())
                .collect();
            if exhausted || residuals.iter().all(|&r| r <= tol) {
                let vectors = (0..need.min(m))
                    .map(|i| {
                        let mut y = vec![T::zero(); n];
                        for (j, b) in basis.iter().enumerate() {
                            let c = s[j * m + i];
                            for (yk, &bk) in y.iter_mut().zip(b) {
                                *yk += c * bk;
                            }
                        }
                        let ny = norm(&y);
                        y.iter_mut().for_each(|x| *x /= ny);
                        y
                    })
                    .collect();
                return Ok(PassResult {
                    values: theta[..need.min(m)].to_vec(),
                    vectors,
                });
            }
            if m >= opts.max_iter {
                return Err(Error::Convergence {
                    iterations: m,
                    residuals: residuals.iter().map(|r| r.to_f64_lossy()).collect(),
                });
            }
        }
        if exhausted {
            unreachable!("exhausted passes always return");
        }
        if broke_down {
            match random_unit_orthogonal(n, &against_all(deflate, &basis), rng) {
                Some(fresh) => {
                    q = fresh;
                    betas.push(T::zero());
                }
                None => {
                    // numerically no room left: treat the current basis as complete
                    let (theta, s) = tridiagonal_eigen(&alphas, &betas);
                    let take = need.min(m);
                    let vectors = (0..take)
                        .map(|i| {
                            let mut y = vec![T::zero(); n];
                            for (j, b) in basis.iter().enumerate() {
                                for (yk, &bk) in y.iter_mut().zip(b) {
                                    *yk += s[j * m + i] * bk;
                                }
                            }
                            y
                        })
                        .collect();
                    return Ok(PassResult {
                        values: theta[..take].to_vec(),
                        vectors,
                    });
                }
            }
        } else {
            q = w.iter().map(|&x| x / beta).collect();
            betas.push(beta);
        }
        if m >= opts.max_iter && m < need {
            return Err(Error::Config(format!(
                "iteration cap {} is below the {need} requested eigenpairs",
                opts.max_iter
            )));
        }
    }
}

/// The `count` smallest eigenpairs of `op`, ascending, vectors unit-norm.
pub fn lanczos_smallest<T: Scalar>(
    op: &NormalizedSupraLaplacian<T>,
    count: usize,
    opts: &LanczosOptions,
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let n = op.size();
    if count > n {
        return Err(Error::Config(format!(
            "requested {count} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut found: Vec<(T, Vec<T>)> = Vec::new();
    let mut deflate: Vec<Vec<T>> = Vec::new();
    let tol = T::lit(opts.tol);
    let mut first = true;
    while deflate.len() < n {
        let need = if first { count } else { 1 };
        let pass = lanczos_pass(op, need.min(n - deflate.len()), &deflate, opts, &mut rng)?;
        if pass.values.is_empty() {
            break;
        }
        let threshold = if found.len() >= count {
            found[count - 1].0 - tol
        } else {
            T::infinity()
        };
        let improved = !first && pass.values[0] < threshold;
        let any_new = first || improved;
        for (val, vec) in pass.values.into_iter().zip(pass.vectors) {
            deflate.push(vec.clone());
            found.push((val, vec));
        }
        found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        first = false;
        if !any_new && found.len() >= count {
            break;
        }
    }
    found.truncate(count);
    Ok(found.into_iter().unzip())
}
