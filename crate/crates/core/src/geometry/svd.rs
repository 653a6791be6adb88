//! One-sided Jacobi SVD, used for the eigenspace rotation.

use super::{GeometryError, Rotation};
use crate::embed::EmbeddingMatrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 80;

/// Right-singular vectors and singular values of a `q × m` matrix.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    /// Row-major `m × m`; column `j` is the `j`-th right-singular vector.
    pub v: Vec<T>,
    /// Descending, length `m` (trailing zeros when `q < m`).
    pub sigma: Vec<T>,
    pub sweeps: usize,
}

/// Hestenes one-sided Jacobi on the columns of `rows` (`q × m`, row-major).
///
/// Columns are sorted by descending singular value; each singular vector's
/// largest-magnitude component (first on ties) is made positive.
pub fn singular_value_decomposition<T: Scalar>(rows: &[T], q: usize, m: usize) -> Svd<T> {
    assert_eq!(rows.len(), q * m);
    let mut cols: Vec<Vec<T>> = (0..m).map(|j| (0..q).map(|i| rows[i * m + j]).collect()).collect();
    let mut vcols: Vec<Vec<T>> = (0..m)
        .map(|j| (0..m).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let tol = T::epsilon() * T::of(q.max(1) as f64);
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..m {
            for r in p + 1..m {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for (&a, &b) in cols[p].iter().zip(&cols[r]) {
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                let scale = (alpha * beta).sqrt();
                if scale == T::zero() || gamma.abs() <= tol * scale {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let sgn = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sgn / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, r, c, s);
                rotate_pair(&mut vcols, p, r, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = cols.iter().map(|c| c.iter().map(|&v| v * v).sum::<T>().sqrt()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut v = vec![T::zero(); m * m];
    let mut sigma = Vec::with_capacity(m);
    for (j, &src) in order.iter().enumerate() {
        let col = &vcols[src];
        let lead = (0..m).fold(0, |best, i| if col[i].abs() > col[best].abs() { i } else { best });
        let flip = col[lead] < T::zero();
        for i in 0..m {
            v[i * m + j] = if flip { -col[i] } else { col[i] };
        }
        sigma.push(norms[src]);
    }
    Svd { v, sigma, sweeps }
}

fn rotate_pair<T: Scalar>(cols: &mut [Vec<T>], p: usize, r: usize, c: T, s: T) {
    let (head, tail) = cols.split_at_mut(r);
    let (a, b) = (&mut head[p], &mut tail[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, yr) = (*x, *y);
        *x = c * xp - s * yr;
        *y = s * xp + c * yr;
    }
}

/// Eigenspace rotation of the rows of `x`: the right-singular vectors of
/// `x` (mean-centered when `centered`), together with the mean that was
/// subtracted.
pub fn rotation_of<T: Scalar>(
    x: &EmbeddingMatrix<T>,
    centered: bool,
) -> Result<(Rotation<T>, Option<Vec<T>>), GeometryError> {
    let (q, m) = (x.rows(), x.dim());
    if q < 2 {
        return Err(GeometryError::TooFewRows(q));
    }
    let center = centered.then(|| {
        let mut mean = vec![T::zero(); m];
        for row in x.iter_rows() {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let n = T::of(q as f64);
        mean.iter_mut().for_each(|v| *v /= n);
        mean
    });
    let data: Vec<T> = match &center {
        Some(c) => x
            .iter_rows()
            .flat_map(|row| row.iter().zip(c).map(|(&v, &mu)| v - mu))
            .collect(),
        None => x.as_slice().to_vec(),
    };
    let svd = singular_value_decomposition(&data, q, m);
    Ok((Rotation::new(m, svd.v)?, center))
}
