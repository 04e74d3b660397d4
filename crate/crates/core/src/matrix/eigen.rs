//! Dense symmetric eigensolver.
//!
//! The matrix is first split into the connected components of its nonzero
//! pattern (a block-diagonal matrix, after permutation, has the union of the
//! block spectra). Each component is reduced to tridiagonal form by
//! Householder reflections and then diagonalised by implicit QL with Wilkinson
//! shifts. Every step is deterministic.

use crate::error::{Error, Result};

const MAX_ITERATIONS_PER_EIGENVALUE: usize = 64;

/// Eigenvalues in descending order, with optional eigenvectors stored as rows.
pub(crate) struct RawEigen {
    pub values: Vec<f64>,
    pub vectors: Option<Vec<f64>>,
}

pub(crate) fn symmetric_eigen(a: &[f64], n: usize, want_vectors: bool) -> Result<RawEigen> {
    let comps = components(a, n);
    if comps.len() == 1 {
        let mut work = a.to_vec();
        let (values, vectors) = solve_dense(&mut work, n, want_vectors)?;
        return Ok(sort_descending(values, vectors, n));
    }

    let mut values = Vec::with_capacity(n);
    let mut vectors = want_vectors.then(|| vec![0.0; n * n]);
    let mut row = 0;
    for comp in &comps {
        let m = comp.len();
        let mut sub = vec![0.0; m * m];
        for (si, &i) in comp.iter().enumerate() {
            for (sj, &j) in comp.iter().enumerate() {
                sub[si * m + sj] = a[i * n + j];
            }
        }
        let (vals, vecs) = solve_dense(&mut sub, m, want_vectors)?;
        values.extend_from_slice(&vals);
        if let (Some(out), Some(vecs)) = (vectors.as_mut(), vecs) {
            for local in 0..m {
                let dst = &mut out[(row + local) * n..(row + local + 1) * n];
                for (sj, &j) in comp.iter().enumerate() {
                    dst[j] = vecs[local * m + sj];
                }
            }
        }
        row += m;
    }
    Ok(sort_descending(values, vectors, n))
}

fn sort_descending(values: Vec<f64>, vectors: Option<Vec<f64>>, n: usize) -> RawEigen {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let vectors = vectors.map(|v| {
        let mut out = vec![0.0; n * n];
        for (dst, &src) in order.iter().enumerate() {
            out[dst * n..(dst + 1) * n].copy_from_slice(&v[src * n..(src + 1) * n]);
        }
        out
    });
    RawEigen {
        values: sorted,
        vectors,
    }
}

/// Connected components of the off-diagonal nonzero graph, each sorted, ordered by smallest index.
fn components(a: &[f64], n: usize) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if a[i * n + j] != 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = comps.len();
            comps.push(Vec::new());
        }
        comps[slot[root]].push(i);
    }
    comps
}

/// Unsorted eigenvalues and (optionally) row eigenvectors of a dense symmetric block.
/// `a` is overwritten.
fn solve_dense(a: &mut [f64], n: usize, want_vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if n == 1 {
        return Ok((vec![a[0]], want_vectors.then(|| vec![1.0])));
    }
    let (mut d, mut e, taus) = tridiagonalize(a, n);
    let mut z = want_vectors.then(|| accumulate_reflectors(a, &taus, n));
    tql(&mut d, &mut e, z.as_deref_mut(), n)?;
    Ok((d, z))
}

/// Householder vector for `x` in place (LAPACK `dlarfg` convention): on return
/// `x[0] = 1`, `x[1..]` holds the tail of v, and `(I - tau v vᵀ) x_in = beta e₁`.
fn householder(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let xnorm = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if xnorm == 0.0 {
        x[0] = 1.0;
        return (alpha, 0.0);
    }
    let beta = -alpha.hypot(xnorm).copysign(alpha);
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = 1.0;
    (beta, tau)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Reduces the full-storage matrix `a` to symmetric tridiagonal form.
///
/// Returns the diagonal `d`, the subdiagonal `e` (with `e[n-1] = 0`) and the
/// reflector scalars. Reflector `k` is left in row `k`, columns `k+1..n`.
/// The rank-two update of step `k` is fused with the matrix-vector product of
/// step `k+1`, so each step streams the trailing block once.
fn tridiagonalize(a: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut taus = vec![0.0; n];
    if n == 2 {
        d[0] = a[0];
        d[1] = a[3];
        e[0] = a[1];
        return (d, e, taus);
    }

    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut v_next = vec![0.0; n];
    let mut w_next = vec![0.0; n];

    d[0] = a[0];
    let (beta, mut tau) = householder(&mut a[1..n]);
    e[0] = beta;
    taus[0] = tau;
    v[1..n].copy_from_slice(&a[1..n]);
    if tau != 0.0 {
        for i in 1..n {
            w[i] = tau * dot(&a[i * n + 1..(i + 1) * n], &v[1..n]);
        }
    }

    for k in 0..n - 2 {
        let r = k + 1;
        if tau != 0.0 {
            let alpha = -0.5 * tau * dot(&w[r..n], &v[r..n]);
            for i in r..n {
                w[i] += alpha * v[i];
            }
            let (vr, wr) = (v[r], w[r]);
            let row = &mut a[r * n..(r + 1) * n];
            for j in r..n {
                row[j] -= vr * w[j] + wr * v[j];
            }
        }

        if r < n - 2 {
            d[r] = a[r * n + r];
            let (beta, tau_next) = householder(&mut a[r * n + r + 1..(r + 1) * n]);
            e[r] = beta;
            taus[r] = tau_next;
            v_next[r + 1..n].copy_from_slice(&a[r * n + r + 1..(r + 1) * n]);
            for i in r + 1..n {
                let row = &mut a[i * n..(i + 1) * n];
                if tau != 0.0 {
                    let (vi, wi) = (v[i], w[i]);
                    for j in r + 1..n {
                        row[j] -= vi * w[j] + wi * v[j];
                    }
                }
                if tau_next != 0.0 {
                    w_next[i] = tau_next * dot(&row[r + 1..n], &v_next[r + 1..n]);
                }
            }
            std::mem::swap(&mut v, &mut v_next);
            std::mem::swap(&mut w, &mut w_next);
            tau = tau_next;
        } else {
            // r == n - 2: finish the trailing 2x2 block.
            let last = n - 1;
            if tau != 0.0 {
                a[last * n + last] -= 2.0 * v[last] * w[last];
            }
            d[r] = a[r * n + r];
            e[r] = a[r * n + last];
            d[last] = a[last * n + last];
        }
    }
    (d, e, taus)
}

/// Forms Qᵀ (rows are the columns of Q) from the stored reflectors, where
/// A = Q T Qᵀ and Q = H₀ H₁ ⋯ H_{n-3}. Reflectors are applied right to left
/// so each one touches only the trailing block it acts on.
fn accumulate_reflectors(a: &[f64], taus: &[f64], n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    if n < 3 {
        return m;
    }
    for k in (0..n - 2).rev() {
        let tau = taus[k];
        if tau == 0.0 {
            continue;
        }
        let v = &a[k * n + k + 1..(k + 1) * n];
        for i in k + 1..n {
            let row = &mut m[i * n + k + 1..(i + 1) * n];
            let t = tau * dot(row, v);
            for (x, &vj) in row.iter_mut().zip(v) {
                *x -= t * vj;
            }
        }
    }
    m
}

/// Implicit QL with Wilkinson-style shifts on a symmetric tridiagonal matrix.
/// `e[i]` couples `d[i]` and `d[i+1]`. When `z` is given its rows are rotated
/// alongside, so rows of Qᵀ become eigenvectors of the original matrix.
fn tql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>, n: usize) -> Result<()> {
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_ITERATIONS_PER_EIGENVALUE {
                    return Err(Error::NoConvergence {
                        iterations: MAX_ITERATIONS_PER_EIGENVALUE,
                        residual: e[l].abs(),
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        let (head, tail) = z.split_at_mut((i + 1) * n);
                        let zi = &mut head[i * n..];
                        let zi1 = &mut tail[..n];
                        for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                            let t = *b;
                            *b = s * *a + c * t;
                            *a = c * *a - s * t;
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
        e[l] = 0.0;
    }
    Ok(())
}
