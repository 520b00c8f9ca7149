//! Dense complex linear algebra for the small matrices that appear per sample
//! (sizes up to the ambient dimension). Matrices are row-major slices.

use num_complex::Complex64 as C64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Euclidean norm with scaling, safe for entries far below `sqrt(f64::MIN_POSITIVE)`.
pub fn norm(v: &[C64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = v
        .iter()
        .map(|z| {
            let (a, b) = (z.re / scale, z.im / scale);
            a * a + b * b
        })
        .sum();
    scale * s.sqrt()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Hermitian inner product `sum conj(x_j) y_j`.
pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// `sum x_j y_j` without conjugation.
pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn sub(x: &[C64], y: &[C64]) -> Vec<C64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// Determinant of an `n x n` matrix by Gaussian elimination with partial pivoting.
pub fn det(a: &[C64], n: usize) -> C64 {
    match n {
        0 => ONE,
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => {
            let mut m = a.to_vec();
            let mut d = ONE;
            for col in 0..n {
                let piv = (col..n)
                    .max_by(|&i, &j| m[i * n + col].norm().total_cmp(&m[j * n + col].norm()))
                    .unwrap();
                if m[piv * n + col] == ZERO {
                    return ZERO;
                }
                if piv != col {
                    for k in 0..n {
                        m.swap(piv * n + k, col * n + k);
                    }
                    d = -d;
                }
                let p = m[col * n + col];
                d *= p;
                for r in col + 1..n {
                    let f = m[r * n + col] / p;
                    if f != ZERO {
                        for k in col..n {
                            let v = m[col * n + k];
                            m[r * n + k] -= f * v;
                        }
                    }
                }
            }
            d
        }
    }
}

/// Solves `A X = B` for `A` (n x n) and `B` (n x m), returning `X` row-major,
/// or `None` when `A` is numerically singular.
pub fn solve(a: &[C64], n: usize, b: &[C64], m: usize) -> Option<Vec<C64>> {
    let mut a = a.to_vec();
    let mut x = b.to_vec();
    let scale = a.iter().fold(0.0f64, |s, z| s.max(z.norm()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))
            .unwrap();
        if a[piv * n + col].norm() <= 1e-300_f64.max(scale * 1e-15) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            for k in 0..m {
                x.swap(piv * m + k, col * m + k);
            }
        }
        let p = a[col * n + col];
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col] / p;
            if f == ZERO {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] -= f * v;
            }
            for k in 0..m {
                let v = x[col * m + k];
                x[r * m + k] -= f * v;
            }
        }
    }
    for r in 0..n {
        let p = a[r * n + r];
        for k in 0..m {
            x[r * m + k] /= p;
        }
    }
    Some(x)
}

/// Orthonormal basis (as columns of an `N x (N - rows)` row-major matrix) of the
/// kernel of the `rows x N` matrix `j`, by Gram-Schmidt on the conjugated rows
/// followed by pivoted completion with the standard basis.
pub fn kernel_basis(j: &[C64], rows: usize, cols: usize) -> Option<Vec<C64>> {
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(cols);
    for r in 0..rows {
        let v: Vec<C64> = (0..cols).map(|c| j[r * cols + c].conj()).collect();
        let v = orthogonalize(&basis, v)?;
        basis.push(v);
    }
    let mut kernel: Vec<Vec<C64>> = Vec::with_capacity(cols - rows);
    while basis.len() < cols {
        // pick the standard basis vector with the largest residual
        let mut best: Option<(f64, Vec<C64>)> = None;
        for k in 0..cols {
            let mut e = vec![ZERO; cols];
            e[k] = ONE;
            let r = project_out(&basis, e);
            let nr = norm(&r);
            if best.as_ref().map_or(true, |(b, _)| nr > *b + 1e-12) {
                best = Some((nr, r));
            }
        }
        let (nr, r) = best?;
        if nr < 1e-8 {
            return None;
        }
        let v = orthogonalize(&basis, r)?;
        basis.push(v.clone());
        kernel.push(v);
    }
    let k = cols - rows;
    let mut out = vec![ZERO; cols * k];
    for (c, v) in kernel.iter().enumerate() {
        for r in 0..cols {
            out[r * k + c] = v[r];
        }
    }
    Some(out)
}

fn project_out(basis: &[Vec<C64>], mut v: Vec<C64>) -> Vec<C64> {
    for _ in 0..2 {
        for b in basis {
            let c = inner(b, &v);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
    }
    v
}

fn orthogonalize(basis: &[Vec<C64>], v: Vec<C64>) -> Option<Vec<C64>> {
    let v = project_out(basis, v);
    let nv = norm(&v);
    if nv == 0.0 || !nv.is_finite() {
        return None;
    }
    Some(v.into_iter().map(|x| x / nv).collect())
}

/// Conjugate transpose of a `rows x cols` matrix.
pub fn adjoint(a: &[C64], rows: usize, cols: usize) -> Vec<C64> {
    let mut out = vec![ZERO; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c].conj();
        }
    }
    out
}

pub fn matmul(a: &[C64], b: &[C64], n: usize, k: usize, m: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n * m];
    for i in 0..n {
        for l in 0..k {
            let x = a[i * k + l];
            if x == ZERO {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += x * b[l * m + j];
            }
        }
    }
    out
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Minor of `a` (`rows x cols`) on the given row and column index sets.
pub fn minor(a: &[C64], cols: usize, rows_idx: &[usize], cols_idx: &[usize]) -> C64 {
    let k = rows_idx.len();
    let mut m = vec![ZERO; k * k];
    for (i, &r) in rows_idx.iter().enumerate() {
        for (j, &c) in cols_idx.iter().enumerate() {
            m[i * k + j] = a[r * cols + c];
        }
    }
    det(&m, k)
}
