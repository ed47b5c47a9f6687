//! Small dense complex kernels: matrix products, partially pivoted LU and
//! column-pivoted QR. Everything here is sequential and deterministic: given
//! identical input bits the output bits are identical, which the updating
//! algorithm relies on.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// C = A * B with a plain ikj loop over contiguous rows.
pub fn matmul(a: ArrayView2<C64>, b: ArrayView2<C64>) -> Array2<C64> {
    let (m, k) = a.dim();
    let (kb, n) = b.dim();
    assert_eq!(k, kb, "matmul inner dimension mismatch");
    let mut c = Array2::from_elem((m, n), ZERO);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    for i in 0..m {
        for l in 0..k {
            let aik = a[[i, l]];
            let brow = b.row(l);
            let mut crow = c.row_mut(i);
            let cs = crow.as_slice_mut().unwrap();
            if let Some(bs) = brow.to_slice() {
                for j in 0..n {
                    cs[j] += aik * bs[j];
                }
            } else {
                for j in 0..n {
                    cs[j] += aik * brow[j];
                }
            }
        }
    }
    c
}

/// C = A^H * B.
pub fn adjoint_matmul(a: ArrayView2<C64>, b: ArrayView2<C64>) -> Array2<C64> {
    let (k, m) = a.dim();
    let (kb, n) = b.dim();
    assert_eq!(k, kb, "adjoint_matmul inner dimension mismatch");
    let mut c = Array2::from_elem((m, n), ZERO);
    for l in 0..k {
        let arow = a.row(l);
        let brow = b.row(l);
        for i in 0..m {
            let ail = arow[i].conj();
            let mut crow = c.row_mut(i);
            for j in 0..n {
                crow[j] += ail * brow[j];
            }
        }
    }
    c
}

/// y -= M * x restricted to gathered slices; used by the elimination operators.
pub fn gemv_sub(m: ArrayView2<C64>, x: &[C64], y: &mut [C64]) {
    let (rows, cols) = m.dim();
    debug_assert_eq!(cols, x.len());
    debug_assert_eq!(rows, y.len());
    for i in 0..rows {
        let mrow = m.row(i);
        let mut acc = ZERO;
        for j in 0..cols {
            acc += mrow[j] * x[j];
        }
        y[i] -= acc;
    }
}

/// y += M * x on gathered slices.
pub fn gemv_add(m: ArrayView2<C64>, x: &[C64], y: &mut [C64]) {
    let (rows, cols) = m.dim();
    debug_assert_eq!(cols, x.len());
    debug_assert_eq!(rows, y.len());
    for i in 0..rows {
        let mrow = m.row(i);
        let mut acc = ZERO;
        for j in 0..cols {
            acc += mrow[j] * x[j];
        }
        y[i] += acc;
    }
}

/// y (+/-)= M^H * x on gathered slices.
pub fn gemv_adjoint(m: ArrayView2<C64>, x: &[C64], y: &mut [C64], add: bool) {
    let (rows, cols) = m.dim();
    debug_assert_eq!(rows, x.len());
    debug_assert_eq!(cols, y.len());
    for j in 0..cols {
        let mut acc = ZERO;
        for i in 0..rows {
            acc += m[[i, j]].conj() * x[i];
        }
        if add {
            y[j] += acc;
        } else {
            y[j] -= acc;
        }
    }
}

/// LU factorization with partial pivoting, P*A = L*U stored packed.
#[derive(Debug, Clone)]
pub struct Lu {
    pub n: usize,
    /// Packed L (unit lower, below diagonal) and U (upper).
    pub lu: Array2<C64>,
    /// Row interchanged with row `k` at step `k`.
    pub pivots: Vec<usize>,
}

/// Relative pivot threshold below which a block is reported singular.
const PIVOT_RTOL: f64 = 1e3 * f64::EPSILON;

pub fn lu_factor(mut a: Array2<C64>) -> Result<Lu> {
    let (m, n) = a.dim();
    assert_eq!(m, n, "lu_factor requires a square matrix");
    let mut pivots = vec![0usize; n];
    if n == 0 {
        return Ok(Lu { n, lu: a, pivots });
    }
    let mut max_piv: f64 = 0.0;
    let mut min_piv: f64 = f64::INFINITY;
    let data = a.as_slice_mut().expect("row-major contiguous");
    for k in 0..n {
        // strict > keeps the lowest row on ties
        let mut best = k;
        let mut best_mag = data[k * n + k].norm_sqr();
        for i in k + 1..n {
            let mag = data[i * n + k].norm_sqr();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        pivots[k] = best;
        if best != k {
            for j in 0..n {
                data.swap(k * n + j, best * n + j);
            }
        }
        let piv = data[k * n + k];
        let mag = piv.norm();
        max_piv = max_piv.max(mag);
        min_piv = min_piv.min(mag);
        if mag == 0.0 {
            return Err(Error::SingularRedundantBlock);
        }
        let inv = ONE / piv;
        let (head, tail) = data.split_at_mut((k + 1) * n);
        let row_k = &head[k * n + k + 1..];
        for row_i in tail.chunks_exact_mut(n) {
            let l = row_i[k] * inv;
            row_i[k] = l;
            if l != ZERO {
                let ri = &mut row_i[k + 1..];
                for (x, &y) in ri.iter_mut().zip(row_k.iter()) {
                    *x -= l * y;
                }
            }
        }
    }
    if min_piv <= PIVOT_RTOL * max_piv {
        return Err(Error::SingularRedundantBlock);
    }
    Ok(Lu { n, lu: a, pivots })
}

impl Lu {
    /// x <- A^{-1} x.
    pub fn solve_in_place(&self, x: &mut [C64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        for k in 0..n {
            x.swap(k, self.pivots[k]);
        }
        // L y = Px
        for k in 0..n {
            let xk = x[k];
            if xk != ZERO {
                for i in k + 1..n {
                    x[i] -= self.lu[[i, k]] * xk;
                }
            }
        }
        // U x = y
        for k in (0..n).rev() {
            let mut acc = x[k];
            for j in k + 1..n {
                acc -= self.lu[[k, j]] * x[j];
            }
            x[k] = acc / self.lu[[k, k]];
        }
    }

    /// B <- A^{-1} B, all columns at once (row oriented sweeps).
    pub fn solve_mat(&self, b: &mut Array2<C64>) {
        let n = self.n;
        let ncol = b.ncols();
        debug_assert_eq!(b.nrows(), n);
        if n == 0 || ncol == 0 {
            return;
        }
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                for j in 0..ncol {
                    let tmp = b[[k, j]];
                    b[[k, j]] = b[[p, j]];
                    b[[p, j]] = tmp;
                }
            }
        }
        for k in 0..n {
            for i in k + 1..n {
                let l = self.lu[[i, k]];
                if l != ZERO {
                    for j in 0..ncol {
                        let t = l * b[[k, j]];
                        b[[i, j]] -= t;
                    }
                }
            }
        }
        for k in (0..n).rev() {
            let inv = ONE / self.lu[[k, k]];
            for j in 0..ncol {
                b[[k, j]] *= inv;
            }
            for i in 0..k {
                let u = self.lu[[i, k]];
                if u != ZERO {
                    for j in 0..ncol {
                        let t = u * b[[k, j]];
                        b[[i, j]] -= t;
                    }
                }
            }
        }
    }

    /// X = B * A^{-1} (solve from the right).
    pub fn right_solve(&self, b: &Array2<C64>) -> Array2<C64> {
        let n = self.n;
        let m = b.nrows();
        debug_assert_eq!(b.ncols(), n);
        let mut x = b.clone();
        if n == 0 || m == 0 {
            return x;
        }
        // X = B U^{-1} L^{-1} P; first Y U = B
        for j in 0..n {
            let inv = ONE / self.lu[[j, j]];
            for i in 0..m {
                let mut acc = x[[i, j]];
                for k in 0..j {
                    acc -= x[[i, k]] * self.lu[[k, j]];
                }
                x[[i, j]] = acc * inv;
            }
        }
        // Z L = Y, unit lower L
        for j in (0..n).rev() {
            for i in 0..m {
                let mut acc = x[[i, j]];
                for k in j + 1..n {
                    acc -= x[[i, k]] * self.lu[[k, j]];
                }
                x[[i, j]] = acc;
            }
        }
        // column permutation: apply recorded swaps in reverse
        for k in (0..n).rev() {
            let p = self.pivots[k];
            if p != k {
                for i in 0..m {
                    let tmp = x[[i, k]];
                    x[[i, k]] = x[[i, p]];
                    x[[i, p]] = tmp;
                }
            }
        }
        x
    }

    /// y = A x from the packed factors (A = P^T L U).
    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        // u = U x
        let mut y = vec![ZERO; n];
        for i in 0..n {
            let mut acc = ZERO;
            for j in i..n {
                acc += self.lu[[i, j]] * x[j];
            }
            y[i] = acc;
        }
        // v = L u
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in 0..i {
                acc += self.lu[[i, j]] * y[j];
            }
            y[i] = acc;
        }
        // y = P^T v
        for k in (0..n).rev() {
            y.swap(k, self.pivots[k]);
        }
        y
    }

    /// log det A with branch-consistent accumulation of the diagonal factors.
    pub fn logdet(&self) -> C64 {
        let mut acc = ZERO;
        let mut swaps = 0usize;
        for k in 0..self.n {
            acc += self.lu[[k, k]].ln();
            if self.pivots[k] != k {
                swaps += 1;
            }
        }
        if swaps % 2 == 1 {
            acc += C64::new(0.0, std::f64::consts::PI);
        }
        acc
    }

    pub fn bitwise_eq(&self, other: &Lu) -> bool {
        self.n == other.n
            && self.pivots == other.pivots
            && bits_eq(&self.lu, &other.lu)
    }
}

/// Bitwise equality of complex matrices (distinguishes -0.0 from 0.0).
pub fn bits_eq(a: &Array2<C64>, b: &Array2<C64>) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    a.iter()
        .zip(b.iter())
        .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
}

/// Output of the column-pivoted Householder reduction used for the ID.
pub struct PivotedQr {
    /// Numerical rank at the requested tolerance.
    pub rank: usize,
    /// Column permutation: `perm[k]` is the original index of pivot column k.
    pub perm: Vec<usize>,
    /// Packed R factor (upper triangle of the reduced matrix).
    pub r: Array2<C64>,
}

/// Column-pivoted Householder QR with a relative rank cut: stops at the first
/// step whose pivot column norm is <= eps times the first pivot norm. Pivot
/// ties resolve to the lowest column index.
pub fn pivoted_qr(a: ArrayView2<C64>, eps: f64) -> PivotedQr {
    let (m, n) = a.dim();
    let mut r: Array2<C64> = a.to_owned();
    let mut perm: Vec<usize> = (0..n).collect();
    if m == 0 || n == 0 {
        return PivotedQr { rank: 0, perm, r };
    }
    // column norms, tracked/downdated LAPACK-style
    let mut vn1 = vec![0.0f64; n];
    let mut vn2 = vec![0.0f64; n];
    for j in 0..n {
        let norm = col_norm(&r, 0, j);
        vn1[j] = norm;
        vn2[j] = norm;
    }
    let kmax = m.min(n);
    let mut rank = kmax;
    let mut first_norm = 0.0f64;
    let tol3z = f64::EPSILON.sqrt();
    let mut v = vec![ZERO; m];
    for k in 0..kmax {
        let mut best = k;
        let mut best_val = vn1[k];
        for j in k + 1..n {
            if vn1[j] > best_val {
                best_val = vn1[j];
                best = j;
            }
        }
        if best != k {
            swap_cols(&mut r, k, best);
            perm.swap(k, best);
            vn1.swap(k, best);
            vn2.swap(k, best);
        }
        // exact norm of the pivot column below the diagonal
        let xnorm = col_norm(&r, k, k);
        if k == 0 {
            first_norm = xnorm;
        }
        if xnorm <= eps * first_norm {
            rank = k;
            break;
        }
        // Householder reflector sending the column to -phase*xnorm*e1
        let alpha = r[[k, k]];
        let phase = if alpha == ZERO {
            ONE
        } else {
            alpha / C64::new(alpha.norm(), 0.0)
        };
        let mut vtv = 0.0f64;
        for i in k..m {
            v[i] = r[[i, k]];
        }
        v[k] += phase * C64::new(xnorm, 0.0);
        for i in k..m {
            vtv += v[i].norm_sqr();
        }
        let beta = 2.0 / vtv;
        r[[k, k]] = -phase * C64::new(xnorm, 0.0);
        for i in k + 1..m {
            r[[i, k]] = ZERO;
        }
        for j in k + 1..n {
            let mut s = ZERO;
            for i in k..m {
                s += v[i].conj() * r[[i, j]];
            }
            s *= C64::new(beta, 0.0);
            if s != ZERO {
                for i in k..m {
                    let t = s * v[i];
                    r[[i, j]] -= t;
                }
            }
            // downdate the tracked column norm (recompute on cancellation)
            if vn1[j] != 0.0 {
                let temp = (r[[k, j]].norm() / vn1[j]).powi(2);
                let temp = (1.0 - temp).max(0.0);
                let temp2 = temp * (vn1[j] / vn2[j]).powi(2);
                if temp2 <= tol3z {
                    let norm = col_norm(&r, k + 1, j);
                    vn1[j] = norm;
                    vn2[j] = norm;
                } else {
                    vn1[j] *= temp.sqrt();
                }
            }
        }
    }
    PivotedQr { rank, perm, r }
}

fn col_norm(a: &Array2<C64>, row0: usize, j: usize) -> f64 {
    let mut acc = 0.0f64;
    for i in row0..a.nrows() {
        acc += a[[i, j]].norm_sqr();
    }
    acc.sqrt()
}

fn swap_cols(a: &mut Array2<C64>, j0: usize, j1: usize) {
    for i in 0..a.nrows() {
        let tmp = a[[i, j0]];
        a[[i, j0]] = a[[i, j1]];
        a[[i, j1]] = tmp;
    }
}

/// Solve R11 * T = R12 from a pivoted QR at the given rank.
pub fn interpolation_from_qr(qr: &PivotedQr) -> Array2<C64> {
    let k = qr.rank;
    let n = qr.r.ncols();
    let nr = n - k;
    let mut t = Array2::from_elem((k, nr), ZERO);
    for j in 0..nr {
        for i in (0..k).rev() {
            let mut acc = qr.r[[i, k + j]];
            for l in i + 1..k {
                acc -= qr.r[[i, l]] * t[[l, j]];
            }
            t[[i, j]] = acc / qr.r[[i, i]];
        }
    }
    t
}

/// Spectral norm estimate by power iteration on A^H A with a fixed seed.
pub fn norm2_est(a: ArrayView2<C64>, iters: usize) -> f64 {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return 0.0;
    }
    // deterministic quasi-random start
    let mut x: Vec<C64> = (0..n)
        .map(|i| {
            let t = (i as f64 + 1.0) * 0.754_877_666_246_693;
            C64::new((t.fract() - 0.5) + 1e-3, (t * 1.618).fract() - 0.5)
        })
        .collect();
    let mut sigma = 0.0f64;
    let mut y = vec![ZERO; m];
    for _ in 0..iters {
        for i in 0..m {
            let mut acc = ZERO;
            for j in 0..n {
                acc += a[[i, j]] * x[j];
            }
            y[i] = acc;
        }
        for j in 0..n {
            let mut acc = ZERO;
            for i in 0..m {
                acc += a[[i, j]].conj() * y[i];
            }
            x[j] = acc;
        }
        let nx = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        sigma = nx.sqrt();
        for z in x.iter_mut() {
            *z /= C64::new(nx, 0.0);
        }
    }
    sigma
}
