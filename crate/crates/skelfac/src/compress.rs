//! Deterministic interpolative decomposition and proxy-surface compression
//! stacks.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64 as C64;

use crate::kernel::Kernel;
use crate::linalg::{interpolation_from_qr, pivoted_qr};
use crate::skel::MatView;

/// Column partition into skeleton and redundant sets with the interpolation
/// matrix expressing redundant columns through skeleton ones. Index values
/// are column positions of the factored matrix.
#[derive(Debug, Clone)]
pub struct IdResult {
    pub skel: Vec<usize>,
    pub red: Vec<usize>,
    /// |skel| x |red| interpolation matrix T with A(:,red) ~ A(:,skel) T.
    pub interp: Array2<C64>,
}

/// Interpolative decomposition by column-pivoted Householder QR. The pivot
/// order is deterministic (ties resolve to the lowest column index) and the
/// rank is cut at the first diagonal entry below eps times the largest one.
///
/// All-zero rows are discarded before factoring, so the result is invariant
/// to zero-row padding down to the bit level.
pub fn id(a: ArrayView2<C64>, eps: f64) -> IdResult {
    assert!(eps > 0.0, "tolerance must be positive");
    let zero = C64::new(0.0, 0.0);
    let rows: Vec<usize> = (0..a.nrows())
        .filter(|&i| a.row(i).iter().any(|&v| v != zero))
        .collect();
    if rows.len() < a.nrows() {
        return id_rows_reduced(a, &rows, eps);
    }
    let qr = pivoted_qr(a, eps);
    let interp = interpolation_from_qr(&qr);
    IdResult {
        skel: qr.perm[..qr.rank].to_vec(),
        red: qr.perm[qr.rank..].to_vec(),
        interp,
    }
}

/// An ID computed on a row restriction containing every nonzero row is a
/// valid ID of the full matrix; zero rows contribute nothing to pivoting.
pub fn id_rows_reduced(a: ArrayView2<C64>, rows: &[usize], eps: f64) -> IdResult {
    let sub = Array2::from_shape_fn((rows.len(), a.ncols()), |(i, j)| a[[rows[i], j]]);
    id(sub.view(), eps)
}

/// Circle of equivalent sources standing in for all interactions beyond the
/// near field of one box or edge cell.
#[derive(Debug, Clone)]
pub struct ProxySurface {
    pub center: [f64; 2],
    pub radius: f64,
    pub points: Vec<[f64; 2]>,
}

/// Proxy circle of radius 1.5 times the box width. The point count doubles
/// while the circumference holds more than one oscillation period per 64
/// points, so oscillatory kernels stay resolved.
pub fn proxy_surface(center: [f64; 2], box_width: f64, n_base: usize, wavenumber: f64) -> ProxySurface {
    let radius = 1.5 * box_width;
    let mut n = n_base.max(8);
    if wavenumber > 0.0 {
        let cycles = wavenumber * radius / (2.0 * std::f64::consts::PI);
        while cycles > (n / n_base.max(8)) as f64 && n < 4096 {
            n *= 2;
        }
    }
    let points = (0..n)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
        })
        .collect();
    ProxySurface { center, radius, points }
}

/// The compression stack for an index set: near-field rows and adjoint
/// columns read from the current matrix state, then outgoing and adjoint
/// kernel responses at the proxy points standing in for the far field.
pub fn proxy_rows(
    view: &dyn MatView,
    kernel: &dyn Kernel,
    proxy: &ProxySurface,
    i_set: &[usize],
    near: &[usize],
) -> Array2<C64> {
    let ni = i_set.len();
    let nn = near.len();
    let np = proxy.points.len();
    let mut stack = Array2::from_elem((2 * nn + 2 * np, ni), C64::new(0.0, 0.0));
    if nn > 0 {
        let a_ni = view.block(near, i_set);
        let a_in = view.block(i_set, near);
        for r in 0..nn {
            for c in 0..ni {
                stack[[r, c]] = a_ni[[r, c]];
                stack[[nn + r, c]] = a_in[[c, r]].conj();
            }
        }
    }
    for p in 0..np {
        let pt = proxy.points[p];
        for c in 0..ni {
            stack[[2 * nn + p, c]] = kernel.proxy_outgoing(pt, i_set[c]);
            stack[[2 * nn + np + p, c]] = kernel.proxy_incoming(pt, i_set[c]);
        }
    }
    stack
}
